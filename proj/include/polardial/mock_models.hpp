#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

#include "polardial/backends.hpp"

// Offline stand-ins for the model services. Every answer is a pure function
// of the request content, so runs against them are reproducible.
namespace polardial::mocks {

// FNV-1a, stable across platforms.
std::uint64_t stable_hash(std::string_view text, std::uint64_t salt = 0);
// stable_hash mapped to [0, 1).
double unit_hash(std::string_view text, std::uint64_t salt = 0);

// Polarity scores follow the level histogram of the ConvAI2 persona set
// (about 44% at s >= 0.99 and 16% at s <= 0.01).
backends::MockBackend::Generator classifier();
// Entailment when the hypothesis occurs in the premise, contradiction when it
// occurs negated ("not true that ..."); otherwise a hash decides (~6%
// contradiction, ~10% entailment, symmetric in the two sentences).
backends::MockBackend::Generator nli();
// Joint dialogues (max_tokens > 128), single turns, and judge replies for
// G-Eval prompts. A small fraction of outputs are refusals, repetitive or
// untagged so the filters have something to do.
backends::MockBackend::Generator chat();
// Per-token log-probabilities; tokens already seen in the context are cheaper.
backends::MockBackend::Generator logprob();
// Word-overlap score of the response against the last context turn, on [0, 1];
// the model id picks the noise stream and overlap weight.
backends::MockBackend::Generator scorer(const std::string& model_id);

// Mock backend for a spec, picking the generator by capability.
std::shared_ptr<backends::MockBackend> make(const backends::BackendSpec& spec);

}  // namespace polardial::mocks
