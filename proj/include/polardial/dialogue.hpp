#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polardial/pairing.hpp"

namespace polardial::dialogue {

enum class Speaker { user1, user2 };
enum class Strategy { joint, turn_based };
enum class OrderingKind { none, asc, dsc, c_asc };
enum class FilterStatus { kept, rejected_refusal, rejected_repetition, rejected_parse, rejected_error };

std::string_view to_string(Speaker s);
std::string_view to_string(Strategy s);
std::string_view to_string(OrderingKind k);
std::string_view to_string(FilterStatus f);
Strategy strategy_from_string(std::string_view name);
OrderingKind ordering_from_string(std::string_view name);
FilterStatus filter_status_from_string(std::string_view name);

struct Utterance {
  int index = 1;  // 1-based
  Speaker speaker = Speaker::user1;
  std::string text;
};

struct Dialogue {
  std::string dialogue_id;
  std::string pair_id;
  pairing::PairingType pairing_type = pairing::PairingType::original;
  std::optional<int> level;
  std::vector<Utterance> utterances;
  Strategy strategy = Strategy::joint;
  OrderingKind ordering = OrderingKind::none;
  std::string generator_model;
  FilterStatus filter_status = FilterStatus::kept;
  // Sampled endpoint for turn-based runs.
  std::optional<int> target_turns;
  // Unparsed joint completion, or the failure message of an aborted run.
  std::string raw;
};

// "User 1" / "User 2".
std::string speaker_name(Speaker s);

// Lines tagged "User 1:" / "User 2:" (case-insensitive, markdown emphasis
// stripped). Untagged lines continue the previous utterance, and consecutive
// lines of one speaker merge. Returns nullopt unless the result is a
// non-empty alternation opening with User 1.
std::optional<std::vector<Utterance>> parse_transcript(std::string_view text);

// One "User N: text" line per utterance.
std::string render_transcript(const std::vector<Utterance>& utterances);

// Speaker alternation starting with user1, 1-based contiguous indices, no
// empty text.
bool well_formed(const std::vector<Utterance>& utterances);

nlohmann::json to_json(const Dialogue& d);
Dialogue dialogue_from_json(const nlohmann::json& j);

std::string make_dialogue_id(const std::string& pair_id, const std::string& model, Strategy strategy,
                             OrderingKind ordering);

}  // namespace polardial::dialogue
