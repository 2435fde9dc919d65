#pragma once

#include <stdexcept>
#include <string>

namespace polardial {

// Base for every error the harness raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class ScoringError : public Error {
 public:
  ScoringError(std::string persona_id, std::size_t completed, const std::string& what)
      : Error(what), persona_id_(std::move(persona_id)), completed_(completed) {}

  const std::string& persona_id() const noexcept { return persona_id_; }
  // Number of personas scored before the failure.
  std::size_t completed() const noexcept { return completed_; }

 private:
  std::string persona_id_;
  std::size_t completed_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  BackendError(int last_status, const std::string& what) : Error(what), last_status_(last_status) {}
  int last_status() const noexcept { return last_status_; }

 private:
  int last_status_;
};

// The backend rejected the request because it does not fit the model context.
class ContextOverflowError : public BackendError {
 public:
  using BackendError::BackendError;
};

class MockMissError : public Error {
 public:
  using Error::Error;
};

class SynthesisError : public Error {
 public:
  SynthesisError(std::size_t partial_size, const std::string& what)
      : Error(what), partial_size_(partial_size) {}
  std::size_t partial_size() const noexcept { return partial_size_; }

 private:
  std::size_t partial_size_;
};

class PairingError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace polardial
