// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#pragma once

#include <stdexcept>
#include <string>

namespace copsd {

// Every library failure derives from Error so the CLI can map categories to
// exit codes in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
  using Error::Error;
};
class ParameterError : public Error {
  using Error::Error;
};
class ContractError : public Error {
  using Error::Error;
};
class GraphError : public Error {
  using Error::Error;
};
class ConfigError : public Error {
  using Error::Error;
};
class ContextError : public Error {
  using Error::Error;
};
class VocabError : public Error {
  using Error::Error;
};
class CorpusError : public Error {
  using Error::Error;
};
class ProtocolError : public Error {
  using Error::Error;
};
class IoError : public Error {
  using Error::Error;
};
class IntegrityError : public Error {
  using Error::Error;
};

// Non-finite values during training. Exit code 4 in the CLI.
class TrainingError : public Error {
  using Error::Error;
};

class UndefinedCorrelationError : public Error {
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kMagicMismatch, kTruncated, kManifestMismatch, kHeader };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace copsd
