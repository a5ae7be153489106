#pragma once

#include <stdexcept>
#include <string>

namespace nmt {

// Base class for all toolkit failures.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Corpus/file-content problems: misaligned sides, empty lines, bad tokens.
class DataError : public Error {
public:
  using Error::Error;
};

// Invalid configuration values or config-file problems.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Checkpoint serialization problems: truncation, bad magic, version skew.
class CheckpointError : public Error {
public:
  using Error::Error;
};

// Failures raised while training or decoding (divergence, bad ids).
class TrainError : public Error {
public:
  using Error::Error;
};

}  // namespace nmt
