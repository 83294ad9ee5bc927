#pragma once

#include <stdexcept>
#include <string>

namespace clnn {

// Base of every error the library throws; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorpusError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Predicted and gold text disagree character-wise.
class AlignmentError : public Error {
 public:
  AlignmentError(std::size_t sentence, std::size_t position, const std::string& what)
      : Error(what), sentence_(sentence), position_(position) {}
  std::size_t sentence() const { return sentence_; }
  std::size_t position() const { return position_; }

 private:
  std::size_t sentence_;
  std::size_t position_;
};

}  // namespace clnn
