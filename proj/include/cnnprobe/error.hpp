#pragma once

#include <stdexcept>
#include <string>

namespace cnnprobe {

// Base of every error the library throws. The CLI maps each subclass to an
// exit code (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Architecture DSL errors. line() is 1-based; 0 when the error is not tied to
// a particular line (e.g. a whole-net validation failure).
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& detail, const std::string& source = {})
      : Error(format(line, detail, source)), line_(line), detail_(detail) {}
  int line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  static std::string format(int line, const std::string& detail, const std::string& source) {
    std::string prefix = source.empty() ? (line > 0 ? "line " + std::to_string(line) : "")
                                        : source + (line > 0 ? ":" + std::to_string(line) : "");
    return prefix.empty() ? detail : prefix + ": " + detail;
  }

  int line_;
  std::string detail_;
};

// Tensor/layer geometry that does not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid layer/filter/neuron selection.
class SelectionError : public Error {
 public:
  using Error::Error;
};

// Violated data precondition: empty dataset, infeasible perplexity, ...
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  enum class Kind {
    kOpen,           // cannot open / create / rename
    kBadMagic,
    kBadVersion,
    kBadDtype,
    kTruncated,
    kDimOverflow,
    kDuplicateName,
    kTrailingData,
    kInconsistent,   // e.g. a weight tensor without its bias
    kMalformedImage,
    kUnsupportedImage,
  };

  IoError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace cnnprobe
