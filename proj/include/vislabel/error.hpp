#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vislabel {

// Base of every error raised by the library. `code()` is the stable
// machine-readable identifier surfaced in CLI output and HTTP error bodies.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Malformed input text. `locus` is "line:column" for syntax errors or a
// JSON pointer for shape errors.
class ParseError : public Error {
 public:
  ParseError(std::string locus, const std::string& message)
      : Error("parse_error", locus + ": " + message), locus_(std::move(locus)) {}

  const std::string& locus() const noexcept { return locus_; }

 private:
  std::string locus_;
};

struct Violation {
  std::string code;
  std::string locus;
  std::string message;

  bool operator==(const Violation&) const = default;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : Error("validation_error", render(violations)), violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept { return violations_; }

  bool has(const std::string& code) const {
    for (const auto& v : violations_)
      if (v.code == code) return true;
    return false;
  }

 private:
  static std::string render(const std::vector<Violation>& vs) {
    std::string out = std::to_string(vs.size()) + " violation(s)";
    for (const auto& v : vs) out += "\n  [" + v.code + "] " + v.locus + ": " + v.message;
    return out;
  }

  std::vector<Violation> violations_;
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

// Operation is not allowed in the current state (e.g. answering a finished session).
class StateError : public Error {
 public:
  explicit StateError(const std::string& message, std::string code = "state_error")
      : Error(std::move(code), message) {}
};

// Answer kind does not match the pending question.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& message) : Error("protocol_error", message) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& message) : Error("integrity_error", message) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& message) : Error("precondition_error", message) {}
};

// `position` is the 1-based index of the offending answer.
class ReplayError : public Error {
 public:
  ReplayError(std::size_t position, const std::string& message)
      : Error("replay_error", "at position " + std::to_string(position) + ": " + message),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& message)
      : Error("insufficient_data", message) {}
};

// Every pairable value is identical, so expected disagreement is zero and
// alpha is undefined.
class DegenerateDataError : public Error {
 public:
  DegenerateDataError() : Error("perfect_homogeneity", "perfect homogeneity: alpha undefined") {}
};

class UnauthorizedError : public Error {
 public:
  explicit UnauthorizedError(const std::string& message) : Error("unauthorized", message) {}
};

}  // namespace vislabel
