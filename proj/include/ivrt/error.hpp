#pragma once

#include <stdexcept>
#include <string>

namespace ivrt {

// Schema, relevance and numerical values double as CLI exit codes; input and
// capacity errors exit with 2 as well.
enum class ErrorKind {
  kInput = 1,
  kSchema = 2,
  kRelevance = 3,
  kNumerical = 4,
  kCapacity = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

const char* kind_name(ErrorKind kind);

}  // namespace ivrt
