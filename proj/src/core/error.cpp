#include "ivrt/error.hpp"

namespace ivrt {

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return "input";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kRelevance: return "relevance";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kCapacity: return "capacity";
  }
  return "unknown";
}

}  // namespace ivrt
