#pragma once

#include <stdexcept>
#include <string>

namespace wcc {

// File/format failures; the CLI maps these to exit code 2.
struct DataError : std::runtime_error {
  enum class Kind { kBadMagic, kTruncated, kCountMismatch, kBadFormat, kMissingFile };

  Kind kind;
  DataError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

}  // namespace wcc
