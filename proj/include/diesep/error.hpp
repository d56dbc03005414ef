#pragma once

#include <stdexcept>
#include <string>

namespace diesep {

/// Module-level failure. `code()` is a stable kebab-case identifier
/// ("degenerate-face", "fit-failed", ...) that callers and the CLI match on.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace diesep
