#pragma once

#include <stdexcept>
#include <string>

namespace revdict {

// All recoverable failures in the library surface as revdict::Error. The
// message is meant for a human; `code` is a short machine-readable tag that
// the HTTP layer forwards verbatim.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string message, std::string code = "error")
      : std::runtime_error(std::move(message)), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace revdict
