#pragma once

#include <stdexcept>
#include <string>

namespace kbcx {

// Mirrors the status codes exposed through the C API.
enum class ErrorCode {
    InvalidArgument = 1,
    Io = 2,
    Parse = 3,
    Shape = 4,
    Mismatch = 5,
    Numeric = 6,
    Degenerate = 7,
    Internal = 8,
};

class Error : public std::runtime_error {
   public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

   private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace kbcx
