#pragma once

#include <stdexcept>
#include <string>

namespace dmrf {

// Status codes shared with the C API (values must stay in sync with dmrf.h).
enum class Status : int {
    Ok = 0,
    InvalidArg = 1,
    Io = 2,
    Format = 3,
    Version = 4,
    Corrupt = 5,
    Dimension = 6,
    NonFinite = 7,
    Threshold = 8,
    Internal = 9,
};

class Error : public std::runtime_error {
public:
    Error(Status code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Status code() const { return code_; }

private:
    Status code_;
};

inline void require(bool cond, Status code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

} // namespace dmrf
