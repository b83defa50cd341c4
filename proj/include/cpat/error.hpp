#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace cpat {

// Error hierarchy. The CLI maps these onto exit codes:
// ConfigError -> usage (1), DataError -> data (2), NumericError -> numeric (3).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

namespace detail {

inline void cat_into(std::ostringstream&) {}

template <typename A, typename... Rest>
void cat_into(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    cat_into(os, rest...);
}

} // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::cat_into(os, args...);
    return os.str();
}

} // namespace cpat
