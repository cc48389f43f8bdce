#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace s3net {

// Contract violations (bad shapes, bad arguments, broken invariants).
struct contract_error : std::runtime_error {
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or inconsistent run configuration (maps to CLI exit code 1).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// File / raster problems (maps to CLI exit code 2).
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_parts(std::ostringstream&) {}
template <typename A, typename... Rest>
void format_parts(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    format_parts(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string format_msg(const Parts&... parts) {
    std::ostringstream os;
    detail::format_parts(os, parts...);
    return os.str();
}

}  // namespace s3net

#define S3NET_CHECK(cond, ...)                                                   \
    do {                                                                         \
        if (!(cond))                                                             \
            throw ::s3net::contract_error(::s3net::format_msg(__VA_ARGS__));     \
    } while (0)

#define S3NET_CHECK_IO(cond, ...)                                                \
    do {                                                                         \
        if (!(cond)) throw ::s3net::io_error(::s3net::format_msg(__VA_ARGS__));  \
    } while (0)
