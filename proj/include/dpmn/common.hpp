#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpmn {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using Shape = std::vector<i64>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

[[noreturn]] inline void fail_shape(const std::string& op, const std::string& detail) {
    throw ShapeError("op '" + op + "': " + detail);
}

inline void require(bool ok, const std::string& op, const std::string& detail) {
    if (!ok) fail_shape(op, detail);
}

inline i64 numel_of(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
}

// FNV-1a, used for config hashes and checksum markers.
inline u64 fnv1a(const std::string& s) {
    u64 h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(u64 v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

}  // namespace dpmn
