#pragma once

#include <cmath>
#include <cstdint>

#include "dpmn/common.hpp"

namespace dpmn {

// Counter-based generator: output k is a fixed mix of (seed, stream, k), so the
// stream is bit-identical on every platform. No libstdc++ distributions are
// used anywhere; uniform/gaussian below are part of the fixed algorithm.
class Rng {
public:
    explicit Rng(u64 seed, u64 stream = 0)
        : base_(mix(seed ^ mix(stream ^ 0x9e3779b97f4a7c15ull))) {}

    u64 next_u64() { return mix(base_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

    // [0,1) with 53 bits of mantissa
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0,n)
    i64 uniform_int(i64 n) {
        if (n <= 0) return 0;
        return static_cast<i64>(uniform() * static_cast<double>(n));
    }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double sigma) { return sigma * gaussian(); }

    // Independent deterministic substream.
    Rng fork(u64 substream) const { return Rng(base_, substream ^ 0xd1b54a32d192ed03ull); }

private:
    static u64 mix(u64 z) {  // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    u64 base_ = 0;
    u64 counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dpmn
