#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mfc {

/// Deterministic random stream addressed by (seed, stream id). Streams with
/// distinct ids are decorrelated by a splitmix64 mix of the pair; identical
/// (seed, id) reproduce the same draw sequence bit for bit. Gaussian draws use
/// the polar method so the sequence is fully defined by this file.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : engine_(mix(seed, stream_id)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0,1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal draw.
    double gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    double gauss(double mean, double stddev) { return mean + stddev * gauss(); }

private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t id) {
        return splitmix64(splitmix64(seed) ^ splitmix64(id + 0x632be59bd9b4e019ULL));
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace mfc
