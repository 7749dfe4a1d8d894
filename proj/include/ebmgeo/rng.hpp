// Deterministic random streams.
//
// Every stochastic routine in the library draws from an explicit Stream.
// The raw engine is std::mt19937_64 (bit-reproducible across platforms by
// the standard); uniform/normal variates are produced by fixed formulas
// rather than std::*_distribution, whose algorithms are
// implementation-defined.  Sub-streams are derived from a master seed via
// splitmix64 so that parallel tasks consume independent, reproducible
// randomness.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string_view>

namespace ebmgeo::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a, used both for tag hashing here and for artifact content hashes.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Stream {
  public:
    explicit Stream(std::uint64_t seed) : gen_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the spare variate is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Guard log(0): 1-u1 is in (0, 1].
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer on [0, n).
    std::uint64_t integer(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }

    Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols,
                                   double lo, double hi) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(lo, hi);
        return m;
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Independent sub-stream for (master, tag, index); e.g. one per Langevin
// chain or per evaluation pair.
inline Stream derive(std::uint64_t master, std::string_view tag,
                     std::uint64_t index = 0) {
    std::uint64_t s = master ^ fnv1a(tag);
    std::uint64_t state = s;
    splitmix64(state);
    state ^= 0x632be59bd9b4e019ULL * (index + 1);
    return Stream(splitmix64(state));
}

}  // namespace ebmgeo::rng
