#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace krfws {

// ============================================================================
// Errors
// ============================================================================
//
// Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
// NumericError -> 3.

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// ============================================================================
// Deterministic RNG
// ============================================================================
//
// Thin wrapper over mt19937_64 with hand-rolled bounded draws. The std::
// distributions are implementation-defined, which would break byte-identical
// reproducibility across standard libraries; everything here is pinned.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // Unbiased integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    // Uniform double in [0, 1).
    double uniform01();

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller (cached spare kept for determinism).
    double normal();
    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; deterministic in (parent seed, id) only, so
    // consumers (e.g. forest trees) can be trained in any order or thread.
    Rng child(std::uint64_t stream_id) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64; used for seed derivation.
std::uint64_t mix64(std::uint64_t x);

// ============================================================================
// Parallel helpers
// ============================================================================

// Number of worker threads: min(hardware, KRFWS_THREADS if set).
int worker_count();

// Runs fn(i) for i in [0, n). Results must be written to pre-sized slots so
// that output is independent of scheduling. Falls back to serial for small n
// or single-core runs.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace krfws
