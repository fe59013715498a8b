#pragma once

#include <cstdint>
#include <string_view>

namespace emoflow {

// Splittable counter-based generator. A stream is (key, counter); drawing mixes
// key with an incrementing counter, so streams derived via split() never share
// output with the parent regardless of how much either produces. Every
// stochastic op in the project takes one of these, which keeps all runs
// reproducible from a single root seed.
class Rng {
public:
    Rng() : key_(0), counter_(0) {}
    explicit Rng(uint64_t seed);

    // Derive an independent substream. Tag variants exist so call sites can
    // name their purpose ("dropout", "noise") without manual tag numbering.
    Rng split(uint64_t tag) const;
    Rng split(std::string_view tag) const;
    Rng split(std::string_view tag, uint64_t index) const;

    uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller (two uniform draws per sample).
    double normal();
    // Uniform integer in [0, n).
    int uniform_int(int n);

    uint64_t key() const { return key_; }

private:
    uint64_t key_;
    uint64_t counter_;
};

// Public so tests and file formats can hash small strings deterministically.
uint64_t fnv1a64(std::string_view s);
uint64_t mix64(uint64_t x);

}  // namespace emoflow
