#include "emoflow/rng.hpp"

#include <cmath>

#include "emoflow/error.hpp"

namespace emoflow {

uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

Rng::Rng(uint64_t seed) : key_(mix64(seed)), counter_(0) {}

Rng Rng::split(uint64_t tag) const {
    Rng child;
    child.key_ = mix64(key_ ^ mix64(tag ^ 0xd1b54a32d192ed03ull));
    child.counter_ = 0;
    return child;
}

Rng Rng::split(std::string_view tag) const {
    return split(fnv1a64(tag));
}

Rng Rng::split(std::string_view tag, uint64_t index) const {
    return split(fnv1a64(tag)).split(index);
}

uint64_t Rng::next_u64() {
    return mix64(key_ ^ mix64(counter_++));
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    // guard u1 away from 0 so log stays finite
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw contract_error("uniform_int: n must be positive");
    // desk scale: modulo bias over 2^64 is negligible
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

}  // namespace emoflow
