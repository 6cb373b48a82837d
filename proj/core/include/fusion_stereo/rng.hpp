#pragma once

#include <cstdint>
#include <random>

#include "fusion_stereo/tensor.hpp"

namespace fstereo {

/// Deterministic random source. mt19937_64 supplies the raw bits; the
/// distribution transforms below are hand-rolled so that streams are
/// bit-identical across standard libraries (std::uniform_int_distribution and
/// friends are implementation-defined).
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased uniform integer in [0, n) via rejection sampling. n > 0.
    uint64_t uniform_below(uint64_t n);

    /// Standard normal via Box-Muller (no cached spare, so the stream
    /// consumes exactly two draws per call).
    double gaussian();

    double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

    /// Child stream whose seed mixes this rng's seed with `stream`.
    Rng fork(uint64_t stream);

  private:
    std::mt19937_64 gen_;
};

/// splitmix64 mixing step, used for seed derivation.
uint64_t mix_seed(uint64_t a, uint64_t b);

void fill_gaussian(Tensor& t, Rng& rng, double mean, double sigma);

/// He/Kaiming-style init for conv weights: N(0, sqrt(2 / fan_in)).
void fill_he(Tensor& t, Rng& rng, int fan_in);

}  // namespace fstereo
