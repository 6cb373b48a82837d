#include "fusion_stereo/rng.hpp"

#include <cmath>

namespace fstereo {

uint64_t Rng::uniform_below(uint64_t n) {
    // Rejection sampling over the top multiple of n.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return x % n;
}

double Rng::gaussian() {
    // u1 in (0,1] so the log is finite.
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Rng Rng::fork(uint64_t stream) { return Rng(mix_seed(gen_(), stream)); }

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void fill_gaussian(Tensor& t, Rng& rng, double mean, double sigma) {
    for (double& v : t.values) v = rng.gaussian(mean, sigma);
}

void fill_he(Tensor& t, Rng& rng, int fan_in) {
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    fill_gaussian(t, rng, 0.0, sigma);
}

}  // namespace fstereo
