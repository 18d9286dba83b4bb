#include "sdabn/noise.hpp"

#include <cmath>

#include "sdabn/errors.hpp"
#include "sdabn/rng.hpp"

namespace sdabn {

void NoiseSpec::validate() const {
    if (kind == NoiseKind::gaussian) {
        if (!(sigma > 0.0 && sigma <= 255.0)) {
            throw ConfigError("gaussian noise sigma must lie in (0, 255], got " + std::to_string(sigma));
        }
    } else {
        if (!(peak > 0.0 && peak <= 255.0)) {
            throw ConfigError("poisson noise peak must lie in (0, 255], got " + std::to_string(peak));
        }
    }
}

std::string NoiseSpec::describe() const {
    if (kind == NoiseKind::gaussian) return "gaussian(sigma=" + std::to_string(sigma) + ")";
    return "poisson(peak=" + std::to_string(peak) + ")";
}

Image add_gaussian_noise(const Image& clean, double sigma, std::uint64_t seed) {
    if (!(sigma > 0.0 && sigma <= 255.0)) {
        throw ConfigError("add_gaussian_noise: sigma must lie in (0, 255]");
    }
    const double scale = sigma / 255.0;
    Image noisy = clean;
    CounterRng rng(seed);
    for (double& v : noisy.data) v += rng.next_normal() * scale;
    return noisy;
}

namespace {

/// Exact Poisson draw by Knuth's product-of-uniforms method on a dedicated
/// per-element substream. Rates here never exceed 255, where exp(-rate)
/// stays comfortably inside double range.
std::uint64_t poisson_draw(double rate, CounterRng& rng) {
    if (rate <= 0.0) return 0;
    const double threshold = std::exp(-rate);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
        p *= rng.next_double_open();
        if (p <= threshold) break;
        ++k;
    } while (true);
    return k;
}

}  // namespace

Image add_poisson_noise(const Image& clean, double peak, std::uint64_t seed) {
    if (!(peak > 0.0 && peak <= 255.0)) {
        throw ConfigError("add_poisson_noise: peak must lie in (0, 255]");
    }
    Image noisy(clean.height, clean.width, clean.channels);
    const double inv_peak = 1.0 / peak;
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const std::uint64_t k = poisson_draw(clean.data[i] * peak, rng);
        noisy.data[i] = static_cast<double>(k) * inv_peak;
    }
    return noisy;
}

Image corrupt(const Image& clean, const NoiseSpec& spec, std::uint64_t sample_index) {
    spec.validate();
    const std::uint64_t s = derive_seed(spec.seed, sample_index);
    if (spec.kind == NoiseKind::gaussian) return add_gaussian_noise(clean, spec.sigma, s);
    return add_poisson_noise(clean, spec.peak, s);
}

Image corrupt_for_epoch(const Image& clean, const NoiseSpec& spec, std::uint64_t sample_index,
                        std::uint64_t epoch) {
    spec.validate();
    const std::uint64_t s = derive_seed(spec.seed, sample_index, 0x45504f43ull + epoch);
    if (spec.kind == NoiseKind::gaussian) return add_gaussian_noise(clean, spec.sigma, s);
    return add_poisson_noise(clean, spec.peak, s);
}

}  // namespace sdabn
