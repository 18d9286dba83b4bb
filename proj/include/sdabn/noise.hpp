#pragma once

#include <cstdint>
#include <string>

#include "sdabn/image.hpp"

namespace sdabn {

enum class NoiseKind { gaussian, poisson };

/// Parameterization of the clean-to-noisy corruption mapping. sigma and peak
/// are quoted on the 0-255 intensity scale; images themselves live in [0,1].
struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian;
    double sigma = 0.0;  // gaussian only, (0, 255]
    double peak = 0.0;   // poisson only, (0, 255]
    std::uint64_t seed = 0;

    void validate() const;
    std::string describe() const;
};

/// y = x + n, n ~ Normal(0, (sigma/255)^2) i.i.d. per element. The output is
/// not clipped; clipping happens only at PNG encoding and metric time.
Image add_gaussian_noise(const Image& clean, double sigma, std::uint64_t seed);

/// Per element draws k ~ Poisson(clean * peak) and outputs k / peak. The
/// paper's setting corresponds to peak = 255, where the Poisson rate equals
/// the 0-255 pixel value.
Image add_poisson_noise(const Image& clean, double peak, std::uint64_t seed);

/// Dispatches on spec.kind with a per-sample seed derived from
/// (spec.seed, sample_index) so datasets corrupt reproducibly element by
/// element.
Image corrupt(const Image& clean, const NoiseSpec& spec, std::uint64_t sample_index);

/// Fresh corruption for training epochs: the derived seed also folds in the
/// epoch number, so every epoch sees a new, reproducible noise field.
Image corrupt_for_epoch(const Image& clean, const NoiseSpec& spec, std::uint64_t sample_index,
                        std::uint64_t epoch);

}  // namespace sdabn
