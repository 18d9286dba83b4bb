#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdabn/tensor.hpp"

namespace sdabn {

/// Ordered named-parameter registry; the ordering defines optimizer and
/// checkpoint layout, so registration order must stay stable.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

std::int64_t param_count(const ParamList& params);
/// FNV-1a digest over every tensor's raw bytes, in registration order.
std::uint64_t param_digest(const ParamList& params);

struct Conv2dLayer {
    Tensor weight;  // [out, in, k, k]
    Tensor bias;    // [out]
    int stride = 1;
    int padding = 0;
    int dilation = 1;

    static Conv2dLayer make(std::int64_t in_ch, std::int64_t out_ch, int kernel, int stride,
                            int padding, int dilation, std::uint64_t seed, double weight_scale = 1.0,
                            double bias_value = 0.0);
    Tensor forward(const Tensor& x) const;
    void register_params(ParamList& out, const std::string& prefix) const;
};

/// Spatial feature transform parameters: a condition branch shared by all
/// modulation sites (2 conv-relu layers) plus per-site gamma/beta head convs
/// mapping the shared features to the modulated layer's channel count.
/// The gamma head's bias starts at 1 and all head weights start small, so the
/// transform opens as a near-identity.
struct SftParams {
    Conv2dLayer shared1, shared2;
    struct Site {
        Conv2dLayer gamma_head, beta_head;
    };
    std::vector<Site> sites;

    static SftParams make(std::int64_t cond_channels, std::int64_t branch_width,
                          std::int64_t feature_channels, int site_count, std::uint64_t seed);
    Tensor shared_features(const Tensor& condition) const;
    /// gamma (x) F + beta for one site, given precomputed shared features.
    Tensor modulate(int site, const Tensor& features, const Tensor& shared) const;
    void register_params(ParamList& out, const std::string& prefix) const;
};

/// gamma (x) F + beta computed from the raw condition through the shared
/// branch and the site heads.
Tensor sft_forward(const Tensor& features, const Tensor& condition, const SftParams& params,
                   int site = 0);

struct SegNetConfig {
    std::int64_t classes = 4;
    std::int64_t width1 = 16;
    std::int64_t width2 = 32;
    std::int64_t width3 = 64;
};

/// Encoder-decoder segmentation net: 3 conv-relu encoder stages (stride-2
/// downsampling into stages 2 and 3), 2 nearest-neighbor x2 upsample +
/// conv-relu decoder stages with skip connections, and a 1x1 classifier head.
/// Output resolution equals input resolution; requires H, W divisible by 4.
struct SegNetTiny {
    SegNetConfig config;
    Conv2dLayer enc1, enc2, enc3;
    Conv2dLayer dec2, dec1;
    Conv2dLayer head;

    static SegNetTiny make(const SegNetConfig& config, std::uint64_t seed);
    /// Returns (logits, probs); probs is the channel softmax of logits.
    std::pair<Tensor, Tensor> forward(const Tensor& images) const;
    void register_params(ParamList& out, const std::string& prefix) const;
    void copy_values_from(const SegNetTiny& other);
};

std::pair<Tensor, Tensor> seg_forward(const SegNetTiny& net, const Tensor& images);

struct DenoiserConfig {
    int image_inputs = 1;             // 1 for block 1, 2 for later blocks (adds the y skip)
    std::int64_t cond_channels = 0;   // 0 builds the plain (unconditioned) denoiser
    std::int64_t width = 32;
    std::int64_t sft_width = 32;
    std::vector<int> dilations = {1, 2, 4, 4, 2, 1};
    bool residual = true;
};

/// Dilated-conv denoiser: head conv (3*image_inputs -> width), 6 conv-relu
/// body layers with dilations 1,2,4,4,2,1 and matching padding, tail conv
/// (width -> 3). When conditioned, an SFT site modulates the input of every
/// body layer and of the tail (never the head). With residual learning the
/// tail predicts the noise field, subtracted from the first image input.
/// The tail weight starts downscaled so a fresh denoiser opens near the
/// identity on its running estimate.
struct DenoiserTiny {
    DenoiserConfig config;
    Conv2dLayer head;
    std::vector<Conv2dLayer> body;
    Conv2dLayer tail;
    SftParams sft;  // empty sites when unconditioned

    static DenoiserTiny make(const DenoiserConfig& config, std::uint64_t seed);
    bool conditioned() const { return config.cond_channels > 0; }
    Tensor forward(std::span<const Tensor> images, const Tensor& condition) const;
    void register_params(ParamList& out, const std::string& prefix) const;
};

Tensor denoise_plain(const DenoiserTiny& net, const Tensor& images);
Tensor denoise_conditioned(const DenoiserTiny& net, std::span<const Tensor> image_inputs,
                           const Tensor& condition);

/// One segmentation-and-denoising block: a segmentation net paired with a
/// conditioned denoiser whose SFT condition channel count equals the class
/// count.
struct SdbParams {
    SegNetTiny seg;
    DenoiserTiny den;

    static SdbParams make(const SegNetConfig& seg_config, const DenoiserConfig& den_config,
                          std::uint64_t seed);
    void register_params(ParamList& out, const std::string& prefix) const;
};

struct SdbOutputs {
    Tensor logits;
    Tensor probs;
    Tensor denoised;
};

/// s = S(input); x_hat = D(input [, skip_y], s). skip_y must be present
/// exactly when the block sits after the first position.
SdbOutputs sdb_forward(const SdbParams& params, const Tensor& input, const Tensor* skip_y = nullptr);

/// Replicates/truncates image channels cyclically to `channels` (the ImgD
/// control's condition).
Tensor replicate_channels(const Tensor& images, std::int64_t channels);

}  // namespace sdabn
