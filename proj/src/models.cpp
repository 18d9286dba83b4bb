#include "sdabn/models.hpp"

#include <cmath>

#include "sdabn/rng.hpp"

namespace sdabn {

std::int64_t param_count(const ParamList& params) {
    std::int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

std::uint64_t param_digest(const ParamList& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : params) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double), h);
    }
    return h;
}

Conv2dLayer Conv2dLayer::make(std::int64_t in_ch, std::int64_t out_ch, int kernel, int stride,
                              int padding, int dilation, std::uint64_t seed, double weight_scale,
                              double bias_value) {
    Conv2dLayer layer;
    // Kaiming fan-in scaling: std = sqrt(2 / (in * k * k))
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel)) * weight_scale;
    layer.weight = random_normal({out_ch, in_ch, kernel, kernel}, seed, stddev);
    layer.weight.set_requires_grad(true);
    layer.bias = Tensor::full({out_ch}, bias_value);
    layer.bias.set_requires_grad(true);
    layer.stride = stride;
    layer.padding = padding;
    layer.dilation = dilation;
    return layer;
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
    return conv2d(x, weight, bias, stride, padding, dilation);
}

void Conv2dLayer::register_params(ParamList& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

SftParams SftParams::make(std::int64_t cond_channels, std::int64_t branch_width,
                          std::int64_t feature_channels, int site_count, std::uint64_t seed) {
    SftParams p;
    p.shared1 = Conv2dLayer::make(cond_channels, branch_width, 3, 1, 1, 1, derive_seed(seed, 1));
    p.shared2 = Conv2dLayer::make(branch_width, branch_width, 3, 1, 1, 1, derive_seed(seed, 2));
    for (int s = 0; s < site_count; ++s) {
        Site site;
        site.gamma_head = Conv2dLayer::make(branch_width, feature_channels, 3, 1, 1, 1,
                                            derive_seed(seed, 100 + static_cast<std::uint64_t>(s)),
                                            0.1, 1.0);
        site.beta_head = Conv2dLayer::make(branch_width, feature_channels, 3, 1, 1, 1,
                                           derive_seed(seed, 200 + static_cast<std::uint64_t>(s)),
                                           0.1, 0.0);
        p.sites.push_back(std::move(site));
    }
    return p;
}

Tensor SftParams::shared_features(const Tensor& condition) const {
    return relu(shared2.forward(relu(shared1.forward(condition))));
}

Tensor SftParams::modulate(int site, const Tensor& features, const Tensor& shared) const {
    const Site& s = sites.at(static_cast<std::size_t>(site));
    Tensor gamma = s.gamma_head.forward(shared);
    Tensor beta = s.beta_head.forward(shared);
    return add(mul(gamma, features), beta);
}

void SftParams::register_params(ParamList& out, const std::string& prefix) const {
    shared1.register_params(out, prefix + ".shared1");
    shared2.register_params(out, prefix + ".shared2");
    for (std::size_t s = 0; s < sites.size(); ++s) {
        sites[s].gamma_head.register_params(out, prefix + ".site" + std::to_string(s) + ".gamma");
        sites[s].beta_head.register_params(out, prefix + ".site" + std::to_string(s) + ".beta");
    }
}

Tensor sft_forward(const Tensor& features, const Tensor& condition, const SftParams& params, int site) {
    if (features.dim(2) != condition.dim(2) || features.dim(3) != condition.dim(3)) {
        throw ConfigError("sft_forward: feature and condition spatial extents differ");
    }
    return params.modulate(site, features, params.shared_features(condition));
}

SegNetTiny SegNetTiny::make(const SegNetConfig& config, std::uint64_t seed) {
    SegNetTiny net;
    net.config = config;
    const std::int64_t w1 = config.width1, w2 = config.width2, w3 = config.width3;
    net.enc1 = Conv2dLayer::make(3, w1, 3, 1, 1, 1, derive_seed(seed, 11));
    net.enc2 = Conv2dLayer::make(w1, w2, 3, 2, 1, 1, derive_seed(seed, 12));
    net.enc3 = Conv2dLayer::make(w2, w3, 3, 2, 1, 1, derive_seed(seed, 13));
    net.dec2 = Conv2dLayer::make(w3 + w2, w2, 3, 1, 1, 1, derive_seed(seed, 14));
    net.dec1 = Conv2dLayer::make(w2 + w1, w1, 3, 1, 1, 1, derive_seed(seed, 15));
    net.head = Conv2dLayer::make(w1, config.classes, 1, 1, 0, 1, derive_seed(seed, 16));
    return net;
}

std::pair<Tensor, Tensor> SegNetTiny::forward(const Tensor& images) const {
    if (images.ndim() != 4) throw ConfigError("SegNetTiny expects [B,3,H,W] input");
    if (images.dim(2) % 4 != 0 || images.dim(3) % 4 != 0) {
        throw ConfigError("SegNetTiny input extents must be divisible by 4, got " +
                          shape_str(images.shape()));
    }
    Tensor e1 = relu(enc1.forward(images));
    Tensor e2 = relu(enc2.forward(e1));
    Tensor e3 = relu(enc3.forward(e2));
    Tensor u2 = upsample_nearest2x(e3);
    const Tensor cat2[] = {u2, e2};
    Tensor d2 = relu(dec2.forward(concat_channels(cat2)));
    Tensor u1 = upsample_nearest2x(d2);
    const Tensor cat1[] = {u1, e1};
    Tensor d1 = relu(dec1.forward(concat_channels(cat1)));
    Tensor logits = head.forward(d1);
    Tensor probs = softmax_channels(logits);
    return {logits, probs};
}

void SegNetTiny::register_params(ParamList& out, const std::string& prefix) const {
    enc1.register_params(out, prefix + ".enc1");
    enc2.register_params(out, prefix + ".enc2");
    enc3.register_params(out, prefix + ".enc3");
    dec2.register_params(out, prefix + ".dec2");
    dec1.register_params(out, prefix + ".dec1");
    head.register_params(out, prefix + ".head");
}

void SegNetTiny::copy_values_from(const SegNetTiny& other) {
    ParamList mine, theirs;
    register_params(mine, "seg");
    other.register_params(theirs, "seg");
    if (mine.size() != theirs.size()) throw UsageError("SegNetTiny::copy_values_from: layout mismatch");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].second.shape() != theirs[i].second.shape()) {
            throw UsageError("SegNetTiny::copy_values_from: shape mismatch at " + mine[i].first);
        }
        mine[i].second.values() = theirs[i].second.values();
    }
}

std::pair<Tensor, Tensor> seg_forward(const SegNetTiny& net, const Tensor& images) {
    return net.forward(images);
}

DenoiserTiny DenoiserTiny::make(const DenoiserConfig& config, std::uint64_t seed) {
    DenoiserTiny net;
    net.config = config;
    const std::int64_t w = config.width;
    net.head = Conv2dLayer::make(3 * config.image_inputs, w, 3, 1, 1, 1, derive_seed(seed, 21));
    for (std::size_t i = 0; i < config.dilations.size(); ++i) {
        const int d = config.dilations[i];
        net.body.push_back(Conv2dLayer::make(w, w, 3, 1, d, d, derive_seed(seed, 30 + i)));
    }
    // small tail so a fresh denoiser starts near the identity on its input
    net.tail = Conv2dLayer::make(w, 3, 3, 1, 1, 1, derive_seed(seed, 22), 0.05);
    if (config.cond_channels > 0) {
        net.sft = SftParams::make(config.cond_channels, config.sft_width, w,
                                  static_cast<int>(config.dilations.size()) + 1, derive_seed(seed, 23));
    }
    return net;
}

Tensor DenoiserTiny::forward(std::span<const Tensor> images, const Tensor& condition) const {
    if (images.empty()) throw ConfigError("DenoiserTiny: no image inputs");
    if (static_cast<int>(images.size()) != config.image_inputs) {
        throw ConfigError("DenoiserTiny: expected " + std::to_string(config.image_inputs) +
                          " image inputs, got " + std::to_string(images.size()));
    }
    for (const Tensor& t : images) {
        if (t.dim(2) != images[0].dim(2) || t.dim(3) != images[0].dim(3)) {
            throw ConfigError("DenoiserTiny: image inputs are not spatially aligned");
        }
    }
    Tensor shared;
    if (conditioned()) {
        if (!condition.defined()) throw ConfigError("DenoiserTiny: conditioned variant needs a condition");
        if (condition.dim(2) != images[0].dim(2) || condition.dim(3) != images[0].dim(3)) {
            throw ConfigError("DenoiserTiny: condition is not spatially aligned with the images");
        }
        shared = sft.shared_features(condition);
    }

    Tensor x = images.size() == 1 ? images[0] : concat_channels(images);
    Tensor f = head.forward(x);
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (conditioned()) f = sft.modulate(static_cast<int>(i), f, shared);
        f = relu(body[i].forward(f));
    }
    if (conditioned()) f = sft.modulate(static_cast<int>(body.size()), f, shared);
    Tensor predicted_noise = tail.forward(f);
    if (config.residual) return sub(images[0], predicted_noise);
    return predicted_noise;
}

void DenoiserTiny::register_params(ParamList& out, const std::string& prefix) const {
    head.register_params(out, prefix + ".head");
    for (std::size_t i = 0; i < body.size(); ++i) {
        body[i].register_params(out, prefix + ".body" + std::to_string(i));
    }
    tail.register_params(out, prefix + ".tail");
    if (conditioned()) sft.register_params(out, prefix + ".sft");
}

Tensor denoise_plain(const DenoiserTiny& net, const Tensor& images) {
    const Tensor single[] = {images};
    return net.forward(single, Tensor());
}

Tensor denoise_conditioned(const DenoiserTiny& net, std::span<const Tensor> image_inputs,
                           const Tensor& condition) {
    return net.forward(image_inputs, condition);
}

SdbParams SdbParams::make(const SegNetConfig& seg_config, const DenoiserConfig& den_config,
                          std::uint64_t seed) {
    if (den_config.cond_channels > 0 && den_config.cond_channels != seg_config.classes) {
        throw ConfigError("SdbParams: condition channel count must equal the class count");
    }
    SdbParams p;
    p.seg = SegNetTiny::make(seg_config, derive_seed(seed, 41));
    p.den = DenoiserTiny::make(den_config, derive_seed(seed, 42));
    return p;
}

void SdbParams::register_params(ParamList& out, const std::string& prefix) const {
    seg.register_params(out, prefix + ".seg");
    den.register_params(out, prefix + ".den");
}

SdbOutputs sdb_forward(const SdbParams& params, const Tensor& input, const Tensor* skip_y) {
    SdbOutputs out;
    auto [logits, probs] = params.seg.forward(input);
    out.logits = logits;
    out.probs = probs;
    if (skip_y != nullptr) {
        const Tensor pair[] = {input, *skip_y};
        out.denoised = params.den.forward(pair, probs);
    } else {
        const Tensor single[] = {input};
        out.denoised = params.den.forward(single, probs);
    }
    return out;
}

Tensor replicate_channels(const Tensor& images, std::int64_t channels) {
    if (images.ndim() != 4) throw ConfigError("replicate_channels expects [B,C,H,W]");
    const std::int64_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    Tensor out({b, channels, h, w});
    const std::int64_t plane = h * w;
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t oc = 0; oc < channels; ++oc) {
            const std::int64_t ic = oc % c;
            std::copy(images.data() + (bi * c + ic) * plane, images.data() + (bi * c + ic + 1) * plane,
                      out.data() + (bi * channels + oc) * plane);
        }
    }
    return out;
}

}  // namespace sdabn
