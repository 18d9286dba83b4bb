#include "sdabn/cascade.hpp"

#include "sdabn/rng.hpp"

namespace sdabn {

std::string variant_name(BlockVariant v) {
    switch (v) {
        case BlockVariant::conditioned: return "conditioned";
        case BlockVariant::plain: return "plain";
        case BlockVariant::img_conditioned: return "img-condition";
        case BlockVariant::gt_conditioned: return "gt-condition";
    }
    return "conditioned";
}

BlockVariant variant_from_name(const std::string& name) {
    if (name == "conditioned") return BlockVariant::conditioned;
    if (name == "plain") return BlockVariant::plain;
    if (name == "img-condition") return BlockVariant::img_conditioned;
    if (name == "gt-condition") return BlockVariant::gt_conditioned;
    throw ConfigError("unknown block variant '" + name +
                      "' (expected conditioned|plain|img-condition|gt-condition)");
}

void CascadeParams::register_params(ParamList& out) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].sdb.register_params(out, "block" + std::to_string(i + 1));
    }
}

CascadeParams make_cascade(const CascadeConfig& config, std::uint64_t seed) {
    if (config.blocks < 1) throw ConfigError("cascade needs at least one block");
    std::vector<BlockVariant> variants = config.variants;
    if (variants.empty()) variants.assign(static_cast<std::size_t>(config.blocks), BlockVariant::conditioned);
    if (variants.size() == 1 && config.blocks > 1) {
        variants.assign(static_cast<std::size_t>(config.blocks), variants[0]);
    }
    if (variants.size() != static_cast<std::size_t>(config.blocks)) {
        throw ConfigError("cascade variant list length does not match block count");
    }

    CascadeParams params;
    params.classes = config.seg.classes;
    params.truncated_tail = config.truncated_tail;
    for (std::int64_t i = 0; i < config.blocks; ++i) {
        CascadeBlock block;
        block.variant = variants[static_cast<std::size_t>(i)];
        DenoiserConfig den = config.den;
        den.image_inputs = i == 0 ? 1 : 2;
        den.cond_channels = block.variant == BlockVariant::plain ? 0 : config.seg.classes;
        block.sdb = SdbParams::make(config.seg, den, derive_seed(seed, 0xb10cull + static_cast<std::uint64_t>(i)));
        params.blocks.push_back(std::move(block));
    }
    return params;
}

Tensor block_condition(const CascadeBlock& block, std::int64_t classes, const Tensor& seg_input,
                       const Tensor& probs, const Tensor* gt_condition) {
    switch (block.variant) {
        case BlockVariant::plain:
            return Tensor();
        case BlockVariant::conditioned:
            return probs;
        case BlockVariant::img_conditioned:
            return replicate_channels(seg_input, classes);
        case BlockVariant::gt_conditioned:
            if (gt_condition == nullptr || !gt_condition->defined()) {
                throw UsageError("gt-conditioned block evaluated without a ground-truth condition");
            }
            return *gt_condition;
    }
    return probs;
}

CascadeOutputs cascade_forward(const CascadeParams& params, const Tensor& y, int upto,
                               const Tensor* gt_condition) {
    const int n = static_cast<int>(params.blocks.size());
    if (upto < 0) upto = n;
    if (upto < 1 || upto > n) {
        throw UsageError("cascade_forward: upto must lie in [1, " + std::to_string(n) + "]");
    }

    CascadeOutputs out;
    Tensor running = y;
    for (int i = 0; i < upto; ++i) {
        const CascadeBlock& block = params.blocks[static_cast<std::size_t>(i)];
        const Tensor& seg_input = running;
        auto [logits, probs] = block.sdb.seg.forward(seg_input);
        out.probs.push_back(probs);

        const bool tail_seg_only = params.truncated_tail && i == upto - 1 && upto == n;
        if (tail_seg_only) break;

        Tensor cond = block_condition(block, params.classes, seg_input, probs, gt_condition);
        Tensor denoised;
        if (i == 0) {
            const Tensor single[] = {seg_input};
            denoised = block.sdb.den.forward(single, cond);
        } else {
            const Tensor pair[] = {seg_input, y};
            denoised = block.sdb.den.forward(pair, cond);
        }
        out.denoised.push_back(denoised);
        running = denoised;
    }
    return out;
}

CascadeParams cascade_truncate_tail(const CascadeParams& params) {
    CascadeParams view = params;  // blocks share tensor storage
    view.truncated_tail = true;
    return view;
}

}  // namespace sdabn
