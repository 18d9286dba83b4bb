#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdabn/models.hpp"

namespace sdabn {

enum class BlockVariant { conditioned, plain, img_conditioned, gt_conditioned };

std::string variant_name(BlockVariant v);
BlockVariant variant_from_name(const std::string& name);

struct CascadeBlock {
    BlockVariant variant = BlockVariant::conditioned;
    SdbParams sdb;
};

/// An ordered cascade of SDBs. Block 1 consumes only y; block i >= 2 consumes
/// (x_hat_{i-1}, y) through channel concatenation at the denoiser head. With
/// truncated_tail the final block contributes only its segmentation map (the
/// S1 D1 ... Sn evaluation form).
struct CascadeParams {
    std::int64_t classes = 4;
    std::vector<CascadeBlock> blocks;
    bool truncated_tail = false;

    std::size_t size() const { return blocks.size(); }
    void register_params(ParamList& out) const;
};

struct CascadeConfig {
    std::int64_t blocks = 3;
    std::vector<BlockVariant> variants;  // broadcast of one entry is allowed
    SegNetConfig seg;
    DenoiserConfig den;  // image_inputs/cond_channels are derived per block
    bool truncated_tail = false;
};

CascadeParams make_cascade(const CascadeConfig& config, std::uint64_t seed);

struct CascadeOutputs {
    std::vector<Tensor> probs;     // per block
    std::vector<Tensor> denoised;  // per denoising block (one fewer if truncated)
};

/// Runs s1 = S1(y), x1 = D1(y, s1), then si = Si(x_{i-1}),
/// xi = Di(x_{i-1}, si, y) for i = 2..upto, returning every intermediate.
/// gt_condition is required when any evaluated block is gt-conditioned.
CascadeOutputs cascade_forward(const CascadeParams& params, const Tensor& y, int upto = -1,
                               const Tensor* gt_condition = nullptr);

/// View of the cascade whose final output is the last segmentation map
/// rather than a denoised image. Shares parameter storage with the input.
CascadeParams cascade_truncate_tail(const CascadeParams& params);

/// The condition tensor block i would feed its denoiser given the block's
/// segmentation input. Undefined for plain blocks.
Tensor block_condition(const CascadeBlock& block, std::int64_t classes, const Tensor& seg_input,
                       const Tensor& probs, const Tensor* gt_condition);

}  // namespace sdabn
