#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdabn/tensor.hpp"

namespace sdabn {

/// RGB image, planar channel-major layout [3][H][W], values nominally in
/// [0,1]. Clean images stay inside the range; noisy images may leave it.
struct Image {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 3;
    std::vector<double> data;  // [channels][height][width]

    Image() = default;
    Image(std::int64_t h, std::int64_t w, std::int64_t c = 3)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h * w * c), 0.0) {}

    std::int64_t numel() const { return height * width * channels; }
    double& at(std::int64_t c, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((c * height + y) * width + x)];
    }
    double at(std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((c * height + y) * width + x)];
    }
};

/// Per-pixel class ids in [0, classes) plus the ignore sentinel 255.
struct LabelMap {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> data;  // [height][width]

    static constexpr std::uint8_t kIgnore = 255;

    LabelMap() = default;
    LabelMap(std::int64_t h, std::int64_t w)
        : height(h), width(w), data(static_cast<std::size_t>(h * w), 0) {}

    std::uint8_t& at(std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>(y * width + x)];
    }
    std::uint8_t at(std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>(y * width + x)];
    }
};

/// 8-bit PNG I/O. Decoding maps byte b to b/255; encoding clamps to [0,1]
/// and maps v to round(v*255) with halves rounding up, so any 8-bit image
/// round-trips losslessly.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);
LabelMap load_label_map(const std::filesystem::path& path);
void save_label_map(const LabelMap& labels, const std::filesystem::path& path);

std::uint8_t quantize_unit_to_byte(double v);

// ---- tensor bridging --------------------------------------------------------

/// Stacks images into a [B,3,H,W] tensor.
Tensor images_to_tensor(const std::vector<Image>& images);
Tensor image_to_tensor(const Image& image);
std::vector<Image> tensor_to_images(const Tensor& batch);
LabelBatch labels_to_batch(const std::vector<LabelMap>& labels);

/// Per-pixel argmax over the channel axis of a [N,H,W] slice of probs.
/// Ties resolve to the lowest class index.
LabelMap argmax_labels(const Tensor& probs, std::int64_t batch_index);

/// One-hot encodes labels as a [B,N,H,W] tensor; ignored pixels are all-zero.
Tensor one_hot_labels(const LabelBatch& labels, std::int64_t classes);

}  // namespace sdabn
