#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sdabn/cascade.hpp"
#include "sdabn/dataset.hpp"
#include "sdabn/metrics.hpp"
#include "sdabn/noise.hpp"

namespace sdabn {

struct EvalOptions {
    int batch_size = 8;
    bool dump_images = false;
    std::filesystem::path dump_dir;
    std::string dump_prefix;  // e.g. "test"
};

/// Per-unit metrics over one split. Record 0 scores the noisy input itself
/// (PSNR/SSIM only); record i scores block i's denoised image and, where the
/// block's segmentation head is trained, its label map. Per-image PSNR/SSIM
/// are averaged; segmentation metrics come from one confusion matrix
/// accumulated over the whole split.
std::vector<MetricsRecord> evaluate_cascade(const CascadeParams& cascade,
                                            const std::vector<Sample>& samples,
                                            const NoiseSpec& noise, const EvalOptions& options = {});

/// Fixed class palette used by segmentation dumps (index = class id).
void write_label_png(const LabelMap& labels, const std::filesystem::path& path);

/// Writes one metrics CSV with a `# split: <name>` section per entry.
void write_metrics_csv(const std::filesystem::path& path, const std::string& experiment_id,
                       const std::string& noise_description,
                       const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& sections);

}  // namespace sdabn
