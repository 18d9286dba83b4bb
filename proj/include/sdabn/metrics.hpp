#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdabn/image.hpp"

namespace sdabn {

/// PSNR in dB over the joint MSE of all elements, with MAX = 1.0 on the
/// [0,1] domain. Both images are clamped to [0,1] first. Identical images
/// return the cap value 99.0 dB.
double psnr(const Image& reference, const Image& test);

inline constexpr double kPsnrCap = 99.0;

/// Single-scale SSIM: 11x11 Gaussian window (std 1.5), K1=0.01, K2=0.03,
/// dynamic range 1.0, valid-window borders, computed per channel and
/// averaged. Requires min(H, W) >= 11.
double ssim(const Image& reference, const Image& test);

/// N x N confusion counts; rows are ground truth, columns are predictions.
/// Ignore-sentinel pixels never enter the matrix.
class ConfusionMatrix {
  public:
    explicit ConfusionMatrix(std::int64_t classes);

    std::int64_t classes() const { return classes_; }
    std::uint64_t at(std::int64_t truth, std::int64_t predicted) const;
    std::uint64_t total() const;

    void add(const LabelMap& prediction, const LabelMap& truth);
    void merge(const ConfusionMatrix& other);

  private:
    std::int64_t classes_;
    std::vector<std::uint64_t> counts_;
};

void accumulate_confusion(ConfusionMatrix& cm, const LabelMap& prediction, const LabelMap& truth);

/// Mean over classes with a nonzero union of diag/(rowsum+colsum-diag);
/// classes absent from both prediction and truth are skipped.
double miou(const ConfusionMatrix& cm);
/// trace / total.
double pixel_accuracy(const ConfusionMatrix& cm);
/// Mean over classes present in truth of per-class recall.
double mean_accuracy(const ConfusionMatrix& cm);

/// One per-unit evaluation row (the schema of the metrics CSV).
struct MetricsRecord {
    int unit_index = 0;
    int sample_count = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double miou = 0.0;
    double pixel_accuracy = 0.0;
    double mean_accuracy = 0.0;
    bool has_denoising = true;
    bool has_segmentation = true;
};

/// Serializes records as `experiment_id,unit,metric,value` CSV rows with
/// values fixed to 6 decimals.
std::string metrics_to_csv_rows(const std::string& experiment_id,
                                const std::vector<MetricsRecord>& records);

}  // namespace sdabn
