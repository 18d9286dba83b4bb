#include "sdabn/eval.hpp"

#include <fstream>

#include "sdabn/errors.hpp"
#include "sdabn/image.hpp"

namespace sdabn {

namespace {

constexpr std::uint8_t kPalette[16][3] = {
    {64, 64, 64},   {220, 60, 50},  {60, 90, 220},  {230, 220, 60},
    {140, 70, 200}, {70, 200, 180}, {250, 140, 30}, {160, 160, 160},
    {120, 40, 40},  {40, 120, 40},  {40, 40, 120},  {200, 200, 120},
    {120, 200, 200}, {200, 120, 200}, {90, 50, 10},  {10, 90, 50},
};

bool unit_reports_segmentation(const CascadeParams& cascade, std::size_t block) {
    const CascadeBlock& b = cascade.blocks[block];
    if (cascade.truncated_tail && block + 1 == cascade.blocks.size()) return true;
    return b.variant == BlockVariant::conditioned;
}

}  // namespace

void write_label_png(const LabelMap& labels, const std::filesystem::path& path) {
    Image img(labels.height, labels.width, 3);
    for (std::int64_t y = 0; y < labels.height; ++y) {
        for (std::int64_t x = 0; x < labels.width; ++x) {
            const std::uint8_t lab = labels.at(y, x);
            for (int c = 0; c < 3; ++c) {
                const std::uint8_t byte = lab == LabelMap::kIgnore ? 255 : kPalette[lab % 16][c];
                img.at(c, y, x) = static_cast<double>(byte) / 255.0;
            }
        }
    }
    save_image(img, path);
}

std::vector<MetricsRecord> evaluate_cascade(const CascadeParams& cascade,
                                            const std::vector<Sample>& samples,
                                            const NoiseSpec& noise, const EvalOptions& options) {
    if (samples.empty()) throw UsageError("evaluate_cascade: empty sample set");
    const std::size_t n_blocks = cascade.blocks.size();
    const std::size_t denoised_units = cascade.truncated_tail ? n_blocks - 1 : n_blocks;

    std::vector<double> psnr_sum(n_blocks + 1, 0.0), ssim_sum(n_blocks + 1, 0.0);
    std::vector<ConfusionMatrix> cms;
    cms.reserve(n_blocks);
    for (std::size_t i = 0; i < n_blocks; ++i) cms.emplace_back(cascade.classes);

    if (options.dump_images) {
        std::error_code ec;
        std::filesystem::create_directories(options.dump_dir, ec);
    }

    NoGradGuard no_grad;
    const std::size_t bs = static_cast<std::size_t>(options.batch_size);
    for (std::size_t begin = 0; begin < samples.size(); begin += bs) {
        const std::size_t end = std::min(samples.size(), begin + bs);
        std::vector<Image> clean_imgs, noisy_imgs;
        std::vector<LabelMap> labels;
        for (std::size_t k = begin; k < end; ++k) {
            clean_imgs.push_back(samples[k].clean);
            noisy_imgs.push_back(corrupt(samples[k].clean, noise, samples[k].index));
            labels.push_back(samples[k].labels);
        }
        const Tensor y = images_to_tensor(noisy_imgs);
        const LabelBatch label_batch = labels_to_batch(labels);
        Tensor gt_cond;
        for (const CascadeBlock& b : cascade.blocks) {
            if (b.variant == BlockVariant::gt_conditioned) {
                gt_cond = one_hot_labels(label_batch, cascade.classes);
                break;
            }
        }

        CascadeOutputs out = cascade_forward(cascade, y, -1, gt_cond.defined() ? &gt_cond : nullptr);

        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t j = k - begin;
            psnr_sum[0] += psnr(clean_imgs[j], noisy_imgs[j]);
            ssim_sum[0] += ssim(clean_imgs[j], noisy_imgs[j]);
        }
        for (std::size_t u = 0; u < denoised_units; ++u) {
            const std::vector<Image> den = tensor_to_images(out.denoised[u]);
            for (std::size_t j = 0; j < den.size(); ++j) {
                psnr_sum[u + 1] += psnr(clean_imgs[j], den[j]);
                ssim_sum[u + 1] += ssim(clean_imgs[j], den[j]);
                if (options.dump_images) {
                    const std::string stem = options.dump_prefix + "sample" +
                                             std::to_string(samples[begin + j].index) + "_unit" +
                                             std::to_string(u + 1);
                    save_image(den[j], options.dump_dir / (stem + "_denoised.png"));
                }
            }
        }
        for (std::size_t u = 0; u < n_blocks && u < out.probs.size(); ++u) {
            if (!unit_reports_segmentation(cascade, u)) continue;
            for (std::size_t j = 0; j < end - begin; ++j) {
                const LabelMap pred = argmax_labels(out.probs[u], static_cast<std::int64_t>(j));
                cms[u].add(pred, labels[j]);
                if (options.dump_images) {
                    const std::string stem = options.dump_prefix + "sample" +
                                             std::to_string(samples[begin + j].index) + "_unit" +
                                             std::to_string(u + 1);
                    write_label_png(pred, options.dump_dir / (stem + "_seg.png"));
                }
            }
        }
    }

    const double count = static_cast<double>(samples.size());
    std::vector<MetricsRecord> records;
    MetricsRecord noisy_rec;
    noisy_rec.unit_index = 0;
    noisy_rec.sample_count = static_cast<int>(samples.size());
    noisy_rec.psnr = psnr_sum[0] / count;
    noisy_rec.ssim = ssim_sum[0] / count;
    noisy_rec.has_segmentation = false;
    records.push_back(noisy_rec);

    for (std::size_t u = 0; u < n_blocks; ++u) {
        MetricsRecord r;
        r.unit_index = static_cast<int>(u + 1);
        r.sample_count = static_cast<int>(samples.size());
        r.has_denoising = u < denoised_units;
        if (r.has_denoising) {
            r.psnr = psnr_sum[u + 1] / count;
            r.ssim = ssim_sum[u + 1] / count;
        }
        r.has_segmentation = unit_reports_segmentation(cascade, u);
        if (r.has_segmentation) {
            r.miou = miou(cms[u]);
            r.pixel_accuracy = pixel_accuracy(cms[u]);
            r.mean_accuracy = mean_accuracy(cms[u]);
        }
        if (r.has_denoising || r.has_segmentation) records.push_back(r);
    }
    return records;
}

void write_metrics_csv(const std::filesystem::path& path, const std::string& experiment_id,
                       const std::string& noise_description,
                       const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& sections) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write metrics CSV " + path.string());
    out << "# sdabn metrics v1\n";
    out << "# noise: " << noise_description << "\n";
    out << "experiment_id,unit,metric,value\n";
    for (const auto& [split, records] : sections) {
        out << "# split: " << split << "\n";
        out << metrics_to_csv_rows(experiment_id, records);
    }
    if (!out) throw IoError("failed while writing metrics CSV " + path.string());
}

}  // namespace sdabn
