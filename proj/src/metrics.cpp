#include "sdabn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sdabn/errors.hpp"

namespace sdabn {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

double psnr(const Image& reference, const Image& test) {
    if (reference.height != test.height || reference.width != test.width ||
        reference.channels != test.channels) {
        throw UsageError("psnr: image shapes differ");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < reference.data.size(); ++i) {
        const double e = clamp01(reference.data[i]) - clamp01(test.data[i]);
        acc += e * e;
    }
    const double mse = acc / static_cast<double>(reference.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

/// 11-tap Gaussian window, std 1.5, normalized to sum 1.
const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(11);
        double total = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double d = static_cast<double>(i - 5);
            v[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            total += v[static_cast<std::size_t>(i)];
        }
        for (double& x : v) x /= total;
        return v;
    }();
    return w;
}

/// Separable weighted local sums with valid borders: output is
/// (H-10) x (W-10).
void gaussian_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                    std::vector<double>& out) {
    const auto& win = ssim_window();
    const std::int64_t wv = w - 10;
    const std::int64_t hv = h - 10;
    std::vector<double> horiz(static_cast<std::size_t>(h * wv));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < wv; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 11; ++k) acc += win[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y * w + x + k)];
            horiz[static_cast<std::size_t>(y * wv + x)] = acc;
        }
    }
    out.assign(static_cast<std::size_t>(hv * wv), 0.0);
    for (std::int64_t y = 0; y < hv; ++y) {
        for (std::int64_t x = 0; x < wv; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 11; ++k) acc += win[static_cast<std::size_t>(k)] * horiz[static_cast<std::size_t>((y + k) * wv + x)];
            out[static_cast<std::size_t>(y * wv + x)] = acc;
        }
    }
}

}  // namespace

double ssim(const Image& reference, const Image& test) {
    if (reference.height != test.height || reference.width != test.width ||
        reference.channels != test.channels) {
        throw UsageError("ssim: image shapes differ");
    }
    if (std::min(reference.height, reference.width) < 11) {
        throw UsageError("ssim: images must be at least 11 pixels on each side");
    }
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    const std::int64_t h = reference.height, w = reference.width;
    const std::int64_t plane = h * w;

    double total = 0.0;
    std::vector<double> x(static_cast<std::size_t>(plane)), y(static_cast<std::size_t>(plane));
    std::vector<double> xx(static_cast<std::size_t>(plane)), yy(static_cast<std::size_t>(plane)),
        xy(static_cast<std::size_t>(plane));
    std::vector<double> mx, my, mxx, myy, mxy;
    for (std::int64_t c = 0; c < reference.channels; ++c) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const double a = clamp01(reference.data[static_cast<std::size_t>(c * plane + i)]);
            const double b = clamp01(test.data[static_cast<std::size_t>(c * plane + i)]);
            x[static_cast<std::size_t>(i)] = a;
            y[static_cast<std::size_t>(i)] = b;
            xx[static_cast<std::size_t>(i)] = a * a;
            yy[static_cast<std::size_t>(i)] = b * b;
            xy[static_cast<std::size_t>(i)] = a * b;
        }
        gaussian_valid(x, h, w, mx);
        gaussian_valid(y, h, w, my);
        gaussian_valid(xx, h, w, mxx);
        gaussian_valid(yy, h, w, myy);
        gaussian_valid(xy, h, w, mxy);

        double acc = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double mu_x = mx[i], mu_y = my[i];
            const double var_x = mxx[i] - mu_x * mu_x;
            const double var_y = myy[i] - mu_y * mu_y;
            const double cov = mxy[i] - mu_x * mu_y;
            acc += ((2.0 * mu_x * mu_y + kC1) * (2.0 * cov + kC2)) /
                   ((mu_x * mu_x + mu_y * mu_y + kC1) * (var_x + var_y + kC2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(reference.channels);
}

ConfusionMatrix::ConfusionMatrix(std::int64_t classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes * classes), 0) {
    if (classes < 2) throw ConfigError("ConfusionMatrix needs at least 2 classes");
}

std::uint64_t ConfusionMatrix::at(std::int64_t truth, std::int64_t predicted) const {
    return counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts_) t += c;
    return t;
}

void ConfusionMatrix::add(const LabelMap& prediction, const LabelMap& truth) {
    if (prediction.height != truth.height || prediction.width != truth.width) {
        throw UsageError("accumulate_confusion: label shapes differ");
    }
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
        const std::uint8_t t = truth.data[i];
        if (t == LabelMap::kIgnore) continue;
        const std::uint8_t p = prediction.data[i];
        if (t >= classes_ || p >= classes_) {
            throw DataError("accumulate_confusion: class id out of range");
        }
        ++counts_[static_cast<std::size_t>(t * classes_ + p)];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw UsageError("ConfusionMatrix::merge: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void accumulate_confusion(ConfusionMatrix& cm, const LabelMap& prediction, const LabelMap& truth) {
    cm.add(prediction, truth);
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw UsageError("segmentation metric on an empty confusion matrix");
}

}  // namespace

double miou(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    const std::int64_t n = cm.classes();
    double acc = 0.0;
    int present = 0;
    for (std::int64_t c = 0; c < n; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::int64_t k = 0; k < n; ++k) {
            row += cm.at(c, k);
            col += cm.at(k, c);
        }
        const std::uint64_t diag = cm.at(c, c);
        const std::uint64_t uni = row + col - diag;
        if (uni == 0) continue;
        acc += static_cast<double>(diag) / static_cast<double>(uni);
        ++present;
    }
    return present ? acc / present : 0.0;
}

double pixel_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    std::uint64_t diag = 0;
    for (std::int64_t c = 0; c < cm.classes(); ++c) diag += cm.at(c, c);
    return static_cast<double>(diag) / static_cast<double>(cm.total());
}

double mean_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    const std::int64_t n = cm.classes();
    double acc = 0.0;
    int present = 0;
    for (std::int64_t c = 0; c < n; ++c) {
        std::uint64_t row = 0;
        for (std::int64_t k = 0; k < n; ++k) row += cm.at(c, k);
        if (row == 0) continue;
        acc += static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
        ++present;
    }
    return present ? acc / present : 0.0;
}

std::string metrics_to_csv_rows(const std::string& experiment_id,
                                const std::vector<MetricsRecord>& records) {
    std::string out;
    char buf[64];
    auto row = [&](int unit, const char* metric, double value) {
        std::snprintf(buf, sizeof(buf), "%.6f", value);
        out += experiment_id;
        out += ',';
        out += std::to_string(unit);
        out += ',';
        out += metric;
        out += ',';
        out += buf;
        out += '\n';
    };
    for (const MetricsRecord& r : records) {
        if (r.has_denoising) {
            row(r.unit_index, "psnr", r.psnr);
            row(r.unit_index, "ssim", r.ssim);
        }
        if (r.has_segmentation) {
            row(r.unit_index, "miou", r.miou);
            row(r.unit_index, "pixel_accuracy", r.pixel_accuracy);
            row(r.unit_index, "mean_accuracy", r.mean_accuracy);
        }
    }
    return out;
}

}  // namespace sdabn
