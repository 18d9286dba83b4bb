#include "sdabn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sdabn/errors.hpp"
#include "sdabn/rng.hpp"

namespace sdabn {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Per-class appearance constants. Base colors keep classes separable by
// color, the sinusoidal texture (frequency in cycles per image, orientation,
// amplitude) keeps them separable by local pattern even under heavy noise.
// Tuned once against the class-frequency regression bounds.
struct ClassStyle {
    double base[3];
    double freq;
    double angle;
    double amplitude;
};

constexpr ClassStyle kStyles[4] = {
    {{0.42, 0.52, 0.42}, 2.0, 0.5236, 0.06},   // background
    {{0.68, 0.32, 0.30}, 8.0, 0.0, 0.11},      // circle
    {{0.30, 0.38, 0.66}, 8.0, 1.5708, 0.11},   // rectangle
    {{0.62, 0.58, 0.28}, 12.0, 0.7854, 0.11},  // triangle
};

struct ShapeSpot {
    int klass;  // 1..3
    double cx, cy, radius;
    // circle: radius; rectangle: half extents; triangle: vertices
    double half_w = 0, half_h = 0;
    double vx[3] = {0, 0, 0}, vy[3] = {0, 0, 0};
};

bool inside_triangle(const ShapeSpot& s, double x, double y) {
    // same-side sign test against the three edges
    double sign = 0.0;
    for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        const double cross = (s.vx[j] - s.vx[i]) * (y - s.vy[i]) - (s.vy[j] - s.vy[i]) * (x - s.vx[i]);
        if (cross == 0.0) continue;
        const double c = cross > 0 ? 1.0 : -1.0;
        if (sign == 0.0) {
            sign = c;
        } else if (sign != c) {
            return false;
        }
    }
    return true;
}

bool inside(const ShapeSpot& s, double x, double y) {
    switch (s.klass) {
        case 1: {
            const double dx = x - s.cx, dy = y - s.cy;
            return dx * dx + dy * dy <= s.radius * s.radius;
        }
        case 2:
            return std::abs(x - s.cx) <= s.half_w && std::abs(y - s.cy) <= s.half_h;
        default:
            return inside_triangle(s, x, y);
    }
}

}  // namespace

void generate_sample(std::int64_t size, std::int64_t n_classes, std::uint64_t seed,
                     std::uint64_t index, Image& image, LabelMap& labels) {
    CounterRng rng(derive_seed(seed, index));
    const double fsize = static_cast<double>(size);

    // background gradient: per-channel base jitter plus a low-frequency ramp
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = kStyles[0].base[c] + (rng.next_double() - 0.5) * 0.12;
        gx[c] = (rng.next_double() - 0.5) * 0.24;
        gy[c] = (rng.next_double() - 0.5) * 0.24;
    }
    double phase[4];
    for (double& p : phase) p = rng.next_double() * 2.0 * kPi;

    // 1-3 non-overlapping shapes, placed by rejection on bounding circles
    const int shape_count = 1 + static_cast<int>(rng.next_below(3));
    std::vector<ShapeSpot> shapes;
    const int max_shape_class = static_cast<int>(std::min<std::int64_t>(n_classes - 1, 3));
    for (int s = 0; s < shape_count; ++s) {
        for (int attempt = 0; attempt < 40; ++attempt) {
            ShapeSpot spot;
            spot.klass = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_shape_class)));
            const double scale = fsize / 64.0;
            spot.radius = (9.0 + rng.next_double() * 6.0) * scale;
            if (spot.klass == 3) spot.radius *= 1.25;
            const double margin = spot.radius + 2.0;
            spot.cx = margin + rng.next_double() * (fsize - 2.0 * margin);
            spot.cy = margin + rng.next_double() * (fsize - 2.0 * margin);
            if (spot.klass == 2) {
                spot.half_w = spot.radius * (0.7 + rng.next_double() * 0.5);
                spot.half_h = spot.radius * (0.7 + rng.next_double() * 0.5);
            } else if (spot.klass == 3) {
                const double rot = rng.next_double() * 2.0 * kPi;
                for (int v = 0; v < 3; ++v) {
                    const double ang = rot + v * (2.0 * kPi / 3.0) + (rng.next_double() - 0.5) * 0.6;
                    spot.vx[v] = spot.cx + spot.radius * std::cos(ang);
                    spot.vy[v] = spot.cy + spot.radius * std::sin(ang);
                }
            }
            bool clear = true;
            for (const ShapeSpot& other : shapes) {
                const double dx = spot.cx - other.cx, dy = spot.cy - other.cy;
                const double min_dist = spot.radius + other.radius + 3.0;
                if (dx * dx + dy * dy < min_dist * min_dist) {
                    clear = false;
                    break;
                }
            }
            if (clear) {
                shapes.push_back(spot);
                break;
            }
        }
    }

    image = Image(size, size, 3);
    labels = LabelMap(size, size);
    for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
            const double px = static_cast<double>(x) + 0.5;
            const double py = static_cast<double>(y) + 0.5;
            int klass = 0;
            for (const ShapeSpot& s : shapes) {
                if (inside(s, px, py)) {
                    klass = s.klass;
                    break;
                }
            }
            labels.at(y, x) = static_cast<std::uint8_t>(klass);
            const ClassStyle& st = kStyles[klass];
            const double u = (px * std::cos(st.angle) + py * std::sin(st.angle)) / fsize;
            const double tex = st.amplitude * std::sin(2.0 * kPi * st.freq * u + phase[klass]);
            for (int c = 0; c < 3; ++c) {
                double v;
                if (klass == 0) {
                    v = base[c] + gx[c] * (px / fsize - 0.5) + gy[c] * (py / fsize - 0.5) + tex;
                } else {
                    v = st.base[c] + 0.5 * (base[c] - kStyles[0].base[c]) + tex;
                }
                image.at(c, y, x) = std::clamp(v, 0.004, 0.996);
            }
        }
    }
}

DatasetManifest generate_dataset(std::int64_t count, std::int64_t size, std::int64_t n_classes,
                                 std::uint64_t seed, const std::filesystem::path& out_dir) {
    if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
    if (size % 4 != 0 || size < 8) throw ConfigError("generate_dataset: size must be a multiple of 4 and >= 8");
    if (n_classes < 2) throw ConfigError("generate_dataset: need at least 2 classes");

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "clean", ec);
    std::filesystem::create_directories(out_dir / "labels", ec);
    if (!std::filesystem::is_directory(out_dir / "clean") || !std::filesystem::is_directory(out_dir / "labels")) {
        throw IoError("generate_dataset: cannot create output directories under " + out_dir.string());
    }

    DatasetManifest manifest;
    manifest.split_name = "all";
    manifest.classes = n_classes;
    manifest.class_names = {"background", "circle", "rectangle", "triangle"};
    manifest.class_names.resize(static_cast<std::size_t>(std::min<std::int64_t>(n_classes, 4)));
    for (std::int64_t c = 4; c < n_classes; ++c) manifest.class_names.push_back("class" + std::to_string(c));
    manifest.seed = seed;
    manifest.root = out_dir;

    for (std::int64_t i = 0; i < count; ++i) {
        Image img;
        LabelMap lab;
        generate_sample(size, n_classes, seed, static_cast<std::uint64_t>(i), img, lab);
        const std::string clean_rel = "clean/" + std::to_string(i) + ".png";
        const std::string label_rel = "labels/" + std::to_string(i) + ".png";
        save_image(img, out_dir / clean_rel);
        save_label_map(lab, out_dir / label_rel);
        manifest.entries.push_back({static_cast<std::uint64_t>(i), clean_rel, label_rel});
    }
    save_manifest(manifest, out_dir / "manifest.txt");
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_file) {
    std::ofstream out(manifest_file);
    if (!out) throw IoError("cannot write manifest " + manifest_file.string());
    out << "# sdabn dataset manifest v1\n";
    out << "split=" << manifest.split_name << "\n";
    out << "classes=" << manifest.classes << "\n";
    out << "class_names=";
    for (std::size_t i = 0; i < manifest.class_names.size(); ++i) {
        if (i) out << ",";
        out << manifest.class_names[i];
    }
    out << "\n";
    out << "seed=" << manifest.seed << "\n";
    out << "count=" << manifest.entries.size() << "\n";
    for (const ManifestEntry& e : manifest.entries) {
        out << e.index << " " << e.clean_path << " " << e.label_path << "\n";
    }
    if (!out) throw IoError("failed while writing manifest " + manifest_file.string());
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_file) {
    std::ifstream in(manifest_file);
    if (!in) throw IoError("cannot open manifest " + manifest_file.string());
    DatasetManifest m;
    m.root = manifest_file.parent_path();

    std::string line;
    if (!std::getline(in, line) || line != "# sdabn dataset manifest v1") {
        throw DataError(manifest_file.string() + ": missing manifest header");
    }
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq != std::string::npos && line.find(' ') == std::string::npos) {
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            if (key == "split") {
                m.split_name = value;
            } else if (key == "classes") {
                m.classes = std::stoll(value);
            } else if (key == "class_names") {
                std::stringstream ss(value);
                std::string name;
                while (std::getline(ss, name, ',')) m.class_names.push_back(name);
            } else if (key == "seed") {
                m.seed = std::stoull(value);
            } else if (key == "count") {
                expected = std::stoull(value);
            } else {
                throw DataError(manifest_file.string() + ": unknown manifest key '" + key + "'");
            }
            continue;
        }
        std::istringstream ss(line);
        ManifestEntry e;
        if (!(ss >> e.index >> e.clean_path >> e.label_path)) {
            throw DataError(manifest_file.string() + ": malformed entry line '" + line + "'");
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.size() != expected) {
        throw DataError(manifest_file.string() + ": entry count does not match declared count");
    }
    if (m.classes < 2) throw DataError(manifest_file.string() + ": invalid class count");
    return m;
}

std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& manifest,
                                                          double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("split_dataset: train_fraction must lie in (0, 1)");
    }
    const std::size_t n = manifest.entries.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(derive_seed(seed, 0x53504c49ull));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
    }
    const auto train_count = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
    if (train_count == 0 || train_count == n) {
        throw UsageError("split_dataset: split would leave one side empty");
    }

    DatasetManifest train = manifest, test = manifest;
    train.split_name = "train";
    test.split_name = "test";
    train.entries.clear();
    test.entries.clear();
    for (std::size_t i = 0; i < n; ++i) {
        (i < train_count ? train : test).entries.push_back(manifest.entries[order[i]]);
    }
    auto by_index = [](const ManifestEntry& a, const ManifestEntry& b) { return a.index < b.index; };
    std::sort(train.entries.begin(), train.entries.end(), by_index);
    std::sort(test.entries.begin(), test.entries.end(), by_index);
    return {train, test};
}

std::vector<Sample> load_samples(const DatasetManifest& manifest) {
    std::vector<Sample> samples;
    samples.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        Sample s;
        s.index = e.index;
        s.clean = load_image(manifest.root / e.clean_path);
        s.labels = load_label_map(manifest.root / e.label_path);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace sdabn
