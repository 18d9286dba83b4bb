#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdabn/image.hpp"

namespace sdabn {

struct ManifestEntry {
    std::uint64_t index = 0;
    std::string clean_path;  // relative to the manifest directory
    std::string label_path;
};

/// Line-oriented index of one dataset split. See docs in README for the file
/// schema.
struct DatasetManifest {
    std::string split_name;
    std::int64_t classes = 0;
    std::vector<std::string> class_names;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> entries;
    std::filesystem::path root;  // directory holding the manifest file

    std::size_t size() const { return entries.size(); }
};

/// One sample loaded into memory.
struct Sample {
    std::uint64_t index = 0;
    Image clean;
    LabelMap labels;
};

/// Generates `count` textured-shape samples of extent size x size and writes
/// them as <out_dir>/{clean,labels}/<index>.png plus a manifest. Every sample
/// is a pure function of (seed, index). Classes: 0 background, 1 circle,
/// 2 rectangle, 3 triangle (shape classes beyond the first three are not
/// generated when n_classes > 4).
DatasetManifest generate_dataset(std::int64_t count, std::int64_t size, std::int64_t n_classes,
                                 std::uint64_t seed, const std::filesystem::path& out_dir);

/// Renders only sample `index` (used by the per-index purity test).
void generate_sample(std::int64_t size, std::int64_t n_classes, std::uint64_t seed,
                     std::uint64_t index, Image& image, LabelMap& labels);

DatasetManifest load_manifest(const std::filesystem::path& manifest_file);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_file);

/// Deterministic shuffled split into train/test parts. Both keep the original
/// sample indices so per-sample noise derivation is split-independent.
std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& manifest,
                                                          double train_fraction, std::uint64_t seed);

std::vector<Sample> load_samples(const DatasetManifest& manifest);

}  // namespace sdabn
