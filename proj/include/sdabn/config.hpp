#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdabn/noise.hpp"

namespace sdabn {

/// One stage kind's schedule and optimizer hyperparameters. Momentum applies
/// to SGD stages, the beta/epsilon family to Adam stages.
struct StageSchedule {
    int epochs = 0;
    int batch_size = 8;
    double lr = 0.0;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int patience = 8;
    double min_delta = 1e-4;
    double lr_decay = 1.0;    // multiplicative step decay factor
    int lr_step_epochs = 0;   // 0 keeps the rate constant
};

struct DatasetSection {
    std::string root = "data/default";
    std::int64_t count = 320;
    std::int64_t size = 64;
    std::int64_t classes = 4;
    std::uint64_t seed = 7;
    double train_fraction = 0.8;
};

struct ModelSection {
    int blocks = 3;
    std::vector<std::string> variants;  // resolved to `blocks` entries
    std::int64_t seg_width1 = 16;
    std::int64_t seg_width2 = 32;
    std::int64_t seg_width3 = 64;
    std::int64_t denoiser_width = 32;
    std::int64_t sft_width = 32;
    bool truncate_tail = false;
};

struct TrainingSection {
    std::string mode = "progressive";  // progressive | joint
    StageSchedule segmentation{.epochs = 40, .lr = 0.05};
    StageSchedule denoising{.epochs = 60, .lr = 1e-3};
};

/// Full run description. Parsed strictly: unknown keys anywhere are errors.
struct ExperimentConfig {
    std::string experiment_id = "experiment";
    std::uint64_t seed = 42;
    std::string output_dir = "runs/experiment";
    DatasetSection dataset;
    NoiseSpec noise{NoiseKind::gaussian, 50.0, 0.0, 1234};
    ModelSection model;
    TrainingSection training;

    void validate() const;
    /// output_dir, prefixed by $SDABN_OUTPUT_ROOT when set and the path is
    /// relative.
    std::filesystem::path resolved_output_dir() const;
    std::filesystem::path resolved_dataset_root() const;
};

ExperimentConfig parse_config_file(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

/// Canonical single-line rendering used for digests and the resolved config
/// copy written into run directories.
std::string canonical_config_json(const ExperimentConfig& config);

/// Digest covering everything a stage of block index `blocks_needed` depends
/// on; the block count itself and later blocks' variants are excluded so
/// prefix checkpoints stay reusable across runs with more blocks.
std::uint64_t stage_config_digest(const ExperimentConfig& config, int blocks_needed);

}  // namespace sdabn
