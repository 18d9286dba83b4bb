#pragma once

#include <filesystem>
#include <vector>

#include "sdabn/cascade.hpp"
#include "sdabn/checkpoint.hpp"
#include "sdabn/config.hpp"
#include "sdabn/dataset.hpp"
#include "sdabn/metrics.hpp"
#include "sdabn/noise.hpp"
#include "sdabn/optim.hpp"

namespace sdabn {

struct StageResult {
    double initial_val_loss = 0.0;
    double best_val_loss = 0.0;
    int epochs_run = 0;
};

/// Shared dataset/noise context for one stage.
struct StageIO {
    const std::vector<Sample>* train = nullptr;
    const std::vector<Sample>* val = nullptr;
    NoiseSpec noise;
    std::uint64_t seed = 0;  // experiment seed
    bool verbose = true;
};

/// Clean-image pretrain of a standalone segmentation net (Algorithm start:
/// S1 initializes from a model trained on clean images).
StageResult train_bootstrap_segmentation(SegNetTiny& net, const StageIO& io,
                                         const StageSchedule& schedule);

/// Trains S_i (1-based block index) against cross-entropy on the frozen
/// prefix's output (y itself for i = 1) with momentum SGD. Blocks 1..i-1
/// must already hold their final values; none of them is touched.
StageResult train_segmentation_stage(CascadeParams& cascade, int block_index, const StageIO& io,
                                     const StageSchedule& schedule);

/// Trains D_i with Adam on the MSE to the clean image. The condition comes
/// from the frozen S_i (or the image / ground-truth labels for the control
/// variants). Noisy inputs are regenerated every epoch from per-(sample,
/// epoch) derived seeds; validation noise is fixed per sample so early
/// stopping compares like against like.
StageResult train_denoising_stage(CascadeParams& cascade, int block_index, const StageIO& io,
                                  const StageSchedule& schedule);

/// End-to-end training of the S1 D1 S2 structure with a single cross-entropy
/// loss on the final segmentation head; no stage freezing, no denoising loss.
StageResult train_joint_variant(CascadeParams& cascade, const StageIO& io,
                                const StageSchedule& schedule);

// ---- experiment orchestration ------------------------------------------------

struct RunArtifacts {
    std::filesystem::path run_dir;
    std::vector<std::filesystem::path> checkpoints;
    std::filesystem::path metrics_csv;
    std::vector<MetricsRecord> test_metrics;
};

/// Runs the configured training (progressive or joint) with stage-checkpoint
/// resume, then evaluates the test split and writes the metrics CSV.
RunArtifacts run_training(const ExperimentConfig& config, bool force);

/// Rebuilds the cascade of a finished (or partially finished) run from its
/// resolved config and stage checkpoints.
CascadeParams load_run_cascade(const std::filesystem::path& run_dir, const ExperimentConfig& config,
                               int* completed_blocks = nullptr);

/// Which stages exist for a config (variant- and truncation-aware).
bool stage_trains_segmentation(const ExperimentConfig& config, int block_index);
bool stage_trains_denoiser(const ExperimentConfig& config, int block_index);
bool needs_bootstrap(const ExperimentConfig& config);

CascadeConfig cascade_config_from(const ExperimentConfig& config);

}  // namespace sdabn
