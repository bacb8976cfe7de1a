#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "adkd/config.hpp"
#include "adkd/dataset.hpp"

// Distillation training loop: per-class validation split, per-epoch
// reshuffled batches, teacher/student forward with attention refinement of
// the student pyramid, weighted loss, SGD on student + attention parameters
// only, and best-validation checkpointing.
//
// Checkpoints are self-contained: teacher, student and attention tensors plus
// a config echo with the trainer state (completed epochs, best validation
// loss, shuffle-PRNG state). Running `train` again with an existing
// checkpoint resumes it — the echo must match the current configuration on
// every key except `epochs`, otherwise training refuses with the difference.

namespace adkd {

struct SplitResult {
  std::vector<Sample> train, val;
};

// Seeded shuffle, then the last floor(val_fraction * n) samples (clamped to
// [1, n-1]) become validation. All inputs must be anomaly-free.
SplitResult split_dataset(const std::vector<Sample>& samples, double val_fraction,
                          std::uint64_t seed);

struct TrainProgress {
  std::vector<double> epoch_train_loss;  // mean per-sample loss, one per run epoch
  std::vector<double> epoch_val_loss;
  double best_val_loss = 0;
  int epochs_completed = 0;      // total, including epochs restored from a checkpoint
  bool resumed = false;
  bool checkpoint_written = false;
};

// Trains (or resumes) per cfg on data.train, logging one line per epoch.
// cfg.checkpoint_path must be set. Throws Error on divergence (non-finite
// loss), ConfigError on a resume mismatch.
TrainProgress train_model(const TrainConfig& cfg, const Dataset& data, std::ostream& log);

}  // namespace adkd
