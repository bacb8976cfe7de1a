#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adkd/attention.hpp"
#include "adkd/backbone.hpp"
#include "adkd/losses.hpp"

// Run configuration: a line-oriented `key = value` file ('#' starts a
// comment). Base keys: epochs, batch_size, lr, seed, val_fraction,
// input_size, attention, loss (repeatable), stage_channels, blocks_per_stage,
// use_batchnorm, data_root, checkpoint_path. Documented extensions:
// dcam_reduction, norm_mean, norm_std, teacher_weights.
//
// The canonical text form (fixed key order, shortest round-trip numbers) is
// what training checkpoints embed; resuming compares that echo against the
// current configuration line by line, ignoring only `epochs`.

namespace adkd {

struct TrainConfig {
  int epochs = 400;
  int batch_size = 32;
  double lr = 0.1;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  int input_size = 256;
  AttentionMode attention = AttentionMode::channel;
  LossSpec loss = LossSpec::headline();
  std::vector<int> stage_channels = {64, 128, 256};
  int blocks_per_stage = 2;
  bool use_batchnorm = true;
  std::string data_root;
  std::string checkpoint_path;
  int dcam_reduction = 8;
  std::vector<double> norm_mean = {0.485, 0.456, 0.406};
  std::vector<double> norm_std = {0.229, 0.224, 0.225};
  std::string teacher_weights;  // empty = frozen random-init teacher

  BackboneConfig backbone() const {
    BackboneConfig b;
    b.in_channels = 3;
    b.widths = stage_channels;
    b.blocks_per_stage = blocks_per_stage;
    b.batchnorm = use_batchnorm;
    return b;
  }

  // The defaults above are the full-scale recipe; this is the laptop-sized
  // one used by the synthetic corpus and the test suite.
  static TrainConfig desk_profile();

  void validate() const;
};

// Shortest decimal form that parses back to exactly the same double.
std::string format_number(double v);

// Fixed-order serialization used for files on disk and checkpoint echoes.
std::string canonical_config_text(const TrainConfig& cfg);

// Applies `key = value` lines on top of cfg (profile defaults stay where the
// text is silent). source_name seasons error messages.
void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& source_name);

void apply_config_file(TrainConfig& cfg, const std::string& path);

// Line-by-line comparison of two canonical texts with the given keys ignored;
// returns a human-readable difference list, empty when equivalent.
std::string config_text_diff(const std::string& stored, const std::string& current,
                             const std::vector<std::string>& ignore_keys);

// Iterates `key = value` payload lines of a config file body, with comments
// and blank lines removed. Calls fn(key, value, line_number).
void for_each_config_line(const std::string& text,
                          const std::function<void(const std::string&, const std::string&, int)>& fn);

}  // namespace adkd
