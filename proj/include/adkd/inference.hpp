#pragma once

#include <string>
#include <vector>

#include "adkd/backbone.hpp"
#include "adkd/config.hpp"

// Anomaly-map construction and the deployable model. Inference consumes only
// the two backbones — attention tensors in a checkpoint are never read, so
// the trained refinement is structurally absent from this path.

namespace adkd {

// Per-pixel cosine distance (1 - cos) between the channel vectors of two
// (C,h,w) feature maps; norms guarded at 1e-8.
Tensor<float> level_loss_map(const Tensor<float>& t, const Tensor<float>& s);

// Sum of bilinearly upsampled per-level maps: each (h_k,w_k) map is resized
// to (out_h, out_w) and added elementwise.
Tensor<float> anomaly_map(const std::vector<Tensor<float>>& teacher_levels,
                          const std::vector<Tensor<float>>& student_levels, int out_h, int out_w);

// Maximum over pixels.
float image_score(const Tensor<float>& map);

struct InferenceResult {
  Tensor<float> map;  // (input_size, input_size)
  float score = 0;
  double seconds = 0;  // wall time of preprocess + forward + map
};

class InferenceModel {
 public:
  // Loads a checkpoint: rebuilds both backbones from the config echo and
  // imports the teacher.* / student.* tensors. Extra tensors with other
  // prefixes (the attention parameters) are ignored by construction.
  static InferenceModel from_checkpoint(const std::string& path);

  // image is a raw (3,H,W) tensor in [0,1]; preprocessing (resize to the
  // configured input size + normalization) happens inside the timed region.
  InferenceResult infer(const Tensor<float>& image);

  const TrainConfig& config() const { return config_; }
  int input_size() const { return config_.input_size; }

 private:
  TrainConfig config_;
  PyramidNet teacher_, student_;
};

// Anomaly-map container: "ADAM" magic, u32 height, u32 width, u32 reserved,
// then row-major little-endian f32 scores. save also drops a min-max
// normalized 8-bit PGM preview next to the file (path + ".pgm").
void save_anomaly_map(const Tensor<float>& map, const std::string& path);
Tensor<float> load_anomaly_map(const std::string& path);

}  // namespace adkd
