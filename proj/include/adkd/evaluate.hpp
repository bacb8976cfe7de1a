#pragma once

#include <string>

#include "adkd/dataset.hpp"
#include "adkd/inference.hpp"
#include "adkd/metrics.hpp"

namespace adkd {

// Runs inference over every test image and scores each class: image-level
// ranking quality over max scores, pixel-level ranking quality over pooled
// maps, region overlap, and mean wall time per image. Images are processed
// in parallel within a class (indexed result slots keep it deterministic);
// the metrics themselves are computed sequentially.
EvalReport evaluate_model(InferenceModel& model, const Dataset& data);

// Writes report.txt (full table), metrics.tsv (deterministic quality
// metrics) and latency.tsv (wall-clock numbers) into out_dir.
void write_eval_artifacts(const EvalReport& report, const std::string& out_dir);

}  // namespace adkd
