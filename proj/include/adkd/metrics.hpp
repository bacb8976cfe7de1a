#pragma once

#include <string>
#include <vector>

#include "adkd/tensor.hpp"

// Evaluation metrics: ranking AUROC, per-region overlap (PRO) with
// 8-connected components, and the per-class latency summary, plus the
// rendered evaluation report.

namespace adkd {

// Mann-Whitney AUROC with midrank tie handling. labels are {0,1}; both
// classes must be present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// 8-connected components of a binary (H,W) mask (any value >= 0.5 counts as
// foreground). labels[i] is -1 for background or the region index; regions
// are numbered by the row-major position of their first pixel.
struct Components {
  int h = 0, w = 0;
  int count = 0;
  std::vector<int> labels;
};
Components connected_components(const Tensor<float>& mask);

// Per-region overlap integrated over the false-positive range [0, fpr_limit]
// and normalized by the limit.
//
// Exact operating points: prediction sets are {score >= t} for t over the
// distinct pooled map values, descending. At each point the curve carries
// (global FPR over normal pixels, mean over ground-truth regions of the
// covered fraction). Duplicate FPR values keep their best coverage, the
// leftmost point extends left as a constant (a single attainable point at
// full coverage therefore scores 1), and the polyline is integrated by
// trapezoid up to the limit.
double pro(const std::vector<Tensor<float>>& maps, const std::vector<Tensor<float>>& masks,
           double fpr_limit = 0.3);

// --- evaluation report ----------------------------------------------------

struct EvalRow {
  std::string category;
  double auroc_image = 0, auroc_pixel = 0, pro = 0;
  double latency_s = 0;  // mean seconds per image
  int test_images = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  // MEAN row: plain average for the quality metrics, test-count-weighted for
  // latency.
  double mean_auroc_image = 0, mean_auroc_pixel = 0, mean_pro = 0;
  double weighted_latency_s = 0;
  int total_images = 0;
};

EvalReport summarize(std::vector<EvalRow> rows);

// Class-count-weighted mean latency over (mean seconds, image count) pairs.
double weighted_mean_latency(const std::vector<std::pair<double, int>>& class_means);

// Aligned human-readable table with the MEAN row.
std::string render_table(const EvalReport& report);

// Machine-readable `class<TAB>metric<TAB>value` lines. The quality metrics
// are deterministic for a fixed checkpoint and dataset, so they go to one
// stream and the wall-clock latencies to another.
std::string render_metrics_tsv(const EvalReport& report);
std::string render_latency_tsv(const EvalReport& report);

}  // namespace adkd
