#include "adkd/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <numeric>

#include "adkd/errors.hpp"

namespace adkd {

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw MetricError("auroc: scores/labels size mismatch");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricError("auroc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auroc: needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks: tied scores share the average of their 1-based rank range.
  double pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double u = pos_rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

Components connected_components(const Tensor<float>& mask) {
  if (mask.rank() != 2) {
    throw DimensionError("connected_components expects an (H,W) mask, got " +
                         shape_str(mask.shape()));
  }
  Components out;
  out.h = mask.dim(0);
  out.w = mask.dim(1);
  out.labels.assign(mask.numel(), -1);

  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      const std::size_t at = static_cast<std::size_t>(y) * out.w + x;
      if (mask[at] < 0.5f || out.labels[at] != -1) continue;
      const int label = out.count++;
      out.labels[at] = label;
      queue.push_back({y, x});
      while (!queue.empty()) {
        const auto [cy, cx] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= out.h || nx < 0 || nx >= out.w) continue;
            const std::size_t nat = static_cast<std::size_t>(ny) * out.w + nx;
            if (mask[nat] >= 0.5f && out.labels[nat] == -1) {
              out.labels[nat] = label;
              queue.push_back({ny, nx});
            }
          }
        }
      }
    }
  }
  return out;
}

double pro(const std::vector<Tensor<float>>& maps, const std::vector<Tensor<float>>& masks,
           double fpr_limit) {
  if (maps.size() != masks.size() || maps.empty()) {
    throw MetricError("pro: needs equally many maps and masks (>= 1)");
  }
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw MetricError("pro: fpr_limit must be in (0, 1]");

  struct Pixel {
    float score;
    int region;  // -1 = normal pixel
  };
  std::vector<Pixel> pixels;
  std::vector<std::size_t> region_size;
  std::size_t normal_total = 0;

  for (std::size_t i = 0; i < maps.size(); ++i) {
    require_same_shape(maps[i], masks[i], "pro");
    const Components cc = connected_components(masks[i]);
    const int base = static_cast<int>(region_size.size());
    region_size.resize(region_size.size() + static_cast<std::size_t>(cc.count), 0);
    for (std::size_t p = 0; p < maps[i].numel(); ++p) {
      const int region = cc.labels[p] == -1 ? -1 : base + cc.labels[p];
      pixels.push_back({maps[i][p], region});
      if (region == -1) {
        ++normal_total;
      } else {
        ++region_size[static_cast<std::size_t>(region)];
      }
    }
  }
  if (region_size.empty()) throw MetricError("pro: no anomalous regions in any mask");

  std::sort(pixels.begin(), pixels.end(),
            [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

  // Walk thresholds over distinct scores, descending, growing the predicted
  // set; record one (fpr, mean coverage) point per threshold.
  std::vector<std::size_t> covered(region_size.size(), 0);
  const double region_count = static_cast<double>(region_size.size());
  double coverage_sum = 0;  // sum over regions of covered/size
  std::size_t false_pos = 0;
  std::vector<std::pair<double, double>> points;

  std::size_t i = 0;
  while (i < pixels.size()) {
    const float t = pixels[i].score;
    for (; i < pixels.size() && pixels[i].score == t; ++i) {
      if (pixels[i].region == -1) {
        ++false_pos;
      } else {
        const std::size_t r = static_cast<std::size_t>(pixels[i].region);
        ++covered[r];
        coverage_sum += 1.0 / static_cast<double>(region_size[r]);
      }
    }
    const double fpr =
        normal_total ? static_cast<double>(false_pos) / static_cast<double>(normal_total) : 0.0;
    const double mean_cov = coverage_sum / region_count;
    if (!points.empty() && points.back().first == fpr) {
      points.back().second = mean_cov;  // best attainable coverage at this fpr
    } else {
      points.push_back({fpr, mean_cov});
    }
  }

  // Integrate over [0, fpr_limit]: constant extension left of the first
  // attainable point (and right of the last, for the all-anomalous case).
  double integral = 0;
  double x_prev = 0, y_prev = points.front().second;
  for (const auto& [x, y] : points) {
    if (x <= x_prev) {
      y_prev = y;
      continue;
    }
    const double xr = std::min(x, fpr_limit);
    if (xr > x_prev) {
      const double yr = y_prev + (y - y_prev) * (xr - x_prev) / (x - x_prev);
      integral += (xr - x_prev) * 0.5 * (y_prev + yr);
      x_prev = xr;
      y_prev = yr;
    }
    if (x >= fpr_limit) break;
    y_prev = y;
    x_prev = x;
  }
  if (x_prev < fpr_limit) integral += (fpr_limit - x_prev) * y_prev;
  return integral / fpr_limit;
}

EvalReport summarize(std::vector<EvalRow> rows) {
  if (rows.empty()) throw MetricError("evaluation report has no classes");
  EvalReport r;
  r.rows = std::move(rows);
  std::vector<std::pair<double, int>> lat;
  for (const EvalRow& row : r.rows) {
    r.mean_auroc_image += row.auroc_image;
    r.mean_auroc_pixel += row.auroc_pixel;
    r.mean_pro += row.pro;
    r.total_images += row.test_images;
    lat.push_back({row.latency_s, row.test_images});
  }
  const double n = static_cast<double>(r.rows.size());
  r.mean_auroc_image /= n;
  r.mean_auroc_pixel /= n;
  r.mean_pro /= n;
  r.weighted_latency_s = weighted_mean_latency(lat);
  return r;
}

double weighted_mean_latency(const std::vector<std::pair<double, int>>& class_means) {
  double weighted = 0;
  long long total = 0;
  for (const auto& [mean_s, count] : class_means) {
    if (count < 1) throw MetricError("latency: every class needs at least one timed image");
    weighted += mean_s * count;
    total += count;
  }
  if (total == 0) throw MetricError("latency: no timed images");
  return weighted / static_cast<double>(total);
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_table(const EvalReport& report) {
  const std::vector<std::string> head = {"CATEGORY", "AUC-ROC (image)", "AUC-ROC (pixel)",
                                         "PRO", "LATENCY (s)", "IMAGES"};
  std::vector<std::vector<std::string>> body;
  for (const EvalRow& r : report.rows) {
    body.push_back({r.category, fixed6(r.auroc_image), fixed6(r.auroc_pixel), fixed6(r.pro),
                    fixed6(r.latency_s), std::to_string(r.test_images)});
  }
  body.push_back({"MEAN", fixed6(report.mean_auroc_image), fixed6(report.mean_auroc_pixel),
                  fixed6(report.mean_pro), fixed6(report.weighted_latency_s),
                  std::to_string(report.total_images)});

  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) width[c] = head[c].size();
  for (const auto& row : body) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  const auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += pad(row[c], width[c]);
      out += c + 1 < row.size() ? "  " : "\n";
    }
  };
  emit(head);
  for (std::size_t c = 0; c < head.size(); ++c) {
    out += std::string(width[c], '-');
    out += c + 1 < head.size() ? "  " : "\n";
  }
  for (std::size_t r = 0; r < body.size(); ++r) {
    if (r + 1 == body.size()) {
      for (std::size_t c = 0; c < head.size(); ++c) {
        out += std::string(width[c], '-');
        out += c + 1 < head.size() ? "  " : "\n";
      }
    }
    emit(body[r]);
  }
  return out;
}

std::string render_metrics_tsv(const EvalReport& report) {
  std::string out;
  const auto line = [&](const std::string& cls, const char* metric, double v) {
    out += cls + "\t" + metric + "\t" + fixed6(v) + "\n";
  };
  for (const EvalRow& r : report.rows) {
    line(r.category, "auroc_image", r.auroc_image);
    line(r.category, "auroc_pixel", r.auroc_pixel);
    line(r.category, "pro", r.pro);
  }
  line("MEAN", "auroc_image", report.mean_auroc_image);
  line("MEAN", "auroc_pixel", report.mean_auroc_pixel);
  line("MEAN", "pro", report.mean_pro);
  return out;
}

std::string render_latency_tsv(const EvalReport& report) {
  std::string out;
  for (const EvalRow& r : report.rows) {
    out += r.category + "\tlatency_s\t" + fixed6(r.latency_s) + "\n";
  }
  out += "MEAN\tlatency_s\t" + fixed6(report.weighted_latency_s) + "\n";
  return out;
}

}  // namespace adkd
