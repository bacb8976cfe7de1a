#include "adkd/evaluate.hpp"

#include <filesystem>
#include <fstream>

#include "adkd/errors.hpp"
#include "adkd/threads.hpp"

namespace adkd {
namespace {

// Binary masks stay binary: nearest-neighbor lookup, then threshold.
Tensor<float> resize_mask_nearest(const Tensor<float>& mask, int out_h, int out_w) {
  const int h = mask.dim(0), w = mask.dim(1);
  if (h == out_h && w == out_w) return mask;
  Tensor<float> out({out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    int sy = static_cast<int>((static_cast<double>(y) + 0.5) * h / out_h);
    if (sy >= h) sy = h - 1;
    for (int x = 0; x < out_w; ++x) {
      int sx = static_cast<int>((static_cast<double>(x) + 0.5) * w / out_w);
      if (sx >= w) sx = w - 1;
      out[static_cast<std::size_t>(y) * out_w + x] =
          mask[static_cast<std::size_t>(sy) * w + sx] >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  f << text;
  if (!f) throw IoError("write to \"" + path + "\" failed");
}

}  // namespace

EvalReport evaluate_model(InferenceModel& model, const Dataset& data) {
  const int size = model.input_size();
  std::vector<EvalRow> rows;

  for (const std::string& cls : data.classes) {
    std::vector<const Sample*> samples;
    for (const Sample& s : data.test) {
      if (s.class_name == cls) samples.push_back(&s);
    }
    if (samples.empty()) continue;

    std::vector<InferenceResult> results(samples.size());
    std::vector<Tensor<float>> masks(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
      const Sample& s = *samples[i];
      results[i] = model.infer(load_image(s.image_path));
      masks[i] = s.anomalous ? resize_mask_nearest(load_mask(s.mask_path), size, size)
                             : Tensor<float>({size, size});
    });

    std::vector<double> image_scores, pixel_scores;
    std::vector<int> image_labels, pixel_labels;
    std::vector<Tensor<float>> maps;
    double seconds = 0;
    bool any_anomalous = false;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      image_scores.push_back(results[i].score);
      image_labels.push_back(samples[i]->anomalous ? 1 : 0);
      any_anomalous = any_anomalous || samples[i]->anomalous;
      const Tensor<float>& m = results[i].map;
      for (std::size_t j = 0; j < m.numel(); ++j) {
        pixel_scores.push_back(m[j]);
        pixel_labels.push_back(masks[i][j] >= 0.5f ? 1 : 0);
      }
      maps.push_back(m);
      seconds += results[i].seconds;
    }
    if (!any_anomalous) {
      throw MetricError("class \"" + cls + "\" has no anomalous test images to score");
    }

    EvalRow row;
    row.category = cls;
    row.auroc_image = auroc(image_scores, image_labels);
    row.auroc_pixel = auroc(pixel_scores, pixel_labels);
    row.pro = pro(maps, masks);
    row.latency_s = seconds / static_cast<double>(samples.size());
    row.test_images = static_cast<int>(samples.size());
    rows.push_back(std::move(row));
  }

  if (rows.empty()) throw MetricError("dataset has no test images");
  return summarize(std::move(rows));
}

void write_eval_artifacts(const EvalReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_text((dir / "report.txt").string(), render_table(report));
  write_text((dir / "metrics.tsv").string(), render_metrics_tsv(report));
  write_text((dir / "latency.tsv").string(), render_latency_tsv(report));
}

}  // namespace adkd
