#include "adkd/inference.hpp"

#include <chrono>
#include <cstring>
#include <fstream>

#include "adkd/dataset.hpp"
#include "adkd/losses.hpp"
#include "adkd/weights_io.hpp"

namespace adkd {

Tensor<float> level_loss_map(const Tensor<float>& t, const Tensor<float>& s) {
  require_same_shape(t, s, "level_loss_map");
  if (t.rank() != 3) {
    throw DimensionError("level_loss_map expects (C,h,w) maps, got " + shape_str(t.shape()));
  }
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor<float> out({h, w});
  for (std::size_t pix = 0; pix < hw; ++pix) {
    out[pix] = loss_detail::cosine_distance(t.data() + pix, s.data() + pix,
                                            static_cast<std::size_t>(c), hw);
  }
  return out;
}

Tensor<float> anomaly_map(const std::vector<Tensor<float>>& teacher_levels,
                          const std::vector<Tensor<float>>& student_levels, int out_h, int out_w) {
  if (teacher_levels.empty() || teacher_levels.size() != student_levels.size()) {
    throw ContractError("anomaly_map: pyramids must have the same, non-zero level count");
  }
  Tensor<float> total({out_h, out_w});
  for (std::size_t k = 0; k < teacher_levels.size(); ++k) {
    const Tensor<float> level = level_loss_map(teacher_levels[k], student_levels[k]);
    const Tensor<float> as_chw({1, level.dim(0), level.dim(1)},
                               std::vector<float>(level.data(), level.data() + level.numel()));
    const Tensor<float> up = ops::bilinear_resize(as_chw, out_h, out_w);
    for (std::size_t i = 0; i < total.numel(); ++i) total[i] += up[i];
  }
  return total;
}

float image_score(const Tensor<float>& map) {
  if (map.numel() == 0) throw ContractError("image_score: empty map");
  float best = map[0];
  for (std::size_t i = 1; i < map.numel(); ++i) best = std::max(best, map[i]);
  return best;
}

InferenceModel InferenceModel::from_checkpoint(const std::string& path) {
  const WeightsFile file = load_weights(path);
  if (!file.config_echo) {
    throw ContractError("checkpoint \"" + path + "\" carries no config echo");
  }
  InferenceModel m;
  // The echo also carries state.* lines; the config parser does not know
  // them, so strip anything outside the config key set.
  std::string config_text;
  for_each_config_line(*file.config_echo, [&](const std::string& key, const std::string& value, int) {
    if (key.rfind("state.", 0) == 0) return;
    config_text += key + " = " + value + "\n";
  });
  apply_config_text(m.config_, config_text, path + " (config echo)");
  m.config_.validate();

  m.teacher_ = build_backbone(m.config_.backbone(), 0);
  m.student_ = build_backbone(m.config_.backbone(), 0);
  import_backbone(m.teacher_, file, "teacher.");
  import_backbone(m.student_, file, "student.");
  return m;
}

InferenceResult InferenceModel::infer(const Tensor<float>& image) {
  const auto started = std::chrono::steady_clock::now();

  const Tensor<float> input =
      preprocess(image, config_.input_size, config_.norm_mean, config_.norm_std);

  Graph<float> g;
  const NodeRef x = g.input(input);
  const std::vector<NodeRef> t = run_backbone(g, teacher_, x, false, false, "teacher.");
  const std::vector<NodeRef> s = run_backbone(g, student_, x, false, false, "student.");

  std::vector<Tensor<float>> t_levels, s_levels;
  for (std::size_t k = 0; k < t.size(); ++k) {
    t_levels.push_back(g.value(t[k]));
    s_levels.push_back(g.value(s[k]));
  }

  InferenceResult r;
  r.map = anomaly_map(t_levels, s_levels, config_.input_size, config_.input_size);
  r.score = image_score(r.map);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

void save_anomaly_map(const Tensor<float>& map, const std::string& path) {
  if (map.rank() != 2) {
    throw DimensionError("save_anomaly_map expects an (H,W) map, got " + shape_str(map.shape()));
  }
  std::string out;
  out.append("ADAM", 4);
  put_u32(out, static_cast<std::uint32_t>(map.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(map.dim(1)));
  put_u32(out, 0);  // reserved
  for (std::size_t i = 0; i < map.numel(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &map[i], 4);
    put_u32(out, bits);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw IoError("short write to \"" + path + "\"");

  // Min-max normalized preview for human inspection.
  float lo = map[0], hi = map[0];
  for (std::size_t i = 1; i < map.numel(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  Tensor<float> preview(map.shape());
  if (hi > lo) {
    for (std::size_t i = 0; i < map.numel(); ++i) preview[i] = (map[i] - lo) / (hi - lo);
  }
  save_pgm(preview, path + ".pgm");
}

Tensor<float> load_anomaly_map(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open \"" + path + "\" for reading");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || bytes.compare(0, 4, "ADAM") != 0) {
    throw ParseError("\"" + path + "\": not an anomaly-map file", 0);
  }
  const std::uint32_t h = get_u32(bytes, 4);
  const std::uint32_t w = get_u32(bytes, 8);
  if (h == 0 || w == 0 || h > 0x7fffffffu / std::max(w, 1u)) {
    throw ParseError("\"" + path + "\": invalid dimensions", 4);
  }
  const std::size_t need = 16 + static_cast<std::size_t>(h) * w * 4;
  if (bytes.size() != need) {
    throw ParseError("\"" + path + "\": payload size mismatch", std::min(bytes.size(), need));
  }
  Tensor<float> map({static_cast<int>(h), static_cast<int>(w)});
  for (std::size_t i = 0; i < map.numel(); ++i) {
    const std::uint32_t bits = get_u32(bytes, 16 + 4 * i);
    std::memcpy(&map[i], &bits, 4);
  }
  return map;
}

}  // namespace adkd
