#include "adkd/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>

#include "adkd/attention.hpp"
#include "adkd/backbone.hpp"
#include "adkd/errors.hpp"
#include "adkd/losses.hpp"
#include "adkd/rng.hpp"
#include "adkd/weights_io.hpp"

namespace adkd {
namespace {

// Independent sub-seed derivation tags; each consumer gets its own stream.
constexpr std::uint64_t kSeedTeacher = 0x7eac0001;
constexpr std::uint64_t kSeedStudent = 0x57d00002;
constexpr std::uint64_t kSeedDcam = 0xdca00003;
constexpr std::uint64_t kSeedSplit = 0x59170004;
constexpr std::uint64_t kSeedRun = 0x40be0005;

struct ModelSet {
  PyramidNet teacher, student;
  AttentionParams<float> dcam;
};

ModelSet build_models(const TrainConfig& cfg) {
  ModelSet m;
  m.teacher = build_backbone(cfg.backbone(), derive_seed(cfg.seed, kSeedTeacher));
  if (!cfg.teacher_weights.empty()) {
    import_backbone(m.teacher, load_weights(cfg.teacher_weights), "teacher.");
  }
  m.student = build_backbone(cfg.backbone(), derive_seed(cfg.seed, kSeedStudent));
  m.dcam = AttentionParams<float>::init(cfg.attention, cfg.dcam_reduction, cfg.stage_channels,
                                        derive_seed(cfg.seed, kSeedDcam));
  return m;
}

struct TrainerState {
  int epoch = 0;  // completed epochs
  double best_val = std::numeric_limits<double>::infinity();
  std::uint64_t rng = 0;
};

std::string state_text(const TrainerState& s) {
  char best[64];
  if (std::isinf(s.best_val)) {
    std::snprintf(best, sizeof(best), "inf");
  } else {
    std::snprintf(best, sizeof(best), "%a", s.best_val);
  }
  char rng[32];
  std::snprintf(rng, sizeof(rng), "%016" PRIx64, s.rng);
  return "state.epoch = " + std::to_string(s.epoch) + "\nstate.best_val_loss = " + best +
         "\nstate.rng = " + rng + "\n";
}

TrainerState parse_state(const std::string& echo, const std::string& path) {
  TrainerState s;
  bool have_epoch = false, have_best = false, have_rng = false;
  for_each_config_line(echo, [&](const std::string& key, const std::string& value, int) {
    if (key == "state.epoch") {
      s.epoch = std::stoi(value);
      have_epoch = true;
    } else if (key == "state.best_val_loss") {
      s.best_val = value == "inf" ? std::numeric_limits<double>::infinity() : std::strtod(value.c_str(), nullptr);
      have_best = true;
    } else if (key == "state.rng") {
      s.rng = std::stoull(value, nullptr, 16);
      have_rng = true;
    }
  });
  if (!have_epoch || !have_best || !have_rng) {
    throw ContractError("checkpoint \"" + path + "\" is missing trainer state");
  }
  return s;
}

void import_attention(AttentionParams<float>& dcam, const WeightsFile& file,
                      const std::string& path) {
  std::vector<std::string> problems;
  std::map<std::string, Tensor<float>*> expected;
  dcam.visit([&](const std::string& name, Tensor<float>* t) { expected[name] = t; });
  for (auto& [name, dst] : expected) {
    const Tensor<float>* src = file.find(name);
    if (!src) {
      problems.push_back("missing tensor \"" + name + "\"");
    } else if (src->shape() != dst->shape()) {
      problems.push_back("tensor \"" + name + "\" has shape " + shape_str(src->shape()) +
                         ", expected " + shape_str(dst->shape()));
    } else {
      *dst = *src;
    }
  }
  for (const auto& nt : file.tensors) {
    if (nt.name.rfind("dcam.", 0) == 0 && !expected.count(nt.name)) {
      problems.push_back("unexpected tensor \"" + nt.name + "\"");
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint \"" + path + "\" does not match the attention configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ContractError(msg);
  }
}

void write_checkpoint(const TrainConfig& cfg, ModelSet& m, const TrainerState& s) {
  std::vector<NamedTensor> tensors = export_backbone(m.teacher, "teacher.");
  const std::vector<NamedTensor> student = export_backbone(m.student, "student.");
  tensors.insert(tensors.end(), student.begin(), student.end());
  m.dcam.visit([&](const std::string& name, Tensor<float>* t) { tensors.push_back({name, *t}); });
  const std::string echo = canonical_config_text(cfg) + state_text(s);
  save_weights(cfg.checkpoint_path, tensors, &echo);
}

// Preprocessed images, preloaded when they comfortably fit in memory.
class ImageSource {
 public:
  ImageSource(const std::vector<Sample>& samples, const TrainConfig& cfg)
      : samples_(samples), cfg_(cfg) {
    const std::size_t bytes = samples.size() * 3u * static_cast<std::size_t>(cfg.input_size) *
                              static_cast<std::size_t>(cfg.input_size) * sizeof(float);
    if (bytes <= (1ull << 30)) {
      cache_.reserve(samples.size());
      for (const Sample& s : samples_) cache_.push_back(load(s));
    }
  }

  Tensor<float> get(std::size_t i) const {
    return cache_.empty() ? load(samples_[i]) : cache_[i];
  }

  std::size_t size() const { return samples_.size(); }

 private:
  Tensor<float> load(const Sample& s) const {
    return preprocess(load_image(s.image_path), cfg_.input_size, cfg_.norm_mean, cfg_.norm_std);
  }

  const std::vector<Sample>& samples_;
  const TrainConfig& cfg_;
  std::vector<Tensor<float>> cache_;
};

Tensor<float> assemble_batch(const ImageSource& src, const std::vector<std::size_t>& order,
                             std::size_t begin, std::size_t end, int size) {
  const int b = static_cast<int>(end - begin);
  Tensor<float> batch({b, 3, size, size});
  const std::size_t img = 3u * static_cast<std::size_t>(size) * size;
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor<float> t = src.get(order[i]);
    std::copy(t.data(), t.data() + img, batch.data() + (i - begin) * img);
  }
  return batch;
}

// One forward pass to the total loss. Gradients flow only when train_step.
struct ForwardResult {
  Graph<float> g;
  NodeRef loss;
};

double forward_loss(ModelSet& m, const TrainConfig& cfg, const Tensor<float>& batch,
                    bool train_step, Graph<float>& g, NodeRef& loss_node) {
  const NodeRef x = g.input(batch);
  const std::vector<NodeRef> t_levels = run_backbone(g, m.teacher, x, false, false, "teacher.");
  const std::vector<NodeRef> s_levels =
      run_backbone(g, m.student, x, train_step, train_step, "student.");
  const std::vector<LevelAttentionNodes> att = enter_attention(g, m.dcam, train_step);
  std::vector<NodeRef> refined;
  refined.reserve(s_levels.size());
  for (std::size_t k = 0; k < s_levels.size(); ++k) {
    refined.push_back(refine(g, s_levels[k], cfg.attention, att[k]));
  }
  loss_node = total_loss(g, t_levels, refined, cfg.loss);
  return static_cast<double>(g.value(loss_node)[0]);
}

double run_split_loss(ModelSet& m, const TrainConfig& cfg, const ImageSource& src) {
  std::vector<std::size_t> order(src.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double total = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
    Graph<float> g;
    NodeRef loss;
    const double v = forward_loss(m, cfg, assemble_batch(src, order, begin, end, cfg.input_size),
                                  false, g, loss);
    total += v * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(order.size());
}

}  // namespace

SplitResult split_dataset(const std::vector<Sample>& samples, double val_fraction,
                          std::uint64_t seed) {
  if (samples.size() < 2) throw ContractError("split needs at least 2 samples");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must be strictly between 0 and 1");
  }
  for (const Sample& s : samples) {
    if (s.anomalous) {
      throw ContractError("anomalous sample \"" + s.image_path +
                          "\" in training input; training is unsupervised on normals only");
    }
  }
  std::vector<Sample> shuffled = samples;
  SplitMix64 rng(seed);
  rng.shuffle(shuffled);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(val_fraction * static_cast<double>(shuffled.size())));
  n_val = std::max<std::size_t>(1, std::min(n_val, shuffled.size() - 1));
  SplitResult out;
  out.train.assign(shuffled.begin(), shuffled.end() - static_cast<std::ptrdiff_t>(n_val));
  out.val.assign(shuffled.end() - static_cast<std::ptrdiff_t>(n_val), shuffled.end());
  return out;
}

TrainProgress train_model(const TrainConfig& cfg, const Dataset& data, std::ostream& log) {
  cfg.validate();
  if (cfg.checkpoint_path.empty()) throw ConfigError("checkpoint_path is not set");
  if (data.train.empty()) throw ContractError("no training samples");

  // Per-class 80/20-style split keeps every class represented in validation.
  std::vector<Sample> train_samples, val_samples;
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    std::vector<Sample> of_class;
    for (const Sample& s : data.train) {
      if (s.class_name == data.classes[c]) of_class.push_back(s);
    }
    if (of_class.empty()) continue;
    SplitResult split = split_dataset(of_class, cfg.val_fraction,
                                      derive_seed(derive_seed(cfg.seed, kSeedSplit), c));
    train_samples.insert(train_samples.end(), split.train.begin(), split.train.end());
    val_samples.insert(val_samples.end(), split.val.begin(), split.val.end());
  }

  ModelSet models = build_models(cfg);
  TrainerState state;
  state.rng = SplitMix64(derive_seed(cfg.seed, kSeedRun)).state();

  TrainProgress progress;
  if (std::filesystem::exists(cfg.checkpoint_path)) {
    const WeightsFile file = load_weights(cfg.checkpoint_path);
    if (!file.config_echo) {
      throw ContractError("existing checkpoint \"" + cfg.checkpoint_path +
                          "\" has no config echo; refusing to overwrite");
    }
    const std::string diff =
        config_text_diff(*file.config_echo, canonical_config_text(cfg), {"epochs", "state"});
    if (!diff.empty()) {
      throw ConfigError("checkpoint \"" + cfg.checkpoint_path +
                        "\" was trained under a different configuration:\n" + diff);
    }
    import_backbone(models.teacher, file, "teacher.");
    import_backbone(models.student, file, "student.");
    import_attention(models.dcam, file, cfg.checkpoint_path);
    state = parse_state(*file.config_echo, cfg.checkpoint_path);
    progress.resumed = true;
    log << "resuming from " << cfg.checkpoint_path << " at epoch " << state.epoch << "\n";
  }

  const ImageSource train_src(train_samples, cfg);
  const ImageSource val_src(val_samples, cfg);

  std::vector<std::pair<std::string, Tensor<float>*>> params;
  models.student.visit_params(
      [&](const std::string& name, Tensor<float>& t) { params.push_back({"student." + name, &t}); });
  models.dcam.visit(
      [&](const std::string& name, Tensor<float>* t) { params.push_back({name, t}); });

  SplitMix64 rng(0);
  rng.set_state(state.rng);

  std::vector<std::size_t> order(train_src.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);

    double loss_sum = 0;
    int step = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      Graph<float> g;
      NodeRef loss;
      const double v = forward_loss(
          models, cfg, assemble_batch(train_src, order, begin, end, cfg.input_size), true, g, loss);
      if (!std::isfinite(v)) {
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                    ", step " + std::to_string(step + 1));
      }
      loss_sum += v * static_cast<double>(end - begin);
      g.backward(loss);
      sgd_step(params, g.param_grads(), static_cast<float>(cfg.lr));
    }
    const double train_loss = loss_sum / static_cast<double>(train_src.size());

    const double val_loss = run_split_loss(models, cfg, val_src);
    if (!std::isfinite(val_loss)) {
      throw Error("training diverged: non-finite validation loss after epoch " +
                  std::to_string(epoch + 1));
    }

    progress.epoch_train_loss.push_back(train_loss);
    progress.epoch_val_loss.push_back(val_loss);

    const bool improved = val_loss < state.best_val;
    state.epoch = epoch + 1;
    state.rng = rng.state();
    if (improved) {
      state.best_val = val_loss;
      write_checkpoint(cfg, models, state);
      progress.checkpoint_written = true;
    }

    char line[160];
    std::snprintf(line, sizeof(line), "epoch %d/%d  train %.6f  val %.6f  best %.6f%s\n",
                  epoch + 1, cfg.epochs, train_loss, val_loss, state.best_val,
                  improved ? "  [saved]" : "");
    log << line << std::flush;
  }

  progress.best_val_loss = state.best_val;
  progress.epochs_completed = state.epoch;
  return progress;
}

}  // namespace adkd
