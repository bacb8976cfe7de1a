#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adkd/corpus.hpp"
#include "adkd/errors.hpp"
#include "adkd/evaluate.hpp"
#include "adkd/gradcheck.hpp"
#include "adkd/inference.hpp"
#include "adkd/trainer.hpp"

namespace {

struct Args {
  std::string config, data, checkpoint, out, profile;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::string> images;
  int repeat = 3;
};

adkd::TrainConfig base_config(const Args& a) {
  adkd::TrainConfig cfg =
      a.profile == "desk" ? adkd::TrainConfig::desk_profile() : adkd::TrainConfig{};
  if (!a.config.empty()) adkd::apply_config_file(cfg, a.config);
  if (!a.data.empty()) cfg.data_root = a.data;
  if (!a.checkpoint.empty()) cfg.checkpoint_path = a.checkpoint;
  if (a.seed_given) cfg.seed = a.seed;
  return cfg;
}

int run_gen(const Args& a) {
  adkd::CorpusSpec spec = adkd::CorpusSpec::desk(a.seed_given ? a.seed : 42);
  if (!a.config.empty()) adkd::apply_corpus_file(spec, a.config);
  if (a.seed_given) spec.seed = a.seed;
  adkd::generate_corpus(spec, a.out);
  std::cout << "wrote " << spec.classes.size() << " classes under " << a.out << "\n";
  return 0;
}

int run_train(const Args& a) {
  const adkd::TrainConfig cfg = base_config(a);
  if (cfg.data_root.empty()) throw adkd::ConfigError("no dataset: set --data or data_root");
  const adkd::Dataset data = adkd::scan_layout(cfg.data_root);
  const adkd::TrainProgress p = adkd::train_model(cfg, data, std::cout);
  std::cout << "done: " << p.epochs_completed << " epochs, best val "
            << adkd::format_number(p.best_val_loss) << ", checkpoint " << cfg.checkpoint_path
            << "\n";
  return 0;
}

int run_infer(const Args& a) {
  adkd::InferenceModel model = adkd::InferenceModel::from_checkpoint(a.checkpoint);
  if (!a.out.empty()) std::filesystem::create_directories(a.out);
  for (const std::string& path : a.images) {
    const adkd::InferenceResult r = model.infer(adkd::load_image(path));
    char line[512];
    std::snprintf(line, sizeof(line), "%s  score %.6f  %.3f ms\n", path.c_str(),
                  static_cast<double>(r.score), r.seconds * 1e3);
    std::cout << line;
    if (!a.out.empty()) {
      const std::string stem = std::filesystem::path(path).stem().string();
      adkd::save_anomaly_map(r.map, (std::filesystem::path(a.out) / (stem + ".amap")).string());
    }
  }
  return 0;
}

int run_eval(const Args& a) {
  adkd::InferenceModel model = adkd::InferenceModel::from_checkpoint(a.checkpoint);
  const adkd::Dataset data = adkd::scan_layout(a.data);
  const adkd::EvalReport report = adkd::evaluate_model(model, data);
  std::cout << adkd::render_table(report);
  adkd::write_eval_artifacts(report, a.out);
  std::cout << "wrote report.txt, metrics.tsv, latency.tsv under " << a.out << "\n";
  return 0;
}

int run_bench(const Args& a) {
  adkd::InferenceModel model = adkd::InferenceModel::from_checkpoint(a.checkpoint);
  const adkd::Dataset data = adkd::scan_layout(a.data);
  std::vector<adkd::EvalRow> rows;
  for (const std::string& cls : data.classes) {
    double seconds = 0;
    int runs = 0;
    for (const adkd::Sample& s : data.test) {
      if (s.class_name != cls) continue;
      const adkd::Tensor<float> image = adkd::load_image(s.image_path);
      for (int r = 0; r < a.repeat; ++r) {
        seconds += model.infer(image).seconds;
        ++runs;
      }
    }
    if (runs == 0) continue;
    adkd::EvalRow row;
    row.category = cls;
    row.latency_s = seconds / runs;
    row.test_images = runs / a.repeat;
    rows.push_back(row);
  }
  if (rows.empty()) throw adkd::MetricError("dataset has no test images");
  const adkd::EvalReport report = adkd::summarize(std::move(rows));
  std::cout << adkd::render_latency_tsv(report);
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    std::ofstream f(std::filesystem::path(a.out) / "latency.tsv", std::ios::binary);
    f << adkd::render_latency_tsv(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-class anomaly detection via attention-refined feature distillation"};
  app.require_subcommand(1);
  Args a;

  auto add_common = [&](CLI::App* cmd, bool with_seed = true) {
    cmd->add_option("--config", a.config, "key = value configuration file");
    if (with_seed) {
      cmd->add_option("--seed", a.seed, "PRNG seed")->each([&](const std::string&) {
        a.seed_given = true;
      });
    }
  };

  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic corpus");
  add_common(gen);
  gen->add_option("--out", a.out, "output dataset root")->required();

  CLI::App* train = app.add_subcommand("train", "train (or resume) a student");
  add_common(train);
  train->add_option("--data", a.data, "dataset root (overrides data_root)");
  train->add_option("--checkpoint", a.checkpoint, "checkpoint path (overrides checkpoint_path)");
  train->add_option("--profile", a.profile, "base profile before overrides")
      ->check(CLI::IsMember({"desk", "paper"}));

  CLI::App* infer = app.add_subcommand("infer", "score images against a checkpoint");
  infer->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  infer->add_option("--out", a.out, "directory for anomaly-map exports");
  infer->add_option("images", a.images, "image files (PPM/PGM)")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint over a dataset");
  eval->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  eval->add_option("--data", a.data, "dataset root")->required();
  eval->add_option("--out", a.out, "report directory")->default_val("eval_out");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");

  CLI::App* bench = app.add_subcommand("bench", "timed inference loop");
  bench->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  bench->add_option("--data", a.data, "dataset root")->required();
  bench->add_option("--out", a.out, "directory for latency.tsv");
  bench->add_option("--repeat", a.repeat, "passes per image")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen(a);
    if (train->parsed()) return run_train(a);
    if (infer->parsed()) return run_infer(a);
    if (eval->parsed()) return run_eval(a);
    if (gradcheck->parsed()) return adkd::run_grad_suite(std::cout) == 0 ? 0 : 1;
    if (bench->parsed()) return run_bench(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
