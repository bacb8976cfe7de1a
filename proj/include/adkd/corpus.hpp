#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

// Deterministic synthetic corpus: procedural textures with pasted defects,
// written in the dataset layout scan_layout() expects. Regeneration from an
// equal spec is bitwise identical across platforms — pattern math sticks to
// IEEE-exact operations (floor, sqrt, polynomials; no transcendentals) and
// pixels are quantized to 8 bits before anything touches disk.

namespace adkd {

enum class PatternKind { stripes, checker, blobs, rings };

PatternKind pattern_from(const std::string& name);
std::string pattern_name(PatternKind k);

struct ClassSpec {
  std::string name;
  PatternKind pattern;
  int period = 8;                     // stripe width / cell size / lattice spacing
  std::array<double, 3> color_a{};    // palette endpoints, RGB in [0,1]
  std::array<double, 3> color_b{};
};

struct DefectSpec {
  int min_size = 8;          // defect bounding box, pixels per axis
  int max_size = 20;
  double min_delta = 0.25;   // per-pixel intensity change, fraction of full scale
  double max_delta = 0.45;   // capped at 127/255 so the change never clips
};

struct CorpusSpec {
  std::uint64_t seed = 42;
  int image_size = 64;
  int train_count = 44;      // per class
  int test_normal = 8;       // per class
  int test_anomalous = 8;    // per class
  DefectSpec defect;
  std::vector<ClassSpec> classes;

  // Four classes (stripes/checker/blobs/rings) at 64x64 — the corpus the test
  // suite and the small training profile run on.
  static CorpusSpec desk(std::uint64_t seed);

  void validate() const;
};

// Applies `key = value` lines (seed, image_size, train_count, test_normal,
// test_anomalous, defect_min_size, defect_max_size, defect_min_delta,
// defect_max_delta, and repeatable `class = <name>:<pattern>:<period>`).
void apply_corpus_text(CorpusSpec& spec, const std::string& text, const std::string& source_name);
void apply_corpus_file(CorpusSpec& spec, const std::string& path);

// Writes the full tree under out_root. Existing files are overwritten.
void generate_corpus(const CorpusSpec& spec, const std::string& out_root);

}  // namespace adkd
