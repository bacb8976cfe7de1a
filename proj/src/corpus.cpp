#include "adkd/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adkd/config.hpp"
#include "adkd/dataset.hpp"
#include "adkd/errors.hpp"
#include "adkd/rng.hpp"
#include "adkd/threads.hpp"

namespace fs = std::filesystem;

namespace adkd {

PatternKind pattern_from(const std::string& name) {
  if (name == "stripes") return PatternKind::stripes;
  if (name == "checker") return PatternKind::checker;
  if (name == "blobs") return PatternKind::blobs;
  if (name == "rings") return PatternKind::rings;
  throw ConfigError("unknown pattern \"" + name + "\" (use stripes, checker, blobs or rings)");
}

std::string pattern_name(PatternKind k) {
  switch (k) {
    case PatternKind::stripes: return "stripes";
    case PatternKind::checker: return "checker";
    case PatternKind::blobs: return "blobs";
    case PatternKind::rings: return "rings";
  }
  return "?";
}

CorpusSpec CorpusSpec::desk(std::uint64_t seed) {
  CorpusSpec s;
  s.seed = seed;
  s.classes = {
      {"stripes", PatternKind::stripes, 8, {0.25, 0.30, 0.35}, {0.75, 0.70, 0.65}},
      {"checker", PatternKind::checker, 8, {0.20, 0.25, 0.20}, {0.70, 0.75, 0.80}},
      {"blobs", PatternKind::blobs, 16, {0.30, 0.20, 0.25}, {0.80, 0.70, 0.60}},
      {"rings", PatternKind::rings, 10, {0.20, 0.20, 0.30}, {0.70, 0.80, 0.70}},
  };
  return s;
}

void CorpusSpec::validate() const {
  if (image_size < 16) throw ConfigError("corpus image_size must be >= 16");
  if (train_count < 2) throw ConfigError("corpus needs at least 2 training images per class");
  if (test_normal < 1 || test_anomalous < 1) {
    throw ConfigError("corpus needs at least 1 normal and 1 anomalous test image per class");
  }
  if (classes.empty()) throw ConfigError("corpus has no classes");
  for (const auto& c : classes) {
    if (c.name.empty()) throw ConfigError("corpus class with empty name");
    if (c.period < 2 || c.period > image_size) {
      throw ConfigError("class \"" + c.name + "\": period must be in [2, image_size]");
    }
  }
  if (defect.min_size < 2) throw ConfigError("defect min_size must be >= 2");
  if (defect.max_size < defect.min_size) throw ConfigError("defect max_size < min_size");
  if (defect.max_size > image_size) {
    throw ConfigError("defect max_size " + std::to_string(defect.max_size) +
                      " exceeds image_size " + std::to_string(image_size));
  }
  const int min8 = static_cast<int>(defect.min_delta * 255.0 + 0.5);
  const int max8 = static_cast<int>(defect.max_delta * 255.0 + 0.5);
  if (min8 < 1) throw ConfigError("defect min_delta quantizes to zero");
  if (max8 < min8) throw ConfigError("defect max_delta < min_delta");
  if (max8 > 127) {
    // The defect writer moves each pixel away from the nearer end of the
    // 8-bit range, which only guarantees headroom for deltas up to 127.
    throw ConfigError("defect max_delta must quantize to <= 127/255");
  }
}

void apply_corpus_text(CorpusSpec& spec, const std::string& text, const std::string& source_name) {
  bool classes_reset = false;
  try {
    for_each_config_line(text, [&](const std::string& key, const std::string& value, int line_no) {
      const auto to_int = [&](long lo, long hi) {
        const long v = std::stol(value);
        if (std::to_string(v) != value || v < lo || v > hi) {
          throw ConfigError("line " + std::to_string(line_no) + ": bad value for " + key);
        }
        return static_cast<int>(v);
      };
      if (key == "seed") spec.seed = std::stoull(value);
      else if (key == "image_size") spec.image_size = to_int(16, 4096);
      else if (key == "train_count") spec.train_count = to_int(2, 1 << 20);
      else if (key == "test_normal") spec.test_normal = to_int(1, 1 << 20);
      else if (key == "test_anomalous") spec.test_anomalous = to_int(1, 1 << 20);
      else if (key == "defect_min_size") spec.defect.min_size = to_int(2, 4096);
      else if (key == "defect_max_size") spec.defect.max_size = to_int(2, 4096);
      else if (key == "defect_min_delta") spec.defect.min_delta = std::stod(value);
      else if (key == "defect_max_delta") spec.defect.max_delta = std::stod(value);
      else if (key == "class") {
        if (!classes_reset) {
          spec.classes.clear();
          classes_reset = true;
        }
        const std::size_t p1 = value.find(':');
        const std::size_t p2 = value.find(':', p1 == std::string::npos ? p1 : p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos) {
          throw ConfigError("line " + std::to_string(line_no) +
                            ": class wants <name>:<pattern>:<period>");
        }
        ClassSpec c;
        c.name = value.substr(0, p1);
        c.pattern = pattern_from(value.substr(p1 + 1, p2 - p1 - 1));
        c.period = static_cast<int>(std::stol(value.substr(p2 + 1)));
        // Palette comes from the pattern's default class.
        for (const ClassSpec& d : CorpusSpec::desk(0).classes) {
          if (d.pattern == c.pattern) {
            c.color_a = d.color_a;
            c.color_b = d.color_b;
          }
        }
        spec.classes.push_back(std::move(c));
      } else {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
      }
    });
  } catch (const std::logic_error& e) {
    throw ConfigError(source_name + ": " + e.what());
  }
}

void apply_corpus_file(CorpusSpec& spec, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open corpus spec \"" + path + "\"");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  apply_corpus_text(spec, text, path);
}

namespace {

// Triangle wave with period 1 mapped to [0,1]: 0 at integers, 1 at halves.
double tri01(double t) {
  const double u = t - std::floor(t);
  return u < 0.5 ? 2.0 * u : 2.0 * (1.0 - u);
}

double lattice_value(std::uint64_t lattice_seed, int ci, int cj) {
  const std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ci)) << 32) |
                            static_cast<std::uint32_t>(cj);
  return static_cast<double>(derive_seed(lattice_seed, key) >> 11) * 0x1.0p-53;
}

struct SampleJitter {
  double phase;      // stripes / rings
  int ox, oy;        // checker / blobs offsets
  double cx, cy;     // rings center
};

// One sample's base texture, quantized rows of interleaved RGB.
std::vector<unsigned char> render_base(const CorpusSpec& spec, const ClassSpec& cls,
                                       std::uint64_t lattice_seed, SplitMix64& rng) {
  const int n = spec.image_size;
  const int period = cls.period;

  SampleJitter j{};
  j.phase = rng.uniform() * period;
  j.ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(period)));
  j.oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(period)));
  j.cx = (n - 1) * 0.5 + (rng.uniform() - 0.5) * period;
  j.cy = (n - 1) * 0.5 + (rng.uniform() - 0.5) * period;

  std::vector<unsigned char> out(static_cast<std::size_t>(n) * n * 3);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double m = 0.0;  // palette mix in [0,1]
      switch (cls.pattern) {
        case PatternKind::stripes:
          m = tri01((x * 1.0 + y * 2.0 + j.phase) / period);
          break;
        case PatternKind::checker: {
          const int cell = ((x + j.ox) / period + (y + j.oy) / period) & 1;
          m = cell ? 1.0 : 0.0;
          break;
        }
        case PatternKind::blobs: {
          const int gx = x + j.ox, gy = y + j.oy;
          const int ci = gx / period, cj = gy / period;
          const double fx = static_cast<double>(gx % period) / period;
          const double fy = static_cast<double>(gy % period) / period;
          const double sx = fx * fx * (3.0 - 2.0 * fx);
          const double sy = fy * fy * (3.0 - 2.0 * fy);
          const double v00 = lattice_value(lattice_seed, ci, cj);
          const double v10 = lattice_value(lattice_seed, ci + 1, cj);
          const double v01 = lattice_value(lattice_seed, ci, cj + 1);
          const double v11 = lattice_value(lattice_seed, ci + 1, cj + 1);
          m = (v00 * (1 - sx) + v10 * sx) * (1 - sy) + (v01 * (1 - sx) + v11 * sx) * sy;
          break;
        }
        case PatternKind::rings: {
          const double dx = x - j.cx, dy = y - j.cy;
          m = tri01(std::sqrt(dx * dx + dy * dy) / period + j.phase / period);
          break;
        }
      }
      for (int c = 0; c < 3; ++c) {
        const double v = cls.color_a[static_cast<std::size_t>(c)] +
                         (cls.color_b[static_cast<std::size_t>(c)] -
                          cls.color_a[static_cast<std::size_t>(c)]) * m;
        out[(static_cast<std::size_t>(y) * n + x) * 3 + static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(v * 255.0 + 0.5);
      }
    }
  }
  return out;
}

struct Defect {
  bool ellipse;
  int x0, y0, w, h;
};

Defect draw_defect(const CorpusSpec& spec, SplitMix64& rng) {
  const int span = spec.defect.max_size - spec.defect.min_size + 1;
  Defect d{};
  d.ellipse = rng.below(2) == 1;
  d.w = spec.defect.min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
  d.h = spec.defect.min_size + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
  d.x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.image_size - d.w + 1)));
  d.y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.image_size - d.h + 1)));
  return d;
}

bool defect_covers(const Defect& d, int x, int y) {
  if (x < d.x0 || x >= d.x0 + d.w || y < d.y0 || y >= d.y0 + d.h) return false;
  if (!d.ellipse) return true;
  const double rx = d.w * 0.5, ry = d.h * 0.5;
  const double dx = (x + 0.5) - (d.x0 + rx), dy = (y + 0.5) - (d.y0 + ry);
  return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
}

// Pushes every covered pixel away from the nearer end of the 8-bit range by a
// per-pixel delta in [min8, max8]; the mask mirrors the coverage test exactly.
void apply_defect(const CorpusSpec& spec, const Defect& d, SplitMix64& rng,
                  std::vector<unsigned char>& rgb, std::vector<unsigned char>& mask) {
  const int n = spec.image_size;
  const int min8 = static_cast<int>(spec.defect.min_delta * 255.0 + 0.5);
  const int max8 = static_cast<int>(spec.defect.max_delta * 255.0 + 0.5);
  for (int y = d.y0; y < d.y0 + d.h; ++y) {
    for (int x = d.x0; x < d.x0 + d.w; ++x) {
      if (!defect_covers(d, x, y)) continue;
      const std::size_t pix = static_cast<std::size_t>(y) * n + x;
      mask[pix] = 255;
      const int delta = min8 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max8 - min8 + 1)));
      for (int c = 0; c < 3; ++c) {
        unsigned char& v = rgb[pix * 3 + static_cast<std::size_t>(c)];
        v = static_cast<unsigned char>(v >= 128 ? v - delta : v + delta);
      }
    }
  }
}

enum Kind : std::uint64_t { kTrain = 0, kTestNormal = 1, kTestAnomalous = 2 };

std::uint64_t sample_tag(std::size_t class_idx, Kind kind, int index) {
  return (static_cast<std::uint64_t>(class_idx) << 40) | (static_cast<std::uint64_t>(kind) << 32) |
         static_cast<std::uint64_t>(index);
}

std::string file_index(int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

void generate_class(const CorpusSpec& spec, std::size_t class_idx, const std::string& out_root) {
  const ClassSpec& cls = spec.classes[class_idx];
  const int n = spec.image_size;
  const std::uint64_t lattice_seed = derive_seed(spec.seed, 0xA77u ^ (class_idx << 8));
  const fs::path cdir = fs::path(out_root) / cls.name;
  fs::create_directories(cdir / "train" / "good");
  fs::create_directories(cdir / "test" / "good");
  fs::create_directories(cdir / "test" / "patch");
  fs::create_directories(cdir / "test" / "spot");
  fs::create_directories(cdir / "ground_truth" / "patch");
  fs::create_directories(cdir / "ground_truth" / "spot");

  for (int i = 0; i < spec.train_count; ++i) {
    SplitMix64 rng(derive_seed(spec.seed, sample_tag(class_idx, kTrain, i)));
    const auto rgb = render_base(spec, cls, lattice_seed, rng);
    save_ppm_u8(rgb, n, n, (cdir / "train" / "good" / (file_index(i) + ".ppm")).string());
  }
  for (int i = 0; i < spec.test_normal; ++i) {
    SplitMix64 rng(derive_seed(spec.seed, sample_tag(class_idx, kTestNormal, i)));
    const auto rgb = render_base(spec, cls, lattice_seed, rng);
    save_ppm_u8(rgb, n, n, (cdir / "test" / "good" / (file_index(i) + ".ppm")).string());
  }
  int patch_count = 0, spot_count = 0;
  for (int i = 0; i < spec.test_anomalous; ++i) {
    SplitMix64 rng(derive_seed(spec.seed, sample_tag(class_idx, kTestAnomalous, i)));
    auto rgb = render_base(spec, cls, lattice_seed, rng);
    std::vector<unsigned char> mask(static_cast<std::size_t>(n) * n, 0);
    const Defect d = draw_defect(spec, rng);
    apply_defect(spec, d, rng, rgb, mask);
    const std::string defect_dir = d.ellipse ? "spot" : "patch";
    const int idx = d.ellipse ? spot_count++ : patch_count++;
    save_ppm_u8(rgb, n, n, (cdir / "test" / defect_dir / (file_index(idx) + ".ppm")).string());
    save_pgm_u8(mask, n, n,
                (cdir / "ground_truth" / defect_dir / (file_index(idx) + "_mask.pgm")).string());
  }
  // A defect-type directory that drew no samples would trip the layout
  // scanner's empty-directory check; drop it.
  for (const char* dir : {"patch", "spot"}) {
    if (fs::is_empty(cdir / "test" / dir)) {
      fs::remove(cdir / "test" / dir);
      fs::remove(cdir / "ground_truth" / dir);
    }
  }
}

}  // namespace

void generate_corpus(const CorpusSpec& spec, const std::string& out_root) {
  spec.validate();
  fs::create_directories(out_root);
  parallel_for(spec.classes.size(), [&](std::size_t i) { generate_class(spec, i, out_root); });
}

}  // namespace adkd
