#include "adkd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "adkd/errors.hpp"
#include "adkd/ops.hpp"

namespace fs = std::filesystem;

namespace adkd {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open \"" + path + "\" for reading");
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct PnmHeader {
  bool color;  // P6 vs P5
  int width, height;
  std::size_t payload_at;
};

bool is_pnm_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Parses "P5"/"P6", then width/height/maxval separated by whitespace and
// '#' comments, then exactly one whitespace byte before the payload.
PnmHeader parse_pnm_header(const std::string& bytes, const std::string& path) {
  std::size_t pos = 0;
  const auto fail = [&](const std::string& why, std::size_t at) -> PnmHeader {
    throw ParseError("\"" + path + "\": " + why, at);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    fail("not a binary PGM/PPM (expected P5 or P6 magic)", 0);
  }
  PnmHeader h{bytes[1] == '6', 0, 0, 0};
  pos = 2;

  int fields[3];
  for (int f = 0; f < 3; ++f) {
    // Skip whitespace and comments before each field.
    while (true) {
      if (pos >= bytes.size()) fail("truncated header", pos);
      if (is_pnm_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    if (bytes[pos] < '0' || bytes[pos] > '9') fail("expected a decimal header field", pos);
    long v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1000000) fail("header field too large", pos);
      ++pos;
    }
    fields[f] = static_cast<int>(v);
  }
  if (pos >= bytes.size() || !is_pnm_space(bytes[pos])) {
    fail("expected single whitespace before payload", pos);
  }
  ++pos;

  h.width = fields[0];
  h.height = fields[1];
  if (h.width < 1 || h.height < 1) fail("image dimensions must be >= 1", 2);
  if (fields[2] != 255) fail("unsupported maxval " + std::to_string(fields[2]) + " (only 255)", pos);
  h.payload_at = pos;

  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * (h.color ? 3 : 1);
  if (bytes.size() - pos < need) fail("truncated payload", bytes.size());
  if (bytes.size() - pos > need) fail("trailing bytes after payload", pos + need);
  return h;
}

}  // namespace

Tensor<float> load_image(const std::string& path) {
  const std::string bytes = read_file(path);
  const PnmHeader h = parse_pnm_header(bytes, path);
  const std::size_t hw = static_cast<std::size_t>(h.width) * h.height;
  Tensor<float> out({3, h.height, h.width});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_at;
  if (h.color) {
    for (std::size_t i = 0; i < hw; ++i) {
      for (int c = 0; c < 3; ++c) out[c * hw + i] = static_cast<float>(p[3 * i + c]) / 255.0f;
    }
  } else {
    for (std::size_t i = 0; i < hw; ++i) {
      const float v = static_cast<float>(p[i]) / 255.0f;
      out[i] = out[hw + i] = out[2 * hw + i] = v;
    }
  }
  return out;
}

Tensor<float> load_mask(const std::string& path) {
  const std::string bytes = read_file(path);
  const PnmHeader h = parse_pnm_header(bytes, path);
  if (h.color) throw ParseError("\"" + path + "\": masks must be grayscale (P5)", 0);
  Tensor<float> out({h.height, h.width});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_at;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = p[i] >= 128 ? 1.0f : 0.0f;
  return out;
}

namespace {

unsigned char quantize(float v) {
  const float scaled = v * 255.0f;
  const float r = std::nearbyint(scaled);
  return static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, r)));
}

void write_pnm(const std::string& path, const char* magic, int h, int w, int channels,
               const unsigned char* data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open \"" + path + "\" for writing");
  f << magic << "\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(data),
          static_cast<std::streamsize>(static_cast<std::size_t>(h) * w * channels));
  f.flush();
  if (!f) throw IoError("short write to \"" + path + "\"");
}

}  // namespace

void save_ppm(const Tensor<float>& image, const std::string& path) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("save_ppm expects a (3,H,W) tensor, got " + shape_str(image.shape()));
  }
  const std::size_t hw = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  std::vector<unsigned char> rgb(hw * 3);
  for (std::size_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) rgb[3 * i + c] = quantize(image[c * hw + i]);
  }
  write_pnm(path, "P6", image.dim(1), image.dim(2), 3, rgb.data());
}

void save_pgm(const Tensor<float>& image, const std::string& path) {
  if (image.rank() != 2) {
    throw DimensionError("save_pgm expects an (H,W) tensor, got " + shape_str(image.shape()));
  }
  std::vector<unsigned char> gray(image.numel());
  for (std::size_t i = 0; i < image.numel(); ++i) gray[i] = quantize(image[i]);
  write_pnm(path, "P5", image.dim(0), image.dim(1), 1, gray.data());
}

void save_ppm_u8(const std::vector<unsigned char>& rgb, int h, int w, const std::string& path) {
  if (rgb.size() != static_cast<std::size_t>(h) * w * 3) {
    throw DimensionError("save_ppm_u8: buffer size does not match dimensions");
  }
  write_pnm(path, "P6", h, w, 3, rgb.data());
}

void save_pgm_u8(const std::vector<unsigned char>& gray, int h, int w, const std::string& path) {
  if (gray.size() != static_cast<std::size_t>(h) * w) {
    throw DimensionError("save_pgm_u8: buffer size does not match dimensions");
  }
  write_pnm(path, "P5", h, w, 1, gray.data());
}

namespace {

std::vector<std::string> sorted_entries(const fs::path& dir, bool dirs) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs == e.is_directory()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

// ground_truth/<defect>/<stem>_mask.<ext> for test/<defect>/<stem>.<ext>.
std::string find_mask(const fs::path& gt_dir, const std::string& image_name) {
  const std::string stem = fs::path(image_name).stem().string();
  if (!fs::is_directory(gt_dir)) return "";
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_directory()) continue;
    if (e.path().filename().stem().string() == stem + "_mask") return e.path().string();
  }
  return "";
}

}  // namespace

Dataset scan_layout(const std::string& root) {
  if (!fs::is_directory(root)) throw IoError("dataset root \"" + root + "\" is not a directory");
  Dataset ds;
  ds.classes = sorted_entries(root, true);
  if (ds.classes.empty()) throw IoError("dataset root \"" + root + "\" has no class directories");

  for (const std::string& cls : ds.classes) {
    const fs::path cdir = fs::path(root) / cls;
    const fs::path train_good = cdir / "train" / "good";
    if (!fs::is_directory(train_good)) {
      throw IoError("class \"" + cls + "\" has no train/good directory");
    }
    const std::vector<std::string> train_files = sorted_entries(train_good, false);
    if (train_files.empty()) throw IoError("class \"" + cls + "\" has no training images");
    for (const std::string& name : train_files) {
      ds.train.push_back({(train_good / name).string(), cls, "good", false, ""});
    }

    const fs::path test_dir = cdir / "test";
    if (!fs::is_directory(test_dir)) throw IoError("class \"" + cls + "\" has no test directory");
    const std::vector<std::string> defect_dirs = sorted_entries(test_dir, true);
    if (defect_dirs.empty()) throw IoError("class \"" + cls + "\" has an empty test directory");
    for (const std::string& defect : defect_dirs) {
      const std::vector<std::string> files = sorted_entries(test_dir / defect, false);
      if (files.empty()) {
        throw IoError("class \"" + cls + "\" test/" + defect + " has no images");
      }
      for (const std::string& name : files) {
        Sample s{(test_dir / defect / name).string(), cls, defect, defect != "good", ""};
        if (s.anomalous) {
          s.mask_path = find_mask(cdir / "ground_truth" / defect, name);
          if (s.mask_path.empty()) {
            throw IoError("anomalous image \"" + s.image_path + "\" has no ground-truth mask");
          }
        }
        ds.test.push_back(std::move(s));
      }
    }
  }
  return ds;
}

Tensor<float> preprocess(const Tensor<float>& image, int size, const std::vector<double>& mean,
                         const std::vector<double>& std) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("preprocess expects a (3,H,W) image, got " + shape_str(image.shape()));
  }
  if (size < 16 || size % 16 != 0) {
    throw DimensionError("preprocess size " + std::to_string(size) + " is not a positive multiple of 16");
  }
  if (mean.size() != 3 || std.size() != 3) throw ConfigError("mean and std need 3 values each");
  for (double s : std) {
    if (s == 0.0) throw ConfigError("std values must be non-zero");
  }
  Tensor<float> resized = ops::bilinear_resize(image, size, size);
  const std::size_t hw = static_cast<std::size_t>(size) * size;
  for (int c = 0; c < 3; ++c) {
    const float m = static_cast<float>(mean[static_cast<std::size_t>(c)]);
    const float s = static_cast<float>(std[static_cast<std::size_t>(c)]);
    for (std::size_t i = 0; i < hw; ++i) {
      resized[c * hw + i] = (resized[c * hw + i] - m) / s;
    }
  }
  return resized;
}

}  // namespace adkd
