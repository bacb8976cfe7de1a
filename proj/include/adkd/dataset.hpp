#pragma once

#include <string>
#include <vector>

#include "adkd/tensor.hpp"

// Image codecs (binary PPM/PGM, maxval 255 only), dataset-layout ingestion,
// and input preprocessing.
//
// Dataset layout on disk (per class):
//   root/<class>/train/good/*            anomaly-free training images
//   root/<class>/test/good/*             anomaly-free test images
//   root/<class>/test/<defect>/*         anomalous test images
//   root/<class>/ground_truth/<defect>/<stem>_mask.*   binary masks
// Every anomalous test image must have its mask; test/good images must not.

namespace adkd {

// --- codecs -------------------------------------------------------------------

// Loads a P5 (grayscale) or P6 (RGB) binary image with maxval 255 into a
// (3,H,W) tensor in [0,1]; grayscale is replicated across the 3 channels.
Tensor<float> load_image(const std::string& path);

// Loads a P5 mask into a binary (H,W) tensor (pixel >= 128 reads as 1).
Tensor<float> load_mask(const std::string& path);

// Quantize to 8 bits (round, clamp) and write. save_ppm takes (3,H,W),
// save_pgm takes (H,W); values are interpreted in [0,1].
void save_ppm(const Tensor<float>& image, const std::string& path);
void save_pgm(const Tensor<float>& image, const std::string& path);

// Raw 8-bit grids for writers that already hold quantized pixels.
void save_ppm_u8(const std::vector<unsigned char>& rgb, int h, int w, const std::string& path);
void save_pgm_u8(const std::vector<unsigned char>& gray, int h, int w, const std::string& path);

// --- dataset ------------------------------------------------------------------

struct Sample {
  std::string image_path;
  std::string class_name;
  std::string defect_type;  // "good" for normal samples
  bool anomalous = false;
  std::string mask_path;  // empty for normal samples
};

struct Dataset {
  std::vector<Sample> train;  // all normal
  std::vector<Sample> test;   // normal + anomalous
  std::vector<std::string> classes;  // sorted
};

// Walks the layout above. Classes and files are visited in sorted order, so
// the resulting sample lists are deterministic.
Dataset scan_layout(const std::string& root);

// --- preprocessing ------------------------------------------------------------

// Bilinear resize of a (3,H,W) image in [0,1] to (3,size,size), then
// per-channel (x - mean[c]) / std[c].
Tensor<float> preprocess(const Tensor<float>& image, int size, const std::vector<double>& mean,
                         const std::vector<double>& std);

}  // namespace adkd
