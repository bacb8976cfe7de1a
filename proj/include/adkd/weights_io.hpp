#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adkd/tensor.hpp"

// Binary container for named float tensors.
//
// Layout (all integers little-endian, independent of host byte order):
//   magic   "ADKD" (4 bytes)
//   u32     format version (currently 1)
//   u32     tensor count
//   per tensor:
//     u16   name length, then that many bytes of UTF-8 name
//     u8    rank (0..4)
//     u32   dim[rank]
//     f32   payload, row-major, little-endian
//   optional trailing config-echo block:
//     magic "CFGE" (4 bytes)
//     u32   byte length, then that many bytes of UTF-8 text
//
// A plain weights file is the container without the echo block; a training
// checkpoint is the same container carrying every model tensor plus the echo
// block with the exact configuration and trainer state it was produced under.

namespace adkd {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

struct WeightsFile {
  std::vector<NamedTensor> tensors;
  std::optional<std::string> config_echo;

  // nullptr when absent.
  const Tensor<float>* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t.tensor;
    }
    return nullptr;
  }
};

void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors,
                  const std::string* config_echo = nullptr);

WeightsFile load_weights(const std::string& path);

}  // namespace adkd
