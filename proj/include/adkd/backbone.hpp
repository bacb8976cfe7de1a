#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adkd/graph.hpp"
#include "adkd/weights_io.hpp"

// Three-stage residual feature pyramid shared by the frozen teacher and the
// trained student. The stem downsamples by 4 (7x7/2 conv + 3x3/2 maxpool);
// stages 2 and 3 downsample by 2 each, so the three exported feature levels
// sit at 1/4, 1/8 and 1/16 of the input resolution. Inputs must therefore be
// divisible by 16.
//
// When batchnorm is enabled convolutions carry no bias (the norm's shift
// subsumes it); without batchnorm every convolution has a trainable bias.

namespace adkd {

struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> widths = {64, 128, 256};  // per-stage output channels, one pyramid level each
  int blocks_per_stage = 2;
  bool batchnorm = true;
};

struct ConvParam {
  Tensor<float> weight;               // (C_out, C_in, k, k)
  std::optional<Tensor<float>> bias;  // (C_out), absent when a norm follows
  int stride = 1;
  int padding = 0;
};

struct NormParam {
  Tensor<float> gamma, beta;                   // (C)
  std::vector<float> running_mean, running_var;  // inference statistics
};

struct BlockParam {
  ConvParam conv1, conv2;
  std::optional<NormParam> norm1, norm2;
  std::optional<ConvParam> proj;  // 1x1 shortcut when shape changes
  std::optional<NormParam> proj_norm;
};

class PyramidNet {
 public:
  BackboneConfig config;
  ConvParam stem;
  std::optional<NormParam> stem_norm;
  std::vector<std::vector<BlockParam>> stages;  // [stage][block]

  int levels() const { return static_cast<int>(stages.size()); }

  // Canonical traversal of trainable tensors; the order defines both the
  // seeded-initialization draw order and the weight-file layout.
  template <typename Fn>
  void visit_params(Fn&& fn) {
    visit_conv("stem.conv", stem, fn);
    visit_norm_params("stem.norm", stem_norm, fn);
    for (std::size_t i = 0; i < stages.size(); ++i) {
      for (std::size_t j = 0; j < stages[i].size(); ++j) {
        const std::string base = "s" + std::to_string(i + 1) + ".b" + std::to_string(j) + ".";
        BlockParam& blk = stages[i][j];
        visit_conv(base + "conv1", blk.conv1, fn);
        visit_norm_params(base + "norm1", blk.norm1, fn);
        visit_conv(base + "conv2", blk.conv2, fn);
        visit_norm_params(base + "norm2", blk.norm2, fn);
        if (blk.proj) visit_conv(base + "proj", *blk.proj, fn);
        visit_norm_params(base + "proj_norm", blk.proj_norm, fn);
      }
    }
  }

  // Batch-norm running statistics: persisted with the weights, never trained.
  template <typename Fn>
  void visit_norm_state(Fn&& fn) {
    visit_norm_buffers("stem.norm", stem_norm, fn);
    for (std::size_t i = 0; i < stages.size(); ++i) {
      for (std::size_t j = 0; j < stages[i].size(); ++j) {
        const std::string base = "s" + std::to_string(i + 1) + ".b" + std::to_string(j) + ".";
        BlockParam& blk = stages[i][j];
        visit_norm_buffers(base + "norm1", blk.norm1, fn);
        visit_norm_buffers(base + "norm2", blk.norm2, fn);
        visit_norm_buffers(base + "proj_norm", blk.proj_norm, fn);
      }
    }
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit_params([&](const std::string&, Tensor<float>& t) { n += t.numel(); });
    return n;
  }

 private:
  template <typename Fn>
  static void visit_conv(const std::string& base, ConvParam& c, Fn& fn) {
    fn(base + ".weight", c.weight);
    if (c.bias) fn(base + ".bias", *c.bias);
  }
  template <typename Fn>
  static void visit_norm_params(const std::string& base, std::optional<NormParam>& n, Fn& fn) {
    if (!n) return;
    fn(base + ".gamma", n->gamma);
    fn(base + ".beta", n->beta);
  }
  template <typename Fn>
  static void visit_norm_buffers(const std::string& base, std::optional<NormParam>& n, Fn& fn) {
    if (!n) return;
    fn(base + ".running_mean", n->running_mean);
    fn(base + ".running_var", n->running_var);
  }
};

// Builds a freshly initialized network. Convolution weights are drawn from a
// fan-in-scaled uniform distribution (+-sqrt(6/fan_in)) using a single
// deterministic stream over the canonical parameter order; biases start at
// zero, norm scales at one.
PyramidNet build_backbone(const BackboneConfig& config, std::uint64_t seed);

// Enters the network into the graph and runs it, returning one node per
// pyramid level (coarse-to-fine order: 1/4, 1/8, 1/16 of input resolution).
//   trainable  false registers every tensor as a constant so no gradient is
//              ever produced for it (frozen teacher); true registers each
//              tensor under "<prefix><name>".
//   training   batch statistics + running-stat updates when true; stored
//              running statistics when false.
std::vector<NodeRef> run_backbone(Graph<float>& g, PyramidNet& net, NodeRef image,
                                  bool training, bool trainable, const std::string& prefix);

// Weight-file round trip. Export emits parameters followed by norm state, all
// names prefixed; import validates the complete set and reports every missing,
// unexpected, or mis-shaped tensor at once.
std::vector<NamedTensor> export_backbone(PyramidNet& net, const std::string& prefix);
void import_backbone(PyramidNet& net, const WeightsFile& file, const std::string& prefix);

}  // namespace adkd
