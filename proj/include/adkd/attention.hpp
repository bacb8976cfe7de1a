#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adkd/graph.hpp"
#include "adkd/rng.hpp"

// Student-side attention refinement. Channel attention squeezes each feature
// map with global average and max pooling, pushes both through a shared
// two-layer bottleneck MLP and gates channels with the sigmoid of the sum.
// Spatial attention pools across channels (average and max), stacks the two
// maps and derives a per-pixel gate from a wide convolution. Refinement runs
// only while fitting the student; the deployed scoring path never builds it.

namespace adkd {

enum class AttentionMode { none, channel, spatial, combined };

inline const char* attention_mode_name(AttentionMode m) {
  switch (m) {
    case AttentionMode::none: return "none";
    case AttentionMode::channel: return "channel";
    case AttentionMode::spatial: return "spatial";
    case AttentionMode::combined: return "combined";
  }
  return "?";
}

inline AttentionMode attention_mode_from(const std::string& s) {
  if (s == "none") return AttentionMode::none;
  if (s == "channel") return AttentionMode::channel;
  if (s == "spatial") return AttentionMode::spatial;
  if (s == "combined") return AttentionMode::combined;
  throw ConfigError("unknown attention mode '" + s + "' (expected none|channel|spatial|combined)");
}

template <typename T>
struct ChannelAttentionParams {
  Tensor<T> w0;  // (C/r, C)
  Tensor<T> w1;  // (C, C/r)
};

template <typename T>
struct SpatialAttentionParams {
  Tensor<T> weight;  // (1, 2, k, k), k odd
  Tensor<T> bias;    // (1)
};

template <typename T>
struct LevelAttentionParams {
  ChannelAttentionParams<T> channel;
  SpatialAttentionParams<T> spatial;
};

namespace detail {

template <typename T>
Tensor<T> kaiming_uniform(std::vector<int> shape, int fan_in, SplitMix64& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  return t;
}

}  // namespace detail

// Parameters for all pyramid levels of one attention configuration.
template <typename T>
struct AttentionParams {
  AttentionMode mode = AttentionMode::none;
  int reduction = 8;
  std::vector<int> widths;  // channel count per pyramid level
  std::vector<LevelAttentionParams<T>> levels;

  bool has_channel() const {
    return mode == AttentionMode::channel || mode == AttentionMode::combined;
  }
  bool has_spatial() const {
    return mode == AttentionMode::spatial || mode == AttentionMode::combined;
  }

  static AttentionParams init(AttentionMode mode, int reduction,
                              const std::vector<int>& widths, std::uint64_t seed,
                              int spatial_kernel = 7) {
    if (reduction < 1) throw ConfigError("attention reduction must be >= 1");
    if (spatial_kernel < 1 || spatial_kernel % 2 == 0) {
      throw ConfigError("spatial attention kernel must be odd and positive");
    }
    AttentionParams p;
    p.mode = mode;
    p.reduction = reduction;
    p.widths = widths;
    if (mode == AttentionMode::none) return p;
    SplitMix64 rng(seed);
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const int c = widths[k];
      LevelAttentionParams<T> lvl;
      if (mode != AttentionMode::spatial) {
        if (c % reduction != 0) {
          throw ConfigError("attention reduction " + std::to_string(reduction) +
                            " must divide channel width " + std::to_string(c));
        }
        const int hidden = c / reduction;
        lvl.channel.w0 = detail::kaiming_uniform<T>({hidden, c}, c, rng);
        lvl.channel.w1 = detail::kaiming_uniform<T>({c, hidden}, hidden, rng);
      }
      if (mode != AttentionMode::channel) {
        lvl.spatial.weight = detail::kaiming_uniform<T>({1, 2, spatial_kernel, spatial_kernel},
                                                        2 * spatial_kernel * spatial_kernel, rng);
        lvl.spatial.bias = Tensor<T>({1});
      }
      p.levels.push_back(std::move(lvl));
    }
    return p;
  }

  // Canonical parameter visit order; also the serialization order. Level
  // names count from 2 to match the pyramid level naming.
  template <typename Fn>
  void visit(Fn&& fn) {
    for (std::size_t k = 0; k < levels.size(); ++k) {
      const std::string prefix = "dcam.k" + std::to_string(k + 2) + ".";
      if (has_channel()) {
        fn(prefix + "channel.w0", &levels[k].channel.w0);
        fn(prefix + "channel.w1", &levels[k].channel.w1);
      }
      if (has_spatial()) {
        fn(prefix + "spatial.weight", &levels[k].spatial.weight);
        fn(prefix + "spatial.bias", &levels[k].spatial.bias);
      }
    }
  }
};

// Graph-side handles for one level's attention parameters.
struct LevelAttentionNodes {
  NodeRef ch_w0, ch_w1, sp_weight, sp_bias;
};

// Registers the attention parameters of every level as graph leaves.
// trainable=false enters them as constants (used by validation passes that
// must not collect gradients).
template <typename T>
std::vector<LevelAttentionNodes> enter_attention(Graph<T>& g, AttentionParams<T>& p,
                                                 bool trainable) {
  std::vector<LevelAttentionNodes> out(p.levels.size());
  for (std::size_t k = 0; k < p.levels.size(); ++k) {
    const std::string prefix = "dcam.k" + std::to_string(k + 2) + ".";
    auto leaf = [&](const std::string& name, const Tensor<T>& t) {
      return trainable ? g.param(name, t) : g.input(t);
    };
    if (p.has_channel()) {
      out[k].ch_w0 = leaf(prefix + "channel.w0", p.levels[k].channel.w0);
      out[k].ch_w1 = leaf(prefix + "channel.w1", p.levels[k].channel.w1);
    }
    if (p.has_spatial()) {
      out[k].sp_weight = leaf(prefix + "spatial.weight", p.levels[k].spatial.weight);
      out[k].sp_bias = leaf(prefix + "spatial.bias", p.levels[k].spatial.bias);
    }
  }
  return out;
}

// Channel gate: sigmoid(W1 relu(W0 avg) + W1 relu(W0 max)) -> (N?,C,1,1).
template <typename T>
NodeRef channel_attention(Graph<T>& g, NodeRef f, NodeRef w0, NodeRef w1) {
  const MapDims d = map_dims(g.value(f), "channel_attention");
  const std::vector<int> vec_shape =
      d.batched ? std::vector<int>{d.n, d.c} : std::vector<int>{d.c};
  const std::vector<int> gate_shape =
      d.batched ? std::vector<int>{d.n, d.c, 1, 1} : std::vector<int>{d.c, 1, 1};
  auto branch = [&](NodeRef pooled) {
    NodeRef v = g.reshape(pooled, vec_shape);
    return g.linear(g.relu(g.linear(v, w0)), w1);
  };
  NodeRef s = g.add(branch(g.global_avgpool(f)), branch(g.global_maxpool(f)));
  return g.reshape(g.sigmoid(s), gate_shape);
}

// Spatial gate: sigmoid(conv([avg_c; max_c])) -> (N?,1,H,W). The convolution
// pads by k/2 so the gate keeps the feature map's spatial size.
template <typename T>
NodeRef spatial_attention(Graph<T>& g, NodeRef f, NodeRef weight, NodeRef bias) {
  NodeRef stacked = g.concat_channel(g.channel_avgpool(f), g.channel_maxpool(f));
  const int k = g.value(weight).dim(2);
  NodeRef conv = g.conv2d(stacked, weight, bias, 1, k / 2);
  return g.sigmoid(conv);
}

// Applies the configured refinement to one feature map. combined applies the
// channel gate first, then the spatial gate on the gated map. none returns
// the input node untouched (bit-identical passthrough).
template <typename T>
NodeRef refine(Graph<T>& g, NodeRef f, AttentionMode mode, const LevelAttentionNodes& n) {
  switch (mode) {
    case AttentionMode::none:
      return f;
    case AttentionMode::channel:
      return g.channel_gate(f, channel_attention(g, f, n.ch_w0, n.ch_w1));
    case AttentionMode::spatial:
      return g.spatial_gate(f, spatial_attention(g, f, n.sp_weight, n.sp_bias));
    case AttentionMode::combined: {
      NodeRef gated = g.channel_gate(f, channel_attention(g, f, n.ch_w0, n.ch_w1));
      return g.spatial_gate(gated, spatial_attention(g, gated, n.sp_weight, n.sp_bias));
    }
  }
  throw ContractError("refine: unknown attention mode");
}

// Convenience single-tensor evaluations (build a throwaway graph).

template <typename T>
Tensor<T> channel_attention_value(const Tensor<T>& f, const ChannelAttentionParams<T>& p) {
  Graph<T> g;
  NodeRef out = channel_attention(g, g.input(f), g.input(p.w0), g.input(p.w1));
  return g.value(out);
}

template <typename T>
Tensor<T> spatial_attention_value(const Tensor<T>& f, const SpatialAttentionParams<T>& p) {
  Graph<T> g;
  NodeRef out = spatial_attention(g, g.input(f), g.input(p.weight), g.input(p.bias));
  return g.value(out);
}

}  // namespace adkd
