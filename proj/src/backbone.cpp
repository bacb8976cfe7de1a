#include "adkd/backbone.hpp"

#include <cmath>
#include <set>

#include "adkd/rng.hpp"

namespace adkd {
namespace {

ConvParam make_conv(int c_out, int c_in, int k, int stride, int padding, bool with_bias) {
  ConvParam c;
  c.weight = Tensor<float>({c_out, c_in, k, k});
  if (with_bias) c.bias = Tensor<float>({c_out});
  c.stride = stride;
  c.padding = padding;
  return c;
}

NormParam make_norm(int c) {
  NormParam n;
  n.gamma = Tensor<float>::full({c}, 1.0f);
  n.beta = Tensor<float>({c});
  n.running_mean.assign(static_cast<std::size_t>(c), 0.0f);
  n.running_var.assign(static_cast<std::size_t>(c), 1.0f);
  return n;
}

}  // namespace

PyramidNet build_backbone(const BackboneConfig& config, std::uint64_t seed) {
  if (config.widths.size() != 3) {
    throw ConfigError("backbone needs exactly 3 stage widths, got " +
                      std::to_string(config.widths.size()));
  }
  if (config.blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (config.in_channels < 1) throw ConfigError("in_channels must be >= 1");
  for (int w : config.widths) {
    if (w < 1) throw ConfigError("stage widths must be >= 1");
  }

  const bool bn = config.batchnorm;
  PyramidNet net;
  net.config = config;
  net.stem = make_conv(config.widths[0], config.in_channels, 7, 2, 3, !bn);
  if (bn) net.stem_norm = make_norm(config.widths[0]);

  int c_in = config.widths[0];
  for (int i = 0; i < 3; ++i) {
    const int c_out = config.widths[static_cast<std::size_t>(i)];
    std::vector<BlockParam> blocks;
    for (int j = 0; j < config.blocks_per_stage; ++j) {
      const int stride = (i > 0 && j == 0) ? 2 : 1;
      BlockParam blk;
      blk.conv1 = make_conv(c_out, c_in, 3, stride, 1, !bn);
      blk.conv2 = make_conv(c_out, c_out, 3, 1, 1, !bn);
      if (bn) {
        blk.norm1 = make_norm(c_out);
        blk.norm2 = make_norm(c_out);
      }
      if (stride != 1 || c_in != c_out) {
        blk.proj = make_conv(c_out, c_in, 1, stride, 0, !bn);
        if (bn) blk.proj_norm = make_norm(c_out);
      }
      blocks.push_back(std::move(blk));
      c_in = c_out;
    }
    net.stages.push_back(std::move(blocks));
  }

  // Fan-in-scaled uniform init over the canonical order; only convolution
  // weights consume draws, so adding or removing norms never shifts them.
  SplitMix64 rng(seed);
  net.visit_params([&](const std::string& name, Tensor<float>& t) {
    if (t.rank() != 4) return;  // biases, gammas, betas keep their fill values
    const std::size_t fan_in = static_cast<std::size_t>(t.dim(1)) * t.dim(2) * t.dim(3);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) {
      t[i] = static_cast<float>(rng.uniform(-bound, bound));
    }
  });
  return net;
}

namespace {

struct Enter {
  Graph<float>& g;
  bool trainable;
  const std::string& prefix;

  NodeRef tensor(const std::string& name, Tensor<float>& t) {
    return trainable ? g.param(prefix + name, t) : g.input(t);
  }
  NodeRef conv_bias(const std::string& base, ConvParam& c) {
    if (c.bias) return tensor(base + ".bias", *c.bias);
    return g.input(Tensor<float>({c.weight.dim(0)}));  // constant zero
  }
};

NodeRef apply_norm(Graph<float>& g, Enter& e, const std::string& base, NormParam& n, NodeRef x,
                   bool training) {
  const NodeRef gamma = e.tensor(base + ".gamma", n.gamma);
  const NodeRef beta = e.tensor(base + ".beta", n.beta);
  std::vector<float>* um = training ? &n.running_mean : nullptr;
  std::vector<float>* uv = training ? &n.running_var : nullptr;
  return g.batchnorm(x, gamma, beta, n.running_mean, n.running_var, training, 1e-5f, 0.1f, um, uv);
}

NodeRef apply_conv(Graph<float>& g, Enter& e, const std::string& base, ConvParam& c, NodeRef x) {
  const NodeRef w = e.tensor(base + ".weight", c.weight);
  const NodeRef b = e.conv_bias(base, c);
  return g.conv2d(x, w, b, c.stride, c.padding);
}

}  // namespace

std::vector<NodeRef> run_backbone(Graph<float>& g, PyramidNet& net, NodeRef image,
                                  bool training, bool trainable, const std::string& prefix) {
  const MapDims d = map_dims(g.value(image), "backbone input");
  if (d.c != net.config.in_channels) {
    throw DimensionError("backbone input has " + std::to_string(d.c) + " channels, expected " +
                         std::to_string(net.config.in_channels));
  }
  if (d.h % 16 != 0 || d.w % 16 != 0) {
    throw DimensionError("backbone input " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                         " is not divisible by 16");
  }

  Enter e{g, trainable, prefix};
  NodeRef x = apply_conv(g, e, "stem.conv", net.stem, image);
  if (net.stem_norm) x = apply_norm(g, e, "stem.norm", *net.stem_norm, x, training);
  x = g.relu(x);
  x = g.maxpool2d(x, 3, 2, 1);

  std::vector<NodeRef> levels;
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    for (std::size_t j = 0; j < net.stages[i].size(); ++j) {
      const std::string base = "s" + std::to_string(i + 1) + ".b" + std::to_string(j) + ".";
      BlockParam& blk = net.stages[i][j];
      NodeRef h = apply_conv(g, e, base + "conv1", blk.conv1, x);
      if (blk.norm1) h = apply_norm(g, e, base + "norm1", *blk.norm1, h, training);
      h = g.relu(h);
      h = apply_conv(g, e, base + "conv2", blk.conv2, h);
      if (blk.norm2) h = apply_norm(g, e, base + "norm2", *blk.norm2, h, training);
      NodeRef shortcut = x;
      if (blk.proj) {
        shortcut = apply_conv(g, e, base + "proj", *blk.proj, x);
        if (blk.proj_norm) shortcut = apply_norm(g, e, base + "proj_norm", *blk.proj_norm, shortcut, training);
      }
      x = g.relu(g.add(h, shortcut));
    }
    levels.push_back(x);
  }
  return levels;
}

std::vector<NamedTensor> export_backbone(PyramidNet& net, const std::string& prefix) {
  std::vector<NamedTensor> out;
  net.visit_params([&](const std::string& name, Tensor<float>& t) {
    out.push_back({prefix + name, t});
  });
  net.visit_norm_state([&](const std::string& name, std::vector<float>& v) {
    out.push_back({prefix + name, Tensor<float>({static_cast<int>(v.size())}, v)});
  });
  return out;
}

void import_backbone(PyramidNet& net, const WeightsFile& file, const std::string& prefix) {
  std::vector<std::string> problems;
  std::set<std::string> consumed;

  const auto fetch = [&](const std::string& name, const std::vector<int>& want) -> const Tensor<float>* {
    const std::string full = prefix + name;
    const Tensor<float>* t = file.find(full);
    if (!t) {
      problems.push_back("missing tensor \"" + full + "\"");
      return nullptr;
    }
    consumed.insert(full);
    if (t->shape() != want) {
      problems.push_back("tensor \"" + full + "\" has shape " + shape_str(t->shape()) +
                         ", expected " + shape_str(want));
      return nullptr;
    }
    return t;
  };

  net.visit_params([&](const std::string& name, Tensor<float>& t) {
    if (const Tensor<float>* src = fetch(name, t.shape())) t = *src;
  });
  net.visit_norm_state([&](const std::string& name, std::vector<float>& v) {
    if (const Tensor<float>* src = fetch(name, {static_cast<int>(v.size())})) {
      v.assign(src->data(), src->data() + src->numel());
    }
  });

  for (const auto& nt : file.tensors) {
    if (nt.name.rfind(prefix, 0) == 0 && !consumed.count(nt.name)) {
      problems.push_back("unexpected tensor \"" + nt.name + "\"");
    }
  }

  if (!problems.empty()) {
    std::string msg = "weights do not match the model:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ContractError(msg);
  }
}

}  // namespace adkd
