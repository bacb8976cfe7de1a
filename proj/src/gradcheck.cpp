#include "adkd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "adkd/attention.hpp"
#include "adkd/losses.hpp"
#include "adkd/rng.hpp"

namespace adkd {

double gradient_rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

GradResult run_grad_case(const GradCase& c, double step, double tol) {
  GradResult r;
  r.name = c.name;

  Graph<double> g;
  const NodeRef loss = c.build(g, c.params);
  if (g.value(loss).rank() != 0) {
    throw ContractError("gradient check \"" + c.name + "\" must build a scalar");
  }
  g.backward(loss);
  const std::map<std::string, Tensor<double>> grads = g.param_grads();

  std::map<std::string, Tensor<double>> probe = c.params;
  for (auto& [name, t] : probe) {
    const Tensor<double>& analytic = grads.at(name);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t[i];
      t[i] = orig + step;
      Graph<double> gp;
      const double fp = gp.value(c.build(gp, probe))[0];
      t[i] = orig - step;
      Graph<double> gm;
      const double fm = gm.value(c.build(gm, probe))[0];
      t[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      r.max_rel_err = std::max(r.max_rel_err, gradient_rel_err(analytic[i], numeric));
      ++r.elements;
    }
  }
  r.pass = r.max_rel_err < tol;
  return r;
}

namespace {

using Params = std::map<std::string, Tensor<double>>;

// Well-separated values on a shuffled lattice: every pair of elements differs
// by at least `scale`, and the half-step offset keeps everything away from
// zero. Ties would flip max-pool argmaxes under the ±step probes, and values
// at a relu kink would break the central difference.
Tensor<double> lattice(std::vector<int> shape, SplitMix64& rng, double scale = 0.037) {
  Tensor<double> t(std::move(shape));
  std::vector<std::size_t> idx(t.numel());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  const double mid = static_cast<double>(t.numel()) / 2.0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t[i] = (static_cast<double>(idx[i]) - mid) * scale + scale / 2.0;
  }
  return t;
}

Tensor<double> coefs(std::vector<int> shape, SplitMix64& rng) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

NodeRef enter(Graph<double>& g, const Params& p, const std::string& name) {
  return g.param(name, p.at(name));
}

// Scalarize through a fixed random projection so every output element
// contributes an independent gradient path.
GradCase projected(std::string name, Params params, SplitMix64& rng,
                   std::function<NodeRef(Graph<double>&, const Params&)> body) {
  GradCase c;
  c.name = std::move(name);
  c.params = std::move(params);
  // Probe once to size the projection tensor.
  Graph<double> g;
  const NodeRef y = body(g, c.params);
  Tensor<double> proj = coefs(g.value(y).shape(), rng);
  c.build = [body = std::move(body), proj = std::move(proj)](Graph<double>& g,
                                                             const Params& p) {
    return g.inner(body(g, p), proj);
  };
  return c;
}

void add_conv_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  struct Spec {
    const char* name;
    std::vector<int> x, w;
    int stride, pad;
  };
  const Spec specs[] = {
      {"conv2d.3x3.s1", {2, 3, 5, 5}, {4, 3, 3, 3}, 1, 1},
      {"conv2d.3x3.s2", {1, 4, 6, 6}, {3, 4, 3, 3}, 2, 1},
      {"conv2d.1x1", {2, 3, 4, 4}, {5, 3, 1, 1}, 1, 0},
      {"conv2d.7x7.s2", {1, 3, 8, 8}, {2, 3, 7, 7}, 2, 3},
  };
  for (const Spec& s : specs) {
    Params p;
    p.emplace("x", lattice(s.x, rng));
    p.emplace("w", coefs(s.w, rng));
    p.emplace("b", coefs({s.w[0]}, rng));
    out.push_back(projected(s.name, std::move(p), rng,
                            [stride = s.stride, pad = s.pad](Graph<double>& g, const Params& p) {
                              return g.conv2d(enter(g, p, "x"), enter(g, p, "w"),
                                              enter(g, p, "b"), stride, pad);
                            }));
  }
}

void add_unary_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  auto unary = [&](const char* name, std::vector<int> shape,
                   std::function<NodeRef(Graph<double>&, NodeRef)> op) {
    Params p;
    p.emplace("x", lattice(std::move(shape), rng));
    out.push_back(projected(name, std::move(p), rng,
                            [op = std::move(op)](Graph<double>& g, const Params& p) {
                              return op(g, enter(g, p, "x"));
                            }));
  };
  unary("relu", {2, 3, 4, 4}, [](Graph<double>& g, NodeRef x) { return g.relu(x); });
  unary("sigmoid", {2, 2, 3, 3}, [](Graph<double>& g, NodeRef x) { return g.sigmoid(x); });
  unary("softmax.channel", {2, 5, 3, 3},
        [](Graph<double>& g, NodeRef x) { return g.softmax(x, {1}); });
  unary("softmax.spatial", {1, 3, 4, 4},
        [](Graph<double>& g, NodeRef x) { return g.softmax(x, {2, 3}); });
  unary("maxpool2d", {1, 2, 6, 6},
        [](Graph<double>& g, NodeRef x) { return g.maxpool2d(x, 3, 2, 1); });
  unary("avgpool2d", {2, 2, 6, 6},
        [](Graph<double>& g, NodeRef x) { return g.avgpool2d(x, 3, 2, 1); });
  unary("global_maxpool", {2, 4, 3, 3},
        [](Graph<double>& g, NodeRef x) { return g.global_maxpool(x); });
  unary("global_avgpool", {2, 3, 3, 3},
        [](Graph<double>& g, NodeRef x) { return g.global_avgpool(x); });
  unary("channel_maxpool", {1, 5, 3, 3},
        [](Graph<double>& g, NodeRef x) { return g.channel_maxpool(x); });
  unary("channel_avgpool", {2, 4, 3, 3},
        [](Graph<double>& g, NodeRef x) { return g.channel_avgpool(x); });
  unary("bilinear_upsample", {1, 3, 3, 4},
        [](Graph<double>& g, NodeRef x) { return g.bilinear_upsample(x, 7, 9); });
  unary("reshape", {2, 3, 4}, [](Graph<double>& g, NodeRef x) { return g.reshape(x, {3, 8}); });
}

void add_binary_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  {
    Params p;
    p.emplace("x", lattice({3, 6}, rng));
    p.emplace("w", coefs({4, 6}, rng));
    out.push_back(projected("linear", std::move(p), rng, [](Graph<double>& g, const Params& p) {
      return g.linear(enter(g, p, "x"), enter(g, p, "w"));
    }));
  }
  auto pair_case = [&](const char* name, std::vector<int> sa, std::vector<int> sb,
                       std::function<NodeRef(Graph<double>&, NodeRef, NodeRef)> op) {
    Params p;
    p.emplace("a", lattice(std::move(sa), rng));
    p.emplace("b", lattice(std::move(sb), rng));
    out.push_back(projected(name, std::move(p), rng,
                            [op = std::move(op)](Graph<double>& g, const Params& p) {
                              return op(g, enter(g, p, "a"), enter(g, p, "b"));
                            }));
  };
  pair_case("add", {2, 3, 3, 3}, {2, 3, 3, 3},
            [](Graph<double>& g, NodeRef a, NodeRef b) { return g.add(a, b); });
  pair_case("mul", {2, 3, 3, 3}, {2, 3, 3, 3},
            [](Graph<double>& g, NodeRef a, NodeRef b) { return g.mul(a, b); });
  pair_case("concat_channel", {1, 2, 3, 3}, {1, 3, 3, 3},
            [](Graph<double>& g, NodeRef a, NodeRef b) { return g.concat_channel(a, b); });
  pair_case("channel_gate", {2, 4, 3, 3}, {2, 4, 1, 1},
            [](Graph<double>& g, NodeRef a, NodeRef b) { return g.channel_gate(a, g.sigmoid(b)); });
  pair_case("spatial_gate", {2, 3, 4, 4}, {2, 1, 4, 4},
            [](Graph<double>& g, NodeRef a, NodeRef b) { return g.spatial_gate(a, g.sigmoid(b)); });
}

void add_reduction_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  {
    Params p;
    p.emplace("x", lattice({2, 3, 4, 4}, rng));
    GradCase c;
    c.name = "sum_all";
    c.params = std::move(p);
    c.build = [](Graph<double>& g, const Params& p) { return g.sum_all(enter(g, p, "x")); };
    out.push_back(std::move(c));
  }
  {
    Params p;
    p.emplace("x", lattice({3, 5}, rng));
    Tensor<double> proj = coefs({3, 5}, rng);
    GradCase c;
    c.name = "inner";
    c.params = std::move(p);
    c.build = [proj](Graph<double>& g, const Params& p) { return g.inner(enter(g, p, "x"), proj); };
    out.push_back(std::move(c));
  }
  {
    Params p;
    p.emplace("a", lattice({2, 3}, rng));
    p.emplace("b", lattice({4}, rng));
    p.emplace("c", lattice({2, 2}, rng));
    GradCase c;
    c.name = "weighted_sum";
    c.params = std::move(p);
    c.build = [](Graph<double>& g, const Params& p) {
      const std::vector<NodeRef> terms = {g.sum_all(enter(g, p, "a")),
                                          g.sum_all(enter(g, p, "b")),
                                          g.sum_all(enter(g, p, "c"))};
      return g.weighted_sum(terms, {1.0, 0.5, -0.25});
    };
    out.push_back(std::move(c));
  }
}

void add_batchnorm_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  auto bn_case = [&](const char* name, bool training) {
    Params p;
    p.emplace("x", lattice({3, 4, 4, 4}, rng));
    p.emplace("gamma", coefs({4}, rng));
    p.emplace("beta", coefs({4}, rng));
    std::vector<double> rm(4), rv(4);
    for (int c = 0; c < 4; ++c) {
      rm[c] = rng.uniform(-0.5, 0.5);
      rv[c] = rng.uniform(0.5, 2.0);
    }
    out.push_back(projected(name, std::move(p), rng,
                            [rm, rv, training](Graph<double>& g, const Params& p) {
                              return g.batchnorm(enter(g, p, "x"), enter(g, p, "gamma"),
                                                 enter(g, p, "beta"), rm, rv, training);
                            }));
  };
  bn_case("batchnorm.train", true);
  bn_case("batchnorm.eval", false);
}

void add_attention_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  {
    Params p;
    p.emplace("f", lattice({2, 6, 4, 4}, rng, 0.15));
    p.emplace("w0", coefs({3, 6}, rng));
    p.emplace("w1", coefs({6, 3}, rng));
    out.push_back(projected("attention.channel", std::move(p), rng,
                            [](Graph<double>& g, const Params& p) {
                              return channel_attention(g, enter(g, p, "f"), enter(g, p, "w0"),
                                                       enter(g, p, "w1"));
                            }));
  }
  {
    Params p;
    p.emplace("f", lattice({1, 4, 5, 5}, rng, 0.15));
    p.emplace("w", coefs({1, 2, 7, 7}, rng));
    p.emplace("b", coefs({1}, rng));
    out.push_back(projected("attention.spatial", std::move(p), rng,
                            [](Graph<double>& g, const Params& p) {
                              return spatial_attention(g, enter(g, p, "f"), enter(g, p, "w"),
                                                       enter(g, p, "b"));
                            }));
  }
}

void add_loss_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  using LevelFn = NodeRef (*)(Graph<double>&, NodeRef, NodeRef);
  struct Spec {
    const char* name;
    LevelFn fn;
  };
  const Spec specs[] = {
      {"loss.cd_channel", &cd_channel_level<double>},
      {"loss.cd_spatial", &cd_spatial_level<double>},
      {"loss.kld_channel", &kld_channel_level<double>},
      {"loss.kld_spatial", &kld_spatial_level<double>},
      {"loss.mse", &mse_level<double>},
  };
  for (const Spec& s : specs) {
    for (const bool batched : {true, false}) {
      Params p;
      const std::vector<int> shape =
          batched ? std::vector<int>{2, 3, 4, 4} : std::vector<int>{3, 4, 4};
      p.emplace("t", lattice(shape, rng, 0.15));
      p.emplace("s", lattice(shape, rng, 0.15));
      GradCase c;
      c.name = std::string(s.name) + (batched ? ".rank4" : ".rank3");
      c.params = std::move(p);
      c.build = [fn = s.fn](Graph<double>& g, const Params& p) {
        return fn(g, enter(g, p, "t"), enter(g, p, "s"));
      };
      out.push_back(std::move(c));
    }
  }
  {
    // Multi-level weighted total over the default loss mix.
    Params p;
    p.emplace("t2", lattice({1, 3, 4, 4}, rng, 0.15));
    p.emplace("s2", lattice({1, 3, 4, 4}, rng, 0.15));
    p.emplace("t3", lattice({1, 5, 2, 2}, rng, 0.15));
    p.emplace("s3", lattice({1, 5, 2, 2}, rng, 0.15));
    GradCase c;
    c.name = "loss.total.headline";
    c.params = std::move(p);
    c.build = [](Graph<double>& g, const Params& p) {
      const std::vector<NodeRef> t = {enter(g, p, "t2"), enter(g, p, "t3")};
      const std::vector<NodeRef> s = {enter(g, p, "s2"), enter(g, p, "s3")};
      return total_loss(g, t, s, LossSpec::headline());
    };
    out.push_back(std::move(c));
  }
}

void add_composition_cases(std::vector<GradCase>& out, SplitMix64& rng) {
  for (const AttentionMode mode :
       {AttentionMode::channel, AttentionMode::spatial, AttentionMode::combined}) {
    AttentionParams<double> att =
        AttentionParams<double>::init(mode, 2, {6}, rng.next(), /*spatial_kernel=*/3);
    Params p;
    p.emplace("t", lattice({1, 6, 4, 4}, rng, 0.15));
    p.emplace("s", lattice({1, 6, 4, 4}, rng, 0.15));
    att.visit([&](const std::string& name, Tensor<double>* t) { p.emplace(name, *t); });
    GradCase c;
    c.name = std::string("refine_loss.") + attention_mode_name(mode);
    c.params = std::move(p);
    c.build = [mode](Graph<double>& g, const Params& p) {
      LevelAttentionNodes nodes;
      if (mode != AttentionMode::spatial) {
        nodes.ch_w0 = enter(g, p, "dcam.k2.channel.w0");
        nodes.ch_w1 = enter(g, p, "dcam.k2.channel.w1");
      }
      if (mode != AttentionMode::channel) {
        nodes.sp_weight = enter(g, p, "dcam.k2.spatial.weight");
        nodes.sp_bias = enter(g, p, "dcam.k2.spatial.bias");
      }
      const NodeRef refined = refine(g, enter(g, p, "s"), mode, nodes);
      return total_loss(g, {enter(g, p, "t")}, {refined}, LossSpec::headline());
    };
    out.push_back(std::move(c));
  }
}

}  // namespace

std::vector<GradCase> standard_grad_cases() {
  SplitMix64 rng(0xC0FFEEu);
  std::vector<GradCase> out;
  add_conv_cases(out, rng);
  add_unary_cases(out, rng);
  add_binary_cases(out, rng);
  add_reduction_cases(out, rng);
  add_batchnorm_cases(out, rng);
  add_attention_cases(out, rng);
  add_loss_cases(out, rng);
  add_composition_cases(out, rng);
  return out;
}

int run_grad_suite(std::ostream& log, double step, double tol) {
  int failures = 0;
  for (const GradCase& c : standard_grad_cases()) {
    const GradResult r = run_grad_case(c, step, tol);
    char line[160];
    std::snprintf(line, sizeof(line), "%-28s %6zu elements  max rel err %.3e  %s\n",
                  r.name.c_str(), r.elements, r.max_rel_err, r.pass ? "ok" : "FAIL");
    log << line << std::flush;
    if (!r.pass) ++failures;
  }
  return failures;
}

}  // namespace adkd
