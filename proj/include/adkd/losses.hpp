#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "adkd/graph.hpp"

// Feature-matching losses between a teacher pyramid and a (refined) student
// pyramid. Every loss is a fused graph op with a hand-derived adjoint; all of
// them are exercised against finite differences in double precision.
//
// Conventions shared by all five losses:
//   * per-level terms are summed over levels, never averaged;
//   * rank-4 inputs are treated as a batch and the per-image value is
//     averaged over the batch, so magnitudes do not depend on batch size;
//   * norms are guarded with max(norm, 1e-8) and the KL ratio is guarded as
//     log((p + 1e-8) / (q + 1e-8)), which keeps the value exactly zero when
//     the two distributions coincide.

namespace adkd {

template <typename T>
inline constexpr T kLossEps = T(1e-8);

namespace loss_detail {

// Cosine-distance sum over vector pairs laid out with stride `stride` and
// `count` elements, starting at t/s. Returns 1 - cos with guarded norms.
template <typename T>
T cosine_distance(const T* t, const T* s, std::size_t count, std::size_t stride) {
  T dot = 0, tt = 0, ss = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const T tv = t[i * stride], sv = s[i * stride];
    dot += tv * sv;
    tt += tv * tv;
    ss += sv * sv;
  }
  const T nt = std::sqrt(tt), ns = std::sqrt(ss);
  const T ntg = nt > kLossEps<T> ? nt : kLossEps<T>;
  const T nsg = ns > kLossEps<T> ? ns : kLossEps<T>;
  return T(1) - dot / (ntg * nsg);
}

// Accumulates d(1 - cos)/dt and /ds for one vector pair, scaled by coef.
template <typename T>
void cosine_distance_grad(const T* t, const T* s, std::size_t count, std::size_t stride,
                          T coef, T* gt, T* gs) {
  T dot = 0, tt = 0, ss = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const T tv = t[i * stride], sv = s[i * stride];
    dot += tv * sv;
    tt += tv * tv;
    ss += sv * sv;
  }
  const T nt = std::sqrt(tt), ns = std::sqrt(ss);
  const T ntg = nt > kLossEps<T> ? nt : kLossEps<T>;
  const T nsg = ns > kLossEps<T> ? ns : kLossEps<T>;
  const T inv = T(1) / (ntg * nsg);
  for (std::size_t i = 0; i < count; ++i) {
    const T tv = t[i * stride], sv = s[i * stride];
    if (gs) {
      T d = -tv * inv;
      if (ns > kLossEps<T>) d += dot * sv / (ntg * ns * ns * ns);
      gs[i * stride] += coef * d;
    }
    if (gt) {
      T d = -sv * inv;
      if (nt > kLossEps<T>) d += dot * tv / (nsg * nt * nt * nt);
      gt[i * stride] += coef * d;
    }
  }
}

// Softmax of a strided slice into `out` (dense), numerically stabilized.
template <typename T>
void strided_softmax(const T* x, std::size_t count, std::size_t stride, T* out) {
  T mx = x[0];
  for (std::size_t i = 1; i < count; ++i) mx = std::max(mx, x[i * stride]);
  T sum = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const T e = std::exp(x[i * stride] - mx);
    out[i] = e;
    sum += e;
  }
  for (std::size_t i = 0; i < count; ++i) out[i] /= sum;
}

template <typename T>
T kl_guarded(const T* p, const T* q, std::size_t count) {
  T acc = 0;
  for (std::size_t i = 0; i < count; ++i) {
    acc += p[i] * std::log((p[i] + kLossEps<T>) / (q[i] + kLossEps<T>));
  }
  return acc;
}

// Gradients of the guarded KL w.r.t. the softmax *inputs* (teacher logits t,
// student logits s), given the softmax outputs p and q, scaled by coef.
template <typename T>
void kl_guarded_grad(const T* p, const T* q, std::size_t count, T coef,
                     T* gt, std::size_t gt_stride, T* gs, std::size_t gs_stride) {
  if (gs) {
    T s1 = 0;
    for (std::size_t i = 0; i < count; ++i) s1 += p[i] * q[i] / (q[i] + kLossEps<T>);
    for (std::size_t i = 0; i < count; ++i) {
      gs[i * gs_stride] += coef * (q[i] * s1 - p[i] * q[i] / (q[i] + kLossEps<T>));
    }
  }
  if (gt) {
    T s2 = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const T a = std::log((p[i] + kLossEps<T>) / (q[i] + kLossEps<T>)) + p[i] / (p[i] + kLossEps<T>);
      s2 += p[i] * a;
    }
    for (std::size_t i = 0; i < count; ++i) {
      const T a = std::log((p[i] + kLossEps<T>) / (q[i] + kLossEps<T>)) + p[i] / (p[i] + kLossEps<T>);
      gt[i * gt_stride] += coef * p[i] * (a - s2);
    }
  }
}

template <typename T>
MapDims matched_dims(const Graph<T>& g, NodeRef t, NodeRef s, const char* what) {
  const MapDims dt = map_dims(g.value(t), what);
  require_same_shape(g.value(t), g.value(s), what);
  return dt;
}

}  // namespace loss_detail

// --- per-level losses -------------------------------------------------------

// Mean over pixels of the cosine distance between per-pixel channel vectors.
template <typename T>
NodeRef cd_channel_level(Graph<T>& g, NodeRef t, NodeRef s) {
  const MapDims d = loss_detail::matched_dims(g, t, s, "cd_channel");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t img = static_cast<std::size_t>(d.c) * hw;
  const T scale = T(1) / (static_cast<T>(d.n) * static_cast<T>(hw));
  const T* tp = g.value(t).data();
  const T* sp = g.value(s).data();
  T acc = 0;
  for (int n = 0; n < d.n; ++n) {
    for (std::size_t pix = 0; pix < hw; ++pix) {
      acc += loss_detail::cosine_distance(tp + n * img + pix, sp + n * img + pix,
                                          static_cast<std::size_t>(d.c), hw);
    }
  }
  return g.add_node(Tensor<T>::scalar(acc * scale), {t, s}, [t, s, d, hw, img, scale](Graph<T>& gg, NodeRef self) {
    const T coef = gg.grad(self)[0] * scale;
    const T* tp2 = gg.value(t).data();
    const T* sp2 = gg.value(s).data();
    Tensor<T>* gt = gg.grad_accum(t);
    Tensor<T>* gs = gg.grad_accum(s);
    for (int n = 0; n < d.n; ++n) {
      for (std::size_t pix = 0; pix < hw; ++pix) {
        loss_detail::cosine_distance_grad(tp2 + n * img + pix, sp2 + n * img + pix,
                                          static_cast<std::size_t>(d.c), hw, coef,
                                          gt ? gt->data() + n * img + pix : nullptr,
                                          gs ? gs->data() + n * img + pix : nullptr);
      }
    }
  });
}

// Mean over channels of the cosine distance between flattened spatial maps.
template <typename T>
NodeRef cd_spatial_level(Graph<T>& g, NodeRef t, NodeRef s) {
  const MapDims d = loss_detail::matched_dims(g, t, s, "cd_spatial");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const T scale = T(1) / (static_cast<T>(d.n) * static_cast<T>(d.c));
  const T* tp = g.value(t).data();
  const T* sp = g.value(s).data();
  T acc = 0;
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(d.n) * d.c; ++plane) {
    acc += loss_detail::cosine_distance(tp + plane * hw, sp + plane * hw, hw, 1);
  }
  return g.add_node(Tensor<T>::scalar(acc * scale), {t, s}, [t, s, d, hw, scale](Graph<T>& gg, NodeRef self) {
    const T coef = gg.grad(self)[0] * scale;
    const T* tp2 = gg.value(t).data();
    const T* sp2 = gg.value(s).data();
    Tensor<T>* gt = gg.grad_accum(t);
    Tensor<T>* gs = gg.grad_accum(s);
    for (std::size_t plane = 0; plane < static_cast<std::size_t>(d.n) * d.c; ++plane) {
      loss_detail::cosine_distance_grad(tp2 + plane * hw, sp2 + plane * hw, hw,
                                        static_cast<std::size_t>(1), coef,
                                        gt ? gt->data() + plane * hw : nullptr,
                                        gs ? gs->data() + plane * hw : nullptr);
    }
  });
}

// Sum over pixels of KL(softmax_channels(t) || softmax_channels(s)).
template <typename T>
NodeRef kld_channel_level(Graph<T>& g, NodeRef t, NodeRef s) {
  const MapDims d = loss_detail::matched_dims(g, t, s, "kld_channel");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t img = static_cast<std::size_t>(d.c) * hw;
  const std::size_t c = static_cast<std::size_t>(d.c);
  const T scale = T(1) / static_cast<T>(d.n);
  const T* tp = g.value(t).data();
  const T* sp = g.value(s).data();
  std::vector<T> p(c), q(c);
  T acc = 0;
  for (int n = 0; n < d.n; ++n) {
    for (std::size_t pix = 0; pix < hw; ++pix) {
      loss_detail::strided_softmax(tp + n * img + pix, c, hw, p.data());
      loss_detail::strided_softmax(sp + n * img + pix, c, hw, q.data());
      acc += loss_detail::kl_guarded(p.data(), q.data(), c);
    }
  }
  return g.add_node(Tensor<T>::scalar(acc * scale), {t, s}, [t, s, d, hw, img, c, scale](Graph<T>& gg, NodeRef self) {
    const T coef = gg.grad(self)[0] * scale;
    const T* tp2 = gg.value(t).data();
    const T* sp2 = gg.value(s).data();
    Tensor<T>* gt = gg.grad_accum(t);
    Tensor<T>* gs = gg.grad_accum(s);
    std::vector<T> p(c), q(c);
    for (int n = 0; n < d.n; ++n) {
      for (std::size_t pix = 0; pix < hw; ++pix) {
        loss_detail::strided_softmax(tp2 + n * img + pix, c, hw, p.data());
        loss_detail::strided_softmax(sp2 + n * img + pix, c, hw, q.data());
        loss_detail::kl_guarded_grad(p.data(), q.data(), c, coef,
                                     gt ? gt->data() + n * img + pix : nullptr, hw,
                                     gs ? gs->data() + n * img + pix : nullptr, hw);
      }
    }
  });
}

// Sum over channels of KL(softmax_pixels(t) || softmax_pixels(s)).
template <typename T>
NodeRef kld_spatial_level(Graph<T>& g, NodeRef t, NodeRef s) {
  const MapDims d = loss_detail::matched_dims(g, t, s, "kld_spatial");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const T scale = T(1) / static_cast<T>(d.n);
  const T* tp = g.value(t).data();
  const T* sp = g.value(s).data();
  std::vector<T> p(hw), q(hw);
  T acc = 0;
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(d.n) * d.c; ++plane) {
    loss_detail::strided_softmax(tp + plane * hw, hw, static_cast<std::size_t>(1), p.data());
    loss_detail::strided_softmax(sp + plane * hw, hw, static_cast<std::size_t>(1), q.data());
    acc += loss_detail::kl_guarded(p.data(), q.data(), hw);
  }
  return g.add_node(Tensor<T>::scalar(acc * scale), {t, s}, [t, s, d, hw, scale](Graph<T>& gg, NodeRef self) {
    const T coef = gg.grad(self)[0] * scale;
    const T* tp2 = gg.value(t).data();
    const T* sp2 = gg.value(s).data();
    Tensor<T>* gt = gg.grad_accum(t);
    Tensor<T>* gs = gg.grad_accum(s);
    std::vector<T> p(hw), q(hw);
    for (std::size_t plane = 0; plane < static_cast<std::size_t>(d.n) * d.c; ++plane) {
      loss_detail::strided_softmax(tp2 + plane * hw, hw, static_cast<std::size_t>(1), p.data());
      loss_detail::strided_softmax(sp2 + plane * hw, hw, static_cast<std::size_t>(1), q.data());
      loss_detail::kl_guarded_grad(p.data(), q.data(), hw, coef,
                                   gt ? gt->data() + plane * hw : nullptr, static_cast<std::size_t>(1),
                                   gs ? gs->data() + plane * hw : nullptr, static_cast<std::size_t>(1));
    }
  });
}

// Half squared error between per-pixel channel-normalized vectors, averaged
// over pixels.
template <typename T>
NodeRef mse_level(Graph<T>& g, NodeRef t, NodeRef s) {
  const MapDims d = loss_detail::matched_dims(g, t, s, "mse");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t img = static_cast<std::size_t>(d.c) * hw;
  const std::size_t c = static_cast<std::size_t>(d.c);
  const T scale = T(1) / (static_cast<T>(d.n) * static_cast<T>(hw));
  const T* tp = g.value(t).data();
  const T* sp = g.value(s).data();
  T acc = 0;
  for (int n = 0; n < d.n; ++n) {
    for (std::size_t pix = 0; pix < hw; ++pix) {
      const T* tv = tp + n * img + pix;
      const T* sv = sp + n * img + pix;
      T tt = 0, ss = 0;
      for (std::size_t i = 0; i < c; ++i) {
        tt += tv[i * hw] * tv[i * hw];
        ss += sv[i * hw] * sv[i * hw];
      }
      const T nt = std::max(std::sqrt(tt), kLossEps<T>);
      const T ns = std::max(std::sqrt(ss), kLossEps<T>);
      T e = 0;
      for (std::size_t i = 0; i < c; ++i) {
        const T dlt = tv[i * hw] / nt - sv[i * hw] / ns;
        e += dlt * dlt;
      }
      acc += e / T(2);
    }
  }
  return g.add_node(Tensor<T>::scalar(acc * scale), {t, s}, [t, s, d, hw, img, c, scale](Graph<T>& gg, NodeRef self) {
    const T coef = gg.grad(self)[0] * scale;
    const T* tp2 = gg.value(t).data();
    const T* sp2 = gg.value(s).data();
    Tensor<T>* gt = gg.grad_accum(t);
    Tensor<T>* gs = gg.grad_accum(s);
    std::vector<T> th(c), sh(c);
    for (int n = 0; n < d.n; ++n) {
      for (std::size_t pix = 0; pix < hw; ++pix) {
        const T* tv = tp2 + n * img + pix;
        const T* sv = sp2 + n * img + pix;
        T tt = 0, ss = 0;
        for (std::size_t i = 0; i < c; ++i) {
          tt += tv[i * hw] * tv[i * hw];
          ss += sv[i * hw] * sv[i * hw];
        }
        const T nt = std::sqrt(tt), ns = std::sqrt(ss);
        const T ntg = nt > kLossEps<T> ? nt : kLossEps<T>;
        const T nsg = ns > kLossEps<T> ? ns : kLossEps<T>;
        for (std::size_t i = 0; i < c; ++i) {
          th[i] = tv[i * hw] / ntg;
          sh[i] = sv[i * hw] / nsg;
        }
        if (gs) {
          // d(1/2 |th - sh|^2)/ds through the normalization of s.
          T dot = 0;
          for (std::size_t i = 0; i < c; ++i) dot += sh[i] * (sh[i] - th[i]);
          T* q = gs->data() + n * img + pix;
          for (std::size_t i = 0; i < c; ++i) {
            const T ghat = sh[i] - th[i];
            const T v = (ns > kLossEps<T>) ? (ghat - sh[i] * dot) / ns : ghat / kLossEps<T>;
            q[i * hw] += coef * v;
          }
        }
        if (gt) {
          T dot = 0;
          for (std::size_t i = 0; i < c; ++i) dot += th[i] * (th[i] - sh[i]);
          T* q = gt->data() + n * img + pix;
          for (std::size_t i = 0; i < c; ++i) {
            const T ghat = th[i] - sh[i];
            const T v = (nt > kLossEps<T>) ? (ghat - th[i] * dot) / nt : ghat / kLossEps<T>;
            q[i * hw] += coef * v;
          }
        }
      }
    }
  });
}

// --- pyramid-level wrappers ---------------------------------------------------

namespace loss_detail {

template <typename T, typename LevelFn>
NodeRef sum_levels(Graph<T>& g, const std::vector<NodeRef>& t, const std::vector<NodeRef>& s,
                   LevelFn&& level) {
  if (t.empty() || t.size() != s.size()) {
    throw ContractError("loss: teacher and student pyramids must have the same, non-zero level count");
  }
  NodeRef total = level(g, t[0], s[0]);
  for (std::size_t k = 1; k < t.size(); ++k) total = g.add(total, level(g, t[k], s[k]));
  return total;
}

}  // namespace loss_detail

template <typename T>
NodeRef cd_channel(Graph<T>& g, const std::vector<NodeRef>& t, const std::vector<NodeRef>& s) {
  return loss_detail::sum_levels(g, t, s, [](Graph<T>& gg, NodeRef a, NodeRef b) {
    return cd_channel_level(gg, a, b);
  });
}

template <typename T>
NodeRef cd_spatial(Graph<T>& g, const std::vector<NodeRef>& t, const std::vector<NodeRef>& s) {
  return loss_detail::sum_levels(g, t, s, [](Graph<T>& gg, NodeRef a, NodeRef b) {
    return cd_spatial_level(gg, a, b);
  });
}

template <typename T>
NodeRef kld_channel(Graph<T>& g, const std::vector<NodeRef>& t, const std::vector<NodeRef>& s) {
  return loss_detail::sum_levels(g, t, s, [](Graph<T>& gg, NodeRef a, NodeRef b) {
    return kld_channel_level(gg, a, b);
  });
}

template <typename T>
NodeRef kld_spatial(Graph<T>& g, const std::vector<NodeRef>& t, const std::vector<NodeRef>& s) {
  return loss_detail::sum_levels(g, t, s, [](Graph<T>& gg, NodeRef a, NodeRef b) {
    return kld_spatial_level(gg, a, b);
  });
}

template <typename T>
NodeRef mse_loss(Graph<T>& g, const std::vector<NodeRef>& t, const std::vector<NodeRef>& s) {
  return loss_detail::sum_levels(g, t, s, [](Graph<T>& gg, NodeRef a, NodeRef b) {
    return mse_level(gg, a, b);
  });
}

// --- configurable combination -------------------------------------------------

enum class LossMetric { mse, cd, kld };
enum class LossDim { channel, spatial };

struct LossTerm {
  LossMetric metric;
  LossDim dim;
  double weight;
};

// Weighted sum of feature-matching terms. Text form (config files and
// checkpoint echoes): "<METRIC>:<dimension>:<weight>", e.g. "CD:channel:1".
// The MSE metric normalizes over channels by definition, so its dimension
// token is accepted but does not change the computation.
struct LossSpec {
  std::vector<LossTerm> terms;

  static LossSpec headline() {
    return LossSpec{{{LossMetric::cd, LossDim::channel, 1.0},
                     {LossMetric::kld, LossDim::spatial, 0.5}}};
  }

  static LossSpec mse_only() { return LossSpec{{{LossMetric::mse, LossDim::channel, 1.0}}}; }

  static LossTerm parse_term(const std::string& text);
  static std::string term_text(const LossTerm& t);
};

inline LossTerm LossSpec::parse_term(const std::string& text) {
  const auto bad = [&](const char* why) {
    throw ConfigError("loss term \"" + text + "\": " + why + " (expected <METRIC>:<dimension>:<weight>)");
  };
  const std::size_t p1 = text.find(':');
  if (p1 == std::string::npos) bad("missing ':'");
  const std::size_t p2 = text.find(':', p1 + 1);
  if (p2 == std::string::npos) bad("missing second ':'");
  std::string metric = text.substr(0, p1);
  std::string dim = text.substr(p1 + 1, p2 - p1 - 1);
  const std::string weight = text.substr(p2 + 1);
  for (char& ch : metric) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  for (char& ch : dim) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));

  LossTerm term{};
  if (metric == "mse") term.metric = LossMetric::mse;
  else if (metric == "cd") term.metric = LossMetric::cd;
  else if (metric == "kld") term.metric = LossMetric::kld;
  else bad("unknown metric (use MSE, CD or KLD)");

  if (dim == "channel") term.dim = LossDim::channel;
  else if (dim == "spatial") term.dim = LossDim::spatial;
  else bad("unknown dimension (use channel or spatial)");

  try {
    std::size_t used = 0;
    term.weight = std::stod(weight, &used);
    if (used != weight.size() || weight.empty()) bad("weight is not a number");
  } catch (const std::logic_error&) {
    bad("weight is not a number");
  }
  if (!std::isfinite(term.weight)) bad("weight must be finite");
  return term;
}

inline std::string LossSpec::term_text(const LossTerm& t) {
  std::string out;
  switch (t.metric) {
    case LossMetric::mse: out = "MSE"; break;
    case LossMetric::cd: out = "CD"; break;
    case LossMetric::kld: out = "KLD"; break;
  }
  out += t.dim == LossDim::channel ? ":channel:" : ":spatial:";
  // Weights are round-trippable: shortest decimal form via %.17g trimmed is
  // overkill here; config echoes re-parse with stod, so %g at full precision.
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", t.weight);
  // Trim to the shortest representation that parses back exactly.
  for (int prec = 1; prec <= 17; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, t.weight);
    if (std::stod(probe) == t.weight) {
      out += probe;
      return out;
    }
  }
  out += buf;
  return out;
}

template <typename T>
NodeRef total_loss(Graph<T>& g, const std::vector<NodeRef>& t, const std::vector<NodeRef>& s,
                   const LossSpec& spec) {
  if (spec.terms.empty()) throw ConfigError("loss spec has no terms");
  std::vector<NodeRef> parts;
  std::vector<T> weights;
  for (const LossTerm& term : spec.terms) {
    NodeRef part;
    switch (term.metric) {
      case LossMetric::mse: part = mse_loss(g, t, s); break;
      case LossMetric::cd:
        part = term.dim == LossDim::channel ? cd_channel(g, t, s) : cd_spatial(g, t, s);
        break;
      case LossMetric::kld:
        part = term.dim == LossDim::channel ? kld_channel(g, t, s) : kld_spatial(g, t, s);
        break;
    }
    parts.push_back(part);
    weights.push_back(static_cast<T>(term.weight));
  }
  return g.weighted_sum(parts, weights);
}

// --- single-shot evaluations (tests, bindings) ---------------------------------

namespace loss_detail {

template <typename T, typename Builder>
T eval_pyramid(const std::vector<Tensor<T>>& t, const std::vector<Tensor<T>>& s, Builder&& build) {
  Graph<T> g;
  std::vector<NodeRef> tn, sn;
  for (const auto& x : t) tn.push_back(g.input(x));
  for (const auto& x : s) sn.push_back(g.input(x));
  return g.value(build(g, tn, sn))[0];
}

}  // namespace loss_detail

template <typename T>
T cd_channel_value(const std::vector<Tensor<T>>& t, const std::vector<Tensor<T>>& s) {
  return loss_detail::eval_pyramid(t, s, [](Graph<T>& g, auto& a, auto& b) { return cd_channel(g, a, b); });
}

template <typename T>
T cd_spatial_value(const std::vector<Tensor<T>>& t, const std::vector<Tensor<T>>& s) {
  return loss_detail::eval_pyramid(t, s, [](Graph<T>& g, auto& a, auto& b) { return cd_spatial(g, a, b); });
}

template <typename T>
T kld_channel_value(const std::vector<Tensor<T>>& t, const std::vector<Tensor<T>>& s) {
  return loss_detail::eval_pyramid(t, s, [](Graph<T>& g, auto& a, auto& b) { return kld_channel(g, a, b); });
}

template <typename T>
T kld_spatial_value(const std::vector<Tensor<T>>& t, const std::vector<Tensor<T>>& s) {
  return loss_detail::eval_pyramid(t, s, [](Graph<T>& g, auto& a, auto& b) { return kld_spatial(g, a, b); });
}

template <typename T>
T mse_loss_value(const std::vector<Tensor<T>>& t, const std::vector<Tensor<T>>& s) {
  return loss_detail::eval_pyramid(t, s, [](Graph<T>& g, auto& a, auto& b) { return mse_loss(g, a, b); });
}

template <typename T>
T total_loss_value(const std::vector<Tensor<T>>& t, const std::vector<Tensor<T>>& s,
                   const LossSpec& spec) {
  return loss_detail::eval_pyramid(t, s, [&](Graph<T>& g, auto& a, auto& b) {
    return total_loss(g, a, b, spec);
  });
}

}  // namespace adkd
