#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adkd/ops.hpp"
#include "adkd/tensor.hpp"

// Define-by-run reverse-mode autodiff. A Graph is a tape of recorded
// operations, rebuilt for every optimizer step. Leaves are either constants
// (no gradient; frozen networks enter this way) or named parameters.
// backward() walks the tape once in reverse creation order, which is already
// a topological order, and accumulates adjoints; parameters never reached by
// the loss report zero gradients.

namespace adkd {

struct NodeRef {
  int index = -1;
  bool valid() const { return index >= 0; }
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeRef)>;

  // --- leaves -------------------------------------------------------------

  NodeRef input(Tensor<T> value) {
    return push(std::move(value), {}, nullptr, false, {});
  }

  NodeRef param(std::string name, Tensor<T> value) {
    return push(std::move(value), {}, nullptr, true, std::move(name));
  }

  // --- access -------------------------------------------------------------

  const Tensor<T>& value(NodeRef n) const { return node(n).value; }

  // Gradient of a node after backward(); zero tensor if it was never reached.
  const Tensor<T>& grad(NodeRef n) const {
    const Node& nd = node(n);
    if (nd.grad.numel() == 0) {
      const_cast<Node&>(nd).grad = Tensor<T>(nd.value.shape());
    }
    return nd.grad;
  }

  bool needs_grad(NodeRef n) const { return node(n).requires_grad; }

  // Accumulation buffer for an input's adjoint; null when the input does not
  // require a gradient so backward functions can skip the work.
  Tensor<T>* grad_accum(NodeRef n) {
    Node& nd = node(n);
    if (!nd.requires_grad) return nullptr;
    if (nd.grad.numel() == 0) nd.grad = Tensor<T>(nd.value.shape());
    return &nd.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Recording hook for composite ops (losses, attention): value, inputs and
  // the adjoint callback. requires_grad is inherited from the inputs.
  NodeRef add_node(Tensor<T> value, std::vector<NodeRef> inputs, BackwardFn backward) {
    bool req = false;
    for (NodeRef r : inputs) req = req || node(r).requires_grad;
    return push(std::move(value), std::move(inputs), req ? std::move(backward) : nullptr, req, {});
  }

  // --- backward pass --------------------------------------------------------

  void backward(NodeRef loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1) {
      throw ContractError("backward: loss node must be scalar, got shape " +
                          shape_str(ln.value.shape()));
    }
    if (ln.grad.numel() == 0) ln.grad = Tensor<T>(ln.value.shape());
    ln.grad[0] = T(1);
    for (int i = loss.index; i >= 0; --i) {
      Node& nd = nodes_[static_cast<std::size_t>(i)];
      if (!nd.requires_grad || !nd.backward) continue;
      if (nd.grad.numel() == 0) continue;  // not on any path to the loss
      nd.backward(*this, NodeRef{i});
    }
  }

  // Gradients for every named parameter in the tape (zeros if unreachable).
  std::map<std::string, Tensor<T>> param_grads() const {
    std::map<std::string, Tensor<T>> out;
    for (const Node& nd : nodes_) {
      if (!nd.is_param) continue;
      if (nd.grad.numel() == 0) {
        out.emplace(nd.param_name, Tensor<T>(nd.value.shape()));
      } else {
        out.emplace(nd.param_name, nd.grad);
      }
    }
    return out;
  }

  // --- recorded operations -------------------------------------------------

  NodeRef conv2d(NodeRef x, NodeRef w, NodeRef b, int stride, int padding) {
    Tensor<T> y = ops::conv2d(value(x), value(w), value(b), stride, padding);
    return add_node(std::move(y), {x, w, b}, [x, w, b, stride, padding](Graph& g, NodeRef self) {
      ops::conv2d_backward(g.value(x), g.value(w), g.grad(self), stride, padding,
                           g.grad_accum(x), g.grad_accum(w), g.grad_accum(b));
    });
  }

  NodeRef relu(NodeRef x) {
    return add_node(ops::relu(value(x)), {x}, [x](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::relu_backward(g.value(x), g.grad(self), *gx);
    });
  }

  NodeRef sigmoid(NodeRef x) {
    return add_node(ops::sigmoid(value(x)), {x}, [x](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::sigmoid_backward(g.value(self), g.grad(self), *gx);
    });
  }

  NodeRef softmax(NodeRef x, std::vector<int> axes) {
    Tensor<T> y = ops::softmax(value(x), axes);
    return add_node(std::move(y), {x}, [x, axes](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::softmax_backward(g.value(self), g.grad(self), axes, *gx);
    });
  }

  NodeRef maxpool2d(NodeRef x, int window, int stride, int padding = 0) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor<T> y = ops::maxpool2d(value(x), window, stride, padding, argmax.get());
    return add_node(std::move(y), {x}, [x, argmax](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::maxpool2d_backward(*argmax, g.grad(self), *gx);
    });
  }

  NodeRef avgpool2d(NodeRef x, int window, int stride, int padding = 0) {
    Tensor<T> y = ops::avgpool2d(value(x), window, stride, padding);
    auto shape = value(x).shape();
    return add_node(std::move(y), {x}, [x, shape, window, stride, padding](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) {
        ops::avgpool2d_backward(shape, window, stride, padding, g.grad(self), *gx);
      }
    });
  }

  NodeRef global_maxpool(NodeRef x) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor<T> y = ops::global_maxpool(value(x), argmax.get());
    return add_node(std::move(y), {x}, [x, argmax](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::global_maxpool_backward(*argmax, g.grad(self), *gx);
    });
  }

  NodeRef global_avgpool(NodeRef x) {
    Tensor<T> y = ops::global_avgpool(value(x));
    auto shape = value(x).shape();
    return add_node(std::move(y), {x}, [x, shape](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::global_avgpool_backward(shape, g.grad(self), *gx);
    });
  }

  NodeRef channel_maxpool(NodeRef x) {
    auto argmax = std::make_shared<std::vector<std::int64_t>>();
    Tensor<T> y = ops::channel_maxpool(value(x), argmax.get());
    return add_node(std::move(y), {x}, [x, argmax](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::channel_maxpool_backward(*argmax, g.grad(self), *gx);
    });
  }

  NodeRef channel_avgpool(NodeRef x) {
    Tensor<T> y = ops::channel_avgpool(value(x));
    auto shape = value(x).shape();
    return add_node(std::move(y), {x}, [x, shape](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::channel_avgpool_backward(shape, g.grad(self), *gx);
    });
  }

  NodeRef bilinear_upsample(NodeRef x, int out_h, int out_w) {
    Tensor<T> y = ops::bilinear_upsample(value(x), out_h, out_w);
    auto shape = value(x).shape();
    return add_node(std::move(y), {x}, [x, shape](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) ops::bilinear_resize_backward(shape, g.grad(self), *gx);
    });
  }

  NodeRef linear(NodeRef x, NodeRef w) {
    Tensor<T> y = ops::linear(value(x), value(w));
    return add_node(std::move(y), {x, w}, [x, w](Graph& g, NodeRef self) {
      ops::linear_backward(g.value(x), g.value(w), g.grad(self), g.grad_accum(x), g.grad_accum(w));
    });
  }

  NodeRef add(NodeRef a, NodeRef b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    require_same_shape(va, vb, "add");
    Tensor<T> y(va.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = va[i] + vb[i];
    return add_node(std::move(y), {a, b}, [a, b](Graph& g, NodeRef self) {
      const Tensor<T>& gy = g.grad(self);
      if (auto* ga = g.grad_accum(a)) {
        for (std::size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i];
      }
      if (auto* gb = g.grad_accum(b)) {
        for (std::size_t i = 0; i < gy.numel(); ++i) (*gb)[i] += gy[i];
      }
    });
  }

  NodeRef mul(NodeRef a, NodeRef b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    require_same_shape(va, vb, "mul");
    Tensor<T> y(va.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = va[i] * vb[i];
    return add_node(std::move(y), {a, b}, [a, b](Graph& g, NodeRef self) {
      const Tensor<T>& gy = g.grad(self);
      if (auto* ga = g.grad_accum(a)) {
        const Tensor<T>& vb2 = g.value(b);
        for (std::size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i] * vb2[i];
      }
      if (auto* gb = g.grad_accum(b)) {
        const Tensor<T>& va2 = g.value(a);
        for (std::size_t i = 0; i < gy.numel(); ++i) (*gb)[i] += gy[i] * va2[i];
      }
    });
  }

  NodeRef concat_channel(NodeRef a, NodeRef b) {
    Tensor<T> y = ops::concat_channel(value(a), value(b));
    const int ca = map_dims(value(a), "concat_channel").c;
    return add_node(std::move(y), {a, b}, [a, b, ca](Graph& g, NodeRef self) {
      ops::concat_channel_backward(g.grad(self), ca, g.grad_accum(a), g.grad_accum(b));
    });
  }

  NodeRef channel_gate(NodeRef x, NodeRef gate) {
    Tensor<T> y = ops::channel_gate(value(x), value(gate));
    return add_node(std::move(y), {x, gate}, [x, gate](Graph& g, NodeRef self) {
      ops::channel_gate_backward(g.value(x), g.value(gate), g.grad(self),
                                 g.grad_accum(x), g.grad_accum(gate));
    });
  }

  NodeRef spatial_gate(NodeRef x, NodeRef gate) {
    Tensor<T> y = ops::spatial_gate(value(x), value(gate));
    return add_node(std::move(y), {x, gate}, [x, gate](Graph& g, NodeRef self) {
      ops::spatial_gate_backward(g.value(x), g.value(gate), g.grad(self),
                                 g.grad_accum(x), g.grad_accum(gate));
    });
  }

  NodeRef reshape(NodeRef x, std::vector<int> shape) {
    const Tensor<T>& vx = value(x);
    Tensor<T> y(shape, std::vector<T>(vx.data(), vx.data() + vx.numel()));
    auto old_shape = vx.shape();
    return add_node(std::move(y), {x}, [x, old_shape](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) {
        const Tensor<T>& gy = g.grad(self);
        for (std::size_t i = 0; i < gy.numel(); ++i) (*gx)[i] += gy[i];
      }
    });
  }

  // Batch normalization over a recorded activation. In training mode the
  // batch statistics are computed here and, when running buffers are given,
  // folded into them with the usual exponential moving average.
  NodeRef batchnorm(NodeRef x, NodeRef gamma, NodeRef beta,
                    const std::vector<T>& running_mean, const std::vector<T>& running_var,
                    bool training, T eps = T(1e-5), T momentum = T(0.1),
                    std::vector<T>* update_mean = nullptr, std::vector<T>* update_var = nullptr) {
    auto mean = std::make_shared<std::vector<T>>();
    auto var = std::make_shared<std::vector<T>>();
    if (training) {
      ops::batchnorm_stats(value(x), *mean, *var);
      if (update_mean && update_var) {
        const MapDims d = map_dims(value(x), "batchnorm");
        const T count = static_cast<T>(d.n) * static_cast<T>(d.h) * static_cast<T>(d.w);
        // Running variance uses the unbiased estimate when possible.
        const T corr = count > T(1) ? count / (count - T(1)) : T(1);
        for (std::size_t c = 0; c < mean->size(); ++c) {
          (*update_mean)[c] = (T(1) - momentum) * (*update_mean)[c] + momentum * (*mean)[c];
          (*update_var)[c] = (T(1) - momentum) * (*update_var)[c] + momentum * (*var)[c] * corr;
        }
      }
    } else {
      *mean = running_mean;
      *var = running_var;
    }
    Tensor<T> y = ops::batchnorm_apply(value(x), value(gamma), value(beta), *mean, *var, eps);
    return add_node(std::move(y), {x, gamma, beta},
                    [x, gamma, beta, mean, var, eps, training](Graph& g, NodeRef self) {
                      ops::batchnorm_backward(g.value(x), g.value(gamma), *mean, *var, eps,
                                              training, g.grad(self), g.grad_accum(x),
                                              g.grad_accum(gamma), g.grad_accum(beta));
                    });
  }

  NodeRef sum_all(NodeRef x) {
    const Tensor<T>& vx = value(x);
    T acc = 0;
    for (std::size_t i = 0; i < vx.numel(); ++i) acc += vx[i];
    return add_node(Tensor<T>::scalar(acc), {x}, [x](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) {
        const T gv = g.grad(self)[0];
        for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += gv;
      }
    });
  }

  // Inner product with a constant tensor; used to scalarize op outputs in the
  // finite-difference harness.
  NodeRef inner(NodeRef x, Tensor<T> c) {
    const Tensor<T>& vx = value(x);
    require_same_shape(vx, c, "inner");
    T acc = 0;
    for (std::size_t i = 0; i < vx.numel(); ++i) acc += vx[i] * c[i];
    auto cp = std::make_shared<Tensor<T>>(std::move(c));
    return add_node(Tensor<T>::scalar(acc), {x}, [x, cp](Graph& g, NodeRef self) {
      if (auto* gx = g.grad_accum(x)) {
        const T gv = g.grad(self)[0];
        for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += gv * (*cp)[i];
      }
    });
  }

  // total = sum_i weights[i] * scalars[i]
  NodeRef weighted_sum(const std::vector<NodeRef>& scalars, const std::vector<T>& weights) {
    if (scalars.empty() || scalars.size() != weights.size()) {
      throw ContractError("weighted_sum: need matching, non-empty node and weight lists");
    }
    T acc = 0;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      const Tensor<T>& v = value(scalars[i]);
      if (v.numel() != 1) throw ContractError("weighted_sum: inputs must be scalars");
      acc += weights[i] * v[0];
    }
    auto ws = std::make_shared<std::vector<T>>(weights);
    auto ns = std::make_shared<std::vector<NodeRef>>(scalars);
    return add_node(Tensor<T>::scalar(acc), scalars, [ws, ns](Graph& g, NodeRef self) {
      const T gv = g.grad(self)[0];
      for (std::size_t i = 0; i < ns->size(); ++i) {
        if (auto* gi = g.grad_accum((*ns)[i])) (*gi)[0] += gv * (*ws)[i];
      }
    });
  }

 private:
  struct Node {
    Tensor<T> value;
    mutable Tensor<T> grad;  // lazily allocated
    bool requires_grad = false;
    bool is_param = false;
    std::string param_name;
    std::vector<NodeRef> inputs;
    BackwardFn backward;
  };

  NodeRef push(Tensor<T> value, std::vector<NodeRef> inputs, BackwardFn backward,
               bool requires_grad, std::string param_name) {
    Node nd;
    nd.value = std::move(value);
    nd.requires_grad = requires_grad;
    nd.is_param = !param_name.empty();
    nd.param_name = std::move(param_name);
    nd.inputs = std::move(inputs);
    nd.backward = std::move(backward);
    nodes_.push_back(std::move(nd));
    return NodeRef{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(NodeRef r) {
    if (!r.valid() || r.index >= static_cast<int>(nodes_.size())) {
      throw ContractError("invalid node reference");
    }
    return nodes_[static_cast<std::size_t>(r.index)];
  }

  const Node& node(NodeRef r) const {
    if (!r.valid() || r.index >= static_cast<int>(nodes_.size())) {
      throw ContractError("invalid node reference");
    }
    return nodes_[static_cast<std::size_t>(r.index)];
  }

  std::vector<Node> nodes_;
};

// Plain SGD without momentum or weight decay: p <- p - lr * g.
template <typename T>
void sgd_step(const std::vector<std::pair<std::string, Tensor<T>*>>& params,
              const std::map<std::string, Tensor<T>>& grads, T lr) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;  // unreachable parameter: gradient is zero
    if (!p->same_shape(it->second)) {
      throw DimensionError("sgd_step: gradient shape mismatch for '" + name + "'");
    }
    const Tensor<T>& g = it->second;
    for (std::size_t i = 0; i < p->numel(); ++i) (*p)[i] -= lr * g[i];
  }
}

}  // namespace adkd
