#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "adkd/tensor.hpp"

// Plain loop kernels plus their adjoints. Every *_backward accumulates (+=)
// into the provided gradient buffers so a value consumed by several ops sums
// its contributions; null buffer pointers skip that input. All kernels accept
// rank-3 (C,H,W) or rank-4 (N,C,H,W) maps and preserve the input rank.

namespace adkd::ops {

namespace detail {

inline int divceil(int a, int b) {
  // b > 0; integer division truncates toward zero, which is already ceil for
  // negative numerators.
  return (a > 0) ? (a + b - 1) / b : a / b;
}

inline int conv_out(int in, int k, int stride, int pad, const char* what) {
  const int span = in + 2 * pad - k;
  if (span < 0) {
    throw DimensionError(std::string(what) + ": window " + std::to_string(k) +
                         " exceeds padded input extent " + std::to_string(in + 2 * pad));
  }
  return span / stride + 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int padding) {
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
  if (w.rank() != 4) throw DimensionError("conv2d: weight must be rank 4, got " + shape_str(w.shape()));
  const MapDims d = map_dims(x, "conv2d");
  const int co = w.dim(0), ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (ci != d.c) {
    throw DimensionError("conv2d: weight expects " + std::to_string(ci) +
                         " input channels, input has " + std::to_string(d.c));
  }
  if (b.rank() != 1 || b.dim(0) != co) {
    throw DimensionError("conv2d: bias must be rank 1 with " + std::to_string(co) + " entries");
  }
  const int oh = detail::conv_out(d.h, kh, stride, padding, "conv2d");
  const int ow = detail::conv_out(d.w, kw, stride, padding, "conv2d");

  Tensor<T> y(d.batched ? std::vector<int>{d.n, co, oh, ow} : std::vector<int>{co, oh, ow});
  const T* xp = x.data();
  const T* wp = w.data();
  const T* bp = b.data();
  T* yp = y.data();

  const std::size_t x_img = static_cast<std::size_t>(d.c) * d.h * d.w;
  const std::size_t y_img = static_cast<std::size_t>(co) * oh * ow;
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < co; ++o) {
      T* yo = yp + n * y_img + static_cast<std::size_t>(o) * oh * ow;
      for (int i = 0; i < oh * ow; ++i) yo[i] = bp[o];
      for (int c = 0; c < ci; ++c) {
        const T* xc = xp + n * x_img + static_cast<std::size_t>(c) * d.h * d.w;
        for (int r = 0; r < kh; ++r) {
          for (int s = 0; s < kw; ++s) {
            const T wv = wp[((static_cast<std::size_t>(o) * ci + c) * kh + r) * kw + s];
            if (wv == T(0)) continue;
            const int ph_lo = std::max(0, detail::divceil(padding - r, stride));
            const int ph_hi = std::min(oh - 1, (d.h - 1 + padding - r) / stride);
            const int pw_lo = std::max(0, detail::divceil(padding - s, stride));
            const int pw_hi = std::min(ow - 1, (d.w - 1 + padding - s) / stride);
            for (int p = ph_lo; p <= ph_hi; ++p) {
              const int ih = p * stride + r - padding;
              const T* xrow = xc + static_cast<std::size_t>(ih) * d.w;
              T* yrow = yo + static_cast<std::size_t>(p) * ow;
              for (int q = pw_lo; q <= pw_hi; ++q) {
                yrow[q] += wv * xrow[q * stride + s - padding];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                     int stride, int padding,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const MapDims d = map_dims(x, "conv2d_backward");
  const int co = w.dim(0), ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const MapDims g = map_dims(gy, "conv2d_backward");
  const int oh = g.h, ow = g.w;

  const T* xp = x.data();
  const T* wp = w.data();
  const T* gyp = gy.data();
  const std::size_t x_img = static_cast<std::size_t>(d.c) * d.h * d.w;
  const std::size_t y_img = static_cast<std::size_t>(co) * oh * ow;

  if (gb) {
    T* gbp = gb->data();
    for (int n = 0; n < d.n; ++n) {
      for (int o = 0; o < co; ++o) {
        const T* gyo = gyp + n * y_img + static_cast<std::size_t>(o) * oh * ow;
        T acc = 0;
        for (int i = 0; i < oh * ow; ++i) acc += gyo[i];
        gbp[o] += acc;
      }
    }
  }

  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < co; ++o) {
      const T* gyo = gyp + n * y_img + static_cast<std::size_t>(o) * oh * ow;
      for (int c = 0; c < ci; ++c) {
        const T* xc = xp + n * x_img + static_cast<std::size_t>(c) * d.h * d.w;
        T* gxc = gx ? gx->data() + n * x_img + static_cast<std::size_t>(c) * d.h * d.w : nullptr;
        for (int r = 0; r < kh; ++r) {
          for (int s = 0; s < kw; ++s) {
            const std::size_t widx = ((static_cast<std::size_t>(o) * ci + c) * kh + r) * kw + s;
            const T wv = wp[widx];
            const int ph_lo = std::max(0, detail::divceil(padding - r, stride));
            const int ph_hi = std::min(oh - 1, (d.h - 1 + padding - r) / stride);
            const int pw_lo = std::max(0, detail::divceil(padding - s, stride));
            const int pw_hi = std::min(ow - 1, (d.w - 1 + padding - s) / stride);
            T wacc = 0;
            for (int p = ph_lo; p <= ph_hi; ++p) {
              const int ih = p * stride + r - padding;
              const T* xrow = xc + static_cast<std::size_t>(ih) * d.w;
              const T* gyrow = gyo + static_cast<std::size_t>(p) * ow;
              if (gxc) {
                T* gxrow = gxc + static_cast<std::size_t>(ih) * d.w;
                for (int q = pw_lo; q <= pw_hi; ++q) {
                  gxrow[q * stride + s - padding] += wv * gyrow[q];
                }
              }
              if (gw) {
                for (int q = pw_lo; q <= pw_hi; ++q) {
                  wacc += gyrow[q] * xrow[q * stride + s - padding];
                }
              }
            }
            if (gw) gw->data()[widx] += wacc;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (x[i] > T(0)) gx[i] += gy[i];
  }
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  return y;
}

template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx) {
  for (std::size_t i = 0; i < y.numel(); ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
}

// ---------------------------------------------------------------------------
// Softmax over an arbitrary subset of axes

namespace detail {

struct AxisSplit {
  std::vector<int> red_dims, keep_dims;
  std::vector<std::size_t> red_strides, keep_strides;
  std::size_t red_count = 1, keep_count = 1;
};

inline AxisSplit split_axes(const std::vector<int>& shape, const std::vector<int>& axes) {
  const int rank = static_cast<int>(shape.size());
  if (axes.empty()) throw DimensionError("softmax: axes must be non-empty");
  std::vector<bool> is_axis(static_cast<std::size_t>(rank), false);
  for (int a : axes) {
    if (a < 0 || a >= rank) {
      throw DimensionError("softmax: axis " + std::to_string(a) + " out of range for rank " +
                           std::to_string(rank));
    }
    if (is_axis[static_cast<std::size_t>(a)]) {
      throw DimensionError("softmax: duplicate axis " + std::to_string(a));
    }
    is_axis[static_cast<std::size_t>(a)] = true;
  }
  std::vector<std::size_t> strides(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * static_cast<std::size_t>(shape[i + 1]);
  }
  AxisSplit s;
  for (int i = 0; i < rank; ++i) {
    if (is_axis[static_cast<std::size_t>(i)]) {
      s.red_dims.push_back(shape[i]);
      s.red_strides.push_back(strides[i]);
      s.red_count *= static_cast<std::size_t>(shape[i]);
    } else {
      s.keep_dims.push_back(shape[i]);
      s.keep_strides.push_back(strides[i]);
      s.keep_count *= static_cast<std::size_t>(shape[i]);
    }
  }
  return s;
}

// Offset of the k-th position in a mixed-radix enumeration of `dims`.
inline std::size_t mixed_offset(std::size_t k, const std::vector<int>& dims,
                                const std::vector<std::size_t>& strides) {
  std::size_t off = 0;
  for (int i = static_cast<int>(dims.size()) - 1; i >= 0; --i) {
    const std::size_t d = static_cast<std::size_t>(dims[static_cast<std::size_t>(i)]);
    off += (k % d) * strides[static_cast<std::size_t>(i)];
    k /= d;
  }
  return off;
}

}  // namespace detail

// Stabilized softmax over `axes`: the max over the reduced slice is subtracted
// before exponentiation.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, const std::vector<int>& axes) {
  const detail::AxisSplit s = detail::split_axes(x.shape(), axes);
  Tensor<T> y(x.shape());
  const T* xp = x.data();
  T* yp = y.data();
  for (std::size_t k = 0; k < s.keep_count; ++k) {
    const std::size_t base = detail::mixed_offset(k, s.keep_dims, s.keep_strides);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t r = 0; r < s.red_count; ++r) {
      const T v = xp[base + detail::mixed_offset(r, s.red_dims, s.red_strides)];
      if (v > mx) mx = v;
    }
    T sum = 0;
    for (std::size_t r = 0; r < s.red_count; ++r) {
      const std::size_t off = base + detail::mixed_offset(r, s.red_dims, s.red_strides);
      const T e = std::exp(xp[off] - mx);
      yp[off] = e;
      sum += e;
    }
    for (std::size_t r = 0; r < s.red_count; ++r) {
      const std::size_t off = base + detail::mixed_offset(r, s.red_dims, s.red_strides);
      yp[off] /= sum;
    }
  }
  return y;
}

template <typename T>
void softmax_backward(const Tensor<T>& y, const Tensor<T>& gy, const std::vector<int>& axes,
                      Tensor<T>& gx) {
  const detail::AxisSplit s = detail::split_axes(y.shape(), axes);
  const T* yp = y.data();
  const T* gp = gy.data();
  for (std::size_t k = 0; k < s.keep_count; ++k) {
    const std::size_t base = detail::mixed_offset(k, s.keep_dims, s.keep_strides);
    T dot = 0;
    for (std::size_t r = 0; r < s.red_count; ++r) {
      const std::size_t off = base + detail::mixed_offset(r, s.red_dims, s.red_strides);
      dot += gp[off] * yp[off];
    }
    for (std::size_t r = 0; r < s.red_count; ++r) {
      const std::size_t off = base + detail::mixed_offset(r, s.red_dims, s.red_strides);
      gx[off] += yp[off] * (gp[off] - dot);
    }
  }
}

// ---------------------------------------------------------------------------
// Spatial pooling. Max pooling pads with -inf (padded cells never win);
// average pooling pads with zeros and always divides by window*window.

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int window, int stride, int padding,
                    std::vector<std::int64_t>* argmax) {
  if (window < 1 || stride < 1) throw DimensionError("maxpool2d: window and stride must be >= 1");
  if (padding < 0 || padding >= window) {
    throw DimensionError("maxpool2d: padding must satisfy 0 <= padding < window");
  }
  const MapDims d = map_dims(x, "maxpool2d");
  const int oh = detail::conv_out(d.h, window, stride, padding, "maxpool2d");
  const int ow = detail::conv_out(d.w, window, stride, padding, "maxpool2d");
  Tensor<T> y(d.batched ? std::vector<int>{d.n, d.c, oh, ow} : std::vector<int>{d.c, oh, ow});
  if (argmax) argmax->assign(y.numel(), -1);

  const T* xp = x.data();
  T* yp = y.data();
  std::size_t yi = 0;
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const std::size_t plane = (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
      for (int p = 0; p < oh; ++p) {
        for (int q = 0; q < ow; ++q, ++yi) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (int r = 0; r < window; ++r) {
            const int ih = p * stride + r - padding;
            if (ih < 0 || ih >= d.h) continue;
            for (int s = 0; s < window; ++s) {
              const int iw = q * stride + s - padding;
              if (iw < 0 || iw >= d.w) continue;
              const std::size_t off = plane + static_cast<std::size_t>(ih) * d.w + iw;
              if (xp[off] > best) {
                best = xp[off];
                best_idx = static_cast<std::int64_t>(off);
              }
            }
          }
          yp[yi] = best;
          if (argmax) (*argmax)[yi] = best_idx;
        }
      }
    }
  }
  return y;
}

template <typename T>
void maxpool2d_backward(const std::vector<std::int64_t>& argmax, const Tensor<T>& gy,
                        Tensor<T>& gx) {
  for (std::size_t i = 0; i < gy.numel(); ++i) {
    if (argmax[i] >= 0) gx[static_cast<std::size_t>(argmax[i])] += gy[i];
  }
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& x, int window, int stride, int padding) {
  if (window < 1 || stride < 1) throw DimensionError("avgpool2d: window and stride must be >= 1");
  if (padding < 0 || padding >= window) {
    throw DimensionError("avgpool2d: padding must satisfy 0 <= padding < window");
  }
  const MapDims d = map_dims(x, "avgpool2d");
  const int oh = detail::conv_out(d.h, window, stride, padding, "avgpool2d");
  const int ow = detail::conv_out(d.w, window, stride, padding, "avgpool2d");
  Tensor<T> y(d.batched ? std::vector<int>{d.n, d.c, oh, ow} : std::vector<int>{d.c, oh, ow});
  const T scale = T(1) / (static_cast<T>(window) * static_cast<T>(window));

  const T* xp = x.data();
  T* yp = y.data();
  std::size_t yi = 0;
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const std::size_t plane = (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
      for (int p = 0; p < oh; ++p) {
        for (int q = 0; q < ow; ++q, ++yi) {
          T acc = 0;
          for (int r = 0; r < window; ++r) {
            const int ih = p * stride + r - padding;
            if (ih < 0 || ih >= d.h) continue;
            for (int s = 0; s < window; ++s) {
              const int iw = q * stride + s - padding;
              if (iw < 0 || iw >= d.w) continue;
              acc += xp[plane + static_cast<std::size_t>(ih) * d.w + iw];
            }
          }
          yp[yi] = acc * scale;
        }
      }
    }
  }
  return y;
}

template <typename T>
void avgpool2d_backward(const std::vector<int>& xshape, int window, int stride, int padding,
                        const Tensor<T>& gy, Tensor<T>& gx) {
  Tensor<T> probe(xshape);  // shape carrier only
  const MapDims d = map_dims(probe, "avgpool2d_backward");
  const MapDims g = map_dims(gy, "avgpool2d_backward");
  const T scale = T(1) / (static_cast<T>(window) * static_cast<T>(window));
  const T* gp = gy.data();
  std::size_t yi = 0;
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const std::size_t plane = (static_cast<std::size_t>(n) * d.c + c) * d.h * d.w;
      for (int p = 0; p < g.h; ++p) {
        for (int q = 0; q < g.w; ++q, ++yi) {
          const T v = gp[yi] * scale;
          for (int r = 0; r < window; ++r) {
            const int ih = p * stride + r - padding;
            if (ih < 0 || ih >= d.h) continue;
            for (int s = 0; s < window; ++s) {
              const int iw = q * stride + s - padding;
              if (iw < 0 || iw >= d.w) continue;
              gx[plane + static_cast<std::size_t>(ih) * d.w + iw] += v;
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Global pooling over H,W -> (C,1,1), and channel pooling over C -> (1,H,W)

template <typename T>
Tensor<T> global_maxpool(const Tensor<T>& x, std::vector<std::int64_t>* argmax) {
  const MapDims d = map_dims(x, "global_maxpool");
  Tensor<T> y(d.batched ? std::vector<int>{d.n, d.c, 1, 1} : std::vector<int>{d.c, 1, 1});
  if (argmax) argmax->assign(y.numel(), -1);
  const T* xp = x.data();
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (std::size_t pc = 0; pc < static_cast<std::size_t>(d.n) * d.c; ++pc) {
    const T* plane = xp + pc * hw;
    T best = plane[0];
    std::size_t bi = 0;
    for (std::size_t i = 1; i < hw; ++i) {
      if (plane[i] > best) {
        best = plane[i];
        bi = i;
      }
    }
    y[pc] = best;
    if (argmax) (*argmax)[pc] = static_cast<std::int64_t>(pc * hw + bi);
  }
  return y;
}

template <typename T>
void global_maxpool_backward(const std::vector<std::int64_t>& argmax, const Tensor<T>& gy,
                             Tensor<T>& gx) {
  for (std::size_t i = 0; i < gy.numel(); ++i) gx[static_cast<std::size_t>(argmax[i])] += gy[i];
}

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& x) {
  const MapDims d = map_dims(x, "global_avgpool");
  Tensor<T> y(d.batched ? std::vector<int>{d.n, d.c, 1, 1} : std::vector<int>{d.c, 1, 1});
  const T* xp = x.data();
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (std::size_t pc = 0; pc < static_cast<std::size_t>(d.n) * d.c; ++pc) {
    const T* plane = xp + pc * hw;
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
    y[pc] = acc / static_cast<T>(hw);
  }
  return y;
}

template <typename T>
void global_avgpool_backward(const std::vector<int>& xshape, const Tensor<T>& gy, Tensor<T>& gx) {
  Tensor<T> probe(xshape);
  const MapDims d = map_dims(probe, "global_avgpool_backward");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const T inv = T(1) / static_cast<T>(hw);
  for (std::size_t pc = 0; pc < static_cast<std::size_t>(d.n) * d.c; ++pc) {
    const T v = gy[pc] * inv;
    T* plane = gx.data() + pc * hw;
    for (std::size_t i = 0; i < hw; ++i) plane[i] += v;
  }
}

template <typename T>
Tensor<T> channel_maxpool(const Tensor<T>& x, std::vector<std::int64_t>* argmax) {
  const MapDims d = map_dims(x, "channel_maxpool");
  Tensor<T> y(d.batched ? std::vector<int>{d.n, 1, d.h, d.w} : std::vector<int>{1, d.h, d.w});
  if (argmax) argmax->assign(y.numel(), -1);
  const T* xp = x.data();
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t img = static_cast<std::size_t>(d.c) * hw;
  for (int n = 0; n < d.n; ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t base = n * img + i;
      T best = xp[base];
      std::size_t bc = 0;
      for (int c = 1; c < d.c; ++c) {
        const T v = xp[base + static_cast<std::size_t>(c) * hw];
        if (v > best) {
          best = v;
          bc = static_cast<std::size_t>(c);
        }
      }
      y[n * hw + i] = best;
      if (argmax) (*argmax)[n * hw + i] = static_cast<std::int64_t>(base + bc * hw);
    }
  }
  return y;
}

template <typename T>
void channel_maxpool_backward(const std::vector<std::int64_t>& argmax, const Tensor<T>& gy,
                              Tensor<T>& gx) {
  for (std::size_t i = 0; i < gy.numel(); ++i) gx[static_cast<std::size_t>(argmax[i])] += gy[i];
}

template <typename T>
Tensor<T> channel_avgpool(const Tensor<T>& x) {
  const MapDims d = map_dims(x, "channel_avgpool");
  Tensor<T> y(d.batched ? std::vector<int>{d.n, 1, d.h, d.w} : std::vector<int>{1, d.h, d.w});
  const T* xp = x.data();
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t img = static_cast<std::size_t>(d.c) * hw;
  const T inv = T(1) / static_cast<T>(d.c);
  for (int n = 0; n < d.n; ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      T acc = 0;
      for (int c = 0; c < d.c; ++c) acc += xp[n * img + static_cast<std::size_t>(c) * hw + i];
      y[n * hw + i] = acc * inv;
    }
  }
  return y;
}

template <typename T>
void channel_avgpool_backward(const std::vector<int>& xshape, const Tensor<T>& gy, Tensor<T>& gx) {
  Tensor<T> probe(xshape);
  const MapDims d = map_dims(probe, "channel_avgpool_backward");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t img = static_cast<std::size_t>(d.c) * hw;
  const T inv = T(1) / static_cast<T>(d.c);
  for (int n = 0; n < d.n; ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      const T v = gy[n * hw + i] * inv;
      for (int c = 0; c < d.c; ++c) gx[n * img + static_cast<std::size_t>(c) * hw + i] += v;
    }
  }
}

// ---------------------------------------------------------------------------
// Bilinear resize, half-pixel source mapping (align_corners = false):
//   src = (dst + 0.5) * (in / out) - 0.5, clamped to [0, in - 1].
// Interpolation weights are computed in double so float and double paths
// sample identical source positions.

namespace detail {

struct LerpTap {
  int i0, i1;
  double f;  // weight of i1
};

inline LerpTap lerp_tap(int dst, int in, int out) {
  double src = (static_cast<double>(dst) + 0.5) * (static_cast<double>(in) / out) - 0.5;
  if (src < 0.0) src = 0.0;
  const double limit = static_cast<double>(in - 1);
  if (src > limit) src = limit;
  const int i0 = static_cast<int>(src);
  const int i1 = std::min(i0 + 1, in - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DimensionError("bilinear_resize: output dims must be >= 1");
  const MapDims d = map_dims(x, "bilinear_resize");
  Tensor<T> y(d.batched ? std::vector<int>{d.n, d.c, out_h, out_w}
                        : std::vector<int>{d.c, out_h, out_w});
  std::vector<detail::LerpTap> th(static_cast<std::size_t>(out_h));
  std::vector<detail::LerpTap> tw(static_cast<std::size_t>(out_w));
  for (int i = 0; i < out_h; ++i) th[static_cast<std::size_t>(i)] = detail::lerp_tap(i, d.h, out_h);
  for (int i = 0; i < out_w; ++i) tw[static_cast<std::size_t>(i)] = detail::lerp_tap(i, d.w, out_w);

  const T* xp = x.data();
  T* yp = y.data();
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  std::size_t yi = 0;
  for (std::size_t pc = 0; pc < static_cast<std::size_t>(d.n) * d.c; ++pc) {
    const T* plane = xp + pc * hw;
    for (int p = 0; p < out_h; ++p) {
      const detail::LerpTap& a = th[static_cast<std::size_t>(p)];
      for (int q = 0; q < out_w; ++q, ++yi) {
        const detail::LerpTap& b = tw[static_cast<std::size_t>(q)];
        const double v00 = static_cast<double>(plane[static_cast<std::size_t>(a.i0) * d.w + b.i0]);
        const double v01 = static_cast<double>(plane[static_cast<std::size_t>(a.i0) * d.w + b.i1]);
        const double v10 = static_cast<double>(plane[static_cast<std::size_t>(a.i1) * d.w + b.i0]);
        const double v11 = static_cast<double>(plane[static_cast<std::size_t>(a.i1) * d.w + b.i1]);
        const double top = v00 + (v01 - v00) * b.f;
        const double bot = v10 + (v11 - v10) * b.f;
        yp[yi] = static_cast<T>(top + (bot - top) * a.f);
      }
    }
  }
  return y;
}

// Upsampling restricted form: target must not shrink either spatial dim.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w) {
  const MapDims d = map_dims(x, "bilinear_upsample");
  if (out_h < d.h || out_w < d.w) {
    throw DimensionError("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " is smaller than input " +
                         std::to_string(d.h) + "x" + std::to_string(d.w));
  }
  return bilinear_resize(x, out_h, out_w);
}

template <typename T>
void bilinear_resize_backward(const std::vector<int>& xshape, const Tensor<T>& gy, Tensor<T>& gx) {
  Tensor<T> probe(xshape);
  const MapDims d = map_dims(probe, "bilinear_resize_backward");
  const MapDims g = map_dims(gy, "bilinear_resize_backward");
  std::vector<detail::LerpTap> th(static_cast<std::size_t>(g.h));
  std::vector<detail::LerpTap> tw(static_cast<std::size_t>(g.w));
  for (int i = 0; i < g.h; ++i) th[static_cast<std::size_t>(i)] = detail::lerp_tap(i, d.h, g.h);
  for (int i = 0; i < g.w; ++i) tw[static_cast<std::size_t>(i)] = detail::lerp_tap(i, d.w, g.w);

  const T* gp = gy.data();
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  std::size_t yi = 0;
  for (std::size_t pc = 0; pc < static_cast<std::size_t>(d.n) * d.c; ++pc) {
    T* plane = gx.data() + pc * hw;
    for (int p = 0; p < g.h; ++p) {
      const detail::LerpTap& a = th[static_cast<std::size_t>(p)];
      for (int q = 0; q < g.w; ++q, ++yi) {
        const detail::LerpTap& b = tw[static_cast<std::size_t>(q)];
        const double gv = static_cast<double>(gp[yi]);
        plane[static_cast<std::size_t>(a.i0) * d.w + b.i0] += static_cast<T>(gv * (1.0 - a.f) * (1.0 - b.f));
        plane[static_cast<std::size_t>(a.i0) * d.w + b.i1] += static_cast<T>(gv * (1.0 - a.f) * b.f);
        plane[static_cast<std::size_t>(a.i1) * d.w + b.i0] += static_cast<T>(gv * a.f * (1.0 - b.f));
        plane[static_cast<std::size_t>(a.i1) * d.w + b.i1] += static_cast<T>(gv * a.f * b.f);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Fully connected without bias: y = W x, weight layout (out, in).
// x may be rank 1 (in) or rank 2 (N, in).

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w) {
  if (w.rank() != 2) throw DimensionError("linear: weight must be rank 2, got " + shape_str(w.shape()));
  const int out = w.dim(0), in = w.dim(1);
  const bool batched = x.rank() == 2;
  if (!batched && x.rank() != 1) {
    throw DimensionError("linear: input must be rank 1 or 2, got " + shape_str(x.shape()));
  }
  const int n = batched ? x.dim(0) : 1;
  const int xin = batched ? x.dim(1) : x.dim(0);
  if (xin != in) {
    throw DimensionError("linear: weight expects " + std::to_string(in) + " inputs, got " +
                         std::to_string(xin));
  }
  Tensor<T> y(batched ? std::vector<int>{n, out} : std::vector<int>{out});
  const T* xp = x.data();
  const T* wp = w.data();
  for (int b = 0; b < n; ++b) {
    const T* xb = xp + static_cast<std::size_t>(b) * in;
    T* yb = y.data() + static_cast<std::size_t>(b) * out;
    for (int o = 0; o < out; ++o) {
      const T* wo = wp + static_cast<std::size_t>(o) * in;
      T acc = 0;
      for (int i = 0; i < in; ++i) acc += wo[i] * xb[i];
      yb[o] = acc;
    }
  }
  return y;
}

template <typename T>
void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                     Tensor<T>* gx, Tensor<T>* gw) {
  const int out = w.dim(0), in = w.dim(1);
  const bool batched = x.rank() == 2;
  const int n = batched ? x.dim(0) : 1;
  const T* xp = x.data();
  const T* wp = w.data();
  const T* gp = gy.data();
  for (int b = 0; b < n; ++b) {
    const T* xb = xp + static_cast<std::size_t>(b) * in;
    const T* gb = gp + static_cast<std::size_t>(b) * out;
    for (int o = 0; o < out; ++o) {
      const T gv = gb[o];
      if (gx) {
        T* gxb = gx->data() + static_cast<std::size_t>(b) * in;
        const T* wo = wp + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) gxb[i] += gv * wo[i];
      }
      if (gw) {
        T* gwo = gw->data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) gwo[i] += gv * xb[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Channel concat of two maps with equal N,H,W.

template <typename T>
Tensor<T> concat_channel(const Tensor<T>& a, const Tensor<T>& b) {
  const MapDims da = map_dims(a, "concat_channel");
  const MapDims db = map_dims(b, "concat_channel");
  if (da.n != db.n || da.h != db.h || da.w != db.w || da.batched != db.batched) {
    throw DimensionError("concat_channel: incompatible shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const int c = da.c + db.c;
  Tensor<T> y(da.batched ? std::vector<int>{da.n, c, da.h, da.w} : std::vector<int>{c, da.h, da.w});
  const std::size_t hw = static_cast<std::size_t>(da.h) * da.w;
  for (int n = 0; n < da.n; ++n) {
    T* dst = y.data() + static_cast<std::size_t>(n) * c * hw;
    const T* pa = a.data() + static_cast<std::size_t>(n) * da.c * hw;
    const T* pb = b.data() + static_cast<std::size_t>(n) * db.c * hw;
    std::copy(pa, pa + static_cast<std::size_t>(da.c) * hw, dst);
    std::copy(pb, pb + static_cast<std::size_t>(db.c) * hw, dst + static_cast<std::size_t>(da.c) * hw);
  }
  return y;
}

template <typename T>
void concat_channel_backward(const Tensor<T>& gy, int ca, Tensor<T>* ga, Tensor<T>* gb) {
  const MapDims d = map_dims(gy, "concat_channel_backward");
  const int cb = d.c - ca;
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    const T* src = gy.data() + static_cast<std::size_t>(n) * d.c * hw;
    if (ga) {
      T* pa = ga->data() + static_cast<std::size_t>(n) * ca * hw;
      for (std::size_t i = 0; i < static_cast<std::size_t>(ca) * hw; ++i) pa[i] += src[i];
    }
    if (gb) {
      T* pb = gb->data() + static_cast<std::size_t>(n) * cb * hw;
      const T* sb = src + static_cast<std::size_t>(ca) * hw;
      for (std::size_t i = 0; i < static_cast<std::size_t>(cb) * hw; ++i) pb[i] += sb[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Broadcast gates used by the attention refinement.
// channel gate: (N?,C,H,W) * (N?,C,1,1); spatial gate: (N?,C,H,W) * (N?,1,H,W).

template <typename T>
Tensor<T> channel_gate(const Tensor<T>& x, const Tensor<T>& g) {
  const MapDims d = map_dims(x, "channel_gate");
  const MapDims dg = map_dims(g, "channel_gate");
  if (dg.n != d.n || dg.c != d.c || dg.h != 1 || dg.w != 1 || dg.batched != d.batched) {
    throw DimensionError("channel_gate: gate shape " + shape_str(g.shape()) +
                         " does not broadcast over " + shape_str(x.shape()));
  }
  Tensor<T> y(x.shape());
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (std::size_t pc = 0; pc < static_cast<std::size_t>(d.n) * d.c; ++pc) {
    const T gv = g[pc];
    const T* xp = x.data() + pc * hw;
    T* yp = y.data() + pc * hw;
    for (std::size_t i = 0; i < hw; ++i) yp[i] = xp[i] * gv;
  }
  return y;
}

template <typename T>
void channel_gate_backward(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& gy,
                           Tensor<T>* gx, Tensor<T>* gg) {
  const MapDims d = map_dims(x, "channel_gate_backward");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (std::size_t pc = 0; pc < static_cast<std::size_t>(d.n) * d.c; ++pc) {
    const T gv = g[pc];
    const T* xp = x.data() + pc * hw;
    const T* gp = gy.data() + pc * hw;
    if (gx) {
      T* q = gx->data() + pc * hw;
      for (std::size_t i = 0; i < hw; ++i) q[i] += gp[i] * gv;
    }
    if (gg) {
      T acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += gp[i] * xp[i];
      (*gg)[pc] += acc;
    }
  }
}

template <typename T>
Tensor<T> spatial_gate(const Tensor<T>& x, const Tensor<T>& g) {
  const MapDims d = map_dims(x, "spatial_gate");
  const MapDims dg = map_dims(g, "spatial_gate");
  if (dg.n != d.n || dg.c != 1 || dg.h != d.h || dg.w != d.w || dg.batched != d.batched) {
    throw DimensionError("spatial_gate: gate shape " + shape_str(g.shape()) +
                         " does not broadcast over " + shape_str(x.shape()));
  }
  Tensor<T> y(x.shape());
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    const T* gp = g.data() + static_cast<std::size_t>(n) * hw;
    for (int c = 0; c < d.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * d.c + c) * hw;
      const T* xp = x.data() + off;
      T* yp = y.data() + off;
      for (std::size_t i = 0; i < hw; ++i) yp[i] = xp[i] * gp[i];
    }
  }
  return y;
}

template <typename T>
void spatial_gate_backward(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& gy,
                           Tensor<T>* gx, Tensor<T>* gg) {
  const MapDims d = map_dims(x, "spatial_gate_backward");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    const T* gp = g.data() + static_cast<std::size_t>(n) * hw;
    T* ggp = gg ? gg->data() + static_cast<std::size_t>(n) * hw : nullptr;
    for (int c = 0; c < d.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * d.c + c) * hw;
      const T* xp = x.data() + off;
      const T* gyp = gy.data() + off;
      if (gx) {
        T* q = gx->data() + off;
        for (std::size_t i = 0; i < hw; ++i) q[i] += gyp[i] * gp[i];
      }
      if (ggp) {
        for (std::size_t i = 0; i < hw; ++i) ggp[i] += gyp[i] * xp[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Batch normalization. Training mode normalizes with per-channel statistics
// over N,H,W of the incoming batch; evaluation mode uses the provided running
// statistics. Variances are biased (divide by the reduction count).

template <typename T>
void batchnorm_stats(const Tensor<T>& x, std::vector<T>& mean, std::vector<T>& var) {
  const MapDims d = map_dims(x, "batchnorm_stats");
  mean.assign(static_cast<std::size_t>(d.c), T(0));
  var.assign(static_cast<std::size_t>(d.c), T(0));
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const T inv = T(1) / (static_cast<T>(d.n) * static_cast<T>(hw));
  for (int c = 0; c < d.c; ++c) {
    T acc = 0;
    for (int n = 0; n < d.n; ++n) {
      const T* plane = x.data() + (static_cast<std::size_t>(n) * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
    }
    const T mu = acc * inv;
    T vacc = 0;
    for (int n = 0; n < d.n; ++n) {
      const T* plane = x.data() + (static_cast<std::size_t>(n) * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T dlt = plane[i] - mu;
        vacc += dlt * dlt;
      }
    }
    mean[static_cast<std::size_t>(c)] = mu;
    var[static_cast<std::size_t>(c)] = vacc * inv;
  }
}

template <typename T>
Tensor<T> batchnorm_apply(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const std::vector<T>& mean, const std::vector<T>& var, T eps) {
  const MapDims d = map_dims(x, "batchnorm");
  if (gamma.numel() != static_cast<std::size_t>(d.c) || beta.numel() != static_cast<std::size_t>(d.c)) {
    throw DimensionError("batchnorm: gamma/beta must have one entry per channel");
  }
  Tensor<T> y(x.shape());
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * d.c + c) * hw;
      const T istd = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
      const T gsc = gamma[static_cast<std::size_t>(c)] * istd;
      const T bs = beta[static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)] * gsc;
      const T* xp = x.data() + off;
      T* yp = y.data() + off;
      for (std::size_t i = 0; i < hw; ++i) yp[i] = xp[i] * gsc + bs;
    }
  }
  return y;
}

// batch_stats=true means mean/var were computed from this x (training mode),
// so their dependence on x enters the gradient.
template <typename T>
void batchnorm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                        const std::vector<T>& mean, const std::vector<T>& var, T eps,
                        bool batch_stats, const Tensor<T>& gy,
                        Tensor<T>* gx, Tensor<T>* ggamma, Tensor<T>* gbeta) {
  const MapDims d = map_dims(x, "batchnorm_backward");
  const std::size_t hw = static_cast<std::size_t>(d.h) * d.w;
  const T m = static_cast<T>(d.n) * static_cast<T>(hw);
  for (int c = 0; c < d.c; ++c) {
    const T mu = mean[static_cast<std::size_t>(c)];
    const T istd = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
    T sum_g = 0, sum_gx = 0;
    for (int n = 0; n < d.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * d.c + c) * hw;
      const T* xp = x.data() + off;
      const T* gp = gy.data() + off;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_g += gp[i];
        sum_gx += gp[i] * (xp[i] - mu) * istd;
      }
    }
    if (gbeta) (*gbeta)[static_cast<std::size_t>(c)] += sum_g;
    if (ggamma) (*ggamma)[static_cast<std::size_t>(c)] += sum_gx;
    if (gx) {
      const T gsc = gamma[static_cast<std::size_t>(c)] * istd;
      for (int n = 0; n < d.n; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * d.c + c) * hw;
        const T* xp = x.data() + off;
        const T* gp = gy.data() + off;
        T* q = gx->data() + off;
        if (batch_stats) {
          for (std::size_t i = 0; i < hw; ++i) {
            const T xhat = (xp[i] - mu) * istd;
            q[i] += gsc * (gp[i] - sum_g / m - xhat * sum_gx / m);
          }
        } else {
          for (std::size_t i = 0; i < hw; ++i) q[i] += gsc * gp[i];
        }
      }
    }
  }
}

}  // namespace adkd::ops
