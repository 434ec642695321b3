#pragma once

// Differentiable primitives recorded on a Tape. Only what the segmentation
// pipeline needs: conv, relu, 2x2 max-pool, x2 nearest upsample, channel
// concat, elementwise arithmetic, clamped log, reductions, channel softmax and
// axis flips. argmax_channel is value-only.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sgrs/autograd.hpp"
#include "sgrs/error.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs {

// log clamps its argument here so that 0 * log 0 evaluates to 0 once masked.
inline constexpr double kLogClamp = 1e-12;

namespace detail {

template <class T>
void same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + i) - static_cast<std::ptrdiff_t>(g.pad);
          T* out = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.wo, T{0});
            continue;
          }
          const T* in = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + j) - static_cast<std::ptrdiff_t>(g.pad);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : in[iw];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvGeometry& g, const T* col, T* x) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * g.pixels();
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* out = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const T* in = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) out[iw] += in[ow];
          }
        }
      }
    }
  }
}

template <class T>
std::vector<T> conv_forward(const ConvGeometry& g, const std::vector<T>& x, const std::vector<T>& k,
                            const std::vector<T>& b) {
  std::vector<T> out(g.n * g.cout * g.pixels());
  std::vector<T> col(g.patch() * g.pixels());
  Eigen::Map<const RowMat<T>> kernel(k.data(), g.cout, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(g, x.data() + n * g.cin * g.h * g.w, col.data());
    Eigen::Map<const RowMat<T>> cols(col.data(), g.patch(), g.pixels());
    Eigen::Map<RowMat<T>> o(out.data() + n * g.cout * g.pixels(), g.cout, g.pixels());
    o.noalias() = kernel * cols;
    for (std::size_t c = 0; c < g.cout; ++c) o.row(c).array() += b[c];
  }
  return out;
}

template <class T>
std::size_t flip_source(const Dims& d, std::size_t i, bool width_axis) {
  const std::size_t w = d[d.size() - 1];
  const std::size_t h = d[d.size() - 2];
  const std::size_t plane = i / (h * w);
  const std::size_t r = (i / w) % h;
  const std::size_t c = i % w;
  return width_axis ? (plane * h + r) * w + (w - 1 - c) : (plane * h + (h - 1 - r)) * w + c;
}

}  // namespace detail

// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,kH,kW] plus per-channel bias.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, std::size_t padding) {
  detail::same_tape(x, kernel, "conv2d");
  detail::same_tape(x, bias, "conv2d");
  const Dims& xd = x.dims();
  const Dims& kd = kernel.dims();
  require_rank(xd, 4, "conv2d input");
  require_rank(kd, 4, "conv2d kernel");
  require_dims(bias.dims(), Dims{kd[0]}, "conv2d bias");
  if (kd[1] != xd[1]) throw ShapeError("conv2d: kernel input channels do not match input");
  if (kd[2] % 2 == 0 || kd[3] % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (xd[2] + 2 * padding < kd[2] || xd[3] + 2 * padding < kd[3]) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  detail::ConvGeometry g{xd[0], xd[1], xd[2], xd[3], kd[0], kd[2], kd[3], padding, 0, 0};
  g.ho = g.h + 2 * padding - g.kh + 1;
  g.wo = g.w + 2 * padding - g.kw + 1;
  const std::size_t xi = x.id(), ki = kernel.id(), bi = bias.id();

  auto forward = [=](const Tape<T>& t) {
    return detail::conv_forward(g, t.node(xi).value, t.node(ki).value, t.node(bi).value);
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    using Mat = detail::RowMat<T>;
    const auto& gout = t.node(self).grad;
    const auto& xv = t.node(xi).value;
    Eigen::Map<const Mat> kmat(t.node(ki).value.data(), g.cout, g.patch());
    auto* gx = t.grad_sink(xi);
    auto* gk = t.grad_sink(ki);
    auto* gb = t.grad_sink(bi);
    std::vector<T> col(g.patch() * g.pixels());
    std::vector<T> dcol(gx ? col.size() : 0);
    for (std::size_t n = 0; n < g.n; ++n) {
      Eigen::Map<const Mat> go(gout.data() + n * g.cout * g.pixels(), g.cout, g.pixels());
      if (gb) {
        // Plain loop: Eigen's vectorised sum depends on buffer alignment,
        // which would make resumed runs drift from uninterrupted ones.
        for (std::size_t c = 0; c < g.cout; ++c) {
          T acc = 0;
          for (std::size_t p = 0; p < g.pixels(); ++p) acc += go(c, p);
          (*gb)[c] += acc;
        }
      }
      if (gk) {
        detail::im2col(g, xv.data() + n * g.cin * g.h * g.w, col.data());
        Eigen::Map<const Mat> cols(col.data(), g.patch(), g.pixels());
        Eigen::Map<Mat> dk(gk->data(), g.cout, g.patch());
        dk.noalias() += go * cols.transpose();
      }
      if (gx) {
        Eigen::Map<Mat> dc(dcol.data(), g.patch(), g.pixels());
        dc.noalias() = kmat.transpose() * go;
        detail::col2im_add(g, dcol.data(), gx->data() + n * g.cin * g.h * g.w);
      }
    }
  };
  return x.tape().record("conv2d", Dims{g.n, g.cout, g.ho, g.wo}, {xi, ki, bi}, forward, backward);
}

template <class T>
Var<T> relu(const Var<T>& x) {
  const std::size_t xi = x.id();
  auto forward = [=](const Tape<T>& t) {
    auto v = t.node(xi).value;
    for (auto& e : v) e = e > T{0} ? e : T{0};
    return v;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_sink(xi);
    if (!gx) return;
    const auto& xv = t.node(xi).value;
    const auto& g = t.node(self).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T{0}) (*gx)[i] += g[i];
    }
  };
  return x.tape().record("relu", x.dims(), {xi}, forward, backward);
}

// 2x2 max-pool with stride 2. Ties route the gradient to the first maximum
// in row-major window order.
template <class T>
Var<T> maxpool2(const Var<T>& x) {
  const Dims d = x.dims();
  require_rank(d, 4, "maxpool2");
  if (d[2] % 2 || d[3] % 2) throw ShapeError("maxpool2: spatial extents must be even, got " + to_string(d));
  const std::size_t planes = d[0] * d[1], h = d[2], w = d[3], ho = h / 2, wo = w / 2;
  const std::size_t xi = x.id();
  auto argmax_in = [=](const std::vector<T>& xv, std::size_t p, std::size_t oh, std::size_t ow) {
    std::size_t best = (p * h + 2 * oh) * w + 2 * ow;
    for (std::size_t di = 0; di < 2; ++di) {
      for (std::size_t dj = 0; dj < 2; ++dj) {
        const std::size_t idx = (p * h + 2 * oh + di) * w + 2 * ow + dj;
        if (xv[idx] > xv[best]) best = idx;
      }
    }
    return best;
  };
  auto forward = [=](const Tape<T>& t) {
    const auto& xv = t.node(xi).value;
    std::vector<T> out(planes * ho * wo);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) out[(p * ho + oh) * wo + ow] = xv[argmax_in(xv, p, oh, ow)];
    return out;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_sink(xi);
    if (!gx) return;
    const auto& xv = t.node(xi).value;
    const auto& g = t.node(self).grad;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) (*gx)[argmax_in(xv, p, oh, ow)] += g[(p * ho + oh) * wo + ow];
  };
  return x.tape().record("maxpool2", Dims{d[0], d[1], ho, wo}, {xi}, forward, backward);
}

// Nearest-neighbour x2 upsampling.
template <class T>
Var<T> upsample2(const Var<T>& x) {
  const Dims d = x.dims();
  require_rank(d, 4, "upsample2");
  const std::size_t planes = d[0] * d[1], h = d[2], w = d[3], ho = 2 * h, wo = 2 * w;
  const std::size_t xi = x.id();
  auto forward = [=](const Tape<T>& t) {
    const auto& xv = t.node(xi).value;
    std::vector<T> out(planes * ho * wo);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) out[(p * ho + oh) * wo + ow] = xv[(p * h + oh / 2) * w + ow / 2];
    return out;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_sink(xi);
    if (!gx) return;
    const auto& g = t.node(self).grad;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oh = 0; oh < ho; ++oh)
        for (std::size_t ow = 0; ow < wo; ++ow) (*gx)[(p * h + oh / 2) * w + ow / 2] += g[(p * ho + oh) * wo + ow];
  };
  return x.tape().record("upsample2", Dims{d[0], d[1], ho, wo}, {xi}, forward, backward);
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  detail::same_tape(a, b, "concat_channels");
  const Dims da = a.dims(), db = b.dims();
  require_rank(da, 4, "concat_channels");
  require_rank(db, 4, "concat_channels");
  if (da[0] != db[0] || da[2] != db[2] || da[3] != db[3]) {
    throw ShapeError("concat_channels: " + to_string(da) + " vs " + to_string(db));
  }
  const std::size_t n = da[0], plane = da[2] * da[3];
  const std::size_t sa = da[1] * plane, sb = db[1] * plane;
  const std::size_t ai = a.id(), bi = b.id();
  auto forward = [=](const Tape<T>& t) {
    const auto& av = t.node(ai).value;
    const auto& bv = t.node(bi).value;
    std::vector<T> out;
    out.reserve(n * (sa + sb));
    for (std::size_t i = 0; i < n; ++i) {
      out.insert(out.end(), av.begin() + i * sa, av.begin() + (i + 1) * sa);
      out.insert(out.end(), bv.begin() + i * sb, bv.begin() + (i + 1) * sb);
    }
    return out;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    auto* ga = t.grad_sink(ai);
    auto* gb = t.grad_sink(bi);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * (sa + sb);
      if (ga) for (std::size_t j = 0; j < sa; ++j) (*ga)[i * sa + j] += g[base + j];
      if (gb) for (std::size_t j = 0; j < sb; ++j) (*gb)[i * sb + j] += g[base + sa + j];
    }
  };
  return a.tape().record("concat_channels", Dims{n, da[1] + db[1], da[2], da[3]}, {ai, bi}, forward, backward);
}

namespace detail {

template <class T, class Fwd, class DA, class DB>
Var<T> binary(const char* op, const Var<T>& a, const Var<T>& b, Fwd f, DA dfa, DB dfb) {
  same_tape(a, b, op);
  require_dims(b.dims(), a.dims(), op);
  const std::size_t ai = a.id(), bi = b.id();
  auto forward = [=](const Tape<T>& t) {
    const auto& av = t.node(ai).value;
    const auto& bv = t.node(bi).value;
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    return out;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    const auto& av = t.node(ai).value;
    const auto& bv = t.node(bi).value;
    const auto& g = t.node(self).grad;
    if (auto* ga = t.grad_sink(ai)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfa(av[i], bv[i]);
    if (auto* gb = t.grad_sink(bi)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * dfb(av[i], bv[i]);
  };
  return a.tape().record(op, a.dims(), {ai, bi}, forward, backward);
}

template <class T, class Fwd, class D>
Var<T> unary(const char* op, const Var<T>& x, Fwd f, D df) {
  const std::size_t xi = x.id();
  auto forward = [=](const Tape<T>& t) {
    auto v = t.node(xi).value;
    for (auto& e : v) e = f(e);
    return v;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_sink(xi);
    if (!gx) return;
    const auto& xv = t.node(xi).value;
    const auto& g = t.node(self).grad;
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * df(xv[i]);
  };
  return x.tape().record(op, x.dims(), {xi}, forward, backward);
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>("add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
                           [](T, T) { return T{1}; });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>("sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
                           [](T, T) { return T{-1}; });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>("mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
                           [](T x, T) { return x; });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>("div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T{1} / y; },
                           [](T x, T y) { return -x / (y * y); });
}

// Multiply by a {0,1} (or any constant) map; the map gets no gradient.
template <class T>
Var<T> mask_multiply(const Var<T>& x, const Tensor<T>& mask) {
  return mul(x, x.tape().constant(mask));
}

template <class T>
Var<T> scale(const Var<T>& x, T c) {
  return detail::unary<T>("scale", x, [c](T v) { return c * v; }, [c](T) { return c; });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T c) {
  return detail::unary<T>("add_scalar", x, [c](T v) { return v + c; }, [](T) { return T{1}; });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return detail::unary<T>("square", x, [](T v) { return v * v; }, [](T v) { return T{2} * v; });
}

// Natural log of max(x, 1e-12); zero derivative inside the clamp.
template <class T>
Var<T> log(const Var<T>& x) {
  const T lo = static_cast<T>(kLogClamp);
  return detail::unary<T>(
      "log", x, [lo](T v) { return std::log(std::max(v, lo)); }, [lo](T v) { return v > lo ? T{1} / v : T{0}; });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  const std::size_t xi = x.id();
  auto forward = [=](const Tape<T>& t) {
    const auto& v = t.node(xi).value;
    T acc{0};
    for (T e : v) acc += e;
    return std::vector<T>{acc};
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_sink(xi);
    if (!gx) return;
    const T g = t.node(self).grad[0];
    for (auto& e : *gx) e += g;
  };
  return x.tape().record("sum", Dims{}, {xi}, forward, backward);
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(product(x.dims())));
}

// Per-pixel softmax over the channel axis of [N,C,H,W], max-subtracted.
template <class T>
Var<T> softmax_channel(const Var<T>& logits) {
  const Dims d = logits.dims();
  require_rank(d, 4, "softmax_channel");
  const std::size_t n = d[0], c = d[1], plane = d[2] * d[3];
  const std::size_t xi = logits.id();
  auto forward = [=](const Tape<T>& t) {
    const auto& xv = t.node(xi).value;
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t base = i * c * plane + p;
        T m = xv[base];
        for (std::size_t k = 1; k < c; ++k) m = std::max(m, xv[base + k * plane]);
        T z{0};
        for (std::size_t k = 0; k < c; ++k) {
          out[base + k * plane] = std::exp(xv[base + k * plane] - m);
          z += out[base + k * plane];
        }
        for (std::size_t k = 0; k < c; ++k) out[base + k * plane] /= z;
      }
    }
    return out;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_sink(xi);
    if (!gx) return;
    const auto& y = t.node(self).value;
    const auto& g = t.node(self).grad;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t base = i * c * plane + p;
        T dot{0};
        for (std::size_t k = 0; k < c; ++k) dot += y[base + k * plane] * g[base + k * plane];
        for (std::size_t k = 0; k < c; ++k) (*gx)[base + k * plane] += y[base + k * plane] * (g[base + k * plane] - dot);
      }
    }
  };
  return logits.tape().record("softmax_channel", d, {xi}, forward, backward);
}

// Mirror along the width (horizontal) or height (vertical) axis; works for
// any tensor of rank >= 2 and is its own inverse.
template <class T>
Var<T> flip(const Var<T>& x, bool width_axis) {
  const Dims d = x.dims();
  if (d.size() < 2) throw ShapeError("flip needs rank >= 2");
  const std::size_t xi = x.id();
  auto forward = [=](const Tape<T>& t) {
    const auto& xv = t.node(xi).value;
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[detail::flip_source<T>(d, i, width_axis)];
    return out;
  };
  auto backward = [=](Tape<T>& t, std::size_t self) {
    auto* gx = t.grad_sink(xi);
    if (!gx) return;
    const auto& g = t.node(self).grad;
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[detail::flip_source<T>(d, i, width_axis)] += g[i];
  };
  return x.tape().record(width_axis ? "flip_h" : "flip_v", d, {xi}, forward, backward);
}

template <class T>
Tensor<T> flip(const Tensor<T>& x, bool width_axis) {
  const Dims& d = x.dims();
  if (d.size() < 2) throw ShapeError("flip needs rank >= 2");
  Tensor<T> out(d);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[detail::flip_source<T>(d, i, width_axis)];
  return out;
}

// Channel argmax of [N,C,H,W]; ties go to the lowest channel index.
template <class T>
LabelMap argmax_channel(const Tensor<T>& x) {
  const Dims& d = x.dims();
  require_rank(d, 4, "argmax_channel");
  LabelMap out(Dims{d[0], d[2], d[3]});
  const std::size_t c = d[1], plane = d[2] * d[3];
  for (std::size_t i = 0; i < d[0]; ++i) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t base = i * c * plane + p;
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (x[base + k * plane] > x[base + best * plane]) best = k;
      }
      out[i * plane + p] = static_cast<std::int64_t>(best);
    }
  }
  return out;
}

template <class T>
LabelMap argmax_channel(const Var<T>& x) {
  return argmax_channel(x.value());
}

}  // namespace sgrs
