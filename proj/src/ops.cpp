#include "liquiform/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "liquiform/error.hpp"

namespace liquiform {

namespace testing {

namespace {
std::string g_faulty_op;
}

void inject_gradient_fault(std::string op) { g_faulty_op = std::move(op); }

bool gradient_fault_active(std::string_view op) {
  return !g_faulty_op.empty() && g_faulty_op == op;
}

}  // namespace testing

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

using detail::Node;

template <typename T>
Node<T>* raw(const Tensor<T>& t) {
  return t.defined() ? t.node().get() : nullptr;
}

template <typename T>
bool wants_grad(const Node<T>* n) {
  return n != nullptr && n->requires_grad;
}

// Gradient multiplier for the fault-injection hook.
template <typename T>
T fault_factor(std::string_view op) {
  return testing::gradient_fault_active(op) ? T(1.01) : T(1);
}

void require_rank(const char* op, const char* what, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got shape " + to_string(s));
  }
}

void require_axis(const char* op, const std::string& lhs, Index a, const std::string& rhs, Index b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": " + lhs + " = " + std::to_string(a) +
                         " does not match " + rhs + " = " + std::to_string(b));
  }
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": operand shapes differ, " + to_string(a) + " vs " +
                         to_string(b));
  }
}

// Patch extraction for a convolution whose input image is C x H x W and
// whose output grid is out_h x out_w. cols is (C*kh*kw) x (out_h*out_w).
template <typename T>
void im2col(const T* img, Index channels, Index height, Index width, Index kh, Index kw,
            Index stride, Index pad, Index out_h, Index out_w, T* cols) {
  const Index plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        T* row = cols + ((c * kh + i) * kw + j) * plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index y = oy * stride - pad + i;
          T* dst = row + oy * out_w;
          if (y < 0 || y >= height) {
            std::fill(dst, dst + out_w, T{0});
            continue;
          }
          const T* src = img + (c * height + y) * width;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index x = ox * stride - pad + j;
            dst[ox] = (x >= 0 && x < width) ? src[x] : T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename T>
void col2im(const T* cols, Index channels, Index height, Index width, Index kh, Index kw,
            Index stride, Index pad, Index out_h, Index out_w, T* img) {
  const Index plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        const T* row = cols + ((c * kh + i) * kw + j) * plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index y = oy * stride - pad + i;
          if (y < 0 || y >= height) continue;
          T* dst = img + (c * height + y) * width;
          const T* src = row + oy * out_w;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index x = ox * stride - pad + j;
            if (x >= 0 && x < width) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_params(const char* op, const Shape& ws, int stride, int padding) {
  if (ws[2] % 2 == 0 || ws[3] % 2 == 0) {
    throw DimensionError(std::string(op) + ": kernel extents must be odd, got " +
                         std::to_string(ws[2]) + "x" + std::to_string(ws[3]));
  }
  if (stride < 1) throw ContractError(std::string(op) + ": stride must be >= 1");
  if (padding < 0) throw ContractError(std::string(op) + ": padding must be >= 0");
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  const char* op = "conv2d";
  require_rank(op, "input", input.shape(), 4);
  require_rank(op, "weight", weight.shape(), 4);
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  check_conv_params<T>(op, ws, stride, padding);
  require_axis(op, "input channel axis (dim 1)", is[1], "weight channel axis (dim 1)", ws[1]);
  if (bias.defined()) {
    require_rank(op, "bias", bias.shape(), 1);
    require_axis(op, "bias length (dim 0)", bias.dim(0), "weight filter axis (dim 0)", ws[0]);
  }
  const Index n = is[0], c = is[1], h = is[2], w = is[3];
  const Index f = ws[0], kh = ws[2], kw = ws[3];
  const Index oh = (h + 2 * padding - kh) / stride + 1;
  const Index ow = (w + 2 * padding - kw) / stride + 1;
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw DimensionError("conv2d: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the kernel after padding");
  }
  const Index k = c * kh * kw, plane = oh * ow;

  std::vector<T> out(static_cast<std::size_t>(n * f * plane));
  std::vector<T> cols(static_cast<std::size_t>(k * plane));
  ConstMatMap<T> wm(weight.data().data(), f, k);
  for (Index b = 0; b < n; ++b) {
    im2col(input.data().data() + b * c * h * w, c, h, w, kh, kw, stride, padding, oh, ow, cols.data());
    MatMap<T> om(out.data() + b * f * plane, f, plane);
    om.noalias() = wm * ConstMatMap<T>(cols.data(), k, plane);
    if (bias.defined()) {
      for (Index fi = 0; fi < f; ++fi) om.row(fi).array() += bias[fi];
    }
  }

  Node<T>* xn = raw(input);
  Node<T>* wn = raw(weight);
  Node<T>* bn = raw(bias);
  return detail::make_result<T>(
      op, Shape{n, f, oh, ow}, std::move(out), {&input, &weight, &bias},
      [=](Node<T>& self) {
        const T fault = fault_factor<T>("conv2d");
        std::vector<T> colbuf(static_cast<std::size_t>(k * plane));
        ConstMatMap<T> wmat(wn->data.data(), f, k);
        for (Index b = 0; b < n; ++b) {
          ConstMatMap<T> dout(self.grad.data() + b * f * plane, f, plane);
          if (wants_grad(wn)) {
            im2col(xn->data.data() + b * c * h * w, c, h, w, kh, kw, stride, padding, oh, ow,
                   colbuf.data());
            MatMap<T>(wn->ensure_grad().data(), f, k).noalias() +=
                dout * ConstMatMap<T>(colbuf.data(), k, plane).transpose();
          }
          if (wants_grad(xn)) {
            MatMap<T>(colbuf.data(), k, plane).noalias() = wmat.transpose() * dout;
            if (fault != T(1)) {
              for (auto& v : colbuf) v *= fault;
            }
            col2im(colbuf.data(), c, h, w, kh, kw, stride, padding, oh, ow,
                   xn->ensure_grad().data() + b * c * h * w);
          }
          if (wants_grad(bn)) {
            auto& bg = bn->ensure_grad();
            for (Index fi = 0; fi < f; ++fi) {
              double acc = 0.0;
              const T* row = self.grad.data() + (b * f + fi) * plane;
              for (Index p = 0; p < plane; ++p) acc += row[p];
              bg[static_cast<std::size_t>(fi)] += static_cast<T>(acc);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           int stride, int padding, int output_padding) {
  const char* op = "conv2d_transpose";
  require_rank(op, "input", input.shape(), 4);
  require_rank(op, "weight", weight.shape(), 4);
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  check_conv_params<T>(op, ws, stride, padding);
  if (stride > 2) throw ContractError("conv2d_transpose: stride must be 1 or 2");
  if (output_padding < 0 || output_padding >= stride) {
    throw ContractError("conv2d_transpose: output_padding must be in [0, stride)");
  }
  require_axis(op, "input channel axis (dim 1)", is[1], "weight input-channel axis (dim 0)", ws[0]);
  if (bias.defined()) {
    require_rank(op, "bias", bias.shape(), 1);
    require_axis(op, "bias length (dim 0)", bias.dim(0), "weight output-channel axis (dim 1)", ws[1]);
  }
  const Index n = is[0], cin = is[1], h = is[2], w = is[3];
  const Index cout = ws[1], kh = ws[2], kw = ws[3];
  const Index oh = (h - 1) * stride - 2 * padding + kh + output_padding;
  const Index ow = (w - 1) * stride - 2 * padding + kw + output_padding;
  if (oh <= 0 || ow <= 0) throw DimensionError("conv2d_transpose: empty output extent");
  const Index k = cout * kh * kw, plane = h * w, oplane = oh * ow;

  std::vector<T> out(static_cast<std::size_t>(n * cout * oplane), T{0});
  std::vector<T> cols(static_cast<std::size_t>(k * plane));
  ConstMatMap<T> wm(weight.data().data(), cin, k);
  for (Index b = 0; b < n; ++b) {
    MatMap<T>(cols.data(), k, plane).noalias() =
        wm.transpose() * ConstMatMap<T>(input.data().data() + b * cin * plane, cin, plane);
    T* dst = out.data() + b * cout * oplane;
    col2im(cols.data(), cout, oh, ow, kh, kw, stride, padding, h, w, dst);
    if (bias.defined()) {
      for (Index co = 0; co < cout; ++co) {
        const T bv = bias[co];
        for (Index p = 0; p < oplane; ++p) dst[co * oplane + p] += bv;
      }
    }
  }

  Node<T>* xn = raw(input);
  Node<T>* wn = raw(weight);
  Node<T>* bn = raw(bias);
  return detail::make_result<T>(
      op, Shape{n, cout, oh, ow}, std::move(out), {&input, &weight, &bias},
      [=](Node<T>& self) {
        const T fault = fault_factor<T>("conv2d_transpose");
        std::vector<T> colbuf(static_cast<std::size_t>(k * plane));
        ConstMatMap<T> wmat(wn->data.data(), cin, k);
        for (Index b = 0; b < n; ++b) {
          const T* dout = self.grad.data() + b * cout * oplane;
          if (wants_grad(wn) || wants_grad(xn)) {
            im2col(dout, cout, oh, ow, kh, kw, stride, padding, h, w, colbuf.data());
          }
          ConstMatMap<T> dcols(colbuf.data(), k, plane);
          if (wants_grad(wn)) {
            MatMap<T>(wn->ensure_grad().data(), cin, k).noalias() +=
                ConstMatMap<T>(xn->data.data() + b * cin * plane, cin, plane) * dcols.transpose();
          }
          if (wants_grad(xn)) {
            MatMap<T> dx(xn->ensure_grad().data() + b * cin * plane, cin, plane);
            if (fault != T(1)) {
              dx.noalias() += fault * (wmat * dcols);
            } else {
              dx.noalias() += wmat * dcols;
            }
          }
          if (wants_grad(bn)) {
            auto& bg = bn->ensure_grad();
            for (Index co = 0; co < cout; ++co) {
              double acc = 0.0;
              for (Index p = 0; p < oplane; ++p) acc += dout[co * oplane + p];
              bg[static_cast<std::size_t>(co)] += static_cast<T>(acc);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode, double eps, double momentum) {
  const char* op = "batch_norm";
  const Shape& is = input.shape();
  if (is.size() != 2 && is.size() != 4) {
    throw DimensionError("batch_norm: input must have rank 2 or 4, got shape " + to_string(is));
  }
  const Index n = is[0], c = is[1];
  const Index hw = is.size() == 4 ? is[2] * is[3] : 1;
  require_axis(op, "gamma length", gamma.numel(), "input channel axis (dim 1)", c);
  require_axis(op, "beta length", beta.numel(), "input channel axis (dim 1)", c);
  require_axis(op, "running_mean length", state.running_mean.numel(), "input channel axis (dim 1)", c);
  const Index m = n * hw;
  const bool training = mode == Mode::train;
  if (training && m < 2) {
    throw ContractError(
        "batch_norm: degenerate variance, train mode needs N*H*W >= 2 values per channel");
  }

  const T* x = input.data().data();
  std::vector<T> out(static_cast<std::size_t>(n * c * hw));
  std::vector<T> xhat(out.size());
  std::vector<double> invstd(static_cast<std::size_t>(c));
  auto rm = state.running_mean.mutable_data();
  auto rv = state.running_var.mutable_data();

  for (Index ch = 0; ch < c; ++ch) {
    double mu, var;
    if (training) {
      double acc = 0.0;
      for (Index b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) acc += p[i];
      }
      mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (Index b = 0; b < n; ++b) {
        const T* p = x + (b * c + ch) * hw;
        for (Index i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(m);
      const double unbiased = sq / static_cast<double>(m - 1);
      rm[ch] = static_cast<T>((1.0 - momentum) * rm[ch] + momentum * mu);
      rv[ch] = static_cast<T>((1.0 - momentum) * rv[ch] + momentum * unbiased);
    } else {
      mu = rm[ch];
      var = rv[ch];
    }
    const double is_c = 1.0 / std::sqrt(var + eps);
    invstd[static_cast<std::size_t>(ch)] = is_c;
    const double g = gamma[ch], be = beta[ch];
    for (Index b = 0; b < n; ++b) {
      const Index base = (b * c + ch) * hw;
      for (Index i = 0; i < hw; ++i) {
        const double xh = (x[base + i] - mu) * is_c;
        xhat[base + i] = static_cast<T>(xh);
        out[base + i] = static_cast<T>(g * xh + be);
      }
    }
  }

  Node<T>* xn = raw(input);
  Node<T>* gn = raw(gamma);
  Node<T>* bn = raw(beta);
  return detail::make_result<T>(
      op, is, std::move(out), {&input, &gamma, &beta},
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](Node<T>& self) {
        const T fault = fault_factor<T>("batch_norm");
        const T* dy = self.grad.data();
        for (Index ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (Index b = 0; b < n; ++b) {
            const Index base = (b * c + ch) * hw;
            for (Index i = 0; i < hw; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xhat += static_cast<double>(dy[base + i]) * xhat[base + i];
            }
          }
          if (wants_grad(gn)) gn->ensure_grad()[static_cast<std::size_t>(ch)] += static_cast<T>(sum_dy_xhat);
          if (wants_grad(bn)) bn->ensure_grad()[static_cast<std::size_t>(ch)] += static_cast<T>(sum_dy);
          if (!wants_grad(xn)) continue;
          auto& dx = xn->ensure_grad();
          const double g = gn->data[static_cast<std::size_t>(ch)];
          const double is_c = invstd[static_cast<std::size_t>(ch)];
          for (Index b = 0; b < n; ++b) {
            const Index base = (b * c + ch) * hw;
            for (Index i = 0; i < hw; ++i) {
              double v;
              if (training) {
                v = g * is_c / static_cast<double>(m) *
                    (static_cast<double>(m) * dy[base + i] - sum_dy - xhat[base + i] * sum_dy_xhat);
              } else {
                v = g * is_c * dy[base + i];
              }
              dx[static_cast<std::size_t>(base + i)] += fault * static_cast<T>(v);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------

namespace {

// Shared scaffolding for unary elementwise operators whose derivative can be
// written from (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* op, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Node<T>* xn = raw(x);
  std::string name = op;
  return detail::make_result<T>(op, x.shape(), std::move(out), {&x}, [=](Node<T>& self) {
    const T fault = fault_factor<T>(name);
    auto& dx = xn->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += fault * self.grad[i] * deriv(xn->data[i], self.data[i]);
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T{0} || std::isnan(v) ? v : T{0}; },
      [](T in, T) { return in > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double negative_slope) {
  const T s = static_cast<T>(negative_slope);
  return unary<T>(
      "leaky_relu", x, [s](T v) { return v > T{0} ? v : s * v; },
      [s](T in, T) { return in > T{0} ? T{1} : s; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
  return unary<T>(
      "sigmoid", x,
      [lo, hi](T v) {
        T y;
        if (v >= T{0}) {
          y = T{1} / (T{1} + std::exp(-v));
        } else {
          const T e = std::exp(v);
          y = e / (T{1} + e);
        }
        return std::clamp(y, lo, hi);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
  const char* op = "prelu";
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("prelu: input must have a channel axis, got " + to_string(s));
  require_axis(op, "slope length", slope.numel(), "input channel axis (dim 1)", s[1]);
  const Index n = s[0], c = s[1];
  const Index inner = x.numel() / (n * c);
  auto in = x.data();
  std::vector<T> out(in.size());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const T a = slope[ch];
      const Index base = (b * c + ch) * inner;
      for (Index i = 0; i < inner; ++i) {
        const T v = in[base + i];
        out[base + i] = v > T{0} ? v : a * v;
      }
    }
  }
  Node<T>* xn = raw(x);
  Node<T>* an = raw(slope);
  return detail::make_result<T>(op, s, std::move(out), {&x, &slope}, [=](Node<T>& self) {
    const T fault = fault_factor<T>("prelu");
    for (Index ch = 0; ch < c; ++ch) {
      const T a = an->data[static_cast<std::size_t>(ch)];
      double da = 0.0;
      for (Index b = 0; b < n; ++b) {
        const Index base = (b * c + ch) * inner;
        for (Index i = 0; i < inner; ++i) {
          const T v = xn->data[base + i];
          const T g = self.grad[base + i];
          if (wants_grad(xn)) xn->ensure_grad()[base + i] += fault * (v > T{0} ? g : a * g);
          if (v <= T{0}) da += static_cast<double>(g) * v;
        }
      }
      if (wants_grad(an)) an->ensure_grad()[static_cast<std::size_t>(ch)] += static_cast<T>(da);
    }
  });
}

// ---------------------------------------------------------------------------

namespace {

struct AxisWeights {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

AxisWeights corner_aligned(Index in, Index out) {
  AxisWeights a;
  a.lo.resize(static_cast<std::size_t>(out));
  a.hi.resize(a.lo.size());
  a.frac.resize(a.lo.size());
  for (Index i = 0; i < out; ++i) {
    const double src =
        (in > 1 && out > 1) ? static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    Index lo = static_cast<Index>(std::floor(src));
    lo = std::clamp<Index>(lo, 0, in - 1);
    const Index hi = std::min(lo + 1, in - 1);
    a.lo[static_cast<std::size_t>(i)] = lo;
    a.hi[static_cast<std::size_t>(i)] = hi;
    a.frac[static_cast<std::size_t>(i)] = hi == lo ? 0.0 : src - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int factor) {
  require_rank("bilinear_upsample", "input", x.shape(), 4);
  if (factor < 1) throw ContractError("bilinear_upsample: factor must be >= 1");
  const Shape& s = x.shape();
  const Index n = s[0], c = s[1], h = s[2], w = s[3];
  const Index oh = h * factor, ow = w * factor;
  AxisWeights ay = corner_aligned(h, oh);
  AxisWeights ax = corner_aligned(w, ow);
  auto in = x.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * oh * ow));
  for (Index p = 0; p < n * c; ++p) {
    const T* src = in.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (Index i = 0; i < oh; ++i) {
      const auto yi = static_cast<std::size_t>(i);
      const double fy = ay.frac[yi];
      const T* r0 = src + ay.lo[yi] * w;
      const T* r1 = src + ay.hi[yi] * w;
      for (Index j = 0; j < ow; ++j) {
        const auto xj = static_cast<std::size_t>(j);
        const double fx = ax.frac[xj];
        const double top = (1.0 - fx) * r0[ax.lo[xj]] + fx * r0[ax.hi[xj]];
        const double bot = (1.0 - fx) * r1[ax.lo[xj]] + fx * r1[ax.hi[xj]];
        dst[i * ow + j] = static_cast<T>((1.0 - fy) * top + fy * bot);
      }
    }
  }
  Node<T>* xn = raw(x);
  return detail::make_result<T>(
      "bilinear_upsample", Shape{n, c, oh, ow}, std::move(out), {&x},
      [=, ay = std::move(ay), ax = std::move(ax)](Node<T>& self) {
        const double fault = fault_factor<double>("bilinear_upsample");
        auto& dx = xn->ensure_grad();
        for (Index p = 0; p < n * c; ++p) {
          const T* g = self.grad.data() + p * oh * ow;
          T* d = dx.data() + p * h * w;
          for (Index i = 0; i < oh; ++i) {
            const auto yi = static_cast<std::size_t>(i);
            const double fy = ay.frac[yi];
            T* r0 = d + ay.lo[yi] * w;
            T* r1 = d + ay.hi[yi] * w;
            for (Index j = 0; j < ow; ++j) {
              const auto xj = static_cast<std::size_t>(j);
              const double fx = ax.frac[xj];
              const double v = fault * g[i * ow + j];
              r0[ax.lo[xj]] += static_cast<T>((1.0 - fy) * (1.0 - fx) * v);
              r0[ax.hi[xj]] += static_cast<T>((1.0 - fy) * fx * v);
              r1[ax.lo[xj]] += static_cast<T>(fy * (1.0 - fx) * v);
              r1[ax.hi[xj]] += static_cast<T>(fy * fx * v);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const char* op = "dense";
  require_rank(op, "input", input.shape(), 2);
  require_rank(op, "weight", weight.shape(), 2);
  const Index n = input.dim(0), d = input.dim(1), e = weight.dim(1);
  require_axis(op, "input feature axis (dim 1)", d, "weight input axis (dim 0)", weight.dim(0));
  if (bias.defined()) {
    require_axis(op, "bias length (dim 0)", bias.numel(), "weight output axis (dim 1)", e);
  }
  std::vector<T> out(static_cast<std::size_t>(n * e));
  MatMap<T> om(out.data(), n, e);
  om.noalias() = ConstMatMap<T>(input.data().data(), n, d) * ConstMatMap<T>(weight.data().data(), d, e);
  if (bias.defined()) {
    for (Index r = 0; r < n; ++r) {
      for (Index j = 0; j < e; ++j) om(r, j) += bias[j];
    }
  }
  Node<T>* xn = raw(input);
  Node<T>* wn = raw(weight);
  Node<T>* bn = raw(bias);
  return detail::make_result<T>(op, Shape{n, e}, std::move(out), {&input, &weight, &bias},
                                [=](Node<T>& self) {
                                  const T fault = fault_factor<T>("dense");
                                  ConstMatMap<T> dy(self.grad.data(), n, e);
                                  if (wants_grad(xn)) {
                                    MatMap<T>(xn->ensure_grad().data(), n, d).noalias() +=
                                        fault * (dy * ConstMatMap<T>(wn->data.data(), d, e).transpose());
                                  }
                                  if (wants_grad(wn)) {
                                    MatMap<T>(wn->ensure_grad().data(), d, e).noalias() +=
                                        ConstMatMap<T>(xn->data.data(), n, d).transpose() * dy;
                                  }
                                  if (wants_grad(bn)) {
                                    auto& bg = bn->ensure_grad();
                                    for (Index j = 0; j < e; ++j) {
                                      double acc = 0.0;
                                      for (Index r = 0; r < n; ++r) acc += dy(r, j);
                                      bg[static_cast<std::size_t>(j)] += static_cast<T>(acc);
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const char* op = "concat_channels";
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size()) {
    throw DimensionError("concat_channels: incompatible ranks, " + to_string(sa) + " vs " + to_string(sb));
  }
  require_axis(op, "batch axis (dim 0) of a", sa[0], "batch axis (dim 0) of b", sb[0]);
  for (std::size_t ax = 2; ax < sa.size(); ++ax) {
    require_axis(op, "axis " + std::to_string(ax) + " of a", sa[ax], "axis " + std::to_string(ax) + " of b",
                 sb[ax]);
  }
  const Index n = sa[0], ca = sa[1], cb = sb[1];
  const Index inner = a.numel() / (n * ca);
  Shape os = sa;
  os[1] = ca + cb;
  std::vector<T> out(static_cast<std::size_t>(n * (ca + cb) * inner));
  for (Index i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * inner, ca * inner, out.data() + i * (ca + cb) * inner);
    std::copy_n(b.data().data() + i * cb * inner, cb * inner,
                out.data() + i * (ca + cb) * inner + ca * inner);
  }
  Node<T>* an = raw(a);
  Node<T>* bn = raw(b);
  return detail::make_result<T>(op, os, std::move(out), {&a, &b}, [=](Node<T>& self) {
    const T fault = fault_factor<T>("concat_channels");
    for (Index i = 0; i < n; ++i) {
      const T* g = self.grad.data() + i * (ca + cb) * inner;
      if (wants_grad(an)) {
        T* d = an->ensure_grad().data() + i * ca * inner;
        for (Index j = 0; j < ca * inner; ++j) d[j] += fault * g[j];
      }
      if (wants_grad(bn)) {
        T* d = bn->ensure_grad().data() + i * cb * inner;
        for (Index j = 0; j < cb * inner; ++j) d[j] += fault * g[ca * inner + j];
      }
    }
  });
}

namespace {

template <typename T, typename Fwd, typename Back>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Back back) {
  require_same_shape(op, a.shape(), b.shape());
  auto da = a.data();
  auto db = b.data();
  std::vector<T> out(da.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(da[i], db[i]);
  Node<T>* an = raw(a);
  Node<T>* bn = raw(b);
  std::string name = op;
  return detail::make_result<T>(op, a.shape(), std::move(out), {&a, &b}, [=](Node<T>& self) {
    const T fault = fault_factor<T>(name);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const auto [ga, gb] = back(an->data[i], bn->data[i], self.grad[i]);
      if (wants_grad(an)) an->ensure_grad()[i] += fault * ga;
      if (wants_grad(bn)) bn->ensure_grad()[i] += fault * gb;
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T g) { return std::pair<T, T>{g, g}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T g) { return std::pair<T, T>{g, -g}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T g) { return std::pair<T, T>{g * y, g * x}; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
  const T f = static_cast<T>(factor);
  return unary<T>(
      "scale", x, [f](T v) { return f * v; }, [f](T, T) { return f; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  return unary<T>(
      "clamp", x, [l, h](T v) { return std::clamp(v, l, h); },
      [l, h](T in, T) { return (in >= l && in <= h) ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (element_count(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  Node<T>* xn = raw(x);
  return detail::make_result<T>("reshape", std::move(shape), std::move(out), {&x}, [=](Node<T>& self) {
    const T fault = fault_factor<T>("reshape");
    auto& dx = xn->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += fault * self.grad[i];
  });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  const Index n = x.dim(0);
  return reshape(x, Shape{n, x.numel() / n});
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  Node<T>* xn = raw(x);
  return detail::make_result<T>("sum", Shape{1}, std::vector<T>{static_cast<T>(acc)}, {&x},
                                [=](Node<T>& self) {
                                  const T g = fault_factor<T>("sum") * self.grad[0];
                                  for (auto& d : xn->ensure_grad()) d += g;
                                });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  const double count = static_cast<double>(x.numel());
  Node<T>* xn = raw(x);
  return detail::make_result<T>("mean", Shape{1}, std::vector<T>{static_cast<T>(acc / count)}, {&x},
                                [=](Node<T>& self) {
                                  const T g = static_cast<T>(fault_factor<double>("mean") *
                                                             self.grad[0] / count);
                                  for (auto& d : xn->ensure_grad()) d += g;
                                });
}

// ---------------------------------------------------------------------------

#define LIQUIFORM_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);       \
  template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,   \
                                      int, int);                                                   \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                BatchNormState<T>&, Mode, double, double);                         \
  template Tensor<T> relu(const Tensor<T>&);                                                       \
  template Tensor<T> prelu(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                    \
  template Tensor<T> tanh(const Tensor<T>&);                                                       \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int);                                     \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> scale(const Tensor<T>&, double);                                              \
  template Tensor<T> clamp(const Tensor<T>&, double, double);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> flatten(const Tensor<T>&);                                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&);

LIQUIFORM_INSTANTIATE_OPS(float)
LIQUIFORM_INSTANTIATE_OPS(double)

}  // namespace liquiform
