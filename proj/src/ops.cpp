#include "mixsynth/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mixsynth/error.hpp"
#include "mixsynth/fft.hpp"
#include "mixsynth/kernels.hpp"

namespace mixsynth::ad {
namespace {

constexpr double kMagnitudeEps2 = 1e-24;  // (1e-12)^2

void require_same(std::string_view kind, const DiffValue& a, const DiffValue& b) {
  if (!a.data().same_shape(b.data())) {
    throw ShapeError(std::string(kind) + ": operand shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

void require_rank(std::string_view kind, const DiffValue& a, std::size_t rank) {
  if (a.data().rank() != rank) {
    throw ShapeError(std::string(kind) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(a.shape()));
  }
}

DiffGraph& graph_of(const DiffValue& v) {
  if (!v.valid()) throw ValidationError("op on an empty DiffValue");
  return *v.graph();
}

// y = f(x) elementwise; dfdx(x) gives the local derivative.
template <class F, class D>
DiffValue unary(std::string_view kind, DiffValue a, F f, D dfdx) {
  const Tensor* x = &a.data();
  Tensor y(x->shape());
  for (std::size_t i = 0; i < x->size(); ++i) y[i] = f((*x)[i]);
  return graph_of(a).record(kind, {a}, std::move(y), [x, dfdx](const Tensor& gy, std::span<Tensor* const> gin) {
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx((*x)[i]);
  });
}

}  // namespace

DiffValue add(DiffValue a, DiffValue b) {
  require_same("add", a, b);
  Tensor y = a.data();
  const Tensor& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return graph_of(a).record("add", {a, b}, std::move(y), [](const Tensor& gy, std::span<Tensor* const> gin) {
    for (Tensor* g : gin) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += gy[i];
    }
  });
}

DiffValue sub(DiffValue a, DiffValue b) {
  require_same("sub", a, b);
  Tensor y = a.data();
  const Tensor& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return graph_of(a).record("sub", {a, b}, std::move(y), [](const Tensor& gy, std::span<Tensor* const> gin) {
    if (gin[0]) for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i];
    if (gin[1]) for (std::size_t i = 0; i < gy.size(); ++i) (*gin[1])[i] -= gy[i];
  });
}

DiffValue mul(DiffValue a, DiffValue b) {
  require_same("mul", a, b);
  const Tensor* av = &a.data();
  const Tensor* bv = &b.data();
  Tensor y(av->shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*av)[i] * (*bv)[i];
  return graph_of(a).record("mul", {a, b}, std::move(y), [av, bv](const Tensor& gy, std::span<Tensor* const> gin) {
    if (gin[0]) for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i] * (*bv)[i];
    if (gin[1]) for (std::size_t i = 0; i < gy.size(); ++i) (*gin[1])[i] += gy[i] * (*av)[i];
  });
}

DiffValue div(DiffValue a, DiffValue b) {
  require_same("div", a, b);
  const Tensor* av = &a.data();
  const Tensor* bv = &b.data();
  Tensor y(av->shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*av)[i] / (*bv)[i];
  return graph_of(a).record("div", {a, b}, std::move(y), [av, bv](const Tensor& gy, std::span<Tensor* const> gin) {
    if (gin[0]) for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i] / (*bv)[i];
    if (gin[1]) {
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const double d = (*bv)[i];
        (*gin[1])[i] -= gy[i] * (*av)[i] / (d * d);
      }
    }
  });
}

DiffValue broadcast(DiffValue scalar, Tensor::Shape shape) {
  if (scalar.size() != 1) {
    throw ShapeError("broadcast: operand shape " + shape_string(scalar.shape()) + " is not a scalar");
  }
  Tensor y(std::move(shape), scalar.data()[0]);
  return graph_of(scalar).record("broadcast", {scalar}, std::move(y),
                                 [](const Tensor& gy, std::span<Tensor* const> gin) {
                                   double s = 0.0;
                                   for (double v : gy.values()) s += v;
                                   (*gin[0])[0] += s;
                                 });
}

DiffValue scale(DiffValue a, double factor) {
  Tensor y = a.data();
  for (double& v : y.values()) v *= factor;
  return graph_of(a).record("scale", {a}, std::move(y), [factor](const Tensor& gy, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += factor * gy[i];
  });
}

DiffValue offset(DiffValue a, double shift) {
  Tensor y = a.data();
  for (double& v : y.values()) v += shift;
  return graph_of(a).record("offset", {a}, std::move(y), [](const Tensor& gy, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i];
  });
}

DiffValue exp(DiffValue a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

DiffValue log(DiffValue a, double floor) {
  return unary(
      "log", a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x) { return x > floor ? 1.0 / x : 0.0; });
}

DiffValue sin(DiffValue a) {
  return unary(
      "sin", a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

namespace {
double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

DiffValue sigmoid(DiffValue a) {
  return unary("sigmoid", a, logistic, [](double x) {
    const double s = logistic(x);
    return s * (1.0 - s);
  });
}

DiffValue silu(DiffValue a) {
  return unary(
      "silu", a, [](double x) { return x * logistic(x); },
      [](double x) {
        const double s = logistic(x);
        return s + x * s * (1.0 - s);
      });
}

DiffValue power(DiffValue a, double exponent) {
  return unary(
      "power", a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x) { return exponent * std::pow(x, exponent - 1.0); });
}

DiffValue cumsum(DiffValue a) {
  const Tensor& x = a.data();
  if (x.rank() == 0) throw ShapeError("cumsum: operand shape " + shape_string(x.shape()) + " has no time axis");
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor y = x;
  for (std::size_t t = 1; t < rows; ++t)
    for (std::size_t c = 0; c < cols; ++c) y[t * cols + c] += y[(t - 1) * cols + c];
  return graph_of(a).record("cumsum", {a}, std::move(y), [rows, cols](const Tensor& gy, std::span<Tensor* const> gin) {
    std::vector<double> run(cols, 0.0);
    for (std::size_t t = rows; t-- > 0;) {
      for (std::size_t c = 0; c < cols; ++c) {
        run[c] += gy[t * cols + c];
        (*gin[0])[t * cols + c] += run[c];
      }
    }
  });
}

namespace {

// Frame index and weight toward the next frame for every output sample.
struct InterpPlan {
  std::vector<std::size_t> row;
  std::vector<double> alpha;
};

InterpPlan plan_interp(std::size_t frames, std::size_t hop, std::size_t total, std::size_t first_center) {
  InterpPlan p;
  p.row.resize(total);
  p.alpha.resize(total);
  const std::size_t last_center = first_center + (frames - 1) * hop;
  for (std::size_t n = 0; n < total; ++n) {
    if (n <= first_center || frames == 1) {
      p.row[n] = 0;
      p.alpha[n] = 0.0;
    } else if (n >= last_center) {
      p.row[n] = frames - 1;
      p.alpha[n] = 0.0;
    } else {
      const std::size_t rel = n - first_center;
      p.row[n] = rel / hop;
      p.alpha[n] = static_cast<double>(rel % hop) / static_cast<double>(hop);
    }
  }
  return p;
}

}  // namespace

DiffValue upsample(DiffValue frames, std::size_t hop, std::size_t total, std::size_t first_center) {
  const Tensor& v = frames.data();
  if (v.rank() == 0 || v.rows() == 0 || hop == 0) {
    throw ShapeError("upsample: needs at least one frame and hop > 0, got shape " + shape_string(v.shape()));
  }
  const std::size_t T = v.rows(), C = v.cols();
  auto plan = std::make_shared<InterpPlan>(plan_interp(T, hop, total, first_center));
  Tensor::Shape shape = v.shape();
  shape[0] = total;
  Tensor y(shape);
  for (std::size_t n = 0; n < total; ++n) {
    const std::size_t r = plan->row[n];
    const double al = plan->alpha[n];
    for (std::size_t c = 0; c < C; ++c) {
      const double v0 = v[r * C + c];
      y[n * C + c] = al == 0.0 ? v0 : v0 + al * (v[(r + 1) * C + c] - v0);
    }
  }
  return graph_of(frames).record("upsample", {frames}, std::move(y),
                                 [plan, C](const Tensor& gy, std::span<Tensor* const> gin) {
                                   Tensor& gv = *gin[0];
                                   for (std::size_t n = 0; n < plan->row.size(); ++n) {
                                     const std::size_t r = plan->row[n];
                                     const double al = plan->alpha[n];
                                     for (std::size_t c = 0; c < C; ++c) {
                                       const double g = gy[n * C + c];
                                       if (al == 0.0) {
                                         gv[r * C + c] += g;
                                       } else {
                                         gv[r * C + c] += (1.0 - al) * g;
                                         gv[(r + 1) * C + c] += al * g;
                                       }
                                     }
                                   }
                                 });
}

namespace {
std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = src[r * cols + c];
  return t;
}
}  // namespace

DiffValue affine(DiffValue x, DiffValue w, DiffValue b) {
  const Tensor& xv = x.data();
  const Tensor& wv = w.data();
  const Tensor& bv = b.data();
  if (wv.rank() != 2 || xv.rank() == 0 || xv.rank() > 2 || bv.rank() != 1) {
    throw ShapeError("affine: incompatible shapes x" + shape_string(xv.shape()) + " w" + shape_string(wv.shape()) +
                     " b" + shape_string(bv.shape()));
  }
  const std::size_t m = xv.rank() == 1 ? 1 : xv.rows();
  const std::size_t k = xv.rank() == 1 ? xv.size() : xv.cols();
  const std::size_t n = wv.shape()[1];
  if (wv.shape()[0] != k || bv.size() != n) {
    throw ShapeError("affine: incompatible shapes x" + shape_string(xv.shape()) + " w" + shape_string(wv.shape()) +
                     " b" + shape_string(bv.shape()));
  }
  Tensor y(xv.rank() == 1 ? Tensor::Shape{n} : Tensor::Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.data(), bv.data() + n, y.data() + i * n);
  const auto& kt = kernels::active();
  kt.gemm_acc(xv.data(), wv.data(), y.data(), m, k, n);
  const Tensor* xp = &xv;
  const Tensor* wp = &wv;
  return graph_of(x).record("affine", {x, w, b}, std::move(y),
                            [xp, wp, m, k, n](const Tensor& gy, std::span<Tensor* const> gin) {
                              const auto& kt = kernels::active();
                              if (gin[0]) {
                                const std::vector<double> wt = transpose(wp->data(), k, n);
                                kt.gemm_acc(gy.data(), wt.data(), gin[0]->data(), m, n, k);
                              }
                              if (gin[1]) {
                                const std::vector<double> xt = transpose(xp->data(), m, k);
                                kt.gemm_acc(xt.data(), gy.data(), gin[1]->data(), k, m, n);
                              }
                              if (gin[2]) {
                                for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j) (*gin[2])[j] += gy[i * n + j];
                              }
                            });
}

DiffValue matmul_const(DiffValue x, const Tensor& matrix) {
  const Tensor& xv = x.data();
  if (matrix.rank() != 2 || xv.rank() != 2 || xv.cols() != matrix.shape()[0]) {
    throw ShapeError("matmul_const: incompatible shapes x" + shape_string(xv.shape()) + " m" +
                     shape_string(matrix.shape()));
  }
  const std::size_t m = xv.rows(), k = xv.cols(), n = matrix.shape()[1];
  Tensor y({m, n});
  kernels::active().gemm_acc(xv.data(), matrix.data(), y.data(), m, k, n);
  auto mt = std::make_shared<std::vector<double>>(transpose(matrix.data(), k, n));
  return graph_of(x).record("matmul_const", {x}, std::move(y), [mt, m, k, n](const Tensor& gy, std::span<Tensor* const> gin) {
    kernels::active().gemm_acc(gy.data(), mt->data(), gin[0]->data(), m, n, k);
  });
}

DiffValue frame(DiffValue signal, std::size_t length, std::size_t hop) {
  require_rank("frame", signal, 1);
  if (length == 0 || hop == 0) throw ShapeError("frame: length and hop must be positive");
  const Tensor& x = signal.data();
  const std::size_t N = x.size();
  const std::size_t F = std::max<std::size_t>(1, (N + hop - 1) / hop);
  Tensor y({F, length});
  for (std::size_t f = 0; f < F; ++f) {
    const std::size_t start = f * hop;
    const std::size_t count = start < N ? std::min(length, N - start) : 0;
    std::copy(x.data() + start, x.data() + start + count, y.data() + f * length);
  }
  return graph_of(signal).record("frame", {signal}, std::move(y),
                                 [F, length, hop, N](const Tensor& gy, std::span<Tensor* const> gin) {
                                   Tensor& gx = *gin[0];
                                   for (std::size_t f = 0; f < F; ++f) {
                                     const std::size_t start = f * hop;
                                     const std::size_t count = start < N ? std::min(length, N - start) : 0;
                                     const double* src = gy.data() + f * length;
                                     for (std::size_t i = 0; i < count; ++i) gx[start + i] += src[i];
                                   }
                                 });
}

namespace {

// Direct transform for lengths that are not powers of two.
struct DftMatrix {
  std::size_t n;
  std::vector<double> cos_t, sin_t;  // (n/2+1) x n
  explicit DftMatrix(std::size_t len) : n(len), cos_t((len / 2 + 1) * len), sin_t((len / 2 + 1) * len) {
    for (std::size_t k = 0; k <= n / 2; ++k)
      for (std::size_t t = 0; t < n; ++t) {
        const double ang = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
        cos_t[k * n + t] = std::cos(ang);
        sin_t[k * n + t] = std::sin(ang);
      }
  }
  void forward(const double* x, Complex* out) const {
    for (std::size_t k = 0; k <= n / 2; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        re += x[t] * cos_t[k * n + t];
        im -= x[t] * sin_t[k * n + t];
      }
      out[k] = {re, im};
    }
  }
  // dx[t] = sum_k Re(G_k) cos - Im(G_k) sin
  void adjoint(const Complex* g, double* dx) const {
    for (std::size_t t = 0; t < n; ++t) dx[t] = 0.0;
    for (std::size_t k = 0; k <= n / 2; ++k)
      for (std::size_t t = 0; t < n; ++t) dx[t] += g[k].real() * cos_t[k * n + t] - g[k].imag() * sin_t[k * n + t];
  }
};

}  // namespace

DiffValue dft_magnitude(DiffValue frames, std::span<const double> window) {
  require_rank("dft_magnitude", frames, 2);
  const Tensor& x = frames.data();
  const std::size_t F = x.rows(), L = x.cols();
  if (window.size() != L || L < 2) {
    throw ShapeError("dft_magnitude: window length " + std::to_string(window.size()) + " vs frames " +
                     shape_string(x.shape()));
  }
  const std::size_t B = L / 2 + 1;
  auto win = std::make_shared<std::vector<double>>(window.begin(), window.end());
  std::shared_ptr<const RealFft> plan;
  std::shared_ptr<const DftMatrix> direct;
  if (is_power_of_two(L)) plan = real_fft_plan(L);
  else direct = std::make_shared<const DftMatrix>(L);

  // spectra kept for the backward pass: X_k / |X_k|
  auto phase = std::make_shared<std::vector<Complex>>(F * B);
  Tensor mag({F, B});
  std::vector<double> buf(L);
  const auto& kt = kernels::active();
  for (std::size_t f = 0; f < F; ++f) {
    const double* row = x.data() + f * L;
    for (std::size_t i = 0; i < L; ++i) buf[i] = row[i] * (*win)[i];
    Complex* spec = phase->data() + f * B;
    if (plan) plan->forward(buf, std::span<Complex>(spec, B));
    else direct->forward(buf.data(), spec);
    double* m = mag.data() + f * B;
    kt.magnitude(reinterpret_cast<const double*>(spec), m, B, kMagnitudeEps2);
    for (std::size_t k = 0; k < B; ++k) spec[k] /= m[k];
  }
  return graph_of(frames).record(
      "dft_magnitude", {frames}, std::move(mag),
      [phase, win, plan, direct, F, L, B](const Tensor& gy, std::span<Tensor* const> gin) {
        std::vector<Complex> g(B);
        std::vector<double> dx(L);
        for (std::size_t f = 0; f < F; ++f) {
          const Complex* u = phase->data() + f * B;
          const double* gm = gy.data() + f * B;
          if (plan) {
            // Re sum_{k<=L/2} G_k e^{+i..} equals the Hermitian inverse with interior bins halved.
            for (std::size_t k = 0; k < B; ++k) g[k] = (k == 0 || k == B - 1 ? 1.0 : 0.5) * gm[k] * u[k];
            plan->inverse(g, dx);
          } else {
            for (std::size_t k = 0; k < B; ++k) g[k] = gm[k] * u[k];
            direct->adjoint(g.data(), dx.data());
          }
          double* out = gin[0]->data() + f * L;
          for (std::size_t i = 0; i < L; ++i) out[i] += dx[i] * (*win)[i];
        }
      });
}

DiffValue sum(DiffValue a) {
  double s = 0.0;
  for (double v : a.data().values()) s += v;
  return graph_of(a).record("sum", {a}, Tensor::scalar(s), [](const Tensor& gy, std::span<Tensor* const> gin) {
    for (double& v : gin[0]->values()) v += gy[0];
  });
}

DiffValue l1_distance(DiffValue a, DiffValue b) {
  require_same("l1_distance", a, b);
  const Tensor* av = &a.data();
  const Tensor* bv = &b.data();
  const double d = kernels::active().l1_distance(av->data(), bv->data(), av->size());
  return graph_of(a).record("l1_distance", {a, b}, Tensor::scalar(d),
                            [av, bv](const Tensor& gy, std::span<Tensor* const> gin) {
                              const double g = gy[0];
                              for (std::size_t i = 0; i < av->size(); ++i) {
                                const double diff = (*av)[i] - (*bv)[i];
                                const double s = diff > 0 ? g : (diff < 0 ? -g : 0.0);
                                if (gin[0]) (*gin[0])[i] += s;
                                if (gin[1]) (*gin[1])[i] -= s;
                              }
                            });
}

DiffValue softmax_rows(DiffValue a) {
  require_rank("softmax_rows", a, 2);
  const Tensor& x = a.data();
  const std::size_t R = x.rows(), C = x.cols();
  auto y = std::make_shared<Tensor>(x.shape());
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = x.data() + r * C;
    double* out = y->data() + r * C;
    const double mx = *std::max_element(in, in + C);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += out[c] = std::exp(in[c] - mx);
    for (std::size_t c = 0; c < C; ++c) out[c] /= s;
  }
  return graph_of(a).record("softmax_rows", {a}, Tensor(*y), [y, R, C](const Tensor& gy, std::span<Tensor* const> gin) {
    for (std::size_t r = 0; r < R; ++r) {
      const double* yr = y->data() + r * C;
      const double* gr = gy.data() + r * C;
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += gr[c] * yr[c];
      double* out = gin[0]->data() + r * C;
      for (std::size_t c = 0; c < C; ++c) out[c] += yr[c] * (gr[c] - dot);
    }
  });
}

DiffValue layer_norm_rows(DiffValue a, double eps) {
  require_rank("layer_norm_rows", a, 2);
  const Tensor& x = a.data();
  const std::size_t R = x.rows(), C = x.cols();
  auto y = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* in = x.data() + r * C;
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += in[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* out = y->data() + r * C;
    for (std::size_t c = 0; c < C; ++c) out[c] = (in[c] - mean) * is;
  }
  return graph_of(a).record("layer_norm_rows", {a}, Tensor(*y),
                            [y, inv_std, R, C](const Tensor& gy, std::span<Tensor* const> gin) {
                              for (std::size_t r = 0; r < R; ++r) {
                                const double* yr = y->data() + r * C;
                                const double* gr = gy.data() + r * C;
                                double mg = 0.0, mgy = 0.0;
                                for (std::size_t c = 0; c < C; ++c) {
                                  mg += gr[c];
                                  mgy += gr[c] * yr[c];
                                }
                                mg /= static_cast<double>(C);
                                mgy /= static_cast<double>(C);
                                double* out = gin[0]->data() + r * C;
                                for (std::size_t c = 0; c < C; ++c) out[c] += (*inv_std)[r] * (gr[c] - mg - yr[c] * mgy);
                              }
                            });
}

DiffValue concat_cols(std::span<const DiffValue> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t R = parts[0].data().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const DiffValue& p : parts) {
    const Tensor& t = p.data();
    if (t.rank() == 0 || t.rank() > 2 || t.rows() != R) {
      throw ShapeError("concat_cols: operand shape " + shape_string(t.shape()) + " does not have " +
                       std::to_string(R) + " rows");
    }
    widths.push_back(t.cols());
    total += t.cols();
  }
  Tensor y({R, total});
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = parts[p].data();
    for (std::size_t r = 0; r < R; ++r)
      std::copy(t.data() + r * widths[p], t.data() + (r + 1) * widths[p], y.data() + r * total + off);
    off += widths[p];
  }
  return graph_of(parts[0]).record("concat_cols", parts, std::move(y),
                                   [widths, R, total](const Tensor& gy, std::span<Tensor* const> gin) {
                                     std::size_t off = 0;
                                     for (std::size_t p = 0; p < widths.size(); ++p) {
                                       if (gin[p]) {
                                         for (std::size_t r = 0; r < R; ++r)
                                           for (std::size_t c = 0; c < widths[p]; ++c)
                                             (*gin[p])[r * widths[p] + c] += gy[r * total + off + c];
                                       }
                                       off += widths[p];
                                     }
                                   });
}

DiffValue slice_cols(DiffValue a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  const Tensor& x = a.data();
  const std::size_t R = x.rows(), C = x.cols();
  if (begin >= end || end > C) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside shape " + shape_string(x.shape()));
  }
  const std::size_t W = end - begin;
  Tensor y({R, W});
  for (std::size_t r = 0; r < R; ++r) std::copy(x.data() + r * C + begin, x.data() + r * C + end, y.data() + r * W);
  return graph_of(a).record("slice_cols", {a}, std::move(y), [R, C, W, begin](const Tensor& gy, std::span<Tensor* const> gin) {
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < W; ++c) (*gin[0])[r * C + begin + c] += gy[r * W + c];
  });
}

DiffValue scale_rows(DiffValue m, DiffValue v) {
  const Tensor& mv = m.data();
  const Tensor& vv = v.data();
  if (mv.rank() != 2 || vv.size() != mv.rows()) {
    throw ShapeError("scale_rows: shapes " + shape_string(mv.shape()) + " and " + shape_string(vv.shape()));
  }
  const std::size_t R = mv.rows(), C = mv.cols();
  Tensor y = mv;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] *= vv[r];
  const Tensor* mp = &mv;
  const Tensor* vp = &vv;
  return graph_of(m).record("scale_rows", {m, v}, std::move(y), [mp, vp, R, C](const Tensor& gy, std::span<Tensor* const> gin) {
    for (std::size_t r = 0; r < R; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double g = gy[r * C + c];
        if (gin[0]) (*gin[0])[r * C + c] += g * (*vp)[r];
        acc += g * (*mp)[r * C + c];
      }
      if (gin[1]) (*gin[1])[r] += acc;
    }
  });
}

namespace {

struct HarmonicState {
  std::vector<double> sin1, cos1, freq, alpha;
  std::vector<std::size_t> seg_begin, seg_row0, seg_row1;
};

}  // namespace

DiffValue harmonic_bank(DiffValue f0, DiffValue amplitudes, const HarmonicBankConfig& cfg) {
  const Tensor& fv = f0.data();
  const Tensor& av = amplitudes.data();
  if (fv.rank() != 1 || av.rank() != 2 || av.rows() != fv.size() || fv.size() == 0 || cfg.hop == 0) {
    throw ShapeError("harmonic_bank: f0 " + shape_string(fv.shape()) + " and amplitudes " +
                     shape_string(av.shape()) + " must share T >= 1");
  }
  const std::size_t T = fv.size(), K = av.cols(), N = cfg.n_samples;
  const double sr = cfg.sample_rate;
  auto st = std::make_shared<HarmonicState>();
  const InterpPlan plan = plan_interp(T, cfg.hop, N, cfg.first_center);
  st->freq.resize(N);
  st->alpha = plan.alpha;
  st->sin1.resize(N);
  st->cos1.resize(N);
  double cycles = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t r = plan.row[n];
    const double al = plan.alpha[n];
    const double f = al == 0.0 ? fv[r] : fv[r] + al * (fv[r + 1] - fv[r]);
    st->freq[n] = f;
    const double theta = 2.0 * std::numbers::pi * cycles;
    st->sin1[n] = std::sin(theta);
    st->cos1[n] = std::cos(theta);
    cycles += f / sr;
    cycles -= std::floor(cycles);
  }
  // runs of samples sharing the same pair of amplitude rows
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t r0 = plan.row[n];
    const std::size_t r1 = plan.alpha[n] == 0.0 && (n <= cfg.first_center || r0 == T - 1) ? r0 : std::min(r0 + 1, T - 1);
    if (st->seg_begin.empty() || st->seg_row0.back() != r0 || st->seg_row1.back() != r1) {
      st->seg_begin.push_back(n);
      st->seg_row0.push_back(r0);
      st->seg_row1.push_back(r1);
    }
  }
  st->seg_begin.push_back(N);

  const double nyquist = sr / 2.0;
  auto make_seg = [st, K, nyquist](const Tensor& amps, std::size_t s) {
    const std::size_t b = st->seg_begin[s];
    return kernels::HarmonicSegment{st->sin1.data() + b,  st->cos1.data() + b,
                                    st->freq.data() + b,  st->alpha.data() + b,
                                    amps.data() + st->seg_row0[s] * K, amps.data() + st->seg_row1[s] * K,
                                    st->seg_begin[s + 1] - b, K, nyquist};
  };
  Tensor y({N});
  const auto& kt = kernels::active();
  for (std::size_t s = 0; s + 1 < st->seg_begin.size(); ++s) kt.harmonic_forward(make_seg(av, s), y.data() + st->seg_begin[s]);

  const Tensor* ap = &av;
  return graph_of(f0).record(
      "harmonic_bank", {f0, amplitudes}, std::move(y),
      [st, ap, make_seg, T, K, N, sr, plan](const Tensor& gy, std::span<Tensor* const> gin) {
        const auto& kt = kernels::active();
        std::vector<double> dtheta(N, 0.0);
        std::vector<double> d0(K), d1(K);
        for (std::size_t s = 0; s + 1 < st->seg_begin.size(); ++s) {
          std::fill(d0.begin(), d0.end(), 0.0);
          std::fill(d1.begin(), d1.end(), 0.0);
          const std::size_t b = st->seg_begin[s];
          kt.harmonic_backward(make_seg(*ap, s), gy.data() + b, dtheta.data() + b, d0.data(), d1.data());
          if (gin[1]) {
            double* r0 = gin[1]->data() + st->seg_row0[s] * K;
            double* r1 = gin[1]->data() + st->seg_row1[s] * K;
            for (std::size_t k = 0; k < K; ++k) {
              r0[k] += d0[k];
              r1[k] += d1[k];
            }
          }
        }
        if (!gin[0]) return;
        // theta(n) = 2 pi / sr * sum_{m<n} f(m)  =>  df(m) = 2 pi / sr * sum_{n>m} dtheta(n)
        const double scale_f = 2.0 * std::numbers::pi / sr;
        double run = 0.0;
        Tensor& gf = *gin[0];
        for (std::size_t m = N; m-- > 0;) {
          const double df = scale_f * run;
          run += dtheta[m];
          const std::size_t r = plan.row[m];
          const double al = plan.alpha[m];
          if (al == 0.0) {
            gf[r] += df;
          } else {
            gf[r] += (1.0 - al) * df;
            gf[r + 1] += al * df;
          }
        }
        (void)T;
      });
}

NoiseExcitation NoiseExcitation::generate(std::size_t frames, std::size_t hop, std::size_t first_center,
                                          std::uint64_t seed) {
  NoiseExcitation ex;
  ex.frames = frames;
  ex.hop = hop;
  ex.first_center = first_center;
  const std::size_t W = 2 * hop;
  ex.samples.resize(frames * W);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < W; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(W));
      ex.samples[t * W + i] = w * normal(rng);
    }
  return ex;
}

DiffValue filtered_noise(DiffValue taps, std::shared_ptr<const NoiseExcitation> excitation, std::size_t n_samples) {
  const Tensor& tv = taps.data();
  if (!excitation || tv.rank() != 2 || tv.rows() != excitation->frames) {
    throw ShapeError("filtered_noise: taps " + shape_string(tv.shape()) + " do not match " +
                     std::to_string(excitation ? excitation->frames : 0) + " excitation frames");
  }
  const std::size_t T = tv.rows(), P = tv.cols(), W = excitation->frame_length();
  const std::size_t out_len = W + P - 1;
  const auto frame_start = [ex = excitation.get(), P](std::size_t t) {
    // window start minus the half-length delay of the centred FIR
    return static_cast<std::ptrdiff_t>(ex->first_center + t * ex->hop) - static_cast<std::ptrdiff_t>(ex->hop) -
           static_cast<std::ptrdiff_t>(P / 2);
  };
  Tensor y({n_samples});
  std::vector<double> buf(out_len);
  const auto& kt = kernels::active();
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    kt.fir_forward(excitation->samples.data() + t * W, W, tv.data() + t * P, P, buf.data());
    const std::ptrdiff_t start = frame_start(t);
    for (std::size_t i = 0; i < out_len; ++i) {
      const std::ptrdiff_t n = start + static_cast<std::ptrdiff_t>(i);
      if (n >= 0 && n < static_cast<std::ptrdiff_t>(n_samples)) y[static_cast<std::size_t>(n)] += buf[i];
    }
  }
  return graph_of(taps).record(
      "filtered_noise", {taps}, std::move(y),
      [excitation, frame_start, T, P, W, out_len, n_samples](const Tensor& gy, std::span<Tensor* const> gin) {
        const auto& kt = kernels::active();
        std::vector<double> gseg(out_len);
        for (std::size_t t = 0; t < T; ++t) {
          const std::ptrdiff_t start = frame_start(t);
          for (std::size_t i = 0; i < out_len; ++i) {
            const std::ptrdiff_t n = start + static_cast<std::ptrdiff_t>(i);
            gseg[i] = (n >= 0 && n < static_cast<std::ptrdiff_t>(n_samples)) ? gy[static_cast<std::size_t>(n)] : 0.0;
          }
          kt.fir_backward(excitation->samples.data() + t * W, W, gseg.data(), P, gin[0]->data() + t * P);
        }
      });
}

namespace {

// Circular correlation/convolution helpers on a zero-padded power-of-two grid.
std::vector<Complex> spectrum_of(const RealFft& fft, const double* x, std::size_t len) {
  std::vector<double> pad(fft.size(), 0.0);
  std::copy(x, x + len, pad.begin());
  std::vector<Complex> s(fft.bins());
  fft.forward(pad, s);
  return s;
}

}  // namespace

DiffValue reverb(DiffValue x, DiffValue ir) {
  require_rank("reverb", x, 1);
  require_rank("reverb", ir, 1);
  const std::size_t N = x.size(), L = ir.size();
  if (L == 0) throw ShapeError("reverb: empty impulse response");
  auto ir_eff = std::make_shared<std::vector<double>>(ir.data().values().begin(), ir.data().values().end());
  (*ir_eff)[0] = 1.0;
  auto fft = real_fft_plan(next_power_of_two(std::max<std::size_t>(2, N + L - 1)));
  const double norm = 1.0 / static_cast<double>(fft->size());
  const auto xs = std::make_shared<std::vector<Complex>>(spectrum_of(*fft, x.data().data(), N));
  const auto hs = std::make_shared<std::vector<Complex>>(spectrum_of(*fft, ir_eff->data(), L));
  std::vector<Complex> prod(fft->bins());
  for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = (*xs)[k] * (*hs)[k];
  std::vector<double> full(fft->size());
  fft->inverse(prod, full);
  Tensor y({N});
  for (std::size_t n = 0; n < N; ++n) y[n] = full[n] * norm;
  return graph_of(x).record("reverb", {x, ir}, std::move(y),
                            [fft, xs, hs, N, L, norm](const Tensor& gy, std::span<Tensor* const> gin) {
                              const std::vector<Complex> gs = spectrum_of(*fft, gy.data(), N);
                              std::vector<Complex> prod(gs.size());
                              std::vector<double> full(fft->size());
                              if (gin[0]) {
                                for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = gs[k] * std::conj((*hs)[k]);
                                fft->inverse(prod, full);
                                for (std::size_t n = 0; n < N; ++n) (*gin[0])[n] += full[n] * norm;
                              }
                              if (gin[1]) {
                                for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = gs[k] * std::conj((*xs)[k]);
                                fft->inverse(prod, full);
                                for (std::size_t j = 1; j < L; ++j) (*gin[1])[j] += full[j] * norm;
                              }
                            });
}

}  // namespace mixsynth::ad
