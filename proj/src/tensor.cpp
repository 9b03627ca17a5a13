#include "eegprobe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eegprobe/errors.hpp"

namespace eegprobe::ad {

namespace {

std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace

struct Tensor::Node {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;  // leaf that wants gradients
  bool needs_grad = false;     // requires_grad, or depends on such a leaf
  std::vector<double> grad;
  const Tape* producer = nullptr;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

Tensor Tensor::from_data(std::vector<double> data, std::vector<std::size_t> shape,
                         bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive");
  }
  if (data.size() != numel(shape)) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw ContractError("tensor initialized with non-finite value");
  }
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  t.node_->needs_grad = requires_grad;
  return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  std::vector<double> d(numel(shape), 0.0);
  return from_data(std::move(d), std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  std::vector<double> d(numel(shape), value);
  return from_data(std::move(d), std::move(shape), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({value}, {1}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const {
  if (!node_) throw Error("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->data.size() : 0; }

std::size_t Tensor::rows() const {
  if (shape().size() != 2) throw DimensionError("rows(): tensor is not 2-D");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (shape().size() != 2) throw DimensionError("cols(): tensor is not 2-D");
  return shape()[1];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const {
  if (!node_) throw Error("use of undefined tensor");
  return node_->data;
}

std::vector<double>& Tensor::data_mut() {
  if (!node_) throw Error("use of undefined tensor");
  return node_->data;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw Error("tensor has no accumulated gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

double Tensor::value() const {
  if (size() != 1) throw DimensionError("value(): tensor is not scalar");
  return node_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (shape().size() != 2) throw DimensionError("at(): tensor is not 2-D");
  if (i >= shape()[0] || j >= shape()[1]) throw DimensionError("at(): index out of range");
  return node_->data[i * shape()[1] + j];
}

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(data(), shape(), requires_grad);
}

Tensor Tape::make_output(std::vector<double> data, std::vector<std::size_t> shape,
                         bool needs_grad, const char* op_name) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw ContractError(std::string(op_name) + ": non-finite value in result");
    }
  }
  Tensor t;
  t.node_ = std::make_shared<Tensor::Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->needs_grad = needs_grad;
  t.node_->producer = this;
  outputs_.push_back(t.node_);
  return t;
}

void Tape::record(std::function<void()> fn) { ops_.push_back({std::move(fn)}); }

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: operands must be 2-D, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = ad + i * k;
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = bd + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  const bool needs = a.node_->needs_grad || b.node_->needs_grad;
  Tensor c = make_output(std::move(out), {m, n}, needs, "matmul");
  if (needs) {
    auto an = a.node_, bn = b.node_, cn = c.node_;
    record([an, bn, cn, m, k, n]() {
      if (cn->grad.empty()) return;
      const double* g = cn->grad.data();
      if (an->needs_grad) {
        an->ensure_grad();
        // dA = dC . B^T
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          double* garow = an->grad.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = bn->data.data() + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            garow[p] += s;
          }
        }
      }
      if (bn->needs_grad) {
        bn->ensure_grad();
        // dB = A^T . dC
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = an->data.data() + i * k;
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* gbrow = bn->grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return c;
}

Tensor Tape::conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride) {
  if (x.rank() != 2 || kernels.rank() != 3) {
    throw DimensionError("conv1d: expected x as [cin x T] and kernels as [cout x cin x k]");
  }
  if (stride == 0) throw ConfigError("conv1d: stride must be positive");
  const std::size_t cin = x.shape()[0], T = x.shape()[1];
  const std::size_t cout = kernels.shape()[0], cin2 = kernels.shape()[1],
                    k = kernels.shape()[2];
  if (cin != cin2) {
    throw DimensionError("conv1d: input channels " + std::to_string(cin) +
                         " do not match kernel channels " + std::to_string(cin2));
  }
  if (k > T) {
    throw DimensionError("conv1d: kernel length " + std::to_string(k) +
                         " exceeds input length " + std::to_string(T));
  }
  const std::size_t tout = (T - k) / stride + 1;
  const double* xd = x.data().data();
  const double* kd = kernels.data().data();
  std::vector<double> out(cout * tout, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    double* orow = out.data() + o * tout;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* krow = kd + (o * cin + ci) * k;
      const double* xrow = xd + ci * T;
      for (std::size_t t = 0; t < tout; ++t) {
        const double* xs = xrow + t * stride;
        double s = 0.0;
        for (std::size_t tau = 0; tau < k; ++tau) s += krow[tau] * xs[tau];
        orow[t] += s;
      }
    }
  }
  const bool needs = x.node_->needs_grad || kernels.node_->needs_grad;
  Tensor c = make_output(std::move(out), {cout, tout}, needs, "conv1d");
  if (needs) {
    auto xn = x.node_, kn = kernels.node_, cn = c.node_;
    record([xn, kn, cn, cin, T, cout, k, stride, tout]() {
      if (cn->grad.empty()) return;
      const double* g = cn->grad.data();
      if (xn->needs_grad) {
        xn->ensure_grad();
        for (std::size_t o = 0; o < cout; ++o) {
          const double* grow = g + o * tout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* krow = kn->data.data() + (o * cin + ci) * k;
            double* gxrow = xn->grad.data() + ci * T;
            for (std::size_t t = 0; t < tout; ++t) {
              const double gv = grow[t];
              double* gxs = gxrow + t * stride;
              for (std::size_t tau = 0; tau < k; ++tau) gxs[tau] += krow[tau] * gv;
            }
          }
        }
      }
      if (kn->needs_grad) {
        kn->ensure_grad();
        for (std::size_t o = 0; o < cout; ++o) {
          const double* grow = g + o * tout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xrow = xn->data.data() + ci * T;
            double* gkrow = kn->grad.data() + (o * cin + ci) * k;
            for (std::size_t t = 0; t < tout; ++t) {
              const double gv = grow[t];
              const double* xs = xrow + t * stride;
              for (std::size_t tau = 0; tau < k; ++tau) gkrow[tau] += xs[tau] * gv;
            }
          }
        }
      }
    });
  }
  return c;
}

Tensor Tape::row_softmax(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("row_softmax: tensor must be 2-D");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  const double* xd = x.data().data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xrow = xd + i * n;
    double* orow = out.data() + i * n;
    double mx = xrow[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xrow[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(xrow[j] - mx);
      s += orow[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
  }
  const bool needs = x.node_->needs_grad;
  Tensor c = make_output(std::move(out), {m, n}, needs, "row_softmax");
  if (needs) {
    auto xn = x.node_, cn = c.node_;
    record([xn, cn, m, n]() {
      if (cn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* p = cn->data.data() + i * n;
        const double* g = cn->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += p[j] * g[j];
        double* gx = xn->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += p[j] * (g[j] - dot);
      }
    });
  }
  return c;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return binary_(a, b, 0); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return binary_(a, b, 1); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return binary_(a, b, 2); }

Tensor Tape::binary_(const Tensor& a, const Tensor& b, int kind) {
  static const char* names[] = {"add", "sub", "mul"};
  const char* name = names[kind];
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.size() == 1;
  const bool b_scalar = b.size() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError(std::string(name) + ": incompatible shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t n = std::max(a.size(), b.size());
  const auto& big_shape = a.size() >= b.size() ? a.shape() : b.shape();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double av = ad[same || !a_scalar ? i : 0];
    const double bv = bd[same || !b_scalar ? i : 0];
    out[i] = kind == 0 ? av + bv : kind == 1 ? av - bv : av * bv;
  }
  const bool needs = a.node_->needs_grad || b.node_->needs_grad;
  Tensor c = make_output(std::move(out), big_shape, needs, name);
  if (needs) {
    auto an = a.node_, bn = b.node_, cn = c.node_;
    const bool abc = !same && a_scalar && n > 1;  // a broadcast
    const bool bbc = !same && b_scalar && n > 1 && !abc;
    record([an, bn, cn, kind, n, abc, bbc]() {
      if (cn->grad.empty()) return;
      const double* g = cn->grad.data();
      if (an->needs_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const double gi = kind == 2 ? g[i] * bn->data[bbc ? 0 : i] : g[i];
          an->grad[abc ? 0 : i] += gi;
        }
      }
      if (bn->needs_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          double gi;
          if (kind == 0) gi = g[i];
          else if (kind == 1) gi = -g[i];
          else gi = g[i] * an->data[abc ? 0 : i];
          bn->grad[bbc ? 0 : i] += gi;
        }
      }
    });
  }
  return c;
}

Tensor Tape::scale(const Tensor& a, double c) {
  std::vector<double> out(a.data());
  for (double& v : out) v *= c;
  const bool needs = a.node_->needs_grad;
  Tensor t = make_output(std::move(out), a.shape(), needs, "scale");
  if (needs) {
    auto an = a.node_, tn = t.node_;
    record([an, tn, c]() {
      if (tn->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += c * tn->grad[i];
    });
  }
  return t;
}

Tensor Tape::leaky_relu(const Tensor& x, double alpha) {
  std::vector<double> out(x.data());
  for (double& v : out) {
    if (v < 0.0) v *= alpha;
  }
  const bool needs = x.node_->needs_grad;
  Tensor t = make_output(std::move(out), x.shape(), needs, "leaky_relu");
  if (needs) {
    auto xn = x.node_, tn = t.node_;
    record([xn, tn, alpha]() {
      if (tn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->grad.size(); ++i) {
        // slope at exactly 0 is alpha, by convention
        const double slope = xn->data[i] > 0.0 ? 1.0 : alpha;
        xn->grad[i] += slope * tn->grad[i];
      }
    });
  }
  return t;
}

Tensor Tape::add_col(const Tensor& x, const Tensor& col) {
  if (x.rank() != 2 || col.rank() != 2 || col.shape()[1] != 1 ||
      col.shape()[0] != x.shape()[0]) {
    throw DimensionError("add_col: expected x [m x n] and col [m x 1]");
  }
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(x.data());
  for (std::size_t i = 0; i < m; ++i) {
    const double cv = col.data()[i];
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += cv;
  }
  const bool needs = x.node_->needs_grad || col.node_->needs_grad;
  Tensor t = make_output(std::move(out), x.shape(), needs, "add_col");
  if (needs) {
    auto xn = x.node_, cn = col.node_, tn = t.node_;
    record([xn, cn, tn, m, n]() {
      if (tn->grad.empty()) return;
      const double* g = tn->grad.data();
      if (xn->needs_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) xn->grad[i] += g[i];
      }
      if (cn->needs_grad) {
        cn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j];
          cn->grad[i] += s;
        }
      }
    });
  }
  return t;
}

Tensor Tape::l2_normalize_rows(const Tensor& x, double eps) {
  if (x.rank() != 2) throw DimensionError("l2_normalize_rows: tensor must be 2-D");
  if (!(eps > 0.0)) throw ConfigError("l2_normalize_rows: eps must be > 0");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xrow = x.data().data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xrow[j] * xrow[j];
    const double norm = std::sqrt(s);
    norms[i] = norm;
    const double inv = 1.0 / std::max(norm, eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xrow[j] * inv;
  }
  const bool needs = x.node_->needs_grad;
  Tensor t = make_output(std::move(out), x.shape(), needs, "l2_normalize_rows");
  if (needs) {
    auto xn = x.node_, tn = t.node_;
    record([xn, tn, m, n, eps, norms = std::move(norms)]() {
      if (tn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = tn->grad.data() + i * n;
        double* gx = xn->grad.data() + i * n;
        if (norms[i] < eps) {
          const double inv = 1.0 / eps;
          for (std::size_t j = 0; j < n; ++j) gx[j] += g[j] * inv;
        } else {
          const double* y = tn->data.data() + i * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
          const double inv = 1.0 / norms[i];
          for (std::size_t j = 0; j < n; ++j) gx[j] += (g[j] - y[j] * dot) * inv;
        }
      }
    });
  }
  return t;
}

Tensor Tape::concat_rows(std::span<const Tensor> xs) {
  if (xs.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t n = xs[0].cols();
  std::size_t total = 0;
  bool needs = false;
  for (const Tensor& x : xs) {
    if (x.cols() != n) {
      throw DimensionError("concat_rows: column counts differ (" + std::to_string(n) +
                           " vs " + std::to_string(x.cols()) + ")");
    }
    total += x.rows();
    needs = needs || x.node_->needs_grad;
  }
  std::vector<double> out;
  out.reserve(total * n);
  for (const Tensor& x : xs) out.insert(out.end(), x.data().begin(), x.data().end());
  Tensor t = make_output(std::move(out), {total, n}, needs, "concat_rows");
  if (needs) {
    std::vector<std::shared_ptr<Tensor::Node>> ins;
    ins.reserve(xs.size());
    for (const Tensor& x : xs) ins.push_back(x.node_);
    auto tn = t.node_;
    record([ins = std::move(ins), tn]() {
      if (tn->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& in : ins) {
        const std::size_t cnt = in->data.size();
        if (in->needs_grad) {
          in->ensure_grad();
          for (std::size_t i = 0; i < cnt; ++i) in->grad[i] += tn->grad[off + i];
        }
        off += cnt;
      }
    });
  }
  return t;
}

Tensor Tape::concat_cols(std::span<const Tensor> xs) {
  if (xs.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t m = xs[0].rows();
  std::size_t total = 0;
  bool needs = false;
  for (const Tensor& x : xs) {
    if (x.rows() != m) {
      throw DimensionError("concat_cols: row counts differ (" + std::to_string(m) +
                           " vs " + std::to_string(x.rows()) + ")");
    }
    total += x.cols();
    needs = needs || x.node_->needs_grad;
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (const Tensor& x : xs) {
    const std::size_t w = x.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(x.data().data() + i * w, w, out.data() + i * total + off);
    }
    off += w;
  }
  Tensor t = make_output(std::move(out), {m, total}, needs, "concat_cols");
  if (needs) {
    std::vector<std::shared_ptr<Tensor::Node>> ins;
    std::vector<std::size_t> widths;
    for (const Tensor& x : xs) {
      ins.push_back(x.node_);
      widths.push_back(x.cols());
    }
    auto tn = t.node_;
    record([ins = std::move(ins), widths = std::move(widths), tn, m, total]() {
      if (tn->grad.empty()) return;
      std::size_t off = 0;
      for (std::size_t idx = 0; idx < ins.size(); ++idx) {
        const std::size_t w = widths[idx];
        if (ins[idx]->needs_grad) {
          ins[idx]->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
              ins[idx]->grad[i * w + j] += tn->grad[i * total + off + j];
            }
          }
        }
        off += w;
      }
    });
  }
  return t;
}

Tensor Tape::transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: tensor must be 2-D");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.data()[i * n + j];
  }
  const bool needs = x.node_->needs_grad;
  Tensor t = make_output(std::move(out), {n, m}, needs, "transpose");
  if (needs) {
    auto xn = x.node_, tn = t.node_;
    record([xn, tn, m, n]() {
      if (tn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) xn->grad[i * n + j] += tn->grad[j * m + i];
      }
    });
  }
  return t;
}

Tensor Tape::select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() != 2) throw DimensionError("select_rows: tensor must be 2-D");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  for (std::size_t r : rows) {
    if (r >= m) throw DimensionError("select_rows: row index out of range");
  }
  std::vector<double> out(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data().data() + rows[i] * n, n, out.data() + i * n);
  }
  const bool needs = x.node_->needs_grad;
  Tensor t = make_output(std::move(out), {rows.size(), n}, needs, "select_rows");
  if (needs) {
    auto xn = x.node_, tn = t.node_;
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    record([xn, tn, idx = std::move(idx), n]() {
      if (tn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          xn->grad[idx[i] * n + j] += tn->grad[i * n + j];
        }
      }
    });
  }
  return t;
}

Tensor Tape::reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: element count mismatch, " + shape_str(x.shape()) +
                         " -> " + shape_str(shape));
  }
  const bool needs = x.node_->needs_grad;
  Tensor t = make_output(x.data(), std::move(shape), needs, "reshape");
  if (needs) {
    auto xn = x.node_, tn = t.node_;
    record([xn, tn]() {
      if (tn->grad.empty()) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += tn->grad[i];
    });
  }
  return t;
}

Tensor Tape::sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool needs = x.node_->needs_grad;
  Tensor t = make_output({s}, {1}, needs, "sum");
  if (needs) {
    auto xn = x.node_, tn = t.node_;
    record([xn, tn]() {
      if (tn->grad.empty()) return;
      xn->ensure_grad();
      const double g = tn->grad[0];
      for (double& gv : xn->grad) gv += g;
    });
  }
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined loss tensor");
  if (loss.size() != 1) throw DimensionError("backward: loss must be scalar");
  if (loss.node_->producer != this) {
    throw ContractError("backward: loss was not produced by this tape (detached)");
  }
  // Intermediate grads are per-sweep scratch; leaf grads accumulate across
  // calls. Every intermediate is some op output, so clearing outputs_ is
  // exactly "clear non-leaves".
  for (const auto& node : outputs_) node->grad.clear();
  loss.node_->ensure_grad();
  loss.node_->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
}

double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                         const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: h must be > 0");
  Tensor xg = x.clone(/*requires_grad=*/true);
  std::vector<double> analytic(x.size(), 0.0);
  {
    Tape tape;
    Tensor loss = f(tape, xg);
    if (loss.size() != 1) {
      throw DimensionError("finite_diff_check: f must be scalar-valued");
    }
    tape.backward(loss);
    if (xg.has_grad()) analytic = xg.grad();
  }
  double max_err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x.clone(false);
    Tensor xm = x.clone(false);
    xp.data_mut()[i] += h;
    xm.data_mut()[i] -= h;
    double fp, fm;
    {
      Tape tp;
      fp = f(tp, xp).value();
    }
    {
      Tape tm;
      fm = f(tm, xm).value();
    }
    const double central = (fp - fm) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - central) / (std::abs(analytic[i]) + std::abs(central) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace eegprobe::ad
