#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace eegprobe::ad {

class Tape;

// Dense float64 array, row-major. Copying a Tensor copies the handle, not
// the buffer: the same node keeps accumulating gradients wherever it is
// referenced. Use clone() for an independent buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(std::vector<double> data, std::vector<std::size_t> shape,
                          bool requires_grad = false);
  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  // 2-D conveniences; throw on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  bool requires_grad() const;
  const std::vector<double>& data() const;
  std::vector<double>& data_mut();  // for leaf updates (optimizer steps)
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if no grad accumulated
  void zero_grad();

  double value() const;                            // scalar tensors
  double at(std::size_t i, std::size_t j) const;   // 2-D element access

  Tensor clone(bool requires_grad) const;  // deep copy, detached

 private:
  friend class Tape;
  struct Node;
  std::shared_ptr<Node> node_;
};

// Define-by-run tape. Every primitive records its backward closure in
// execution order; backward() replays them in reverse, which is a valid
// reverse-topological order. A tape and the tensors flowing through it
// belong to one logical thread; parallelism happens across tapes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // C = A.B ; dA += dC.B^T, dB += A^T.dC
  Tensor matmul(const Tensor& a, const Tensor& b);

  // Valid (no padding) cross-correlation along the last axis.
  // x: cin x T, kernels: cout x cin x k, output: cout x T' with
  // T' = floor((T-k)/stride)+1.
  Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride);

  // Numerically stable softmax over each row; rows sum to 1.
  Tensor row_softmax(const Tensor& x);

  // Elementwise binaries. Exact-shape, or one operand is a 1-element tensor
  // (scalar broadcast). No other broadcasting.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  // max(x, 0) + alpha*min(x, 0); derivative at 0 is defined as alpha.
  Tensor leaky_relu(const Tensor& x, double alpha);

  // Broadcast a column (m x 1) across all columns of x (m x n).
  Tensor add_col(const Tensor& x, const Tensor& col);

  // Rows rescaled to unit L2 norm; rows with norm < eps are scaled by 1/eps.
  Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

  Tensor concat_rows(std::span<const Tensor> xs);
  Tensor concat_cols(std::span<const Tensor> xs);

  Tensor transpose(const Tensor& x);                       // 2-D
  Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);
  Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
  Tensor sum(const Tensor& x);  // scalar total

  // Reverse sweep from a scalar loss produced by this tape. Populates grads
  // on every requires_grad leaf; repeated calls accumulate.
  void backward(const Tensor& loss);

  std::size_t op_count() const { return ops_.size(); }

 private:
  struct OpRecord {
    std::function<void()> backward;
  };
  std::vector<OpRecord> ops_;
  std::vector<std::shared_ptr<Tensor::Node>> outputs_;

  Tensor binary_(const Tensor& a, const Tensor& b, int kind);
  Tensor make_output(std::vector<double> data, std::vector<std::size_t> shape,
                     bool needs_grad, const char* op_name);
  void record(std::function<void()> fn);
};

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |central| + 1e-12) for a scalar-valued function of x.
// The analytic gradient comes from one forward+backward; the differences are
// pure forward evaluations, independent of the backward path they check.
double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                         const Tensor& x, double h = 1e-5);

}  // namespace eegprobe::ad
