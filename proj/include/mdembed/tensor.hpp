#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mdembed/error.hpp"

namespace mdembed {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorStorage {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // same length as value when gradients are tracked
  bool requires_grad = false;  // leaf parameter the caller wants gradients for
};

// Shared handle to an immutable-by-convention value buffer. Operations never
// mutate their inputs; optimizers mutate parameter values in place between
// forward passes.
template <typename S>
class Tensor {
 public:
  using Storage = TensorStorage<S>;

  Tensor() = default;

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.value().begin(), t.value().end(), v);
    return t;
  }
  static Tensor from(Shape shape, std::vector<S> data) {
    if (shape_numel(shape) != data.size())
      throw shape_error("Tensor::from: shape " + shape_str(shape) +
                        " does not match data length " +
                        std::to_string(data.size()));
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->value = std::move(data);
    return t;
  }
  static Tensor scalar(S v) { return from({1}, {v}); }

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  std::size_t numel() const { return s_->value.size(); }
  std::size_t rows() const { return s_->shape.at(0); }
  std::size_t cols() const { return s_->shape.at(1); }

  std::vector<S>& value() { return s_->value; }
  const std::vector<S>& value() const { return s_->value; }
  std::vector<S>& grad() { return s_->grad; }
  const std::vector<S>& grad() const { return s_->grad; }
  bool has_grad() const { return !s_->grad.empty(); }
  bool requires_grad() const { return s_->requires_grad; }

  void set_requires_grad(bool on) {
    s_->requires_grad = on;
    if (on && s_->grad.size() != s_->value.size())
      s_->grad.assign(s_->value.size(), S(0));
    if (!on) s_->grad.clear();
  }
  void zero_grad() {
    std::fill(s_->grad.begin(), s_->grad.end(), S(0));
  }

  S item() const {
    if (numel() != 1)
      throw value_error("Tensor::item: tensor is not scalar, shape " +
                        shape_str(shape()));
    return s_->value[0];
  }
  S at(std::size_t i) const { return s_->value.at(i); }
  S at(std::size_t i, std::size_t j) const {
    return s_->value.at(i * cols() + j);
  }

  std::shared_ptr<Storage> storage() const { return s_; }

 private:
  explicit Tensor(Shape shape) {
    s_ = std::make_shared<Storage>();
    s_->value.assign(shape_numel(shape), S(0));
    s_->shape = std::move(shape);
  }

  std::shared_ptr<Storage> s_;
};

// Records one node per primitive operation. Backward replays the recorded
// closures in exact reverse order. Single-owner: a tape must not be shared
// across threads.
template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  struct Node {
    const char* op;
    std::shared_ptr<TensorStorage<S>> out;
    std::function<void()> backward;
  };

  void record(const char* op, const Tensor<S>& out,
              std::function<void()> backward) {
    nodes_.push_back(Node{op, out.storage(), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Frees every recorded closure together with the intermediates it holds.
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

template <typename S>
inline void check_finite(const char* op, const std::vector<S>& v) {
  for (S x : v) {
    if (!std::isfinite(double(x)))
      throw value_error(std::string(op) + ": produced a non-finite value");
  }
}

// Allocates the output's grad buffer and records the node when a tape is
// supplied. Without a tape the operation is a pure value computation.
template <typename S>
inline void finish_op(Tape<S>* tape, const char* op, Tensor<S>& out,
                      std::function<void()> backward) {
  check_finite(op, out.value());
  if (tape != nullptr) {
    out.grad().assign(out.numel(), S(0));
    tape->record(op, out, std::move(backward));
  }
}

// C(n x m) += or = opA(A) * opB(B), row-major. opA(A) is n x k.
template <typename S>
void gemm(bool ta, bool tb, std::size_t n, std::size_t k, std::size_t m,
          const S* a, const S* b, S* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + n * m, S(0));
  if (!ta && !tb) {
    for (std::size_t i = 0; i < n; ++i) {
      S* crow = c + i * m;
      const S* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        S av = arow[p];
        if (av == S(0)) continue;
        const S* brow = b + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    // B stored m x k; C[i,j] = dot(A row i, B row j)
    for (std::size_t i = 0; i < n; ++i) {
      const S* arow = a + i * k;
      S* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) {
        const S* brow = b + j * k;
        S acc = S(0);
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (ta && !tb) {
    // A stored k x n; C[i,:] += A[p,i] * B[p,:]
    for (std::size_t p = 0; p < k; ++p) {
      const S* arow = a + p * n;
      const S* brow = b + p * m;
      for (std::size_t i = 0; i < n; ++i) {
        S av = arow[i];
        if (av == S(0)) continue;
        S* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    // A stored k x n, B stored m x k.
    for (std::size_t p = 0; p < k; ++p) {
      const S* arow = a + p * n;
      for (std::size_t i = 0; i < n; ++i) {
        S av = arow[i];
        if (av == S(0)) continue;
        S* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace detail

// ---- primitives -----------------------------------------------------------

// out = opA(a) * opB(b); trans flags select the transposed reading.
template <typename S>
Tensor<S> matmul(Tape<S>* tape, Tensor<S> a, Tensor<S> b,
                 bool trans_a = false, bool trans_b = false) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw shape_error("matmul: expects rank-2 tensors, got " +
                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
  std::size_t n = trans_a ? a.cols() : a.rows();
  std::size_t k = trans_a ? a.rows() : a.cols();
  std::size_t kb = trans_b ? b.cols() : b.rows();
  std::size_t m = trans_b ? b.rows() : b.cols();
  if (k != kb)
    throw shape_error("matmul: inner dimensions disagree, lhs " +
                      shape_str(a.shape()) + (trans_a ? "^T" : "") + " rhs " +
                      shape_str(b.shape()) + (trans_b ? "^T" : ""));
  Tensor<S> out = Tensor<S>::zeros({n, m});
  detail::gemm(trans_a, trans_b, n, k, m, a.value().data(), b.value().data(),
               out.value().data(), false);
  detail::finish_op(tape, "matmul", out, [a, b, out, trans_a, trans_b, n, k,
                                          m]() mutable {
    const S* g = out.grad().data();
    if (a.has_grad()) {
      S* da = a.grad().data();
      if (!trans_a && !trans_b)       // dA += dY * B^T
        detail::gemm(false, true, n, m, k, g, b.value().data(), da, true);
      else if (!trans_a && trans_b)   // dA += dY * B
        detail::gemm(false, false, n, m, k, g, b.value().data(), da, true);
      else if (trans_a && !trans_b)   // dA += B * dY^T   (A stored k x n)
        detail::gemm(false, true, k, m, n, b.value().data(), g, da, true);
      else                            // dA += B^T * dY^T
        detail::gemm(true, true, k, m, n, b.value().data(), g, da, true);
    }
    if (b.has_grad()) {
      S* db = b.grad().data();
      if (!trans_a && !trans_b)       // dB += A^T * dY
        detail::gemm(true, false, k, n, m, a.value().data(), g, db, true);
      else if (!trans_a && trans_b)   // dB += dY^T * A   (B stored m x k)
        detail::gemm(true, false, m, n, k, g, a.value().data(), db, true);
      else if (trans_a && !trans_b)   // dB += A * dY     (A stored k x n)
        detail::gemm(false, false, k, n, m, a.value().data(), g, db, true);
      else                            // dB += dY^T * A^T
        detail::gemm(true, true, m, n, k, g, a.value().data(), db, true);
    }
  });
  return out;
}

namespace detail {
template <typename S>
void require_same_shape(const char* op, const Tensor<S>& a,
                        const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace detail

template <typename S>
Tensor<S> add(Tape<S>* tape, Tensor<S> a, Tensor<S> b) {
  detail::require_same_shape("add", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = a.value()[i] + b.value()[i];
  detail::finish_op(tape, "add", out, [a, b, out]() mutable {
    if (a.has_grad())
      for (std::size_t i = 0; i < out.numel(); ++i)
        a.grad()[i] += out.grad()[i];
    if (b.has_grad())
      for (std::size_t i = 0; i < out.numel(); ++i)
        b.grad()[i] += out.grad()[i];
  });
  return out;
}

template <typename S>
Tensor<S> sub(Tape<S>* tape, Tensor<S> a, Tensor<S> b) {
  detail::require_same_shape("sub", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = a.value()[i] - b.value()[i];
  detail::finish_op(tape, "sub", out, [a, b, out]() mutable {
    if (a.has_grad())
      for (std::size_t i = 0; i < out.numel(); ++i)
        a.grad()[i] += out.grad()[i];
    if (b.has_grad())
      for (std::size_t i = 0; i < out.numel(); ++i)
        b.grad()[i] -= out.grad()[i];
  });
  return out;
}

template <typename S>
Tensor<S> mul(Tape<S>* tape, Tensor<S> a, Tensor<S> b) {
  detail::require_same_shape("mul", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = a.value()[i] * b.value()[i];
  detail::finish_op(tape, "mul", out, [a, b, out]() mutable {
    if (a.has_grad())
      for (std::size_t i = 0; i < out.numel(); ++i)
        a.grad()[i] += out.grad()[i] * b.value()[i];
    if (b.has_grad())
      for (std::size_t i = 0; i < out.numel(); ++i)
        b.grad()[i] += out.grad()[i] * a.value()[i];
  });
  return out;
}

template <typename S>
Tensor<S> scale(Tape<S>* tape, Tensor<S> a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.value()[i] = a.value()[i] * c;
  detail::finish_op(tape, "scale", out, [a, out, c]() mutable {
    if (a.has_grad())
      for (std::size_t i = 0; i < out.numel(); ++i)
        a.grad()[i] += out.grad()[i] * c;
  });
  return out;
}

// x is n x m, bias has length m, added to every row.
template <typename S>
Tensor<S> add_row_bias(Tape<S>* tape, Tensor<S> x, Tensor<S> bias) {
  if (x.shape().size() != 2 || bias.shape().size() != 1 ||
      bias.numel() != x.cols())
    throw shape_error("add_row_bias: incompatible shapes " +
                      shape_str(x.shape()) + " and " +
                      shape_str(bias.shape()));
  std::size_t n = x.rows(), m = x.cols();
  Tensor<S> out = Tensor<S>::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.value()[i * m + j] = x.value()[i * m + j] + bias.value()[j];
  detail::finish_op(tape, "add_row_bias", out, [x, bias, out, n, m]() mutable {
    if (x.has_grad())
      for (std::size_t i = 0; i < n * m; ++i) x.grad()[i] += out.grad()[i];
    if (bias.has_grad())
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          bias.grad()[j] += out.grad()[i * m + j];
  });
  return out;
}

// Gathers rows of table (v x d) by id; backward scatter-adds into the table.
template <typename S>
Tensor<S> embedding_lookup(Tape<S>* tape, Tensor<S> table,
                           std::vector<std::int32_t> ids) {
  if (table.shape().size() != 2)
    throw shape_error("embedding_lookup: table must be rank-2, got " +
                      shape_str(table.shape()));
  std::size_t v = table.rows(), d = table.cols();
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || std::size_t(ids[i]) >= v)
      throw value_error("embedding_lookup: id " + std::to_string(ids[i]) +
                        " at position " + std::to_string(i) +
                        " outside table of " + std::to_string(v) + " rows");
  Tensor<S> out = Tensor<S>::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.value().data() + std::size_t(ids[i]) * d, d,
                out.value().data() + i * d);
  detail::finish_op(tape, "embedding_lookup", out, [table, out, ids,
                                                    d]() mutable {
    if (!table.has_grad()) return;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      S* dst = table.grad().data() + std::size_t(ids[i]) * d;
      const S* src = out.grad().data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
  return out;
}

// Row-wise stable softmax.
template <typename S>
Tensor<S> softmax_rows(Tape<S>* tape, Tensor<S> x) {
  if (x.shape().size() != 2)
    throw shape_error("softmax_rows: expects rank-2, got " +
                      shape_str(x.shape()));
  std::size_t n = x.rows(), m = x.cols();
  Tensor<S> out = Tensor<S>::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = x.value().data() + i * m;
    S* orow = out.value().data() + i * m;
    S mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (std::size_t j = 0; j < m; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < m; ++j) orow[j] /= sum;
  }
  detail::finish_op(tape, "softmax_rows", out, [x, out, n, m]() mutable {
    if (!x.has_grad()) return;
    for (std::size_t i = 0; i < n; ++i) {
      const S* y = out.value().data() + i * m;
      const S* gy = out.grad().data() + i * m;
      S* gx = x.grad().data() + i * m;
      S inner = S(0);
      for (std::size_t j = 0; j < m; ++j) inner += gy[j] * y[j];
      for (std::size_t j = 0; j < m; ++j) gx[j] += y[j] * (gy[j] - inner);
    }
  });
  return out;
}

// Row-wise layer normalization with affine scale/shift.
template <typename S>
Tensor<S> layer_norm(Tape<S>* tape, Tensor<S> x, Tensor<S> gamma,
                     Tensor<S> beta, S eps = S(1e-5)) {
  if (x.shape().size() != 2 || gamma.numel() != x.cols() ||
      beta.numel() != x.cols())
    throw shape_error("layer_norm: incompatible shapes " +
                      shape_str(x.shape()) + ", " + shape_str(gamma.shape()) +
                      ", " + shape_str(beta.shape()));
  std::size_t n = x.rows(), m = x.cols();
  Tensor<S> out = Tensor<S>::zeros({n, m});
  auto xhat = std::make_shared<std::vector<S>>(n * m);
  auto inv_std = std::make_shared<std::vector<S>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = x.value().data() + i * m;
    S mean = S(0);
    for (std::size_t j = 0; j < m; ++j) mean += row[j];
    mean /= S(m);
    S var = S(0);
    for (std::size_t j = 0; j < m; ++j) {
      S d = row[j] - mean;
      var += d * d;
    }
    var /= S(m);
    S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < m; ++j) {
      S xh = (row[j] - mean) * is;
      (*xhat)[i * m + j] = xh;
      out.value()[i * m + j] = xh * gamma.value()[j] + beta.value()[j];
    }
  }
  detail::finish_op(
      tape, "layer_norm", out, [x, gamma, beta, out, xhat, inv_std, n,
                                m]() mutable {
        for (std::size_t i = 0; i < n; ++i) {
          const S* gy = out.grad().data() + i * m;
          const S* xh = xhat->data() + i * m;
          if (gamma.has_grad() || beta.has_grad()) {
            for (std::size_t j = 0; j < m; ++j) {
              if (gamma.has_grad()) gamma.grad()[j] += gy[j] * xh[j];
              if (beta.has_grad()) beta.grad()[j] += gy[j];
            }
          }
          if (x.has_grad()) {
            S sum_g = S(0), sum_gx = S(0);
            for (std::size_t j = 0; j < m; ++j) {
              S gxh = gy[j] * gamma.value()[j];
              sum_g += gxh;
              sum_gx += gxh * xh[j];
            }
            S* gx = x.grad().data() + i * m;
            S is = (*inv_std)[i];
            for (std::size_t j = 0; j < m; ++j) {
              S gxh = gy[j] * gamma.value()[j];
              gx[j] += is * (gxh - (sum_g + xh[j] * sum_gx) / S(m));
            }
          }
        }
      });
  return out;
}

// Exact (erf-based) GELU.
template <typename S>
Tensor<S> gelu(Tape<S>* tape, Tensor<S> x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    S v = x.value()[i];
    out.value()[i] =
        S(0.5) * v * (S(1) + S(std::erf(double(v) * M_SQRT1_2)));
  }
  detail::finish_op(tape, "gelu", out, [x, out]() mutable {
    if (!x.has_grad()) return;
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      double v = double(x.value()[i]);
      double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      x.grad()[i] += out.grad()[i] * S(cdf + v * pdf);
    }
  });
  return out;
}

template <typename S>
Tensor<S> slice_cols(Tape<S>* tape, Tensor<S> x, std::size_t c0,
                     std::size_t c1) {
  if (x.shape().size() != 2 || c0 >= c1 || c1 > x.cols())
    throw shape_error("slice_cols: bad column range [" + std::to_string(c0) +
                      ", " + std::to_string(c1) + ") for " +
                      shape_str(x.shape()));
  std::size_t n = x.rows(), m = x.cols(), w = c1 - c0;
  Tensor<S> out = Tensor<S>::zeros({n, w});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.value().data() + i * m + c0, w, out.value().data() + i * w);
  detail::finish_op(tape, "slice_cols", out, [x, out, c0, n, m, w]() mutable {
    if (!x.has_grad()) return;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j)
        x.grad()[i * m + c0 + j] += out.grad()[i * w + j];
  });
  return out;
}

template <typename S>
Tensor<S> concat_cols(Tape<S>* tape, std::vector<Tensor<S>> parts) {
  if (parts.empty()) throw value_error("concat_cols: no inputs");
  std::size_t n = parts.front().rows(), m = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.rows() != n)
      throw shape_error("concat_cols: row counts disagree");
    m += p.cols();
  }
  Tensor<S> out = Tensor<S>::zeros({n, m});
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(p.value().data() + i * p.cols(), p.cols(),
                  out.value().data() + i * m + off);
    off += p.cols();
  }
  detail::finish_op(tape, "concat_cols", out, [parts, out, n, m]() mutable {
    std::size_t off = 0;
    for (auto& p : parts) {
      if (p.has_grad())
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < p.cols(); ++j)
            p.grad()[i * p.cols() + j] += out.grad()[i * m + off + j];
      off += p.cols();
    }
  });
  return out;
}

// Mean over the rows whose include flag is set; output is a length-m vector.
template <typename S>
Tensor<S> masked_mean_rows(Tape<S>* tape, Tensor<S> x,
                           std::vector<std::uint8_t> include) {
  if (x.shape().size() != 2 || include.size() != x.rows())
    throw shape_error("masked_mean_rows: mask length " +
                      std::to_string(include.size()) + " vs " +
                      shape_str(x.shape()));
  std::size_t n = x.rows(), m = x.cols();
  std::size_t count = 0;
  for (auto f : include) count += (f != 0);
  if (count == 0)
    throw value_error("masked_mean_rows: no rows selected for pooling");
  Tensor<S> out = Tensor<S>::zeros({m});
  for (std::size_t i = 0; i < n; ++i) {
    if (!include[i]) continue;
    const S* row = x.value().data() + i * m;
    for (std::size_t j = 0; j < m; ++j) out.value()[j] += row[j];
  }
  for (std::size_t j = 0; j < m; ++j) out.value()[j] /= S(count);
  detail::finish_op(tape, "masked_mean_rows", out,
                    [x, out, include, n, m, count]() mutable {
                      if (!x.has_grad()) return;
                      S inv = S(1) / S(count);
                      for (std::size_t i = 0; i < n; ++i) {
                        if (!include[i]) continue;
                        S* gx = x.grad().data() + i * m;
                        for (std::size_t j = 0; j < m; ++j)
                          gx[j] += out.grad()[j] * inv;
                      }
                    });
  return out;
}

// Scalar weighted cross-entropy over rows of a logits matrix:
//   sum_i w_i * (logsumexp(logits_i) - logits_i[target_i]).
// Rows with weight exactly 0 are skipped and may carry any target id.
template <typename S>
Tensor<S> weighted_cross_entropy(Tape<S>* tape, Tensor<S> logits,
                                 std::vector<std::int32_t> targets,
                                 std::vector<S> weights) {
  if (logits.shape().size() != 2)
    throw shape_error("weighted_cross_entropy: logits must be rank-2, got " +
                      shape_str(logits.shape()));
  std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n || weights.size() != n)
    throw shape_error(
        "weighted_cross_entropy: row count " + std::to_string(n) +
        " vs targets " + std::to_string(targets.size()) + " vs weights " +
        std::to_string(weights.size()));
  auto probs = std::make_shared<std::vector<S>>();
  probs->assign(n * v, S(0));
  S loss = S(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == S(0)) continue;
    if (targets[i] < 0 || std::size_t(targets[i]) >= v)
      throw value_error("weighted_cross_entropy: target " +
                        std::to_string(targets[i]) + " at row " +
                        std::to_string(i) + " outside vocabulary of " +
                        std::to_string(v));
    const S* row = logits.value().data() + i * v;
    S mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    S* prow = probs->data() + i * v;
    for (std::size_t j = 0; j < v; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (std::size_t j = 0; j < v; ++j) prow[j] /= sum;
    loss += weights[i] * (std::log(sum) + mx - row[targets[i]]);
  }
  Tensor<S> out = Tensor<S>::scalar(loss);
  detail::finish_op(
      tape, "weighted_cross_entropy", out,
      [logits, out, probs, targets, weights, n, v]() mutable {
        if (!logits.has_grad()) return;
        S g = out.grad()[0];
        for (std::size_t i = 0; i < n; ++i) {
          if (weights[i] == S(0)) continue;
          S* gl = logits.grad().data() + i * v;
          const S* prow = probs->data() + i * v;
          S w = g * weights[i];
          for (std::size_t j = 0; j < v; ++j) gl[j] += w * prow[j];
          gl[targets[i]] -= w;
        }
      });
  return out;
}

// Cosine similarity of two vectors as a differentiable scalar.
template <typename S>
Tensor<S> cosine_sim(Tape<S>* tape, Tensor<S> a, Tensor<S> b) {
  detail::require_same_shape("cosine_sim", a, b);
  S dot = S(0), na2 = S(0), nb2 = S(0);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += a.value()[i] * b.value()[i];
    na2 += a.value()[i] * a.value()[i];
    nb2 += b.value()[i] * b.value()[i];
  }
  S na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na == S(0) || nb == S(0))
    throw value_error("cosine_sim: zero-norm vector, cosine undefined");
  S cos = dot / (na * nb);
  Tensor<S> out = Tensor<S>::scalar(cos);
  detail::finish_op(tape, "cosine_sim", out,
                    [a, b, out, na, nb, cos]() mutable {
                      S g = out.grad()[0];
                      for (std::size_t i = 0; i < a.numel(); ++i) {
                        S av = a.value()[i], bv = b.value()[i];
                        if (a.has_grad())
                          a.grad()[i] +=
                              g * (bv / (na * nb) - cos * av / (na * na));
                        if (b.has_grad())
                          b.grad()[i] +=
                              g * (av / (na * nb) - cos * bv / (nb * nb));
                      }
                    });
  return out;
}

// Packs scalar tensors into one vector.
template <typename S>
Tensor<S> stack_scalars(Tape<S>* tape, std::vector<Tensor<S>> xs) {
  if (xs.empty()) throw value_error("stack_scalars: no inputs");
  std::vector<S> vals(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].numel() != 1)
      throw shape_error("stack_scalars: input " + std::to_string(i) +
                        " is not scalar, shape " + shape_str(xs[i].shape()));
    vals[i] = xs[i].value()[0];
  }
  Tensor<S> out = Tensor<S>::from({xs.size()}, std::move(vals));
  detail::finish_op(tape, "stack_scalars", out, [xs, out]() mutable {
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (xs[i].has_grad()) xs[i].grad()[0] += out.grad()[i];
  });
  return out;
}

// Stable log-sum-exp of a vector, as a scalar.
template <typename S>
Tensor<S> logsumexp(Tape<S>* tape, Tensor<S> x) {
  if (x.numel() == 0) throw value_error("logsumexp: empty input");
  S mx = x.value()[0];
  for (S v : x.value()) mx = std::max(mx, v);
  auto soft = std::make_shared<std::vector<S>>(x.numel());
  S sum = S(0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    (*soft)[i] = std::exp(x.value()[i] - mx);
    sum += (*soft)[i];
  }
  for (auto& p : *soft) p /= sum;
  Tensor<S> out = Tensor<S>::scalar(std::log(sum) + mx);
  detail::finish_op(tape, "logsumexp", out, [x, out, soft]() mutable {
    if (!x.has_grad()) return;
    S g = out.grad()[0];
    for (std::size_t i = 0; i < x.numel(); ++i)
      x.grad()[i] += g * (*soft)[i];
  });
  return out;
}

template <typename S>
Tensor<S> sum_all(Tape<S>* tape, Tensor<S> x) {
  S s = std::accumulate(x.value().begin(), x.value().end(), S(0));
  Tensor<S> out = Tensor<S>::scalar(s);
  detail::finish_op(tape, "sum_all", out, [x, out]() mutable {
    if (!x.has_grad()) return;
    S g = out.grad()[0];
    for (auto& gx : x.grad()) gx += g;
  });
  return out;
}

template <typename S>
Tensor<S> mean_all(Tape<S>* tape, Tensor<S> x) {
  if (x.numel() == 0) throw value_error("mean_all: empty input");
  S s = std::accumulate(x.value().begin(), x.value().end(), S(0));
  Tensor<S> out = Tensor<S>::scalar(s / S(x.numel()));
  detail::finish_op(tape, "mean_all", out, [x, out]() mutable {
    if (!x.has_grad()) return;
    S g = out.grad()[0] / S(x.numel());
    for (auto& gx : x.grad()) gx += g;
  });
  return out;
}

template <typename S>
Tensor<S> dot(Tape<S>* tape, Tensor<S> a, Tensor<S> b) {
  detail::require_same_shape("dot", a, b);
  S s = S(0);
  for (std::size_t i = 0; i < a.numel(); ++i)
    s += a.value()[i] * b.value()[i];
  Tensor<S> out = Tensor<S>::scalar(s);
  detail::finish_op(tape, "dot", out, [a, b, out]() mutable {
    S g = out.grad()[0];
    for (std::size_t i = 0; i < a.numel(); ++i) {
      if (a.has_grad()) a.grad()[i] += g * b.value()[i];
      if (b.has_grad()) b.grad()[i] += g * a.value()[i];
    }
  });
  return out;
}

// ---- backward --------------------------------------------------------------

// Seeds d(out)/d(out) = 1 and replays the tape in reverse. Gradients of leaf
// tensors accumulate across calls; intermediate gradients are reset here, so
// callers own zeroing of parameter gradients only.
template <typename S>
void backward(Tape<S>& tape, const Tensor<S>& out) {
  if (tape.empty())
    throw value_error("backward: tape is empty (was it cleared?)");
  if (out.numel() != 1)
    throw value_error("backward: output must be scalar, got shape " +
                      shape_str(out.shape()));
  if (!out.has_grad())
    throw value_error("backward: output is not tracked on a tape");
  for (const auto& node : tape.nodes())
    std::fill(node.out->grad.begin(), node.out->grad.end(), S(0));
  out.storage()->grad[0] = S(1);
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) it->backward();
}

}  // namespace mdembed
