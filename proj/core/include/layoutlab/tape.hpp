#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "layoutlab/rng.hpp"
#include "layoutlab/tensor.hpp"

namespace layoutlab {

// Trainable tensor with an accumulating gradient of the same shape.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.zero(); }
};

// Reverse-mode autodiff tape. Ops append nodes in execution order; backward
// walks them in exact reverse order, which is a topological order by
// construction. Single-writer: one tape per training step, one thread.
//
// backward() may be called repeatedly; internal node gradients are reset per
// call while Parameter gradients accumulate across calls.
template <typename T>
class Tape {
 public:
  using Id = std::uint32_t;

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  const Tensor<T>& value(Id id) const { return nodes_[id].value; }
  Tensor<T>& grad(Id id) { return nodes_[id].grad; }

  Id leaf(Tensor<T> value) { return push(std::move(value), {}, "leaf"); }

  // One node per distinct Parameter: reusing the same table for several
  // lookups accumulates all of its gradient contributions in one place.
  Id param(Parameter<T>& p) {
    const auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return it->second;
    const Id id = push(p.value, {}, "param");
    nodes_[id].param = &p;
    param_ids_.emplace(&p, id);
    return id;
  }

  Id matmul(Id a, Id b) {
    Tensor<T> out = matmul_nn(value(a), value(b));
    return push(std::move(out), [a, b](Tape& t, Id self) {
      add_inplace(t.nodes_[a].grad, matmul_nt(t.nodes_[self].grad, t.value(b)));
      add_inplace(t.nodes_[b].grad, matmul_tn(t.value(a), t.nodes_[self].grad));
    }, "matmul");
  }

  // C = A B^T; used for attention scores.
  Id matmul_bt(Id a, Id b) {
    Tensor<T> out = matmul_nt(value(a), value(b));
    return push(std::move(out), [a, b](Tape& t, Id self) {
      add_inplace(t.nodes_[a].grad, matmul_nn(t.nodes_[self].grad, t.value(b)));
      add_inplace(t.nodes_[b].grad, matmul_tn(t.nodes_[self].grad, t.value(a)));
    }, "matmul_bt");
  }

  Id add(Id a, Id b) {
    detail::require(value(a).same_shape(value(b)), "add shape mismatch");
    Tensor<T> out = value(a);
    add_inplace(out, value(b));
    return push(std::move(out), [a, b](Tape& t, Id self) {
      add_inplace(t.nodes_[a].grad, t.nodes_[self].grad);
      add_inplace(t.nodes_[b].grad, t.nodes_[self].grad);
    }, "add");
  }

  // mat[r, c] + vec[c] for every row; the bias/broadcast pattern.
  Id add_rowvec(Id a, Id v) {
    const Tensor<T>& mat = value(a);
    const Tensor<T>& vec = value(v);
    detail::require(vec.size() == mat.cols(), "add_rowvec shape mismatch");
    Tensor<T> out = mat;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += vec[c];
    }
    return push(std::move(out), [a, v](Tape& t, Id self) {
      const Tensor<T>& g = t.nodes_[self].grad;
      add_inplace(t.nodes_[a].grad, g);
      Tensor<T>& gv = t.nodes_[v].grad;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gv[c] += g.at(r, c);
      }
    }, "add_rowvec");
  }

  Id scale(Id a, T s) {
    Tensor<T> out = value(a);
    for (T& x : out.values()) x *= s;
    return push(std::move(out), [a, s](Tape& t, Id self) {
      axpy_inplace(t.nodes_[a].grad, s, t.nodes_[self].grad);
    }, "scale");
  }

  // Row-wise softmax over the last axis of a 2D tensor.
  Id softmax_rows(Id a) {
    const Tensor<T>& x = value(a);
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      T m = x.at(r, 0);
      for (std::size_t c = 1; c < x.cols(); ++c) m = std::max(m, x.at(r, c));
      T sum = 0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const T e = std::exp(x.at(r, c) - m);
        out.at(r, c) = e;
        sum += e;
      }
      for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) /= sum;
    }
    return push(std::move(out), [a](Tape& t, Id self) {
      const Tensor<T>& y = t.value(self);
      const Tensor<T>& gy = t.nodes_[self].grad;
      Tensor<T>& gx = t.nodes_[a].grad;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        T dot = 0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += gy.at(r, c) * y.at(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) {
          gx.at(r, c) += y.at(r, c) * (gy.at(r, c) - dot);
        }
      }
    }, "softmax");
  }

  // Per-row normalization over the feature axis, then gain/bias.
  Id layer_norm(Id a, Id gain, Id bias, T eps) {
    const Tensor<T>& x = value(a);
    const Tensor<T>& g = value(gain);
    const Tensor<T>& b = value(bias);
    detail::require(g.size() == x.cols() && b.size() == x.cols(),
                    "layer_norm gain/bias shape mismatch");
    const std::size_t n = x.cols();
    Tensor<T> out(x.shape());
    Tensor<T> xhat(x.shape());
    std::vector<T> inv_std(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      T mean = 0;
      for (std::size_t c = 0; c < n; ++c) mean += x.at(r, c);
      mean /= static_cast<T>(n);
      T var = 0;
      for (std::size_t c = 0; c < n; ++c) {
        const T d = x.at(r, c) - mean;
        var += d * d;
      }
      var /= static_cast<T>(n);
      const T inv = T{1} / std::sqrt(var + eps);
      inv_std[r] = inv;
      for (std::size_t c = 0; c < n; ++c) {
        const T xh = (x.at(r, c) - mean) * inv;
        xhat.at(r, c) = xh;
        out.at(r, c) = g[c] * xh + b[c];
      }
    }
    return push(std::move(out),
                [a, gain, bias, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape& t, Id self) {
      const Tensor<T>& gy = t.nodes_[self].grad;
      const Tensor<T>& g = t.value(gain);
      Tensor<T>& gx = t.nodes_[a].grad;
      Tensor<T>& gg = t.nodes_[gain].grad;
      Tensor<T>& gb = t.nodes_[bias].grad;
      const std::size_t n = gy.cols();
      for (std::size_t r = 0; r < gy.rows(); ++r) {
        T sum_dxhat = 0;
        T sum_dxhat_xhat = 0;
        for (std::size_t c = 0; c < n; ++c) {
          const T dy = gy.at(r, c);
          const T xh = xhat.at(r, c);
          gg[c] += dy * xh;
          gb[c] += dy;
          const T dxhat = dy * g[c];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xh;
        }
        const T mean_dxhat = sum_dxhat / static_cast<T>(n);
        const T mean_dxhat_xhat = sum_dxhat_xhat / static_cast<T>(n);
        for (std::size_t c = 0; c < n; ++c) {
          const T dxhat = gy.at(r, c) * g[c];
          gx.at(r, c) +=
              inv_std[r] * (dxhat - mean_dxhat - xhat.at(r, c) * mean_dxhat_xhat);
        }
      }
    }, "layer_norm");
  }

  // tanh-approximated GELU, fixed so results are bit-reproducible for a
  // given float width.
  Id gelu(Id a) {
    const Tensor<T>& x = value(a);
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu_value(x[i]);
    return push(std::move(out), [a](Tape& t, Id self) {
      const Tensor<T>& x = t.value(a);
      const Tensor<T>& gy = t.nodes_[self].grad;
      Tensor<T>& gx = t.nodes_[a].grad;
      for (std::size_t i = 0; i < x.size(); ++i) {
        gx[i] += gy[i] * gelu_derivative(x[i]);
      }
    }, "gelu");
  }

  // out[i, :] = table[rows[i], :]; backward scatter-adds into the table.
  Id gather_rows(Id table, std::vector<int> rows) {
    const Tensor<T>& tab = value(table);
    detail::require(tab.rank() == 2, "gather_rows needs a 2D table");
    const std::size_t cols = tab.cols();
    Tensor<T> out({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int r = rows[i];
      detail::require(r >= 0 && static_cast<std::size_t>(r) < tab.rows(),
                      "gather_rows index out of range");
      for (std::size_t c = 0; c < cols; ++c) {
        out.at(i, c) = tab.at(static_cast<std::size_t>(r), c);
      }
    }
    return push(std::move(out), [table, rows = std::move(rows)](Tape& t, Id self) {
      const Tensor<T>& g = t.nodes_[self].grad;
      Tensor<T>& gt = t.nodes_[table].grad;
      const std::size_t cols = g.cols();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<std::size_t>(rows[i]);
        for (std::size_t c = 0; c < cols; ++c) gt.at(r, c) += g.at(i, c);
      }
    }, "gather_rows");
  }

  // Inverted dropout: survivors are scaled by 1/keep at train time, so
  // inference needs no rescaling. p = 0 is the identity.
  Id dropout(Id a, T p, RngStream& rng) {
    if (p <= T{0}) return a;
    detail::require(p < T{1}, "dropout probability must be < 1");
    const Tensor<T>& x = value(a);
    const T inv_keep = T{1} / (T{1} - p);
    std::vector<T> mult(x.size());
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mult[i] = rng.next_unit() < static_cast<double>(p) ? T{0} : inv_keep;
      out[i] = x[i] * mult[i];
    }
    return push(std::move(out), [a, mult = std::move(mult)](Tape& t, Id self) {
      const Tensor<T>& gy = t.nodes_[self].grad;
      Tensor<T>& gx = t.nodes_[a].grad;
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mult[i];
    }, "dropout");
  }

  Id slice_rows(Id a, std::size_t r0, std::size_t r1) {
    const Tensor<T>& x = value(a);
    detail::require(r0 < r1 && r1 <= x.rows(), "slice_rows out of range");
    const std::size_t cols = x.cols();
    Tensor<T> out({r1 - r0, cols});
    std::copy(x.data() + r0 * cols, x.data() + r1 * cols, out.data());
    return push(std::move(out), [a, r0, cols](Tape& t, Id self) {
      const Tensor<T>& g = t.nodes_[self].grad;
      Tensor<T>& gx = t.nodes_[a].grad;
      T* dst = gx.data() + r0 * cols;
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }, "slice_rows");
  }

  Id slice_cols(Id a, std::size_t c0, std::size_t c1) {
    const Tensor<T>& x = value(a);
    detail::require(c0 < c1 && c1 <= x.cols(), "slice_cols out of range");
    Tensor<T> out({x.rows(), c1 - c0});
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = x.at(r, c);
    }
    return push(std::move(out), [a, c0](Tape& t, Id self) {
      const Tensor<T>& g = t.nodes_[self].grad;
      Tensor<T>& gx = t.nodes_[a].grad;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gx.at(r, c0 + c) += g.at(r, c);
      }
    }, "slice_cols");
  }

  Id concat_rows(std::span<const Id> parts) {
    detail::require(!parts.empty(), "concat_rows of nothing");
    const std::size_t cols = value(parts[0]).cols();
    std::size_t rows = 0;
    for (const Id p : parts) {
      detail::require(value(p).cols() == cols, "concat_rows width mismatch");
      rows += value(p).rows();
    }
    Tensor<T> out({rows, cols});
    std::size_t offset = 0;
    for (const Id p : parts) {
      const Tensor<T>& x = value(p);
      std::copy(x.data(), x.data() + x.size(), out.data() + offset);
      offset += x.size();
    }
    return push(std::move(out),
                [parts = std::vector<Id>(parts.begin(), parts.end())](Tape& t,
                                                                      Id self) {
      const Tensor<T>& g = t.nodes_[self].grad;
      std::size_t offset = 0;
      for (const Id p : parts) {
        Tensor<T>& gp = t.nodes_[p].grad;
        const T* src = g.data() + offset;
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
        offset += gp.size();
      }
    }, "concat_rows");
  }

  Id concat_cols(std::span<const Id> parts) {
    detail::require(!parts.empty(), "concat_cols of nothing");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (const Id p : parts) {
      detail::require(value(p).rows() == rows, "concat_cols height mismatch");
      cols += value(p).cols();
    }
    Tensor<T> out({rows, cols});
    std::size_t c_off = 0;
    for (const Id p : parts) {
      const Tensor<T>& x = value(p);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c_off + c) = x.at(r, c);
      }
      c_off += x.cols();
    }
    return push(std::move(out),
                [parts = std::vector<Id>(parts.begin(), parts.end())](Tape& t,
                                                                      Id self) {
      const Tensor<T>& g = t.nodes_[self].grad;
      std::size_t c_off = 0;
      for (const Id p : parts) {
        Tensor<T>& gp = t.nodes_[p].grad;
        for (std::size_t r = 0; r < gp.rows(); ++r) {
          for (std::size_t c = 0; c < gp.cols(); ++c) {
            gp.at(r, c) += g.at(r, c_off + c);
          }
        }
        c_off += gp.cols();
      }
    }, "concat_cols");
  }

  // Mean negative log-likelihood over rows whose target is not the ignore
  // marker (-1). All rows ignored yields loss 0 with zero gradient.
  Id cross_entropy(Id logits, std::vector<int> targets) {
    const Tensor<T>& x = value(logits);
    detail::require(x.rank() == 2 && targets.size() == x.rows(),
                    "cross_entropy shape mismatch");
    const std::size_t classes = x.cols();
    std::size_t active = 0;
    Tensor<T> probs(x.shape());
    T total = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const int target = targets[r];
      if (target < 0) continue;
      detail::require(static_cast<std::size_t>(target) < classes,
                      "cross_entropy target out of range");
      ++active;
      T m = x.at(r, 0);
      for (std::size_t c = 1; c < classes; ++c) m = std::max(m, x.at(r, c));
      T sum = 0;
      for (std::size_t c = 0; c < classes; ++c) {
        const T e = std::exp(x.at(r, c) - m);
        probs.at(r, c) = e;
        sum += e;
      }
      for (std::size_t c = 0; c < classes; ++c) probs.at(r, c) /= sum;
      total += std::log(sum) + m - x.at(r, static_cast<std::size_t>(target));
    }
    Tensor<T> loss({1});
    loss[0] = active == 0 ? T{0} : total / static_cast<T>(active);
    return push(std::move(loss),
                [logits, targets = std::move(targets), probs = std::move(probs),
                 active](Tape& t, Id self) {
      if (active == 0) return;
      const T scale = t.nodes_[self].grad[0] / static_cast<T>(active);
      Tensor<T>& gx = t.nodes_[logits].grad;
      for (std::size_t r = 0; r < gx.rows(); ++r) {
        const int target = targets[r];
        if (target < 0) continue;
        for (std::size_t c = 0; c < gx.cols(); ++c) {
          const T indicator = c == static_cast<std::size_t>(target) ? T{1} : T{0};
          gx.at(r, c) += scale * (probs.at(r, c) - indicator);
        }
      }
    }, "cross_entropy");
  }

  // Seeds d(loss)/d(loss) = 1, walks nodes in reverse execution order, then
  // accumulates leaf gradients into their Parameters. Node gradients are
  // reset per call, so calling backward twice adds exactly twice into the
  // Parameter gradients.
  void backward(Id loss) {
    detail::require(recording_, "backward on a non-recording tape");
    detail::require(loss < nodes_.size(), "backward on unknown node");
    detail::require(value(loss).size() == 1, "backward needs a scalar loss");
    for (Id i = 0; i <= loss; ++i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) {
        n.grad = Tensor<T>(n.value.shape());
      } else {
        n.grad.zero();
      }
    }
    nodes_[loss].grad[0] = T{1};
    for (Id i = loss + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backprop) n.backprop(*this, i);
      if (n.param != nullptr) add_inplace(n.param->grad, n.grad);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

  static T gelu_value(T x) {
    const T k = std::sqrt(T{2} / std::numbers::pi_v<T>);
    const T u = k * (x + T{0.044715} * x * x * x);
    return T{0.5} * x * (T{1} + std::tanh(u));
  }

  static T gelu_derivative(T x) {
    const T k = std::sqrt(T{2} / std::numbers::pi_v<T>);
    const T u = k * (x + T{0.044715} * x * x * x);
    const T th = std::tanh(u);
    const T sech2 = T{1} - th * th;
    return T{0.5} * (T{1} + th) +
           T{0.5} * x * sech2 * k * (T{1} + T{3} * T{0.044715} * x * x);
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&, Id)> backprop;
    Parameter<T>* param = nullptr;
  };

  Id push(Tensor<T> value, std::function<void(Tape&, Id)> backprop,
          const char* op) {
    if (!value.all_finite()) {
      throw std::runtime_error(std::string("non-finite values after ") + op);
    }
    Node n;
    n.value = std::move(value);
    if (recording_) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, Id> param_ids_;
  bool recording_ = true;
};

}  // namespace layoutlab
