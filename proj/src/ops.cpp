#include "stm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stm/errors.hpp"
#include "stm/kernels.hpp"

namespace stm::nn {
namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

// Gradient buffer of an op input, or an empty span when it needs none.
template <typename T>
std::span<T> grad_for(const ImplPtr<T>& t) {
  if (!t || !t->requires_grad) return {};
  if (t->grad.empty()) t->grad.assign(t->data.size(), T(0));
  return t->grad;
}

template <typename T>
bool any_grad(std::initializer_list<const Tensor<T>*> ts) {
  for (const auto* t : ts) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  require(t.defined() && t.shape().size() == rank,
          std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
              (t.defined() ? to_string(t.shape()) : std::string("undefined")));
}

}  // namespace

template <typename T>
Tensor<T> gather(Tape<T>& tape, const Tensor<T>& x, const TransformerGrid& grid) {
  require_rank(x, 3, "gather");
  const std::int64_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  require(n == grid.n_pix(), "gather: " + std::to_string(n) + " pixels but grid level has " +
                                 std::to_string(grid.n_pix()));
  auto out = tape.make_output({b, 3, 3 * n, c}, x.requires_grad());
  kernels::gather_forward<T>(x.data(), b, n, c, grid.rows(), out.data());
  if (out.requires_grad()) {
    // The grid is cached per level and outlives the tape.
    tape.record([xi = x.shared(), oi = out.shared(), rows = grid.rows(), b, n, c] {
      if (oi->grad.empty()) return;
      kernels::gather_backward<T>(oi->grad, b, n, c, rows, grad_for(xi));
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                 const Tensor<T>& bias, std::int64_t stride_h, std::int64_t stride_w) {
  require_rank(x, 4, "conv2d");
  require_rank(weights, 4, "conv2d weights");
  kernels::Conv2dDims d;
  d.batch = x.dim(0);
  d.height = x.dim(1);
  d.width = x.dim(2);
  d.cin = x.dim(3);
  d.kh = weights.dim(0);
  d.kw = weights.dim(1);
  d.cout = weights.dim(3);
  d.stride_h = stride_h;
  d.stride_w = stride_w;
  require(weights.dim(2) == d.cin, "conv2d: weights expect " + std::to_string(weights.dim(2)) +
                                       " input channels, input has " + std::to_string(d.cin));
  require(stride_h >= 1 && stride_w >= 1, "conv2d: strides must be positive");
  require(d.height >= d.kh && d.width >= d.kw, "conv2d: input smaller than kernel");
  require((d.width - d.kw) % stride_w == 0 && (d.height - d.kh) % stride_h == 0,
          "conv2d: input extent not covered exactly by the strides");
  require(!bias.defined() || (bias.shape().size() == 1 && bias.dim(0) == d.cout),
          "conv2d: bias shape mismatch");

  auto out = tape.make_output({d.batch, d.out_h(), d.out_w(), d.cout}, any_grad<T>({&x, &weights, &bias}));
  kernels::conv2d_forward<T>(x.data(), weights.data(),
                             bias.defined() ? bias.data() : std::span<const T>{}, d, out.data());
  if (out.requires_grad()) {
    tape.record([xi = x.shared(), wi = weights.shared(), bi = bias.shared(), oi = out.shared(), d] {
      if (oi->grad.empty()) return;
      kernels::conv2d_backward<T>(xi->data, wi->data, oi->grad, d, grad_for(xi), grad_for(wi),
                                  grad_for(bi));
    });
  }
  return out;
}

template <typename T>
Tensor<T> spherical_conv(Tape<T>& tape, const Tensor<T>& x, const TransformerGrid& grid,
                         const Tensor<T>& weights, const Tensor<T>& bias) {
  require(weights.defined() && weights.shape().size() == 4 && weights.dim(0) == 3 &&
              weights.dim(1) == 3,
          "spherical_conv: weights must be [3, 3, Cin, Cout]");
  const auto patches = gather(tape, x, grid);
  const auto y = conv2d(tape, patches, weights, bias, 1, 3);
  return reshape(tape, y, {x.dim(0), x.dim(1), weights.dim(3)});
}

template <typename T>
Tensor<T> conv1x1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                  const Tensor<T>& bias) {
  require_rank(x, 3, "conv1x1");
  const auto flat = reshape(tape, x, {x.dim(0) * x.dim(1), x.dim(2)});
  const auto y = linear(tape, flat, weights, bias);
  return reshape(tape, y, {x.dim(0), x.dim(1), weights.dim(1)});
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                 const Tensor<T>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weights, 2, "linear weights");
  const std::int64_t m = x.dim(0), k = x.dim(1), n = weights.dim(1);
  require(weights.dim(0) == k, "linear: weights expect " + std::to_string(weights.dim(0)) +
                                   " features, input has " + std::to_string(k));
  require(!bias.defined() || (bias.shape().size() == 1 && bias.dim(0) == n),
          "linear: bias shape mismatch");
  auto out = tape.make_output({m, n}, any_grad<T>({&x, &weights, &bias}));
  kernels::matmul_forward<T>(x.data(), weights.data(),
                             bias.defined() ? bias.data() : std::span<const T>{}, m, k, n,
                             out.data());
  if (out.requires_grad()) {
    tape.record([xi = x.shared(), wi = weights.shared(), bi = bias.shared(), oi = out.shared(), m, k, n] {
      if (oi->grad.empty()) return;
      kernels::matmul_backward<T>(xi->data, wi->data, oi->grad, m, k, n, grad_for(xi),
                                  grad_for(wi), grad_for(bi));
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool1x4(Tape<T>& tape, const Tensor<T>& x, std::vector<std::uint8_t>* argmax_out) {
  require_rank(x, 3, "maxpool1x4");
  const std::int64_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  require(n % 4 == 0 && n > 0, "maxpool1x4: pixel count must be a positive multiple of 4");
  auto out = tape.make_output({b, n / 4, c}, x.requires_grad());
  auto argmax = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(out.size()));
  kernels::maxpool4_forward<T>(x.data(), b, n / 4, c, out.data(), *argmax);
  if (argmax_out) *argmax_out = *argmax;
  if (tape.tracks_branches()) {
    for (const auto a : *argmax) tape.mix_branch(a);
  }
  if (out.requires_grad()) {
    tape.record([xi = x.shared(), oi = out.shared(), argmax, b, n, c] {
      if (oi->grad.empty()) return;
      kernels::maxpool4_backward<T>(oi->grad, *argmax, b, n / 4, c, grad_for(xi));
    });
  }
  return out;
}

template <typename T>
Tensor<T> unpool_conv(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weights,
                      const Tensor<T>& bias) {
  require_rank(x, 3, "unpool_conv");
  require(weights.defined() && weights.shape().size() == 3 && weights.dim(1) == 4,
          "unpool_conv: weights must be [Cin, 4, Cout]");
  const std::int64_t b = x.dim(0), n = x.dim(1), cin = x.dim(2), cout = weights.dim(2);
  require(weights.dim(0) == cin, "unpool_conv: channel mismatch");
  const auto flat_x = reshape(tape, x, {b * n, cin});
  const auto flat_w = reshape(tape, weights, {cin, 4 * cout});
  // Bias is per output channel, shared by the four children.
  const auto y = linear(tape, flat_x, flat_w, Tensor<T>());
  const auto children = reshape(tape, y, {b * n * 4, cout});
  auto out = tape.make_output({b * n * 4, cout}, any_grad<T>({&children, &bias}));
  std::copy(children.data().begin(), children.data().end(), out.data().begin());
  if (bias.defined()) {
    require(bias.shape().size() == 1 && bias.dim(0) == cout, "unpool_conv: bias shape mismatch");
    for (std::int64_t r = 0; r < b * n * 4; ++r) {
      for (std::int64_t co = 0; co < cout; ++co) {
        out.data()[static_cast<std::size_t>(r * cout + co)] += bias.data()[static_cast<std::size_t>(co)];
      }
    }
  }
  if (out.requires_grad()) {
    tape.record([ci = children.shared(), bi = bias.shared(), oi = out.shared(), rows = b * n * 4, cout] {
      if (oi->grad.empty()) return;
      if (auto g = grad_for(ci); !g.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (auto g = grad_for(bi); !g.empty()) {
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t co = 0; co < cout; ++co) g[static_cast<std::size_t>(co)] += oi->grad[static_cast<std::size_t>(r * cout + co)];
        }
      }
    });
  }
  return reshape(tape, out, {b, 4 * n, cout});
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  auto out = tape.make_output(x.shape(), x.requires_grad());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  if (tape.tracks_branches()) {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      word = (word << 1) | (in[i] > T(0));
      if (i % 64 == 63 || i + 1 == o.size()) {
        tape.mix_branch(word);
        word = 0;
      }
    }
  }
  if (out.requires_grad()) {
    tape.record([xi = x.shared(), oi = out.shared()] {
      if (oi->grad.empty()) return;
      auto g = grad_for(xi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xi->data[i] > T(0)) g[i] += oi->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormState<T>& state, bool training) {
  require(x.defined() && !x.shape().empty(), "batchnorm: undefined input");
  const std::int64_t c = x.shape().back();
  const std::int64_t m = c > 0 ? x.size() / c : 0;
  require(gamma.defined() && gamma.size() == c && beta.defined() && beta.size() == c,
          "batchnorm: affine parameters must have one entry per channel");
  require(static_cast<std::int64_t>(state.running_mean.size()) == c &&
              static_cast<std::int64_t>(state.running_var.size()) == c,
          "batchnorm: running statistics have the wrong channel count");
  if (m == 0) throw ContractError("batchnorm: empty batch");

  auto out = tape.make_output(x.shape(), any_grad<T>({&x, &gamma, &beta}));
  auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
  auto in = x.data();

  if (training) {
    std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sq(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t r = 0; r < m; ++r) {
      for (std::int64_t k = 0; k < c; ++k) sum[static_cast<std::size_t>(k)] += in[static_cast<std::size_t>(r * c + k)];
    }
    for (std::int64_t k = 0; k < c; ++k) (*mean)[static_cast<std::size_t>(k)] = static_cast<T>(sum[static_cast<std::size_t>(k)] / m);
    for (std::int64_t r = 0; r < m; ++r) {
      for (std::int64_t k = 0; k < c; ++k) {
        const double dlt = in[static_cast<std::size_t>(r * c + k)] - (*mean)[static_cast<std::size_t>(k)];
        sq[static_cast<std::size_t>(k)] += dlt * dlt;
      }
    }
    for (std::int64_t k = 0; k < c; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double var = sq[kk] / m;
      (*inv_std)[kk] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = m > 1 ? sq[kk] / (m - 1) : var;
      state.running_mean[kk] = static_cast<T>((1 - state.momentum) * state.running_mean[kk] + state.momentum * (*mean)[kk]);
      state.running_var[kk] = static_cast<T>((1 - state.momentum) * state.running_var[kk] + state.momentum * unbiased);
    }
  } else {
    for (std::int64_t k = 0; k < c; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      (*mean)[kk] = state.running_mean[kk];
      (*inv_std)[kk] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[kk]) + state.eps));
    }
  }

  auto o = out.data();
  auto g = gamma.data();
  auto bt = beta.data();
  for (std::int64_t r = 0; r < m; ++r) {
    for (std::int64_t k = 0; k < c; ++k) {
      const auto i = static_cast<std::size_t>(r * c + k);
      const auto kk = static_cast<std::size_t>(k);
      o[i] = g[kk] * (in[i] - (*mean)[kk]) * (*inv_std)[kk] + bt[kk];
    }
  }

  if (out.requires_grad()) {
    tape.record([xi = x.shared(), gi = gamma.shared(), bi = beta.shared(), oi = out.shared(), mean,
                 inv_std, m, c, training] {
      if (oi->grad.empty()) return;
      const auto& dy = oi->grad;
      std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0), sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
      for (std::int64_t r = 0; r < m; ++r) {
        for (std::int64_t k = 0; k < c; ++k) {
          const auto i = static_cast<std::size_t>(r * c + k);
          const auto kk = static_cast<std::size_t>(k);
          const double xhat = (xi->data[i] - (*mean)[kk]) * (*inv_std)[kk];
          sum_dy[kk] += dy[i];
          sum_dy_xhat[kk] += dy[i] * xhat;
        }
      }
      if (auto dg = grad_for(gi); !dg.empty()) {
        for (std::int64_t k = 0; k < c; ++k) dg[static_cast<std::size_t>(k)] += static_cast<T>(sum_dy_xhat[static_cast<std::size_t>(k)]);
      }
      if (auto db = grad_for(bi); !db.empty()) {
        for (std::int64_t k = 0; k < c; ++k) db[static_cast<std::size_t>(k)] += static_cast<T>(sum_dy[static_cast<std::size_t>(k)]);
      }
      if (auto dx = grad_for(xi); !dx.empty()) {
        for (std::int64_t r = 0; r < m; ++r) {
          for (std::int64_t k = 0; k < c; ++k) {
            const auto i = static_cast<std::size_t>(r * c + k);
            const auto kk = static_cast<std::size_t>(k);
            const double scale = static_cast<double>(gi->data[kk]) * (*inv_std)[kk];
            if (training) {
              const double xhat = (xi->data[i] - (*mean)[kk]) * (*inv_std)[kk];
              dx[i] += static_cast<T>(scale * (dy[i] - sum_dy[kk] / m - xhat * sum_dy_xhat[kk] / m));
            } else {
              dx[i] += static_cast<T>(scale * dy[i]);
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require(a.defined() && b.defined() && a.shape() == b.shape(),
          "add: shape mismatch " + (a.defined() ? to_string(a.shape()) : std::string("?")) + " vs " +
              (b.defined() ? to_string(b.shape()) : std::string("?")));
  auto out = tape.make_output(a.shape(), any_grad<T>({&a, &b}));
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    tape.record([ai = a.shared(), bi = b.shared(), oi = out.shared()] {
      if (oi->grad.empty()) return;
      for (auto* t : {&ai, &bi}) {
        if (auto g = grad_for(*t); !g.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require(a.defined() && b.defined() && a.shape().size() == b.shape().size() && !a.shape().empty(),
          "concat: rank mismatch");
  for (std::size_t i = 0; i + 1 < a.shape().size(); ++i) {
    require(a.dim(i) == b.dim(i), "concat: leading dimensions differ: " + to_string(a.shape()) +
                                      " vs " + to_string(b.shape()));
  }
  const std::int64_t ca = a.shape().back(), cb = b.shape().back();
  const std::int64_t rows = ca > 0 ? a.size() / ca : 0;
  Shape shape = a.shape();
  shape.back() = ca + cb;
  auto out = tape.make_output(shape, any_grad<T>({&a, &b}));
  auto o = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + r * ca, ca, o.begin() + r * (ca + cb));
    std::copy_n(b.data().begin() + r * cb, cb, o.begin() + r * (ca + cb) + ca);
  }
  if (out.requires_grad()) {
    tape.record([ai = a.shared(), bi = b.shared(), oi = out.shared(), rows, ca, cb] {
      if (oi->grad.empty()) return;
      auto ga = grad_for(ai);
      auto gb = grad_for(bi);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* g = oi->grad.data() + r * (ca + cb);
        if (!ga.empty()) {
          for (std::int64_t k = 0; k < ca; ++k) ga[static_cast<std::size_t>(r * ca + k)] += g[k];
        }
        if (!gb.empty()) {
          for (std::int64_t k = 0; k < cb; ++k) gb[static_cast<std::size_t>(r * cb + k)] += g[ca + k];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  require(x.defined() && numel(shape) == x.size(),
          "reshape: cannot view " + (x.defined() ? to_string(x.shape()) : std::string("?")) +
              " as " + to_string(shape));
  auto out = tape.make_output(std::move(shape), x.requires_grad());
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  if (out.requires_grad()) {
    tape.record([xi = x.shared(), oi = out.shared()] {
      if (oi->grad.empty()) return;
      auto g = grad_for(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_average(Tape<T>& tape, const Tensor<T>& x) {
  require_rank(x, 3, "global_average");
  const std::int64_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  require(n > 0, "global_average: no pixels");
  auto out = tape.make_output({b, c}, x.requires_grad());
  for (std::int64_t bb = 0; bb < b; ++bb) {
    for (std::int64_t k = 0; k < c; ++k) {
      T acc = 0;
      for (std::int64_t p = 0; p < n; ++p) acc += x.data()[static_cast<std::size_t>((bb * n + p) * c + k)];
      out.data()[static_cast<std::size_t>(bb * c + k)] = acc / static_cast<T>(n);
    }
  }
  if (out.requires_grad()) {
    tape.record([xi = x.shared(), oi = out.shared(), b, n, c] {
      if (oi->grad.empty()) return;
      auto g = grad_for(xi);
      for (std::int64_t bb = 0; bb < b; ++bb) {
        for (std::int64_t p = 0; p < n; ++p) {
          for (std::int64_t k = 0; k < c; ++k) {
            g[static_cast<std::size_t>((bb * n + p) * c + k)] += oi->grad[static_cast<std::size_t>(bb * c + k)] / static_cast<T>(n);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_xent(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::int32_t> labels,
                       std::int32_t ignore_label) {
  require_rank(logits, 2, "softmax_xent");
  const std::int64_t m = logits.dim(0), k = logits.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == m, "softmax_xent: one label per row required");
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(m * k));
  std::int64_t counted = 0;
  double loss = 0.0;
  for (std::int64_t r = 0; r < m; ++r) {
    const T* z = logits.data().data() + r * k;
    const T zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[j] - zmax));
    for (std::int64_t j = 0; j < k; ++j) {
      (*probs)[static_cast<std::size_t>(r * k + j)] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax)) / denom);
    }
    const std::int32_t label = labels[static_cast<std::size_t>(r)];
    if (label == ignore_label) continue;
    require(label >= 0 && label < k, "softmax_xent: label " + std::to_string(label) +
                                         " outside [0, " + std::to_string(k) + ")");
    loss += std::log(denom) - static_cast<double>(z[label] - zmax);
    ++counted;
  }
  if (counted == 0) throw ContractError("softmax_xent: every row is ignored");
  auto out = tape.make_output({1}, logits.requires_grad());
  out.data()[0] = static_cast<T>(loss / static_cast<double>(counted));
  if (out.requires_grad()) {
    std::vector<std::int32_t> label_copy(labels.begin(), labels.end());
    tape.record([li = logits.shared(), oi = out.shared(), probs, labels = std::move(label_copy), m, k,
                 counted, ignore_label] {
      if (oi->grad.empty()) return;
      auto g = grad_for(li);
      const T scale = oi->grad[0] / static_cast<T>(counted);
      for (std::int64_t r = 0; r < m; ++r) {
        const std::int32_t label = labels[static_cast<std::size_t>(r)];
        if (label == ignore_label) continue;
        for (std::int64_t j = 0; j < k; ++j) {
          const auto i = static_cast<std::size_t>(r * k + j);
          g[i] += scale * ((*probs)[i] - (j == label ? T(1) : T(0)));
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_squares(Tape<T>& tape, const Tensor<T>& x) {
  auto out = tape.make_output({1}, x.requires_grad());
  T acc = 0;
  for (const T v : x.data()) acc += v * v;
  out.data()[0] = acc;
  if (out.requires_grad()) {
    tape.record([xi = x.shared(), oi = out.shared()] {
      if (oi->grad.empty()) return;
      auto g = grad_for(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += T(2) * xi->data[i] * oi->grad[0];
    });
  }
  return out;
}

#define STM_INSTANTIATE_OPS(T)                                                                    \
  template Tensor<T> gather<T>(Tape<T>&, const Tensor<T>&, const TransformerGrid&);               \
  template Tensor<T> conv2d<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                               std::int64_t, std::int64_t);                                       \
  template Tensor<T> spherical_conv<T>(Tape<T>&, const Tensor<T>&, const TransformerGrid&,        \
                                       const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> conv1x1<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> linear<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> maxpool1x4<T>(Tape<T>&, const Tensor<T>&, std::vector<std::uint8_t>*);       \
  template Tensor<T> unpool_conv<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                    const Tensor<T>&);                                            \
  template Tensor<T> relu<T>(Tape<T>&, const Tensor<T>&);                                         \
  template Tensor<T> batchnorm<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                  BatchNormState<T>&, bool);                                      \
  template Tensor<T> add<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> concat<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> reshape<T>(Tape<T>&, const Tensor<T>&, Shape);                               \
  template Tensor<T> global_average<T>(Tape<T>&, const Tensor<T>&);                               \
  template Tensor<T> softmax_xent<T>(Tape<T>&, const Tensor<T>&, std::span<const std::int32_t>,   \
                                     std::int32_t);                                               \
  template Tensor<T> sum_squares<T>(Tape<T>&, const Tensor<T>&);

STM_INSTANTIATE_OPS(float)
STM_INSTANTIATE_OPS(double)

}  // namespace stm::nn
