#include "stm/kernels.hpp"

#include <algorithm>

namespace stm::kernels {

template <typename T>
void gather_forward(std::span<const T> x, std::int64_t batch, std::int64_t n, std::int64_t c,
                    std::span<const std::int32_t> rows, std::span<T> patches) {
  const std::int64_t row_len = 3 * n * c;  // one of the three patch rows
#pragma omp parallel for schedule(static)
  for (std::int64_t bp = 0; bp < batch * n; ++bp) {
    const std::int64_t b = bp / n;
    const std::int64_t p = bp % n;
    const T* src = x.data() + b * n * c;
    T* dst = patches.data() + b * 3 * row_len;
    for (int slot = 0; slot < kSlots; ++slot) {
      const std::int32_t q = rows[static_cast<std::size_t>(p * kSlots + slot)];
      T* out = dst + (slot / 3) * row_len + (3 * p + slot % 3) * c;
      if (q < 0) {
        std::fill(out, out + c, T(0));
      } else {
        std::copy(src + q * c, src + (q + 1) * c, out);
      }
    }
  }
}

template <typename T>
void gather_backward(std::span<const T> dpatches, std::int64_t batch, std::int64_t n,
                     std::int64_t c, std::span<const std::int32_t> rows, std::span<T> dx) {
  const std::int64_t row_len = 3 * n * c;
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < batch; ++b) {
    const T* src = dpatches.data() + b * 3 * row_len;
    T* dst = dx.data() + b * n * c;
    for (std::int64_t p = 0; p < n; ++p) {
      for (int slot = 0; slot < kSlots; ++slot) {
        const std::int32_t q = rows[static_cast<std::size_t>(p * kSlots + slot)];
        if (q < 0) continue;
        const T* g = src + (slot / 3) * row_len + (3 * p + slot % 3) * c;
        T* acc = dst + q * c;
        for (std::int64_t k = 0; k < c; ++k) acc[k] += g[k];
      }
    }
  }
}

template <typename T>
void conv2d_forward(std::span<const T> x, std::span<const T> weights, std::span<const T> bias,
                    const Conv2dDims& d, std::span<T> out) {
  const std::int64_t oh = d.out_h(), ow = d.out_w();
  const std::int64_t cin = d.cin, cout = d.cout;
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < d.batch * oh * ow; ++idx) {
    const std::int64_t b = idx / (oh * ow);
    const std::int64_t i = (idx / ow) % oh;
    const std::int64_t j = idx % ow;
    T* o = out.data() + idx * cout;
    if (bias.empty()) {
      std::fill(o, o + cout, T(0));
    } else {
      std::copy(bias.begin(), bias.end(), o);
    }
    for (std::int64_t r = 0; r < d.kh; ++r) {
      const T* row = x.data() + ((b * d.height + i * d.stride_h + r) * d.width) * cin;
      for (std::int64_t s = 0; s < d.kw; ++s) {
        const T* in = row + (j * d.stride_w + s) * cin;
        const T* w = weights.data() + (r * d.kw + s) * cin * cout;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          const T v = in[ci];
          if (v == T(0)) continue;
          const T* wr = w + ci * cout;
          for (std::int64_t co = 0; co < cout; ++co) o[co] += v * wr[co];
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(std::span<const T> x, std::span<const T> weights, std::span<const T> dout,
                     const Conv2dDims& d, std::span<T> dx, std::span<T> dweights,
                     std::span<T> dbias) {
  const std::int64_t oh = d.out_h(), ow = d.out_w();
  const std::int64_t cin = d.cin, cout = d.cout;
  const std::int64_t n_out = d.batch * oh * ow;

  if (!dbias.empty()) {
    for (std::int64_t idx = 0; idx < n_out; ++idx) {
      const T* g = dout.data() + idx * cout;
      for (std::int64_t co = 0; co < cout; ++co) dbias[static_cast<std::size_t>(co)] += g[co];
    }
  }

  if (!dweights.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t rs = 0; rs < d.kh * d.kw; ++rs) {
      const std::int64_t r = rs / d.kw, s = rs % d.kw;
      T* dw = dweights.data() + rs * cin * cout;
      for (std::int64_t idx = 0; idx < n_out; ++idx) {
        const std::int64_t b = idx / (oh * ow);
        const std::int64_t i = (idx / ow) % oh;
        const std::int64_t j = idx % ow;
        const T* in =
            x.data() + ((b * d.height + i * d.stride_h + r) * d.width + j * d.stride_w + s) * cin;
        const T* g = dout.data() + idx * cout;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          const T v = in[ci];
          if (v == T(0)) continue;
          T* dwr = dw + ci * cout;
          for (std::int64_t co = 0; co < cout; ++co) dwr[co] += v * g[co];
        }
      }
    }
  }

  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < d.batch; ++b) {
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t j = 0; j < ow; ++j) {
          const T* g = dout.data() + ((b * oh + i) * ow + j) * cout;
          for (std::int64_t r = 0; r < d.kh; ++r) {
            for (std::int64_t s = 0; s < d.kw; ++s) {
              T* acc = dx.data() +
                       ((b * d.height + i * d.stride_h + r) * d.width + j * d.stride_w + s) * cin;
              const T* w = weights.data() + (r * d.kw + s) * cin * cout;
              for (std::int64_t ci = 0; ci < cin; ++ci) {
                const T* wr = w + ci * cout;
                T sum = 0;
                for (std::int64_t co = 0; co < cout; ++co) sum += wr[co] * g[co];
                acc[ci] += sum;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void matmul_forward(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::int64_t m, std::int64_t k, std::int64_t n, std::span<T> out) {
#pragma omp parallel for schedule(static)
  for (std::int64_t row = 0; row < m; ++row) {
    T* o = out.data() + row * n;
    if (bias.empty()) {
      std::fill(o, o + n, T(0));
    } else {
      std::copy(bias.begin(), bias.end(), o);
    }
    const T* in = x.data() + row * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T v = in[kk];
      if (v == T(0)) continue;
      const T* wr = w.data() + kk * n;
      for (std::int64_t j = 0; j < n; ++j) o[j] += v * wr[j];
    }
  }
}

template <typename T>
void matmul_backward(std::span<const T> x, std::span<const T> w, std::span<const T> dout,
                     std::int64_t m, std::int64_t k, std::int64_t n, std::span<T> dx,
                     std::span<T> dw, std::span<T> dbias) {
  if (!dbias.empty()) {
    for (std::int64_t row = 0; row < m; ++row) {
      const T* g = dout.data() + row * n;
      for (std::int64_t j = 0; j < n; ++j) dbias[static_cast<std::size_t>(j)] += g[j];
    }
  }
  if (!dw.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t kk = 0; kk < k; ++kk) {
      T* dwr = dw.data() + kk * n;
      for (std::int64_t row = 0; row < m; ++row) {
        const T v = x[static_cast<std::size_t>(row * k + kk)];
        if (v == T(0)) continue;
        const T* g = dout.data() + row * n;
        for (std::int64_t j = 0; j < n; ++j) dwr[j] += v * g[j];
      }
    }
  }
  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t row = 0; row < m; ++row) {
      const T* g = dout.data() + row * n;
      T* acc = dx.data() + row * k;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const T* wr = w.data() + kk * n;
        T sum = 0;
        for (std::int64_t j = 0; j < n; ++j) sum += wr[j] * g[j];
        acc[kk] += sum;
      }
    }
  }
}

template <typename T>
void maxpool4_forward(std::span<const T> x, std::int64_t batch, std::int64_t n_out,
                      std::int64_t c, std::span<T> out, std::span<std::uint8_t> argmax) {
#pragma omp parallel for schedule(static)
  for (std::int64_t bp = 0; bp < batch * n_out; ++bp) {
    const T* in = x.data() + bp * 4 * c;
    T* o = out.data() + bp * c;
    std::uint8_t* a = argmax.data() + bp * c;
    for (std::int64_t k = 0; k < c; ++k) {
      T best = in[k];
      std::uint8_t arg = 0;
      for (std::uint8_t child = 1; child < 4; ++child) {
        const T v = in[child * c + k];
        if (v > best) {
          best = v;
          arg = child;
        }
      }
      o[k] = best;
      a[k] = arg;
    }
  }
}

template <typename T>
void maxpool4_backward(std::span<const T> dout, std::span<const std::uint8_t> argmax,
                       std::int64_t batch, std::int64_t n_out, std::int64_t c, std::span<T> dx) {
#pragma omp parallel for schedule(static)
  for (std::int64_t bp = 0; bp < batch * n_out; ++bp) {
    const T* g = dout.data() + bp * c;
    const std::uint8_t* a = argmax.data() + bp * c;
    T* acc = dx.data() + bp * 4 * c;
    for (std::int64_t k = 0; k < c; ++k) acc[a[k] * c + k] += g[k];
  }
}

#define STM_INSTANTIATE_KERNELS(T)                                                              \
  template void gather_forward<T>(std::span<const T>, std::int64_t, std::int64_t, std::int64_t, \
                                  std::span<const std::int32_t>, std::span<T>);                 \
  template void gather_backward<T>(std::span<const T>, std::int64_t, std::int64_t,              \
                                   std::int64_t, std::span<const std::int32_t>, std::span<T>);  \
  template void conv2d_forward<T>(std::span<const T>, std::span<const T>, std::span<const T>,   \
                                  const Conv2dDims&, std::span<T>);                             \
  template void conv2d_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>,  \
                                   const Conv2dDims&, std::span<T>, std::span<T>, std::span<T>); \
  template void matmul_forward<T>(std::span<const T>, std::span<const T>, std::span<const T>,   \
                                  std::int64_t, std::int64_t, std::int64_t, std::span<T>);      \
  template void matmul_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>,  \
                                   std::int64_t, std::int64_t, std::int64_t, std::span<T>,      \
                                   std::span<T>, std::span<T>);                                 \
  template void maxpool4_forward<T>(std::span<const T>, std::int64_t, std::int64_t,             \
                                    std::int64_t, std::span<T>, std::span<std::uint8_t>);       \
  template void maxpool4_backward<T>(std::span<const T>, std::span<const std::uint8_t>,         \
                                     std::int64_t, std::int64_t, std::int64_t, std::span<T>);

STM_INSTANTIATE_KERNELS(float)
STM_INSTANTIATE_KERNELS(double)

}  // namespace stm::kernels
