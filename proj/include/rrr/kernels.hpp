// Copyright 2026 The rrrnet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Single-image CPU kernels over C x H x W buffers. Every reduction runs in
// a fixed order, so results are bit-reproducible for identical inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace rrr::kernels {

inline int conv_out(int side, int kernel, int stride, int pad) {
  return (side + 2 * pad - kernel) / stride + 1;
}

/// C[M x N] (+)= A[M x K] * B[K x N], all row-major with explicit strides.
template <class T>
void gemm(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc,
          bool accumulate) {
  if (!accumulate) {
    for (int i = 0; i < M; ++i) std::fill_n(C + static_cast<std::size_t>(i) * ldc, N, T{});
  }
  constexpr int kBlockK = 128;
  constexpr int kBlockN = 512;
  for (int k0 = 0; k0 < K; k0 += kBlockK) {
    const int k1 = std::min(K, k0 + kBlockK);
    for (int j0 = 0; j0 < N; j0 += kBlockN) {
      const int jn = std::min(N, j0 + kBlockN) - j0;
      int i = 0;
      for (; i + 4 <= M; i += 4) {
        T* c0 = C + static_cast<std::size_t>(i) * ldc + j0;
        T* c1 = c0 + ldc;
        T* c2 = c1 + ldc;
        T* c3 = c2 + ldc;
        const T* a = A + static_cast<std::size_t>(i) * lda;
        for (int k = k0; k < k1; ++k) {
          const T a0 = a[k];
          const T a1 = a[lda + k];
          const T a2 = a[2 * lda + k];
          const T a3 = a[3 * lda + k];
          const T* b = B + static_cast<std::size_t>(k) * ldb + j0;
          for (int j = 0; j < jn; ++j) {
            const T bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      }
      for (; i < M; ++i) {
        T* c = C + static_cast<std::size_t>(i) * ldc + j0;
        const T* a = A + static_cast<std::size_t>(i) * lda;
        for (int k = k0; k < k1; ++k) {
          const T ak = a[k];
          const T* b = B + static_cast<std::size_t>(k) * ldb + j0;
          for (int j = 0; j < jn; ++j) c[j] += ak * b[j];
        }
      }
    }
  }
}

/// Row-major transpose of an R x C matrix.
template <class T>
void transpose(int R, int C, const T* in, T* out) {
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out[static_cast<std::size_t>(c) * R + r] = in[static_cast<std::size_t>(r) * C + c];
}

/// Unfolds a C x H x W image into (C*k*k) x (Ho*Wo) columns.
template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, T* col) {
  const int Ho = conv_out(H, k, stride, pad);
  const int Wo = conv_out(W, k, stride, pad);
  std::size_t row = 0;
  for (int c = 0; c < C; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        T* out = col + row * static_cast<std::size_t>(Ho) * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride - pad + kh;
          T* o = out + static_cast<std::size_t>(oh) * Wo;
          if (ih < 0 || ih >= H) {
            std::fill_n(o, Wo, T{});
            continue;
          }
          const T* xr = xc + static_cast<std::size_t>(ih) * W;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * stride - pad + kw;
            o[ow] = (iw >= 0 && iw < W) ? xr[iw] : T{};
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters columns back into a zeroed C x H x W buffer.
template <class T>
void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, T* x) {
  const int Ho = conv_out(H, k, stride, pad);
  const int Wo = conv_out(W, k, stride, pad);
  std::fill_n(x, static_cast<std::size_t>(C) * H * W, T{});
  std::size_t row = 0;
  for (int c = 0; c < C; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        const T* in = col + row * static_cast<std::size_t>(Ho) * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          T* xr = xc + static_cast<std::size_t>(ih) * W;
          const T* i = in + static_cast<std::size_t>(oh) * Wo;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) xr[iw] += i[ow];
          }
        }
      }
    }
  }
}

/// Reusable scratch space so repeated convolutions do not reallocate.
template <class T>
struct Workspace {
  std::vector<T> col;
  T* columns(std::size_t n) {
    if (col.size() < n) col.resize(n);
    return col.data();
  }
};

/// y[Co x Ho x Wo] = conv(x[Ci x H x W], w[Co x Ci x k x k]); no bias.
template <class T>
void conv2d(const T* x, int Ci, int H, int W, const T* w, int Co, int k, int stride, int pad, T* y,
            Workspace<T>& ws) {
  const int Ho = conv_out(H, k, stride, pad);
  const int Wo = conv_out(W, k, stride, pad);
  const int K = Ci * k * k;
  const int N = Ho * Wo;
  const T* B = x;
  if (k != 1 || stride != 1 || pad != 0) {
    T* col = ws.columns(static_cast<std::size_t>(K) * N);
    im2col(x, Ci, H, W, k, stride, pad, col);
    B = col;
  }
  gemm(Co, N, K, w, K, B, N, y, N, false);
}

/// Gradients of conv2d. dx may be null when the input needs no gradient.
/// dw is accumulated into.
template <class T>
void conv2d_backward(const T* x, int Ci, int H, int W, const T* w, int Co, int k, int stride, int pad,
                     const T* dy, T* dx, T* dw, Workspace<T>& ws) {
  const int Ho = conv_out(H, k, stride, pad);
  const int Wo = conv_out(W, k, stride, pad);
  const int K = Ci * k * k;
  const int N = Ho * Wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);
  std::vector<T> colbuf;
  const T* col = x;
  if (!direct) {
    colbuf.resize(static_cast<std::size_t>(K) * N);
    im2col(x, Ci, H, W, k, stride, pad, colbuf.data());
    col = colbuf.data();
  }
  if (dw) {
    // dw[Co x K] += dy[Co x N] * col^T[N x K]
    std::vector<T> colT(static_cast<std::size_t>(N) * K);
    transpose(K, N, col, colT.data());
    gemm(Co, K, N, dy, N, colT.data(), K, dw, K, true);
  }
  if (dx) {
    // dcol[K x N] = w^T[K x Co] * dy[Co x N]
    std::vector<T> wT(static_cast<std::size_t>(K) * Co);
    transpose(Co, K, w, wT.data());
    if (direct) {
      gemm(K, N, Co, wT.data(), Co, dy, N, dx, N, false);
    } else {
      T* dcol = ws.columns(static_cast<std::size_t>(K) * N);
      gemm(K, N, Co, wT.data(), Co, dy, N, dcol, N, false);
      col2im(dcol, Ci, H, W, k, stride, pad, dx);
    }
  }
}

/// Inference-mode batch norm in place: y = gamma * (x - mean) / sqrt(var + eps) + beta.
template <class T>
void batch_norm_inference(T* x, int C, int HW, const T* gamma, const T* beta, const T* mean, const T* var,
                          T eps) {
  for (int c = 0; c < C; ++c) {
    const T scale = gamma[c] / std::sqrt(var[c] + eps);
    const T shift = beta[c] - mean[c] * scale;
    T* xc = x + static_cast<std::size_t>(c) * HW;
    for (int i = 0; i < HW; ++i) xc[i] = xc[i] * scale + shift;
  }
}

template <class T>
void relu(std::span<T> x) {
  for (auto& v : x) v = v < T{} ? T{} : v;  // NaN passes through
}

/// Max pool with implicit -inf padding. `argmax` (optional) receives the
/// flat input index of each output.
template <class T>
void max_pool(const T* x, int C, int H, int W, int k, int stride, int pad, T* y, int* argmax = nullptr) {
  const int Ho = conv_out(H, k, stride, pad);
  const int Wo = conv_out(W, k, stride, pad);
  for (int c = 0; c < C; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * H * W;
    for (int oh = 0; oh < Ho; ++oh) {
      for (int ow = 0; ow < Wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        int best_idx = -1;
        for (int kh = 0; kh < k; ++kh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          for (int kw = 0; kw < k; ++kw) {
            const int iw = ow * stride - pad + kw;
            if (iw < 0 || iw >= W) continue;
            const T v = xc[ih * W + iw];
            if (v > best || best_idx < 0) {
              best = v;
              best_idx = ih * W + iw;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(c) * Ho + oh) * Wo + ow;
        y[o] = best;
        if (argmax) argmax[o] = c * H * W + best_idx;
      }
    }
  }
}

template <class T>
void global_avg_pool(const T* x, int C, int HW, T* y) {
  for (int c = 0; c < C; ++c) {
    T s{};
    const T* xc = x + static_cast<std::size_t>(c) * HW;
    for (int i = 0; i < HW; ++i) s += xc[i];
    y[c] = s / static_cast<T>(HW);
  }
}

/// logits[classes] = W[classes x features] * x + b
template <class T>
void linear(const T* x, int features, const T* w, const T* b, int classes, T* out) {
  for (int o = 0; o < classes; ++o) {
    T s = b ? b[o] : T{};
    const T* wr = w + static_cast<std::size_t>(o) * features;
    for (int i = 0; i < features; ++i) s += wr[i] * x[i];
    out[o] = s;
  }
}

/// Numerically stable softmax in place.
template <class T>
void softmax(std::span<T> v) {
  if (v.empty()) return;
  const T m = *std::max_element(v.begin(), v.end());
  T s{};
  for (auto& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (auto& x : v) x /= s;
}

}  // namespace rrr::kernels
