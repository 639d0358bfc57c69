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

// Reverse-mode differentiation over the engine's layer set. Activations
// are batched N x C x H x W (or N x F after pooling). The tape is
// templated so gradients can be checked in double precision.

#include <cmath>
#include <functional>
#include <vector>

#include "rrr/errors.hpp"
#include "rrr/kernels.hpp"
#include "rrr/tensor.hpp"

namespace rrr::ad {

template <class T>
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor<T> value, bool requires_grad) { return push(std::move(value), requires_grad, {}); }

  const Tensor<T>& value(Id id) const { return nodes_[idx(id)].value; }
  /// Gradient of the last backward() target; zeros if none flowed here.
  const Tensor<T>& grad(Id id) {
    auto& n = nodes_[idx(id)];
    ensure_grad(n);
    return n.grad;
  }
  bool requires_grad(Id id) const { return nodes_[idx(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Id conv2d(Id x, Id w, int stride, int pad) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    const int n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const int co = wv.dim(0), k = wv.dim(2);
    if (wv.dim(1) != ci) throw ShapeError("conv input channels " + std::to_string(ci) + " vs weight " + shape_str(wv.shape));
    const int ho = kernels::conv_out(h, k, stride, pad), wo = kernels::conv_out(wd, k, stride, pad);
    Tensor<T> y({n, co, ho, wo});
    kernels::Workspace<T> ws;
    const std::size_t in_sz = static_cast<std::size_t>(ci) * h * wd, out_sz = static_cast<std::size_t>(co) * ho * wo;
    for (int b = 0; b < n; ++b) {
      kernels::conv2d(xv.ptr() + b * in_sz, ci, h, wd, wv.ptr(), co, k, stride, pad, y.ptr() + b * out_sz, ws);
    }
    return push(std::move(y), any(x, w), [=, this](Node& self) {
      auto& xn = nodes_[idx(x)];
      auto& wn = nodes_[idx(w)];
      T* dx = nullptr;
      if (xn.requires_grad) ensure_grad(xn);
      if (wn.requires_grad) ensure_grad(wn);
      kernels::Workspace<T> ws2;
      std::vector<T> dx_img(xn.requires_grad ? in_sz : 0);
      for (int b = 0; b < n; ++b) {
        dx = xn.requires_grad ? dx_img.data() : nullptr;
        kernels::conv2d_backward(xn.value.ptr() + b * in_sz, ci, h, wd, wn.value.ptr(), co, k, stride, pad,
                                 self.grad.ptr() + b * out_sz, dx, wn.requires_grad ? wn.grad.ptr() : nullptr, ws2);
        if (dx) {
          T* g = xn.grad.ptr() + b * in_sz;
          for (std::size_t i = 0; i < in_sz; ++i) g[i] += dx[i];
        }
      }
    });
  }

  /// Batch norm over (N, H, W) per channel. In training mode batch
  /// statistics normalize and the running statistics (if given) move by
  /// `momentum`, using the unbiased variance. Otherwise the running
  /// statistics normalize.
  Id batch_norm(Id x, Id gamma, Id beta, T* running_mean, T* running_var, bool training, T momentum, T eps) {
    const auto& xv = value(x);
    const int n = xv.dim(0), c = xv.dim(1);
    const int hw = xv.rank() == 4 ? xv.dim(2) * xv.dim(3) : 1;
    const std::size_t m = static_cast<std::size_t>(n) * hw;
    std::vector<T> mean(static_cast<std::size_t>(c)), invstd(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
      if (training) {
        T s{}, sq{};
        for (int b = 0; b < n; ++b) {
          const T* p = xv.ptr() + (static_cast<std::size_t>(b) * c + ch) * hw;
          for (int i = 0; i < hw; ++i) s += p[i];
        }
        const T mu = s / static_cast<T>(m);
        for (int b = 0; b < n; ++b) {
          const T* p = xv.ptr() + (static_cast<std::size_t>(b) * c + ch) * hw;
          for (int i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
        }
        const T var = sq / static_cast<T>(m);
        mean[ch] = mu;
        invstd[ch] = T(1) / std::sqrt(var + eps);
        if (running_mean && running_var) {
          const T unbiased = m > 1 ? sq / static_cast<T>(m - 1) : var;
          running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
          running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
        }
      } else {
        mean[ch] = running_mean[ch];
        invstd[ch] = T(1) / std::sqrt(running_var[ch] + eps);
      }
    }
    const auto& g = value(gamma);
    const auto& bt = value(beta);
    Tensor<T> xhat(xv.shape), y(xv.shape);
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
        for (int i = 0; i < hw; ++i) {
          xhat[off + i] = (xv[off + i] - mean[ch]) * invstd[ch];
          y[off + i] = g[ch] * xhat[off + i] + bt[ch];
        }
      }
    return push(std::move(y), any(x, gamma, beta),
                [=, this, xhat = std::move(xhat), invstd = std::move(invstd)](Node& self) {
                  auto& xn = nodes_[idx(x)];
                  auto& gn = nodes_[idx(gamma)];
                  auto& bn = nodes_[idx(beta)];
                  const auto& dy = self.grad;
                  for (auto* p : {&xn, &gn, &bn}) if (p->requires_grad) ensure_grad(*p);
                  for (int ch = 0; ch < c; ++ch) {
                    T sum_dy{}, sum_dy_xhat{};
                    for (int b = 0; b < n; ++b) {
                      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
                      for (int i = 0; i < hw; ++i) {
                        sum_dy += dy[off + i];
                        sum_dy_xhat += dy[off + i] * xhat[off + i];
                      }
                    }
                    if (gn.requires_grad) gn.grad[ch] += sum_dy_xhat;
                    if (bn.requires_grad) bn.grad[ch] += sum_dy;
                    if (!xn.requires_grad) continue;
                    const T gamma_c = gn.value[ch];
                    for (int b = 0; b < n; ++b) {
                      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
                      for (int i = 0; i < hw; ++i) {
                        if (training) {
                          xn.grad[off + i] += gamma_c * invstd[ch] / static_cast<T>(m) *
                                              (static_cast<T>(m) * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
                        } else {
                          xn.grad[off + i] += gamma_c * invstd[ch] * dy[off + i];
                        }
                      }
                    }
                  }
                });
  }

  Id relu(Id x) {
    Tensor<T> y = value(x);
    for (auto& v : y.data) v = v < T{} ? T{} : v;
    return push(std::move(y), any(x), [=, this](Node& self) {
      auto& xn = nodes_[idx(x)];
      if (!xn.requires_grad) return;
      ensure_grad(xn);
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        if (xn.value[i] > T{}) xn.grad[i] += self.grad[i];
      }
    });
  }

  Id max_pool(Id x, int k, int stride, int pad) {
    const auto& xv = value(x);
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int ho = kernels::conv_out(h, k, stride, pad), wo = kernels::conv_out(w, k, stride, pad);
    Tensor<T> y({n, c, ho, wo});
    std::vector<int> arg(y.size());
    const std::size_t in_sz = static_cast<std::size_t>(c) * h * w, out_sz = static_cast<std::size_t>(c) * ho * wo;
    for (int b = 0; b < n; ++b) {
      kernels::max_pool(xv.ptr() + b * in_sz, c, h, w, k, stride, pad, y.ptr() + b * out_sz, arg.data() + b * out_sz);
    }
    return push(std::move(y), any(x), [=, this, arg = std::move(arg)](Node& self) {
      auto& xn = nodes_[idx(x)];
      if (!xn.requires_grad) return;
      ensure_grad(xn);
      for (int b = 0; b < n; ++b)
        for (std::size_t o = 0; o < out_sz; ++o) {
          xn.grad[b * in_sz + static_cast<std::size_t>(arg[b * out_sz + o])] += self.grad[b * out_sz + o];
        }
    });
  }

  Id add(Id a, Id b) {
    if (value(a).shape != value(b).shape) {
      throw ShapeError("add of " + shape_str(value(a).shape) + " and " + shape_str(value(b).shape));
    }
    Tensor<T> y = value(a);
    const auto& bv = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    return push(std::move(y), any(a, b), [=, this](Node& self) {
      for (Id in : {a, b}) {
        auto& n = nodes_[idx(in)];
        if (!n.requires_grad) continue;
        ensure_grad(n);
        for (std::size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += self.grad[i];
      }
    });
  }

  Id global_avg_pool(Id x) {
    const auto& xv = value(x);
    const int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor<T> y({n, c});
    for (int b = 0; b < n; ++b) {
      kernels::global_avg_pool(xv.ptr() + static_cast<std::size_t>(b) * c * hw, c, hw, y.ptr() + static_cast<std::size_t>(b) * c);
    }
    return push(std::move(y), any(x), [=, this](Node& self) {
      auto& xn = nodes_[idx(x)];
      if (!xn.requires_grad) return;
      ensure_grad(xn);
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const T g = self.grad[static_cast<std::size_t>(b) * c + ch] / static_cast<T>(hw);
          T* p = xn.grad.ptr() + (static_cast<std::size_t>(b) * c + ch) * hw;
          for (int i = 0; i < hw; ++i) p[i] += g;
        }
    });
  }

  /// x [N, F], w [K, F], b [K] -> [N, K]
  Id linear(Id x, Id w, Id bias) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    const int n = xv.dim(0), f = xv.dim(1), k = wv.dim(0);
    if (wv.dim(1) != f) throw ShapeError("linear features " + std::to_string(f) + " vs weight " + shape_str(wv.shape));
    Tensor<T> y({n, k});
    for (int b = 0; b < n; ++b) {
      kernels::linear(xv.ptr() + static_cast<std::size_t>(b) * f, f, wv.ptr(), value(bias).ptr(), k,
                      y.ptr() + static_cast<std::size_t>(b) * k);
    }
    return push(std::move(y), any(x, w, bias), [=, this](Node& self) {
      auto& xn = nodes_[idx(x)];
      auto& wn = nodes_[idx(w)];
      auto& bn = nodes_[idx(bias)];
      for (auto* p : {&xn, &wn, &bn}) if (p->requires_grad) ensure_grad(*p);
      for (int b = 0; b < n; ++b) {
        const T* dy = self.grad.ptr() + static_cast<std::size_t>(b) * k;
        const T* xr = xn.value.ptr() + static_cast<std::size_t>(b) * f;
        for (int o = 0; o < k; ++o) {
          if (bn.requires_grad) bn.grad[o] += dy[o];
          const std::size_t row = static_cast<std::size_t>(o) * f;
          if (wn.requires_grad) for (int i = 0; i < f; ++i) wn.grad[row + i] += dy[o] * xr[i];
          if (xn.requires_grad) {
            T* dx = xn.grad.ptr() + static_cast<std::size_t>(b) * f;
            for (int i = 0; i < f; ++i) dx[i] += dy[o] * wn.value[row + i];
          }
        }
      }
    });
  }

  /// Mean softmax cross-entropy over the batch; returns a 1-element node.
  Id softmax_ce(Id logits, const std::vector<int>& labels) {
    const auto& z = value(logits);
    const int n = z.dim(0), k = z.dim(1);
    if (static_cast<int>(labels.size()) != n) throw ShapeError("label count does not match the batch");
    Tensor<T> probs = z;
    T loss{};
    for (int b = 0; b < n; ++b) {
      std::span<T> row(probs.ptr() + static_cast<std::size_t>(b) * k, static_cast<std::size_t>(k));
      kernels::softmax(row);
      const int y = labels[static_cast<std::size_t>(b)];
      if (y < 0 || y >= k) throw ValidationError("label " + std::to_string(y) + " out of range");
      loss -= std::log(std::max(row[static_cast<std::size_t>(y)], std::numeric_limits<T>::min()));
    }
    Tensor<T> out({1}, loss / static_cast<T>(n));
    return push(std::move(out), any(logits), [=, this, probs = std::move(probs)](Node& self) {
      auto& zn = nodes_[idx(logits)];
      if (!zn.requires_grad) return;
      ensure_grad(zn);
      const T scale = self.grad[0] / static_cast<T>(n);
      for (int b = 0; b < n; ++b)
        for (int o = 0; o < k; ++o) {
          const std::size_t i = static_cast<std::size_t>(b) * k + o;
          zn.grad[i] += scale * (probs[i] - (o == labels[static_cast<std::size_t>(b)] ? T(1) : T(0)));
        }
    });
  }

  /// sum_i x[i] * weights[i]; a scalar probe for checking non-scalar ops.
  Id weighted_sum(Id x, Tensor<T> weights) {
    const auto& xv = value(x);
    if (weights.size() != xv.size()) throw ShapeError("weighted_sum: weight count does not match");
    T s{};
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
    return push(Tensor<T>({1}, s), any(x), [=, this, weights = std::move(weights)](Node& self) {
      auto& xn = nodes_[idx(x)];
      if (!xn.requires_grad) return;
      ensure_grad(xn);
      for (std::size_t i = 0; i < weights.size(); ++i) xn.grad[i] += self.grad[0] * weights[i];
    });
  }

  /// Seeds d(target)/d(target) = 1 and runs every recorded backward step.
  void backward(Id target) {
    if (value(target).size() != 1) throw ShapeError("backward needs a scalar target");
    for (auto& n : nodes_) n.grad = Tensor<T>();
    auto& t = nodes_[idx(target)];
    ensure_grad(t);
    t.grad[0] = T(1);
    for (std::size_t i = idx(target) + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward && n.requires_grad && !n.grad.data.empty()) n.backward(n);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void(Node&)> backward;
  };

  static std::size_t idx(Id id) { return static_cast<std::size_t>(id); }
  static void ensure_grad(Node& n) {
    if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.shape);
  }

  template <class... Ids>
  bool any(Ids... ids) const {
    return (nodes_[idx(ids)].requires_grad || ...);
  }

  Id push(Tensor<T> value, bool requires_grad, std::function<void(Node&)> backward) {
    nodes_.push_back({std::move(value), Tensor<T>(), requires_grad, std::move(backward)});
    return static_cast<Id>(nodes_.size() - 1);
  }

  // Backward closures index nodes_ instead of holding references, since the
  // vector grows while the graph is recorded.
  std::vector<Node> nodes_;
};

}  // namespace rrr::ad
