// Copyright 2026 The MACO Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "maco/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Core>

namespace maco {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using CStridedR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;

// Per-channel sums over the rows of a row-major [n,c] buffer of f(i) values.
// Rows are accumulated in T within blocks and the block totals in double, so
// long columns keep their precision while the inner loop stays contiguous.
template <typename T, typename F>
std::vector<double> channel_sums(std::int64_t n, std::int64_t c, F value) {
  constexpr std::int64_t kBlock = 256;
  std::vector<double> total(static_cast<std::size_t>(c), 0.0);
  std::vector<T> acc(static_cast<std::size_t>(c));
  for (std::int64_t r0 = 0; r0 < n; r0 += kBlock) {
    std::fill(acc.begin(), acc.end(), T(0));
    const std::int64_t r1 = std::min(n, r0 + kBlock);
    T* a = acc.data();
    for (std::int64_t r = r0; r < r1; ++r) {
      const std::size_t base = static_cast<std::size_t>(r * c);
      for (std::int64_t j = 0; j < c; ++j) a[j] += value(base + j, j);
    }
    for (std::int64_t j = 0; j < c; ++j) total[j] += a[j];
  }
  return total;
}

[[noreturn]] void shape_error(std::string_view where, const std::string& what) {
  fail(ErrorKind::kShape, std::string(where), what);
}

template <typename T>
detail::Node<T>& parent(detail::Node<T>& self, std::size_t i) {
  return *self.parents[i];
}

struct Image4 {
  std::int64_t batch, height, width, channels;
  bool batched;
};

template <typename T>
Image4 image_dims(const Tensor<T>& x, std::string_view where) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  shape_error(where, "expected [H,W,C] or [B,H,W,C], got " + shape_str(x.shape()));
}

// Patch matrix for a 3x3 same-padded conv: row (y*W+x), column ((ky*3+kx)*C+c).
template <typename T>
void im2col3x3(const T* src, std::int64_t h, std::int64_t w, std::int64_t c, T* patches) {
  const std::int64_t row_len = 9 * c;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      T* row = patches + (y * w + x) * row_len;
      for (std::int64_t ky = 0; ky < 3; ++ky) {
        const std::int64_t sy = y + ky - 1;
        for (std::int64_t kx = 0; kx < 3; ++kx) {
          const std::int64_t sx = x + kx - 1;
          T* dst = row + (ky * 3 + kx) * c;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            std::fill(dst, dst + c, T(0));
          } else {
            std::copy_n(src + (sy * w + sx) * c, c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3_add(const T* patches, std::int64_t h, std::int64_t w, std::int64_t c, T* dst) {
  const std::int64_t row_len = 9 * c;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const T* row = patches + (y * w + x) * row_len;
      for (std::int64_t ky = 0; ky < 3; ++ky) {
        const std::int64_t sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (std::int64_t kx = 0; kx < 3; ++kx) {
          const std::int64_t sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const T* from = row + (ky * 3 + kx) * c;
          T* to = dst + (sy * w + sx) * c;
          for (std::int64_t i = 0; i < c; ++i) to[i] += from[i];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  Buffer<T> out(x.size());
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Eigen::Map<const Arr<T>> in(x.data().data(), n);
  // max(x,0) + (exp(min(x,0)) - 1) is exact on the positive branch and vectorizes.
  Eigen::Map<Arr<T>>(out.data(), n) = in.max(T(0)) + (in.min(T(0)).exp() - T(1));
  return make_result<T>(x.shape(), std::move(out), {x}, [n](detail::Node<T>& self) {
    Eigen::Map<Arr<T>> gx(parent(self, 0).ensure_grad().data(), n);
    Eigen::Map<const Arr<T>> y(self.data.data(), n);
    Eigen::Map<const Arr<T>> dy(self.grad.data(), n);
    gx += dy * (y.min(T(0)) + T(1));
  });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias, std::string_view where) {
  if (weights.rank() != 2) shape_error(where, "weights must be [out,in], got " + shape_str(weights.shape()));
  const std::int64_t out_dim = weights.dim(0);
  const std::int64_t in_dim = weights.dim(1);
  if (x.rank() != 1 && x.rank() != 2) shape_error(where, "input must be [in] or [N,in], got " + shape_str(x.shape()));
  const std::int64_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::int64_t x_in = x.rank() == 1 ? x.dim(0) : x.dim(1);
  if (x_in != in_dim) {
    shape_error(where, "input extent " + std::to_string(x_in) + " does not match weights " + shape_str(weights.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != out_dim) {
    shape_error(where, "bias must be [" + std::to_string(out_dim) + "], got " + shape_str(bias.shape()));
  }

  Buffer<T> out(static_cast<std::size_t>(rows * out_dim));
  MapR<T> y(out.data(), rows, out_dim);
  CMapR<T> xm(x.data().data(), rows, in_dim);
  CMapR<T> wm(weights.data().data(), out_dim, in_dim);
  Eigen::Map<const RowVec<T>> bv(bias.data().data(), out_dim);
  y.noalias() = xm * wm.transpose();
  y.rowwise() += bv;

  Shape shape = x.rank() == 1 ? Shape{out_dim} : Shape{rows, out_dim};
  return make_result<T>(std::move(shape), std::move(out), {x, weights, bias},
                        [rows, in_dim, out_dim](detail::Node<T>& self) {
                          CMapR<T> dy(self.grad.data(), rows, out_dim);
                          auto& px = parent(self, 0);
                          auto& pw = parent(self, 1);
                          auto& pb = parent(self, 2);
                          if (px.requires_grad) {
                            MapR<T> dx(px.ensure_grad().data(), rows, in_dim);
                            dx.noalias() += dy * CMapR<T>(pw.data.data(), out_dim, in_dim);
                          }
                          if (pw.requires_grad) {
                            MapR<T> dw(pw.ensure_grad().data(), out_dim, in_dim);
                            dw.noalias() += dy.transpose() * CMapR<T>(px.data.data(), rows, in_dim);
                          }
                          if (pb.requires_grad) {
                            Eigen::Map<RowVec<T>> db(pb.ensure_grad().data(), out_dim);
                            db += dy.colwise().sum();
                          }
                        });
}

template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias, std::string_view where) {
  const Image4 d = image_dims(x, where);
  if (kernels.rank() != 4 || kernels.dim(0) != 3 || kernels.dim(1) != 3) {
    shape_error(where, "kernels must be [3,3,Cin,Cout], got " + shape_str(kernels.shape()));
  }
  if (kernels.dim(2) != d.channels) {
    shape_error(where, "input has " + std::to_string(d.channels) + " channels, kernels expect " +
                           std::to_string(kernels.dim(2)));
  }
  const std::int64_t filters = kernels.dim(3);
  if (bias.rank() != 1 || bias.dim(0) != filters) {
    shape_error(where, "bias must be [" + std::to_string(filters) + "], got " + shape_str(bias.shape()));
  }
  const std::int64_t pixels = d.height * d.width;
  const std::int64_t patch = 9 * d.channels;

  Buffer<T> out(static_cast<std::size_t>(d.batch * pixels * filters));
  Buffer<T> patches(static_cast<std::size_t>(pixels * patch));
  CMapR<T> km(kernels.data().data(), patch, filters);
  Eigen::Map<const RowVec<T>> bv(bias.data().data(), filters);
  for (std::int64_t b = 0; b < d.batch; ++b) {
    im2col3x3(x.data().data() + b * pixels * d.channels, d.height, d.width, d.channels, patches.data());
    MapR<T> y(out.data() + b * pixels * filters, pixels, filters);
    y.noalias() = CMapR<T>(patches.data(), pixels, patch) * km;
    y.rowwise() += bv;
  }

  Shape shape = d.batched ? Shape{d.batch, d.height, d.width, filters} : Shape{d.height, d.width, filters};
  return make_result<T>(std::move(shape), std::move(out), {x, kernels, bias}, [d, pixels, patch, filters](detail::Node<T>& self) {
    auto& px = parent(self, 0);
    auto& pk = parent(self, 1);
    auto& pb = parent(self, 2);
    if (pb.requires_grad) {
      Eigen::Map<RowVec<T>> db(pb.ensure_grad().data(), filters);
      db += CMapR<T>(self.grad.data(), d.batch * pixels, filters).colwise().sum();
    }
    if (!px.requires_grad && !pk.requires_grad) return;
    Buffer<T> patches(static_cast<std::size_t>(pixels * patch));
    CMapR<T> km(pk.data.data(), patch, filters);
    T* dk = pk.requires_grad ? pk.ensure_grad().data() : nullptr;
    T* dx = px.requires_grad ? px.ensure_grad().data() : nullptr;
    for (std::int64_t b = 0; b < d.batch; ++b) {
      CMapR<T> dy(self.grad.data() + b * pixels * filters, pixels, filters);
      if (dk) {
        im2col3x3(px.data.data() + b * pixels * d.channels, d.height, d.width, d.channels, patches.data());
        MapR<T>(dk, patch, filters).noalias() += CMapR<T>(patches.data(), pixels, patch).transpose() * dy;
      }
      if (dx) {
        MapR<T> dp(patches.data(), pixels, patch);
        dp.noalias() = dy * km.transpose();
        col2im3x3_add(patches.data(), d.height, d.width, d.channels, dx + b * pixels * d.channels);
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::string_view where) {
  const Image4 d = image_dims(x, where);
  if (d.height < 2 || d.width < 2) shape_error(where, "spatial extent below 2 in " + shape_str(x.shape()));
  const std::int64_t oh = d.height / 2, ow = d.width / 2, c = d.channels;
  const std::size_t count = static_cast<std::size_t>(d.batch * oh * ow * c);
  Buffer<T> out(count);
  // Window slot 0..3 of each maximum; the input index is rebuilt in backward.
  auto slot = std::make_shared<std::vector<std::uint8_t>>(count);
  const std::int64_t offsets[4] = {0, c, d.width * c, d.width * c + c};
  const T* in = x.data().data();
  std::size_t o = 0;
  for (std::int64_t b = 0; b < d.batch; ++b) {
    const std::int64_t base = b * d.height * d.width * c;
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        const std::int64_t i00 = base + ((2 * y) * d.width + 2 * xx) * c;
        for (std::int64_t ch = 0; ch < c; ++ch, ++o) {
          std::uint8_t best = 0;
          T best_v = in[i00 + ch];
          for (std::uint8_t k = 1; k < 4; ++k) {
            const T v = in[i00 + offsets[k] + ch];
            if (v > best_v) {
              best_v = v;
              best = k;
            }
          }
          out[o] = best_v;
          (*slot)[o] = best;
        }
      }
    }
  }
  Shape shape = d.batched ? Shape{d.batch, oh, ow, c} : Shape{oh, ow, c};
  return make_result<T>(std::move(shape), std::move(out), {x}, [slot, d, oh, ow, c](detail::Node<T>& self) {
    auto& gx = parent(self, 0).ensure_grad();
    const std::int64_t offsets[4] = {0, c, d.width * c, d.width * c + c};
    std::size_t o = 0;
    for (std::int64_t b = 0; b < d.batch; ++b) {
      const std::int64_t base = b * d.height * d.width * c;
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          const std::int64_t i00 = base + ((2 * y) * d.width + 2 * xx) * c;
          for (std::int64_t ch = 0; ch < c; ++ch, ++o) gx[i00 + offsets[(*slot)[o]] + ch] += self.grad[o];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormState<T>& state, bool training, std::string_view where) {
  const std::int64_t c = x.dim(x.rank() - 1);
  if (state.channels() != c) {
    shape_error(where, "channel extent " + std::to_string(c) + " but state has " + std::to_string(state.channels()));
  }
  const std::int64_t n = static_cast<std::int64_t>(x.size()) / c;
  const T* in = x.data().data();
  const T* gamma = state.gamma.data().data();
  const T* beta = state.beta.data().data();
  T* running_mean = state.running_mean.data().data();
  T* running_var = state.running_var.data().data();

  std::vector<T> shift(static_cast<std::size_t>(c));  // subtracted before scaling
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  if (training) {
    const auto sums = channel_sums<T>(n, c, [in](std::size_t i, std::int64_t) { return in[i]; });
    for (std::int64_t j = 0; j < c; ++j) shift[j] = static_cast<T>(sums[j] / static_cast<double>(n));
    const T* mu = shift.data();
    const auto sq = channel_sums<T>(n, c, [in, mu](std::size_t i, std::int64_t j) {
      const T d = in[i] - mu[j];
      return d * d;
    });
    const T m = state.momentum;
    for (std::int64_t j = 0; j < c; ++j) {
      const double var = sq[j] / static_cast<double>(n);
      inv_std[j] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.epsilon)));
      running_mean[j] = m * running_mean[j] + (T(1) - m) * shift[j];
      running_var[j] = m * running_var[j] + (T(1) - m) * static_cast<T>(var);
    }
  } else {
    for (std::int64_t j = 0; j < c; ++j) {
      shift[j] = running_mean[j];
      inv_std[j] = T(1) / std::sqrt(running_var[j] + state.epsilon);
    }
  }

  Buffer<T> out(x.size());
  {
    T* y = out.data();
    const T* mu = shift.data();
    const T* is = inv_std.data();
    for (std::int64_t r = 0; r < n; ++r) {
      const std::size_t base = static_cast<std::size_t>(r * c);
      for (std::int64_t j = 0; j < c; ++j) y[base + j] = gamma[j] * ((in[base + j] - mu[j]) * is[j]) + beta[j];
    }
  }

  return make_result<T>(x.shape(), std::move(out), {x, state.gamma, state.beta},
                        [shift = std::move(shift), inv_std = std::move(inv_std), n, c, training](detail::Node<T>& self) {
                          auto& px = parent(self, 0);
                          auto& pg = parent(self, 1);
                          auto& pb = parent(self, 2);
                          const T* dy = self.grad.data();
                          // The normalized input is recomputed from x, bit-identical to the forward pass.
                          const T* xs = px.data.data();
                          const T* mu = shift.data();
                          const T* is = inv_std.data();
                          const auto hat = [xs, mu, is](std::size_t i, std::int64_t j) { return (xs[i] - mu[j]) * is[j]; };
                          const auto db = channel_sums<T>(n, c, [dy](std::size_t i, std::int64_t) { return dy[i]; });
                          const auto dg = channel_sums<T>(n, c, [dy, hat](std::size_t i, std::int64_t j) { return dy[i] * hat(i, j); });
                          if (px.requires_grad) {
                            T* dx = px.ensure_grad().data();
                            const T* gamma = pg.data.data();
                            std::vector<T> g(c), mean_db(c), mean_dg(c);
                            const double inv_n = 1.0 / static_cast<double>(n);
                            for (std::int64_t j = 0; j < c; ++j) {
                              g[j] = gamma[j] * inv_std[j];
                              mean_db[j] = training ? static_cast<T>(db[j] * inv_n) : T(0);
                              mean_dg[j] = training ? static_cast<T>(dg[j] * inv_n) : T(0);
                            }
                            for (std::int64_t r = 0; r < n; ++r) {
                              const std::size_t base = static_cast<std::size_t>(r * c);
                              for (std::int64_t j = 0; j < c; ++j) {
                                dx[base + j] += g[j] * (dy[base + j] - mean_db[j] - hat(base + j, j) * mean_dg[j]);
                              }
                            }
                          }
                          if (pg.requires_grad) {
                            auto& gg = pg.ensure_grad();
                            for (std::int64_t j = 0; j < c; ++j) gg[j] += static_cast<T>(dg[j]);
                          }
                          if (pb.requires_grad) {
                            auto& gb = pb.ensure_grad();
                            for (std::int64_t j = 0; j < c; ++j) gb[j] += static_cast<T>(db[j]);
                          }
                        });
}

template <typename T>
Tensor<T> conv1d_valid(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias, std::string_view where) {
  std::int64_t batch, len, ch;
  if (x.rank() == 2) {
    batch = 1, len = x.dim(0), ch = x.dim(1);
  } else if (x.rank() == 3) {
    batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  } else {
    shape_error(where, "expected [L,C] or [B,L,C], got " + shape_str(x.shape()));
  }
  if (len < 3) shape_error(where, "sequence length " + std::to_string(len) + " is below the kernel width 3");
  if (kernels.rank() != 3 || kernels.dim(0) != 3 || kernels.dim(1) != ch) {
    shape_error(where, "kernels must be [3," + std::to_string(ch) + ",F], got " + shape_str(kernels.shape()));
  }
  const std::int64_t filters = kernels.dim(2);
  if (bias.rank() != 1 || bias.dim(0) != filters) {
    shape_error(where, "bias must be [" + std::to_string(filters) + "], got " + shape_str(bias.shape()));
  }
  const std::int64_t out_len = len - 2;
  const std::int64_t patch = 3 * ch;

  Buffer<T> out(static_cast<std::size_t>(batch * out_len * filters));
  CMapR<T> km(kernels.data().data(), patch, filters);
  Eigen::Map<const RowVec<T>> bv(bias.data().data(), filters);
  for (std::int64_t b = 0; b < batch; ++b) {
    // Consecutive rows of x overlap: window i is the contiguous run x[i..i+2].
    CStridedR<T> windows(x.data().data() + b * len * ch, out_len, patch, Eigen::OuterStride<>(ch));
    MapR<T> y(out.data() + b * out_len * filters, out_len, filters);
    y.noalias() = windows * km;
    y.rowwise() += bv;
  }
  Shape shape = x.rank() == 2 ? Shape{out_len, filters} : Shape{batch, out_len, filters};
  return make_result<T>(std::move(shape), std::move(out), {x, kernels, bias},
                        [batch, len, ch, out_len, patch, filters](detail::Node<T>& self) {
                          auto& px = parent(self, 0);
                          auto& pk = parent(self, 1);
                          auto& pb = parent(self, 2);
                          if (pb.requires_grad) {
                            Eigen::Map<RowVec<T>> db(pb.ensure_grad().data(), filters);
                            db += CMapR<T>(self.grad.data(), batch * out_len, filters).colwise().sum();
                          }
                          Buffer<T> dp(px.requires_grad ? static_cast<std::size_t>(out_len * patch) : 0);
                          for (std::int64_t b = 0; b < batch; ++b) {
                            CMapR<T> dy(self.grad.data() + b * out_len * filters, out_len, filters);
                            if (pk.requires_grad) {
                              CStridedR<T> windows(px.data.data() + b * len * ch, out_len, patch, Eigen::OuterStride<>(ch));
                              MapR<T>(pk.ensure_grad().data(), patch, filters).noalias() += windows.transpose() * dy;
                            }
                            if (px.requires_grad) {
                              MapR<T> dpm(dp.data(), out_len, patch);
                              dpm.noalias() = dy * CMapR<T>(pk.data.data(), patch, filters).transpose();
                              T* dx = px.ensure_grad().data() + b * len * ch;
                              for (std::int64_t i = 0; i < out_len; ++i)
                                for (std::int64_t k = 0; k < patch; ++k) dx[i * ch + k] += dp[i * patch + k];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis, std::string_view where) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    shape_error(where, "cannot join " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " on axis " +
                           std::to_string(axis));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      shape_error(where, "extent mismatch joining " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
  }
  std::int64_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  const std::int64_t ia = static_cast<std::int64_t>(a.size()) / outer;
  const std::int64_t ib = static_cast<std::int64_t>(b.size()) / outer;
  Buffer<T> out(a.size() + b.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().data() + o * ia, ia, out.data() + o * (ia + ib));
    std::copy_n(b.data().data() + o * ib, ib, out.data() + o * (ia + ib) + ia);
  }
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  return make_result<T>(std::move(shape), std::move(out), {a, b}, [outer, ia, ib](detail::Node<T>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    for (std::int64_t o = 0; o < outer; ++o) {
      const T* g = self.grad.data() + o * (ia + ib);
      if (pa.requires_grad) {
        T* d = pa.ensure_grad().data() + o * ia;
        for (std::int64_t i = 0; i < ia; ++i) d[i] += g[i];
      }
      if (pb.requires_grad) {
        T* d = pb.ensure_grad().data() + o * ib;
        for (std::int64_t i = 0; i < ib; ++i) d[i] += g[ia + i];
      }
    }
  });
}

template <typename T>
Tensor<T> mean_over_set(std::span<const Tensor<T>> xs, std::string_view where) {
  if (xs.empty()) fail(ErrorKind::kEmpty, std::string(where), "mean of an empty set");
  for (const auto& t : xs) {
    if (t.shape() != xs[0].shape()) {
      shape_error(where, "set members " + shape_str(xs[0].shape()) + " and " + shape_str(t.shape()) + " differ");
    }
  }
  const T inv = T(1) / static_cast<T>(xs.size());
  Buffer<T> out(xs[0].size(), T(0));
  for (const auto& t : xs) {
    auto d = t.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
  }
  for (auto& v : out) v *= inv;
  return make_result<T>(xs[0].shape(), std::move(out), std::vector<Tensor<T>>(xs.begin(), xs.end()),
                        [inv](detail::Node<T>& self) {
                          for (auto& p : self.parents) {
                            if (!p->requires_grad) continue;
                            auto& g = p->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, std::string_view where) {
  if (a.shape() != b.shape()) shape_error(where, "cannot add " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Buffer<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, std::string_view where) {
  if (a.shape() != b.shape()) shape_error(where, "cannot multiply " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Buffer<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Buffer<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return make_result<T>(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.data()) s += v;
  return make_result<T>(Shape{1}, Buffer<T>{s}, {x}, [](detail::Node<T>& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != static_cast<std::int64_t>(x.size())) {
    shape_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Buffer<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> xs, std::string_view where) {
  if (xs.empty()) fail(ErrorKind::kEmpty, std::string(where), "nothing to stack");
  const std::size_t each = xs[0].size();
  Buffer<T> out;
  out.reserve(each * xs.size());
  for (const auto& t : xs) {
    if (t.shape() != xs[0].shape()) {
      shape_error(where, "members " + shape_str(xs[0].shape()) + " and " + shape_str(t.shape()) + " differ");
    }
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  Shape shape{static_cast<std::int64_t>(xs.size())};
  shape.insert(shape.end(), xs[0].shape().begin(), xs[0].shape().end());
  return make_result<T>(std::move(shape), std::move(out), std::vector<Tensor<T>>(xs.begin(), xs.end()),
                        [each](detail::Node<T>& self) {
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            auto& p = *self.parents[k];
                            if (!p.requires_grad) continue;
                            auto& g = p.ensure_grad();
                            for (std::size_t i = 0; i < each; ++i) g[i] += self.grad[k * each + i];
                          }
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::int64_t> rows, std::string_view where) {
  if (rows.empty()) fail(ErrorKind::kEmpty, std::string(where), "no rows selected");
  const std::int64_t n = x.dim(0);
  const std::size_t width = x.size() / static_cast<std::size_t>(n);
  Buffer<T> out(rows.size() * width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= n) {
      fail(ErrorKind::kRange, std::string(where), "row " + std::to_string(rows[r]) + " outside [0," + std::to_string(n) + ")");
    }
    std::copy_n(x.data().data() + rows[r] * width, width, out.data() + r * width);
  }
  Shape shape = x.shape();
  shape[0] = static_cast<std::int64_t>(rows.size());
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [idx = std::vector<std::int64_t>(rows.begin(), rows.end()), width](detail::Node<T>& self) {
                          auto& g = parent(self, 0).ensure_grad();
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            T* d = g.data() + idx[r] * width;
                            const T* s = self.grad.data() + r * width;
                            for (std::size_t i = 0; i < width; ++i) d[i] += s[i];
                          }
                        });
}

template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, std::span<const std::int64_t> segment, std::int64_t num_segments,
                       std::string_view where) {
  if (x.rank() != 2 || static_cast<std::size_t>(x.dim(0)) != segment.size()) {
    shape_error(where, "segment ids do not match rows of " + shape_str(x.shape()));
  }
  const std::int64_t width = x.dim(1);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_segments), 0);
  for (auto s : segment) {
    if (s < 0 || s >= num_segments) fail(ErrorKind::kRange, std::string(where), "segment id " + std::to_string(s));
    ++counts[s];
  }
  for (std::int64_t s = 0; s < num_segments; ++s) {
    if (counts[s] == 0) fail(ErrorKind::kEmpty, std::string(where), "segment " + std::to_string(s) + " is empty");
  }
  Buffer<T> out(static_cast<std::size_t>(num_segments * width), T(0));
  for (std::size_t r = 0; r < segment.size(); ++r) {
    const T* s = x.data().data() + r * width;
    T* d = out.data() + segment[r] * width;
    for (std::int64_t i = 0; i < width; ++i) d[i] += s[i];
  }
  std::vector<T> inv(counts.size());
  for (std::size_t s = 0; s < counts.size(); ++s) inv[s] = T(1) / static_cast<T>(counts[s]);
  for (std::int64_t s = 0; s < num_segments; ++s)
    for (std::int64_t i = 0; i < width; ++i) out[s * width + i] *= inv[s];
  return make_result<T>(Shape{num_segments, width}, std::move(out), {x},
                        [seg = std::vector<std::int64_t>(segment.begin(), segment.end()), inv = std::move(inv),
                         width](detail::Node<T>& self) {
                          auto& g = parent(self, 0).ensure_grad();
                          for (std::size_t r = 0; r < seg.size(); ++r) {
                            const T* s = self.grad.data() + seg[r] * width;
                            T* d = g.data() + r * width;
                            for (std::int64_t i = 0; i < width; ++i) d[i] += inv[seg[r]] * s[i];
                          }
                        });
}

template <typename T>
Tensor<T> mean_axis1(const Tensor<T>& x) {
  if (x.rank() != 3) shape_error("mean_axis1", "expected [B,L,D], got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), len = x.dim(1), width = x.dim(2);
  const T inv = T(1) / static_cast<T>(len);
  Buffer<T> out(static_cast<std::size_t>(b * width), T(0));
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t l = 0; l < len; ++l)
      for (std::int64_t j = 0; j < width; ++j) out[i * width + j] += x.data()[(i * len + l) * width + j];
  for (auto& v : out) v *= inv;
  return make_result<T>(Shape{b, width}, std::move(out), {x}, [b, len, width, inv](detail::Node<T>& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t l = 0; l < len; ++l)
        for (std::int64_t j = 0; j < width; ++j) g[(i * len + l) * width + j] += inv * self.grad[i * width + j];
  });
}

template <typename T>
SoftmaxXent<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != targets.size()) {
    shape_error("softmax_cross_entropy", "logits " + shape_str(logits.shape()) + " with " +
                                             std::to_string(targets.size()) + " targets");
  }
  const std::int64_t rows = logits.dim(0), k = logits.dim(1);
  Buffer<T> probs(logits.size());
  std::vector<T> losses(static_cast<std::size_t>(rows));
  T total = T(0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || t >= k) {
      fail(ErrorKind::kRange, "softmax_cross_entropy", "target " + std::to_string(t) + " outside [0," + std::to_string(k) + ")");
    }
    const T* l = logits.data().data() + r * k;
    T* p = probs.data() + r * k;
    const T m = *std::max_element(l, l + k);
    T z = T(0);
    for (std::int64_t j = 0; j < k; ++j) {
      p[j] = std::exp(l[j] - m);
      z += p[j];
    }
    for (std::int64_t j = 0; j < k; ++j) p[j] /= z;
    losses[r] = m + std::log(z) - l[t];
    total += losses[r];
  }
  const T inv_rows = T(1) / static_cast<T>(rows);
  auto saved = std::make_shared<Buffer<T>>(probs);
  Tensor<T> loss = make_result<T>(
      Shape{1}, Buffer<T>{total * inv_rows}, {logits},
      [saved, tgt = std::vector<int>(targets.begin(), targets.end()), k, inv_rows](detail::Node<T>& self) {
        auto& g = parent(self, 0).ensure_grad();
        const T up = self.grad[0] * inv_rows;
        for (std::size_t r = 0; r < tgt.size(); ++r)
          for (std::int64_t j = 0; j < k; ++j) {
            const std::size_t i = r * k + j;
            g[i] += up * ((*saved)[i] - (j == tgt[r] ? T(1) : T(0)));
          }
      });
  return {Tensor<T>(logits.shape(), std::move(probs)), std::move(loss), std::move(losses)};
}

template <typename T>
SoftmaxXent<T> softmax_cross_entropy(const Tensor<T>& logits, int target) {
  if (logits.rank() != 1) shape_error("softmax_cross_entropy", "expected [K], got " + shape_str(logits.shape()));
  const int targets[1] = {target};
  auto out = softmax_cross_entropy(reshape(logits, Shape{1, logits.dim(0)}), std::span<const int>(targets));
  out.probs = Tensor<T>(Shape{logits.dim(0)}, Buffer<T>(out.probs.data().begin(), out.probs.data().end()));
  return out;
}

#define MACO_INSTANTIATE_OPS(T)                                                                               \
  template Tensor<T> elu(const Tensor<T>&);                                                                   \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::string_view);           \
  template Tensor<T> conv2d_same(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::string_view);     \
  template Tensor<T> maxpool2(const Tensor<T>&, std::string_view);                                            \
  template Tensor<T> batchnorm(const Tensor<T>&, BatchNormState<T>&, bool, std::string_view);                 \
  template Tensor<T> conv1d_valid(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::string_view);    \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&, std::size_t, std::string_view);               \
  template Tensor<T> mean_over_set(std::span<const Tensor<T>>, std::string_view);                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&, std::string_view);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&, std::string_view);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                        \
  template Tensor<T> stack(std::span<const Tensor<T>>, std::string_view);                                     \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::int64_t>, std::string_view);          \
  template Tensor<T> segment_mean(const Tensor<T>&, std::span<const std::int64_t>, std::int64_t,              \
                                  std::string_view);                                                          \
  template Tensor<T> mean_axis1(const Tensor<T>&);                                                            \
  template SoftmaxXent<T> softmax_cross_entropy(const Tensor<T>&, int);                                       \
  template SoftmaxXent<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);

MACO_INSTANTIATE_OPS(float)
MACO_INSTANTIATE_OPS(double)

}  // namespace maco
