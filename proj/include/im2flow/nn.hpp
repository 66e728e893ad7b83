#pragma once

// Minimal CPU layers with hand-written backward passes. Every layer keeps the
// activations it needs for backward from its last forward() call; infer() is
// const and caches nothing.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "im2flow/error.hpp"
#include "im2flow/rng.hpp"
#include "im2flow/tensor.hpp"

namespace im2flow::nn {

enum class Mode {
  Train,  // batch statistics, running statistics updated
  Eval,   // running statistics
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.n(), value.c(), value.h(), value.w()); }
};

/// Non-trainable persistent state (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T> value;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline int conv_output_size(int in, int kernel, int stride, int padding, int dilation) {
  return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void fan_in_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0,
         int dilation = 1, bool bias = true)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding), dil_(dilation),
        has_bias_(bias) {
    weight.name = name + ".weight";
    weight.value = Tensor<T>(out_, in_ * k_ * k_, 1, 1);
    weight.zero_grad();
    if (has_bias_) {
      this->bias.name = name + ".bias";
      this->bias.value = Tensor<T>(out_, 1, 1, 1);
      this->bias.zero_grad();
    }
  }

  void init(Rng& rng) {
    fan_in_uniform(weight.value, in_ * k_ * k_, rng);
    if (has_bias_) fan_in_uniform(bias.value, in_ * k_ * k_, rng);
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int dilation() const { return dil_; }
  int stride() const { return stride_; }

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    return infer(x);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    check_input(x);
    const int ho = conv_output_size(x.h(), k_, stride_, pad_, dil_);
    const int wo = conv_output_size(x.w(), k_, stride_, pad_, dil_);
    Tensor<T> y(x.n(), out_, ho, wo);
    const int P = ho * wo;
    const int K = in_ * k_ * k_;
    RowMatrix<T> col;
    RowMatrix<T> out;
    ConstMatrixMap<T> W(weight.value.data(), out_, K);
    for (const auto& group : plan(x.n(), ho, wo, K)) {
      col.resize(K, group_columns(group, wo));
      int offset = 0;
      for (const auto& seg : group) {
        im2col(x, seg, wo, col, offset);
        offset += (seg.oy1 - seg.oy0) * wo;
      }
      out.noalias() = W * col;
      offset = 0;
      for (const auto& seg : group) {
        const int cols = (seg.oy1 - seg.oy0) * wo;
        MatrixMap<T> Y(y.sample(seg.n).data(), out_, P);
        auto block = Y.middleCols(static_cast<Eigen::Index>(seg.oy0) * wo, cols);
        block = out.middleCols(offset, cols);
        if (has_bias_)
          for (int o = 0; o < out_; ++o) block.row(o).array() += bias.value[o];
        offset += cols;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    const Tensor<T>& x = input_;
    const int ho = dy.h(), wo = dy.w();
    const int P = ho * wo;
    const int K = in_ * k_ * k_;
    Tensor<T> dx(x.n(), x.c(), x.h(), x.w());
    RowMatrix<T> col, dcol, dyb;
    ConstMatrixMap<T> W(weight.value.data(), out_, K);
    MatrixMap<T> dW(weight.grad.data(), out_, K);
    for (const auto& group : plan(x.n(), ho, wo, K)) {
      const Eigen::Index total = group_columns(group, wo);
      dyb.resize(out_, total);
      int offset = 0;
      for (const auto& seg : group) {
        const int cols = (seg.oy1 - seg.oy0) * wo;
        dyb.middleCols(offset, cols) =
            ConstMatrixMap<T>(dy.sample(seg.n).data(), out_, P).middleCols(static_cast<Eigen::Index>(seg.oy0) * wo, cols);
        offset += cols;
      }
      if (accumulate_param_grads) {
        col.resize(K, total);
        offset = 0;
        for (const auto& seg : group) {
          im2col(x, seg, wo, col, offset);
          offset += (seg.oy1 - seg.oy0) * wo;
        }
        dW.noalias() += dyb * col.transpose();
        if (has_bias_)
          for (int o = 0; o < out_; ++o) bias.grad[o] += dyb.row(o).sum();
      }
      dcol.noalias() = W.transpose() * dyb;
      offset = 0;
      for (const auto& seg : group) {
        col2im(dcol, offset, seg, wo, dx);
        offset += (seg.oy1 - seg.oy0) * wo;
      }
    }
    return dx;
  }

  std::vector<Parameter<T>*> parameters() {
    if (has_bias_) return {&weight, &bias};
    return {&weight};
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.c() != in_)
      throw ConfigError(weight.name + ": expected " + std::to_string(in_) + " input channels, got " +
                        std::to_string(x.c()));
  }

  // Output rows [oy0, oy1) of sample n.
  struct Segment {
    int n, oy0, oy1;
  };

  // Groups of segments sharing one GEMM, sized so the column buffer stays
  // cache resident.
  static std::vector<std::vector<Segment>> plan(int n, int ho, int wo, int K) {
    const int target = std::max(wo, 262144 / std::max(1, K));
    std::vector<std::vector<Segment>> groups;
    const int P = ho * wo;
    if (P >= target) {
      const int rows = std::max(1, target / wo);
      for (int i = 0; i < n; ++i)
        for (int oy = 0; oy < ho; oy += rows) groups.push_back({{i, oy, std::min(ho, oy + rows)}});
    } else {
      const int per = std::max(1, target / P);
      for (int i = 0; i < n; i += per) {
        groups.emplace_back();
        for (int j = i; j < std::min(n, i + per); ++j) groups.back().push_back({j, 0, ho});
      }
    }
    return groups;
  }

  static Eigen::Index group_columns(const std::vector<Segment>& group, int wo) {
    Eigen::Index c = 0;
    for (const auto& s : group) c += static_cast<Eigen::Index>(s.oy1 - s.oy0) * wo;
    return c;
  }

  // Output columns [lo, hi) whose input column ox * stride - pad + off is in range.
  void valid_range(int off, int wo, int Wd, int& lo, int& hi) const {
    const int first = off - pad_;
    lo = first >= 0 ? 0 : (-first + stride_ - 1) / stride_;
    const int last = Wd - 1 - first;
    hi = last < 0 ? 0 : std::min(wo, last / stride_ + 1);
    if (hi < lo) hi = lo;
  }

  void im2col(const Tensor<T>& x, const Segment& seg, int wo, RowMatrix<T>& col, int col_offset) const {
    const int H = x.h(), Wd = x.w();
    for (int c = 0; c < in_; ++c) {
      const T* src = x.plane(seg.n, c).data();
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col.data() + (static_cast<Eigen::Index>((c * k_ + ky) * k_ + kx) * col.cols()) + col_offset;
          int lo, hi;
          valid_range(kx * dil_, wo, Wd, lo, hi);
          const int shift = kx * dil_ - pad_;
          for (int oy = seg.oy0; oy < seg.oy1; ++oy) {
            const int iy = oy * stride_ - pad_ + ky * dil_;
            T* dst = row + (oy - seg.oy0) * wo;
            if (iy < 0 || iy >= H) {
              std::fill(dst, dst + wo, T(0));
              continue;
            }
            const T* srow = src + iy * Wd + shift;
            std::fill(dst, dst + lo, T(0));
            if (stride_ == 1) {
              std::copy(srow + lo, srow + hi, dst + lo);
            } else {
              for (int ox = lo; ox < hi; ++ox) dst[ox] = srow[ox * stride_];
            }
            std::fill(dst + hi, dst + wo, T(0));
          }
        }
      }
    }
  }

  void col2im(const RowMatrix<T>& dcol, int col_offset, const Segment& seg, int wo, Tensor<T>& dx) const {
    const int H = dx.h(), Wd = dx.w();
    for (int c = 0; c < in_; ++c) {
      T* dst = dx.plane(seg.n, c).data();
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* row =
              dcol.data() + (static_cast<Eigen::Index>((c * k_ + ky) * k_ + kx) * dcol.cols()) + col_offset;
          int lo, hi;
          valid_range(kx * dil_, wo, Wd, lo, hi);
          const int shift = kx * dil_ - pad_;
          for (int oy = seg.oy0; oy < seg.oy1; ++oy) {
            const int iy = oy * stride_ - pad_ + ky * dil_;
            if (iy < 0 || iy >= H) continue;
            T* drow = dst + iy * Wd + shift;
            const T* srow = row + (oy - seg.oy0) * wo;
            if (stride_ == 1) {
              for (int ox = lo; ox < hi; ++ox) drow[ox] += srow[ox];
            } else {
              for (int ox = lo; ox < hi; ++ox) drow[ox * stride_] += srow[ox];
            }
          }
        }
      }
    }
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0, dil_ = 1;
  bool has_bias_ = true;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

/// 2x upsampling transposed convolution (kernel 2, stride 2), no bias.
template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(std::string name, int in_channels, int out_channels) : in_(in_channels), out_(out_channels) {
    weight.name = name + ".weight";
    weight.value = Tensor<T>(out_ * 4, in_, 1, 1);  // row (o, a, b) -> o*4 + a*2 + b
    weight.zero_grad();
  }

  void init(Rng& rng) { fan_in_uniform(weight.value, in_, rng); }

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    return infer(x);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    if (x.c() != in_) throw ConfigError(weight.name + ": input channel mismatch");
    const int H = x.h(), Wd = x.w(), P = H * Wd;
    Tensor<T> y(x.n(), out_, 2 * H, 2 * Wd);
    ConstMatrixMap<T> Wt(weight.value.data(), out_ * 4, in_);
    RowMatrix<T> z;
    for (int n = 0; n < x.n(); ++n) {
      z.noalias() = Wt * ConstMatrixMap<T>(x.sample(n).data(), in_, P);
      for (int o = 0; o < out_; ++o)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const T* src = z.data() + static_cast<Eigen::Index>(o * 4 + a * 2 + b) * P;
            for (int yy = 0; yy < H; ++yy)
              for (int xx = 0; xx < Wd; ++xx) y.at(n, o, 2 * yy + a, 2 * xx + b) = src[yy * Wd + xx];
          }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    const Tensor<T>& x = input_;
    const int H = x.h(), Wd = x.w(), P = H * Wd;
    Tensor<T> dx(x.n(), in_, H, Wd);
    ConstMatrixMap<T> Wt(weight.value.data(), out_ * 4, in_);
    MatrixMap<T> dW(weight.grad.data(), out_ * 4, in_);
    RowMatrix<T> dz(out_ * 4, P);
    for (int n = 0; n < x.n(); ++n) {
      for (int o = 0; o < out_; ++o)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            T* dst = dz.data() + static_cast<Eigen::Index>(o * 4 + a * 2 + b) * P;
            for (int yy = 0; yy < H; ++yy)
              for (int xx = 0; xx < Wd; ++xx) dst[yy * Wd + xx] = dy.at(n, o, 2 * yy + a, 2 * xx + b);
          }
      ConstMatrixMap<T> X(x.sample(n).data(), in_, P);
      if (accumulate_param_grads) dW.noalias() += dz * X.transpose();
      MatrixMap<T>(dx.sample(n).data(), in_, P).noalias() = Wt.transpose() * dz;
    }
    return dx;
  }

  std::vector<Parameter<T>*> parameters() { return {&weight}; }

  Parameter<T> weight;

 private:
  int in_ = 0, out_ = 0;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <typename T>
class BatchNorm2d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels) : channels_(channels) {
    gamma.name = name + ".gamma";
    gamma.value = Tensor<T>(channels, 1, 1, 1, T(1));
    gamma.zero_grad();
    beta.name = name + ".beta";
    beta.value = Tensor<T>(channels, 1, 1, 1, T(0));
    beta.zero_grad();
    running_mean.name = name + ".running_mean";
    running_mean.value = Tensor<T>(channels, 1, 1, 1, T(0));
    running_var.name = name + ".running_var";
    running_var.value = Tensor<T>(channels, 1, 1, 1, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    check(x);
    mode_ = mode;
    if (mode == Mode::Eval) {
      inv_std_.assign(channels_, 0.0);
      for (int c = 0; c < channels_; ++c) inv_std_[c] = 1.0 / std::sqrt(double(running_var.value[c]) + kEps);
      eval_input_ = x;
      return infer(x);
    }
    const double M = static_cast<double>(x.n()) * x.plane_size();
    Tensor<T> y(x.n(), x.c(), x.h(), x.w());
    xhat_ = Tensor<T>(x.n(), x.c(), x.h(), x.w());
    inv_std_.assign(channels_, 0.0);
    for (int c = 0; c < channels_; ++c) {
      double sum = 0.0;
      for (int n = 0; n < x.n(); ++n) sum += plane_array(x, n, c).template cast<double>().sum();
      const double mean = sum / M;
      double sq = 0.0;
      for (int n = 0; n < x.n(); ++n) sq += (plane_array(x, n, c).template cast<double>() - mean).square().sum();
      const double var = sq / M;
      const double inv = 1.0 / std::sqrt(var + kEps);
      inv_std_[c] = inv;
      const T g = static_cast<T>(gamma.value[c]), b = static_cast<T>(beta.value[c]);
      const T tm = static_cast<T>(mean), ti = static_cast<T>(inv);
      for (int n = 0; n < x.n(); ++n) {
        auto xh = plane_array(xhat_, n, c);
        xh = (plane_array(x, n, c) - tm) * ti;
        plane_array(y, n, c) = xh * g + b;
      }
      const double unbiased = M > 1 ? var * M / (M - 1) : var;
      running_mean.value[c] = static_cast<T>((1 - kMomentum) * running_mean.value[c] + kMomentum * mean);
      running_var.value[c] = static_cast<T>((1 - kMomentum) * running_var.value[c] + kMomentum * unbiased);
    }
    return y;
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    check(x);
    Tensor<T> y(x.n(), x.c(), x.h(), x.w());
    for (int c = 0; c < channels_; ++c) {
      const double inv = 1.0 / std::sqrt(double(running_var.value[c]) + kEps);
      const double scale = gamma.value[c] * inv;
      const double shift = beta.value[c] - running_mean.value[c] * scale;
      for (int n = 0; n < x.n(); ++n) {
        auto src = x.plane(n, c);
        auto dst = y.plane(n, c);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i] * scale + shift);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    Tensor<T> dx(dy.n(), dy.c(), dy.h(), dy.w());
    if (mode_ == Mode::Eval) {
      for (int c = 0; c < channels_; ++c) {
        const double g = gamma.value[c], inv = inv_std_[c], mean = running_mean.value[c];
        double sg = 0.0, sb = 0.0;
        for (int n = 0; n < dy.n(); ++n) {
          auto d = dy.plane(n, c);
          auto x = eval_input_.plane(n, c);
          auto out = dx.plane(n, c);
          for (std::size_t i = 0; i < d.size(); ++i) {
            out[i] = static_cast<T>(d[i] * g * inv);
            sg += d[i] * (x[i] - mean) * inv;
            sb += d[i];
          }
        }
        if (accumulate_param_grads) {
          gamma.grad[c] += static_cast<T>(sg);
          beta.grad[c] += static_cast<T>(sb);
        }
      }
      return dx;
    }
    const double M = static_cast<double>(dy.n()) * dy.plane_size();
    for (int c = 0; c < channels_; ++c) {
      double sum_d = 0.0, sum_dx = 0.0;
      for (int n = 0; n < dy.n(); ++n) {
        auto d = plane_array(dy, n, c);
        sum_d += d.template cast<double>().sum();
        sum_dx += (d.template cast<double>() * plane_array(xhat_, n, c).template cast<double>()).sum();
      }
      if (accumulate_param_grads) {
        gamma.grad[c] += static_cast<T>(sum_dx);
        beta.grad[c] += static_cast<T>(sum_d);
      }
      const double g = gamma.value[c], inv = inv_std_[c];
      const T k = static_cast<T>(g * inv), md = static_cast<T>(sum_d / M), mdx = static_cast<T>(sum_dx / M);
      for (int n = 0; n < dy.n(); ++n)
        plane_array(dx, n, c) = k * (plane_array(dy, n, c) - md - plane_array(xhat_, n, c) * mdx);
    }
    return dx;
  }

  std::vector<Parameter<T>*> parameters() { return {&gamma, &beta}; }
  std::vector<Buffer<T>*> buffers() { return {&running_mean, &running_var}; }

  Parameter<T> gamma;
  Parameter<T> beta;
  Buffer<T> running_mean;
  Buffer<T> running_var;

 private:
  void check(const Tensor<T>& x) const {
    if (x.c() != channels_) throw ConfigError(gamma.name + ": channel mismatch");
  }

  static Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> plane_array(const Tensor<T>& t, int n, int c) {
    auto p = t.plane(n, c);
    return {p.data(), static_cast<Eigen::Index>(p.size())};
  }
  static Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> plane_array(Tensor<T>& t, int n, int c) {
    auto p = t.plane(n, c);
    return {p.data(), static_cast<Eigen::Index>(p.size())};
  }

  int channels_ = 0;
  Mode mode_ = Mode::Train;
  Tensor<T> xhat_;
  Tensor<T> eval_input_;
  std::vector<double> inv_std_;
};

// ---------------------------------------------------------------------------

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y = infer(x);
    output_ = y;
    return y;
  }
  static Tensor<T> infer(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v > T(0) ? v : T(0);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!(output_[i] > T(0))) dx[i] = T(0);
    return dx;
  }

 private:
  Tensor<T> output_;
};

/// 2x2 max pooling, stride 2 (odd trailing rows/columns dropped).
template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_n_ = x.n(), in_c_ = x.c(), in_h_ = x.h(), in_w_ = x.w();
    return run(x, &argmax_);
  }
  Tensor<T> infer(const Tensor<T>& x) const { return run(x, nullptr); }

  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_n_, in_c_, in_h_, in_w_);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
    return dx;
  }

 private:
  static Tensor<T> run(const Tensor<T>& x, std::vector<std::size_t>* argmax) {
    const int ho = x.h() / 2, wo = x.w() / 2;
    if (ho < 1 || wo < 1) throw ConfigError("MaxPool2: input smaller than 2x2");
    Tensor<T> y(x.n(), x.c(), ho, wo);
    if (argmax) argmax->assign(y.size(), 0);
    std::size_t k = 0;
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox, ++k) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_i = 0;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t idx =
                    ((static_cast<std::size_t>(n) * x.c() + c) * x.h() + 2 * oy + dy) * x.w() + 2 * ox + dx;
                if (x[idx] > best) {
                  best = x[idx];
                  best_i = idx;
                }
              }
            y[k] = best;
            if (argmax) (*argmax)[k] = best_i;
          }
    return y;
  }

  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_h_ = x.h(), in_w_ = x.w();
    return infer(x);
  }
  static Tensor<T> infer(const Tensor<T>& x) {
    Tensor<T> y(x.n(), x.c(), 1, 1);
    for (int n = 0; n < x.n(); ++n)
      for (int c = 0; c < x.c(); ++c) {
        double s = 0.0;
        for (T v : x.plane(n, c)) s += v;
        y.at(n, c, 0, 0) = static_cast<T>(s / static_cast<double>(x.plane_size()));
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(dy.n(), dy.c(), in_h_, in_w_);
    const T scale = T(1) / static_cast<T>(in_h_ * in_w_);
    for (int n = 0; n < dy.n(); ++n)
      for (int c = 0; c < dy.c(); ++c)
        for (auto& v : dx.plane(n, c)) v = dy.at(n, c, 0, 0) * scale;
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features) : in_(in_features), out_(out_features) {
    weight.name = name + ".weight";
    weight.value = Tensor<T>(out_, in_, 1, 1);
    weight.zero_grad();
    bias.name = name + ".bias";
    bias.value = Tensor<T>(out_, 1, 1, 1);
    bias.zero_grad();
  }

  void init(Rng& rng) {
    fan_in_uniform(weight.value, in_, rng);
    fan_in_uniform(bias.value, in_, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    return infer(x);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    if (static_cast<int>(x.sample_size()) != in_) throw ConfigError(weight.name + ": feature size mismatch");
    Tensor<T> y(x.n(), out_, 1, 1);
    ConstMatrixMap<T> X(x.data(), x.n(), in_);
    ConstMatrixMap<T> W(weight.value.data(), out_, in_);
    MatrixMap<T> Y(y.data(), x.n(), out_);
    Y.noalias() = X * W.transpose();
    for (int n = 0; n < x.n(); ++n)
      for (int o = 0; o < out_; ++o) Y(n, o) += bias.value[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    const Tensor<T>& x = input_;
    Tensor<T> dx(x.n(), x.c(), x.h(), x.w());
    ConstMatrixMap<T> X(x.data(), x.n(), in_);
    ConstMatrixMap<T> W(weight.value.data(), out_, in_);
    ConstMatrixMap<T> dY(dy.data(), dy.n(), out_);
    if (accumulate_param_grads) {
      MatrixMap<T>(weight.grad.data(), out_, in_).noalias() += dY.transpose() * X;
      for (int n = 0; n < dy.n(); ++n)
        for (int o = 0; o < out_; ++o) bias.grad[o] += dY(n, o);
    }
    MatrixMap<T>(dx.data(), x.n(), in_).noalias() = dY * W;
    return dx;
  }

  std::vector<Parameter<T>*> parameters() { return {&weight, &bias}; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int in_ = 0, out_ = 0;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

/// Convolution -> BatchNorm -> ReLU. The convolution has no bias since the
/// normalization removes it.
template <typename T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  ReLU<T> relu;

  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int in, int out, int stride, int dilation)
      : conv(name + ".conv", in, out, 3, stride, dilation, dilation, false), bn(name + ".bn", out) {}

  void init(Rng& rng) { conv.init(rng); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) { return relu.forward(bn.forward(conv.forward(x), mode)); }
  Tensor<T> infer(const Tensor<T>& x) const { return ReLU<T>::infer(bn.infer(conv.infer(x))); }
  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    return conv.backward(bn.backward(relu.backward(dy), accumulate_param_grads), accumulate_param_grads);
  }

  std::vector<Parameter<T>*> parameters() {
    auto p = conv.parameters();
    for (auto* q : bn.parameters()) p.push_back(q);
    return p;
  }
  std::vector<Buffer<T>*> buffers() { return bn.buffers(); }
};

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter<float>*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0f);
      v_.emplace_back(p->value.size(), 0.0f);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.fill(0.0f);
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    const auto b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
    const auto lr = static_cast<float>(config_.learning_rate * std::sqrt(bc2) / bc1);
    const auto eps = static_cast<float>(config_.epsilon * std::sqrt(bc2));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k]->value.values();
      const auto& grad = params_[k]->grad.values();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0f - b2) * grad[i] * grad[i];
        value[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
      }
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Parameter<float>*> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  long t_ = 0;
};

}  // namespace im2flow::nn
