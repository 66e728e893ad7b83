#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "im2flow/error.hpp"

namespace im2flow::nn {

/// Dense NCHW tensor. Fully connected activations use h = w = 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ConfigError("Tensor: negative dimension");
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  std::span<T> sample(int n) { return {data_.data() + n * sample_size(), sample_size()}; }
  std::span<const T> sample(int n) const { return {data_.data() + n * sample_size(), sample_size()}; }
  std::span<T> plane(int n, int c) { return {data_.data() + offset(n, c, 0, 0), plane_size()}; }
  std::span<const T> plane(int n, int c) const { return {data_.data() + offset(n, c, 0, 0), plane_size()}; }

  bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  std::string shape_string() const {
    return "[" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," + std::to_string(w_) +
           "]";
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n_, c_, h_, w_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

/// Concatenates along channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ConfigError("concat_channels: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    std::copy(a.sample(n).begin(), a.sample(n).end(), out.sample(n).begin());
    std::copy(b.sample(n).begin(), b.sample(n).end(), out.sample(n).begin() + a.sample_size());
  }
  return out;
}

/// Splits a channel-concatenated gradient back into its two parts.
template <typename T>
void split_channels(const Tensor<T>& g, int first_channels, Tensor<T>& ga, Tensor<T>& gb) {
  ga = Tensor<T>(g.n(), first_channels, g.h(), g.w());
  gb = Tensor<T>(g.n(), g.c() - first_channels, g.h(), g.w());
  for (int n = 0; n < g.n(); ++n) {
    auto s = g.sample(n);
    std::copy(s.begin(), s.begin() + ga.sample_size(), ga.sample(n).begin());
    std::copy(s.begin() + ga.sample_size(), s.end(), gb.sample(n).begin());
  }
}

}  // namespace im2flow::nn
