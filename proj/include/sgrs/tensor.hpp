#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "sgrs/error.hpp"

namespace sgrs {

using Dims = std::vector<std::size_t>;

inline std::size_t product(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ')';
  return os.str();
}

// Dense row-major array. A plain value type: gradient bookkeeping lives on
// the autodiff tape (see autograd.hpp), not here.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Dims dims, T fill = T{}) : dims_(std::move(dims)), data_(product(dims_), fill) {
    check_dims();
  }

  Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != product(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + to_string(dims_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Dims{}, std::vector<T>{v}); }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // 4-d accessor for [N,C,H,W] tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  // 3-d accessor for [N,H,W] maps.
  T& at(std::size_t n, std::size_t h, std::size_t w) noexcept {
    return data_[(n * dims_[1] + h) * dims_[2] + w];
  }
  const T& at(std::size_t n, std::size_t h, std::size_t w) const noexcept {
    return data_[(n * dims_[1] + h) * dims_[2] + w];
  }

  T item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor with dims " + to_string(dims_));
    return data_[0];
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(dims_, std::move(out));
  }

  bool all_finite() const noexcept {
    if constexpr (std::is_floating_point_v<T>) {
      return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    } else {
      return true;
    }
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (auto d : dims_) {
      if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(dims_));
    }
  }

  Dims dims_;
  std::vector<T> data_;
};

// Class-index maps ([N,H,W]) and boolean region maps ([N,H,W], 0/1).
using LabelMap = Tensor<std::int64_t>;
using Mask = Tensor<std::uint8_t>;

inline void require_dims(const Dims& got, const Dims& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dims " + to_string(want) + ", got " +
                     to_string(got));
  }
}

inline void require_rank(const Dims& got, std::size_t rank, const char* what) {
  if (got.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(got));
  }
}

inline Mask full_mask(const Dims& dims) { return Mask(dims, std::uint8_t{1}); }

inline std::size_t count(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.storage().begin(), m.storage().end(),
                                                 [](std::uint8_t v) { return v != 0; }));
}

}  // namespace sgrs
