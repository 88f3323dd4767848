#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <string>
#include <vector>

#include "framecast/error.hpp"

namespace framecast {

using Shape = std::vector<std::int64_t>;

namespace detail {

// Every buffer gets one fixed alignment so vectorized kernels cannot change
// their peel/accumulation order with heap layout; reruns and checkpoint
// resumes must be bit-identical.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kAlign}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kAlign}); }

  template <class U>
  bool operator==(const AlignedAlloc<U>&) const noexcept {
    return true;
  }
};

}  // namespace detail

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense row-major float64 tensor. All model math runs on these.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return full({1}, v); }

  const Shape& shape() const { return shape_; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<std::int64_t> idx);
  double at(std::initializer_list<std::int64_t> idx) const;

  double item() const;  // value of a single-element tensor

  Tensor reshaped(Shape shape) const;

  // In-place helpers for optimizer updates and accumulation.
  void fill(double v);
  void add_(const Tensor& other, double scale = 1.0);
  void scale_(double s);

  bool all_finite() const;
  double min() const;
  double max() const;
  double abs_max() const;

 private:
  Shape shape_;
  std::vector<double, detail::AlignedAlloc<double>> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace framecast
