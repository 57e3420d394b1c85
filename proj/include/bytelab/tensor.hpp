#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace bytelab {

// Dense row-major matrix. Everything the engine touches is 2-D; scalars are
// [1,1] and vectors [1,n].
template <typename S>
struct Tensor {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<S> v;

  Tensor() = default;
  Tensor(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), S{0}) {
    if (r < 0 || c < 0) throw std::invalid_argument("negative tensor dimension");
  }

  int64_t size() const { return rows * cols; }
  S& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  S at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  static Tensor scalar(S x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }

  static Tensor full(int64_t r, int64_t c, S x) {
    Tensor t(r, c);
    std::fill(t.v.begin(), t.v.end(), x);
    return t;
  }
};

}  // namespace bytelab
