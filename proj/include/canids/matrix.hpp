#pragma once

#include <cassert>
#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace canids {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void append_row(std::span<const double> values) {
    assert(rows_ == 0 || values.size() == cols_);
    if (rows_ == 0) cols_ = values.size();
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  /// Copies the listed rows, in order.
  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = row(idx[i]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }

  Matrix select_cols(std::span<const std::size_t> idx) const {
    Matrix out(rows_, idx.size());
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t j = 0; j < idx.size(); ++j) out(r, j) = (*this)(r, idx[j]);
    }
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace canids
