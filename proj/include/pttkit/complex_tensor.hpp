// Copyright 2026 The pttkit authors
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

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace pttkit {

using cplx = std::complex<double>;

//=========================================================================
// ComplexTensor: dense multi-index complex array with named axes.
// Entries are stored row-major over the listed axes; that canonical order
// is also the serialisation order.
//=========================================================================

class ComplexTensor {
 public:
  ComplexTensor() = default;

  ComplexTensor(std::vector<std::size_t> shape, std::vector<std::string> labels)
      : shape_(std::move(shape)), labels_(std::move(labels)) {
    if (shape_.size() != labels_.size())
      throw std::invalid_argument("ComplexTensor: shape/label rank mismatch");
    for (std::size_t i = 0; i < labels_.size(); ++i)
      for (std::size_t j = i + 1; j < labels_.size(); ++j)
        if (labels_[i] == labels_[j])
          throw std::invalid_argument("ComplexTensor: duplicate axis label '" + labels_[i] + "'");
    data_.assign(numel_of(shape_), cplx(0.0, 0.0));
  }

  static ComplexTensor scalar(cplx v) {
    ComplexTensor t({}, {});
    t.data_ = {v};
    return t;
  }

  // 2x2 or general square matrix with default row/col labels.
  static ComplexTensor matrix(std::size_t rows, std::size_t cols,
                              std::initializer_list<cplx> entries,
                              std::string row = "r", std::string col = "c") {
    ComplexTensor t({rows, cols}, {std::move(row), std::move(col)});
    if (entries.size() != rows * cols)
      throw std::invalid_argument("ComplexTensor::matrix: wrong entry count");
    std::copy(entries.begin(), entries.end(), t.data_.begin());
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<std::string>& axis_labels() const { return labels_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  cplx* data() { return data_.data(); }
  const cplx* data() const { return data_.data(); }
  std::vector<cplx>& raw() { return data_; }
  const std::vector<cplx>& raw() const { return data_; }

  std::size_t axis(const std::string& label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return i;
    throw std::invalid_argument("ComplexTensor: no axis named '" + label + "'");
  }
  bool has_axis(const std::string& label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
  }

  void rename_axis(const std::string& from, const std::string& to) {
    labels_[axis(from)] = to;
  }

  std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(shape_.size(), 1);
    for (std::size_t i = shape_.size(); i-- > 1;) s[i - 1] = s[i] * shape_[i];
    return s;
  }

  cplx& at(const std::vector<std::size_t>& idx) { return data_[offset(idx)]; }
  const cplx& at(const std::vector<std::size_t>& idx) const { return data_[offset(idx)]; }

  cplx& operator[](std::size_t flat) { return data_[flat]; }
  const cplx& operator[](std::size_t flat) const { return data_[flat]; }

  ComplexTensor conjugated() const {
    ComplexTensor t(*this);
    for (auto& v : t.data_) v = std::conj(v);
    return t;
  }

  ComplexTensor scaled(cplx c) const {
    ComplexTensor t(*this);
    for (auto& v : t.data_) v *= c;
    return t;
  }

  ComplexTensor& operator+=(const ComplexTensor& o) {
    if (o.shape_ != shape_) throw std::invalid_argument("ComplexTensor::+=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  double norm() const {
    double s = 0;
    for (const auto& v : data_) s += std::norm(v);
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0;
    for (const auto& v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  // Reorder axes; entry order is rebuilt in the new canonical order.
  ComplexTensor permuted(const std::vector<std::size_t>& order) const {
    if (order.size() != shape_.size())
      throw std::invalid_argument("ComplexTensor::permuted: bad order length");
    std::vector<std::size_t> nshape(order.size()), nstr(order.size());
    std::vector<std::string> nlab(order.size());
    auto str = strides();
    for (std::size_t i = 0; i < order.size(); ++i) {
      nshape[i] = shape_[order[i]];
      nlab[i] = labels_[order[i]];
      nstr[i] = str[order[i]];
    }
    ComplexTensor out(nshape, nlab);
    std::vector<std::size_t> idx(order.size(), 0);
    for (std::size_t flat = 0; flat < out.numel(); ++flat) {
      std::size_t src = 0;
      for (std::size_t a = 0; a < idx.size(); ++a) src += idx[a] * nstr[a];
      out.data_[flat] = data_[src];
      for (std::size_t a = idx.size(); a-- > 0;) {
        if (++idx[a] < nshape[a]) break;
        idx[a] = 0;
      }
    }
    return out;
  }

  ComplexTensor permuted_to(const std::vector<std::string>& labels) const {
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) order[i] = axis(labels[i]);
    return permuted(order);
  }

  // View-free reshape: same entry order, new axes.
  ComplexTensor reshaped(std::vector<std::size_t> shape, std::vector<std::string> labels) const {
    if (numel_of(shape) != numel())
      throw std::invalid_argument("ComplexTensor::reshaped: element count mismatch");
    ComplexTensor t(std::move(shape), std::move(labels));
    t.data_ = data_;
    return t;
  }

  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

 private:
  std::size_t offset(const std::vector<std::size_t>& idx) const {
    if (idx.size() != shape_.size())
      throw std::invalid_argument("ComplexTensor::at: bad index rank");
    std::size_t off = 0, stride = 1;
    for (std::size_t i = shape_.size(); i-- > 0;) {
      if (idx[i] >= shape_[i]) throw std::out_of_range("ComplexTensor::at: index out of range");
      off += idx[i] * stride;
      stride *= shape_[i];
    }
    return off;
  }

  std::vector<std::size_t> shape_;
  std::vector<std::string> labels_;
  std::vector<cplx> data_;
};

inline ComplexTensor identity_tensor(std::size_t d, const std::string& row = "r",
                                     const std::string& col = "c") {
  ComplexTensor t({d, d}, {row, col});
  for (std::size_t i = 0; i < d; ++i) t[i * d + i] = 1.0;
  return t;
}

// Kronecker product of matrices (2-axis tensors), row/col labels from `a`.
inline ComplexTensor kron(const ComplexTensor& a, const ComplexTensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("kron: matrices only");
  const std::size_t ar = a.extent(0), ac = a.extent(1), br = b.extent(0), bc = b.extent(1);
  ComplexTensor out({ar * br, ac * bc}, a.axis_labels());
  for (std::size_t i = 0; i < ar; ++i)
    for (std::size_t j = 0; j < ac; ++j)
      for (std::size_t k = 0; k < br; ++k)
        for (std::size_t l = 0; l < bc; ++l)
          out[(i * br + k) * (ac * bc) + j * bc + l] = a[i * ac + j] * b[k * bc + l];
  return out;
}

// Plain matrix product for 2-axis tensors.
inline ComplexTensor matmul(const ComplexTensor& a, const ComplexTensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    throw std::invalid_argument("matmul: dimension mismatch");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  ComplexTensor out({m, n}, a.axis_labels());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const cplx av = a[i * k + p];
      if (av == cplx(0.0, 0.0)) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
    }
  return out;
}

inline ComplexTensor dagger(const ComplexTensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("dagger: matrices only");
  const std::size_t r = a.extent(0), c = a.extent(1);
  ComplexTensor out({c, r}, a.axis_labels());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = std::conj(a[i * c + j]);
  return out;
}

inline cplx trace_of(const ComplexTensor& a) {
  if (a.rank() != 2 || a.extent(0) != a.extent(1))
    throw std::invalid_argument("trace_of: square matrices only");
  cplx t = 0;
  for (std::size_t i = 0; i < a.extent(0); ++i) t += a[i * a.extent(1) + i];
  return t;
}

}  // namespace pttkit
