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

#include <Eigen/Dense>

#include "pttkit/complex_tensor.hpp"

namespace pttkit {

using EMat = Eigen::MatrixXcd;
using EVec = Eigen::VectorXcd;

inline EMat to_eigen(const ComplexTensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("to_eigen: 2-axis tensors only");
  EMat m(t.extent(0), t.extent(1));
  for (std::size_t i = 0; i < t.extent(0); ++i)
    for (std::size_t j = 0; j < t.extent(1); ++j) m(i, j) = t[i * t.extent(1) + j];
  return m;
}

inline ComplexTensor from_eigen(const EMat& m, std::string row = "r", std::string col = "c") {
  ComplexTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                  {std::move(row), std::move(col)});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[i * m.cols() + j] = m(i, j);
  return t;
}

//-------------------------------------------------------------------------
// svd_split: factor a tensor across a named axis bipartition.
// Returns (U, S, V) with U carrying left_axes + bond, V carrying
// bond + right_axes, and S the singular values (nonnegative, descending).
//-------------------------------------------------------------------------

struct SvdResult {
  ComplexTensor u;
  std::vector<double> s;
  ComplexTensor v;
};

inline SvdResult svd_split(const ComplexTensor& t, const std::vector<std::string>& left_axes,
                           const std::vector<std::string>& right_axes, std::size_t max_rank,
                           const std::string& bond_label = "s") {
  if (left_axes.empty() || right_axes.empty())
    throw std::invalid_argument("svd_split: empty axis group");
  if (left_axes.size() + right_axes.size() != t.rank())
    throw std::invalid_argument("svd_split: axis groups must partition the tensor");
  std::vector<std::string> order;
  order.insert(order.end(), left_axes.begin(), left_axes.end());
  order.insert(order.end(), right_axes.begin(), right_axes.end());
  ComplexTensor p = t.permuted_to(order);

  std::size_t lrows = 1, rcols = 1;
  std::vector<std::size_t> lshape, rshape;
  for (std::size_t i = 0; i < left_axes.size(); ++i) {
    lrows *= p.extent(i);
    lshape.push_back(p.extent(i));
  }
  for (std::size_t i = left_axes.size(); i < p.rank(); ++i) {
    rcols *= p.extent(i);
    rshape.push_back(p.extent(i));
  }

  EMat m(lrows, rcols);
  for (std::size_t i = 0; i < lrows; ++i)
    for (std::size_t j = 0; j < rcols; ++j) m(i, j) = p[i * rcols + j];

  Eigen::JacobiSVD<EMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const std::size_t full = static_cast<std::size_t>(svd.singularValues().size());
  const std::size_t keep = std::min<std::size_t>(max_rank, full);

  std::vector<std::size_t> ushape = lshape;
  ushape.push_back(keep);
  std::vector<std::string> ulabels = left_axes;
  ulabels.push_back(bond_label);
  ComplexTensor u(ushape, ulabels);
  for (std::size_t i = 0; i < lrows; ++i)
    for (std::size_t k = 0; k < keep; ++k) u[i * keep + k] = svd.matrixU()(i, k);

  std::vector<std::size_t> vshape;
  vshape.push_back(keep);
  vshape.insert(vshape.end(), rshape.begin(), rshape.end());
  std::vector<std::string> vlabels;
  vlabels.push_back(bond_label);
  vlabels.insert(vlabels.end(), right_axes.begin(), right_axes.end());
  ComplexTensor v(vshape, vlabels);
  for (std::size_t k = 0; k < keep; ++k)
    for (std::size_t j = 0; j < rcols; ++j) v[k * rcols + j] = std::conj(svd.matrixV()(j, k));

  std::vector<double> s(keep);
  for (std::size_t k = 0; k < keep; ++k) s[k] = svd.singularValues()(k);
  return {std::move(u), std::move(s), std::move(v)};
}

//-------------------------------------------------------------------------
// Hermitian eigensolve
//-------------------------------------------------------------------------

struct EigResult {
  std::vector<double> values;  // ascending
  ComplexTensor vectors;       // columns are eigenvectors
};

inline double hermiticity_residual(const ComplexTensor& t) {
  if (t.rank() != 2 || t.extent(0) != t.extent(1))
    throw std::invalid_argument("hermitian_eig: square matrices only");
  const std::size_t d = t.extent(0);
  double r = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      r = std::max(r, std::abs(t[i * d + j] - std::conj(t[j * d + i])));
  return r;
}

inline EigResult hermitian_eig(const ComplexTensor& t, double tol = 1e-10) {
  const double scale = std::max(1.0, t.max_abs());
  if (hermiticity_residual(t) > tol * scale)
    throw std::invalid_argument("hermitian_eig: input is not Hermitian within tolerance");
  Eigen::SelfAdjointEigenSolver<EMat> es(to_eigen(t));
  if (es.info() != Eigen::Success) throw std::runtime_error("hermitian_eig: solver failed");
  EigResult r;
  r.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  r.vectors = from_eigen(es.eigenvectors());
  return r;
}

// f applied to the spectrum of a Hermitian matrix: V f(diag) V^dagger.
template <typename F>
inline ComplexTensor hermitian_function(const ComplexTensor& t, F&& f, double tol = 1e-10) {
  EigResult e = hermitian_eig(t, tol);
  const std::size_t d = t.extent(0);
  EMat v = to_eigen(e.vectors);
  EVec fd(d);
  for (std::size_t i = 0; i < d; ++i) fd(i) = f(e.values[i]);
  EMat out = v * fd.asDiagonal() * v.adjoint();
  ComplexTensor r = from_eigen(out);
  return r.reshaped(t.shape(), t.axis_labels());
}

// exp(factor * H) for Hermitian H (factor may be complex, e.g. -i dt).
inline ComplexTensor expm_hermitian(const ComplexTensor& h, cplx factor, double tol = 1e-8) {
  return hermitian_function(h, [factor](double lam) { return std::exp(factor * lam); }, tol);
}

inline ComplexTensor sqrtm_psd(const ComplexTensor& a, double tol = 1e-8) {
  return hermitian_function(
      a, [](double lam) { return std::sqrt(std::max(0.0, lam)); }, tol);
}

// von Neumann entropy (natural log) of a unit-trace PSD matrix.
inline double entropy_of(const ComplexTensor& rho, double tol = 1e-8) {
  EigResult e = hermitian_eig(rho, tol);
  double s = 0;
  for (double lam : e.values)
    if (lam > 1e-14) s -= lam * std::log(lam);
  return s;
}

}  // namespace pttkit
