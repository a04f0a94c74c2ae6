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

#include <cmath>

#include "pttkit/complex_tensor.hpp"
#include "pttkit/linalg.hpp"
#include "pttkit/network.hpp"

namespace pttkit {

inline constexpr double kPi = 3.14159265358979323846;

//=========================================================================
// Gates and Pauli catalogues
//=========================================================================

inline ComplexTensor pauli_1q(char c) {
  switch (c) {
    case 'I': return ComplexTensor::matrix(2, 2, {1, 0, 0, 1});
    case 'X': return ComplexTensor::matrix(2, 2, {0, 1, 1, 0});
    case 'Y': return ComplexTensor::matrix(2, 2, {0, {0, -1}, {0, 1}, 0});
    case 'Z': return ComplexTensor::matrix(2, 2, {1, 0, 0, -1});
    default: throw std::invalid_argument(std::string("pauli: invalid character '") + c + "'");
  }
}

// Tensor product of single-qubit Paulis in label order (leftmost = qubit 0).
inline ComplexTensor pauli(const std::string& label) {
  if (label.empty()) throw std::invalid_argument("pauli: empty label");
  ComplexTensor out = pauli_1q(label[0]);
  for (std::size_t i = 1; i < label.size(); ++i) out = kron(out, pauli_1q(label[i]));
  return out;
}

// R_Z(theta) = diag(e^{-i theta/2}, e^{+i theta/2})
inline ComplexTensor rz(double theta) {
  return ComplexTensor::matrix(2, 2, {std::exp(cplx(0, -theta / 2)), 0, 0,
                                      std::exp(cplx(0, theta / 2))});
}

// R_X(theta) = exp(-i theta X / 2)
inline ComplexTensor rx(double theta) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  return ComplexTensor::matrix(2, 2, {c, {0, -s}, {0, -s}, c});
}

inline ComplexTensor ry(double theta) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  return ComplexTensor::matrix(2, 2, {c, -s, s, c});
}

// Hardware decomposition of an arbitrary single-qubit unitary:
// R_Z(phi+3pi) . R_X(pi/2) . R_Z(theta+pi) . R_X(pi/2) . R_Z(lam)
inline ComplexTensor u3(double theta, double phi, double lam) {
  return matmul(rz(phi + 3 * kPi),
                matmul(rx(kPi / 2), matmul(rz(theta + kPi), matmul(rx(kPi / 2), rz(lam)))));
}

struct Unitary {
  std::size_t dim = 0;
  ComplexTensor matrix;
};

inline double unitarity_residual(const ComplexTensor& u) {
  ComplexTensor p = matmul(dagger(u), u);
  const std::size_t d = u.extent(0);
  double r = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      r = std::max(r, std::abs(p[i * d + j] - (i == j ? 1.0 : 0.0)));
  return r;
}

// Global phases are unobservable: |Tr(A^dag B)| / d == 1 within tol.
inline bool phase_equal(const ComplexTensor& a, const ComplexTensor& b, double tol = 1e-9) {
  const double d = static_cast<double>(a.extent(0));
  return std::abs(std::abs(trace_of(matmul(dagger(a), b))) / d - 1.0) < tol;
}

struct ZyzAngles {
  double theta, phi, lam;
};

// Extract (theta, phi, lam) with U proportional to RZ(phi) RY(theta) RZ(lam);
// the same triple parametrises u3 up to global phase.
inline ZyzAngles zyz_angles(const ComplexTensor& u) {
  if (u.rank() != 2 || u.extent(0) != 2 || u.extent(1) != 2)
    throw std::invalid_argument("zyz_angles: 2x2 matrices only");
  cplx det = u[0] * u[3] - u[1] * u[2];
  cplx phase = std::sqrt(det);
  ComplexTensor s = u.scaled(cplx(1, 0) / phase);
  const double a00 = std::abs(s[0]), a10 = std::abs(s[2]);
  ZyzAngles r{};
  r.theta = 2.0 * std::atan2(a10, a00);
  if (a00 < 1e-12) {       // theta = pi: only phi - lam fixed
    r.lam = 0.0;
    r.phi = 2.0 * std::arg(s[2]);
  } else if (a10 < 1e-12) {  // theta = 0: only phi + lam fixed
    r.lam = 0.0;
    r.phi = 2.0 * std::arg(s[3]);
  } else {
    const double sum = 2.0 * std::arg(s[3]);
    const double dif = 2.0 * std::arg(s[2]);
    r.phi = (sum + dif) / 2.0;
    r.lam = (sum - dif) / 2.0;
  }
  return r;
}

struct CliffordGate {
  ComplexTensor matrix;  // phase-canonical representative
  double theta, phi, lam;
};

// The 24 single-qubit Cliffords, closed under composition up to phase,
// each with its canonical u3 parameters.  Deterministic order.
inline const std::vector<CliffordGate>& single_qubit_cliffords() {
  static const std::vector<CliffordGate> table = [] {
    auto canon = [](const ComplexTensor& u) {
      // phase-fix: first entry with |.| > 0.3 made real positive
      cplx ref = 0;
      for (std::size_t i = 0; i < 4; ++i)
        if (std::abs(u[i]) > 0.3) {
          ref = u[i] / std::abs(u[i]);
          break;
        }
      return u.scaled(cplx(1, 0) / ref);
    };
    auto key = [](const ComplexTensor& u) {
      std::string k;
      for (std::size_t i = 0; i < 4; ++i) {
        const long re = std::lround(u[i].real() * 1e6);
        const long im = std::lround(u[i].imag() * 1e6);
        k += std::to_string(re) + "," + std::to_string(im) + ";";
      }
      return k;
    };
    const ComplexTensor h = ComplexTensor::matrix(2, 2, {M_SQRT1_2, M_SQRT1_2, M_SQRT1_2,
                                                         -M_SQRT1_2});
    const ComplexTensor sg = ComplexTensor::matrix(2, 2, {1, 0, 0, {0, 1}});
    std::map<std::string, ComplexTensor> seen;
    std::vector<ComplexTensor> frontier = {canon(identity_tensor(2))};
    seen[key(frontier[0])] = frontier[0];
    while (!frontier.empty()) {
      std::vector<ComplexTensor> next;
      for (const auto& u : frontier)
        for (const ComplexTensor* g : {&h, &sg}) {
          ComplexTensor v = canon(matmul(*g, u));
          auto k = key(v);
          if (!seen.count(k)) {
            seen[k] = v;
            next.push_back(v);
          }
        }
      frontier = std::move(next);
    }
    if (seen.size() != 24) throw std::logic_error("clifford catalogue: expected 24 elements");
    std::vector<CliffordGate> out;
    for (auto& [k, u] : seen) {
      ZyzAngles a = zyz_angles(u);
      out.push_back({u, a.theta, a.phi, a.lam});
    }
    // identity first
    for (std::size_t i = 0; i < out.size(); ++i)
      if (phase_equal(out[i].matrix, identity_tensor(2))) {
        std::swap(out[0], out[i]);
        break;
      }
    return out;
  }();
  return table;
}

// Named gates used in circuit specs and decoupling sequences.
inline ComplexTensor named_gate(const std::string& name) {
  if (name == "I") return identity_tensor(2);
  if (name == "X") return pauli_1q('X');
  if (name == "Y") return pauli_1q('Y');
  if (name == "Z") return pauli_1q('Z');
  if (name == "H")
    return ComplexTensor::matrix(2, 2, {M_SQRT1_2, M_SQRT1_2, M_SQRT1_2, -M_SQRT1_2});
  if (name == "S") return ComplexTensor::matrix(2, 2, {1, 0, 0, {0, 1}});
  if (name == "SDG") return ComplexTensor::matrix(2, 2, {1, 0, 0, {0, -1}});
  if (name == "SX") return rx(kPi / 2);
  throw std::invalid_argument("named_gate: unknown gate '" + name + "'");
}

// Basis-change unitary V with V |b_x> = |x> for measurement basis B.
inline ComplexTensor basis_change(char basis) {
  switch (basis) {
    case 'Z': return identity_tensor(2);
    case 'X': return named_gate("H");
    case 'Y': return matmul(named_gate("H"), named_gate("SDG"));
    default: throw std::invalid_argument("basis_change: basis must be X, Y or Z");
  }
}

//=========================================================================
// Dense Choi states with named legs
//=========================================================================

struct Leg {
  std::string name;
  std::size_t dim;
  bool operator==(const Leg&) const = default;
};

// Operator on the tensor product of the named legs; Choi convention is the
// paper's unnormalised |Phi+> = sum_i |ii>, so trace-preserving channels
// have trace d.  Testers are trace non-increasing; the trace is carried by
// the matrix itself.
struct ChoiState {
  std::vector<Leg> legs;
  ComplexTensor matrix;  // axes ("r", "c")

  std::size_t total_dim() const {
    std::size_t d = 1;
    for (const auto& l : legs) d *= l.dim;
    return d;
  }
  int leg_index(const std::string& name) const {
    for (std::size_t i = 0; i < legs.size(); ++i)
      if (legs[i].name == name) return static_cast<int>(i);
    return -1;
  }
  cplx trace() const { return trace_of(matrix); }

  // 2L-axis view with labels "r:<leg>" / "c:<leg>"
  ComplexTensor to_multi() const {
    std::vector<std::size_t> shape;
    std::vector<std::string> labels;
    for (const auto& l : legs) {
      shape.push_back(l.dim);
      labels.push_back("r:" + l.name);
    }
    for (const auto& l : legs) {
      shape.push_back(l.dim);
      labels.push_back("c:" + l.name);
    }
    return matrix.reshaped(shape, labels);
  }

  static ChoiState from_multi(const ComplexTensor& multi, const std::vector<Leg>& legs) {
    std::vector<std::string> order;
    for (const auto& l : legs) order.push_back("r:" + l.name);
    for (const auto& l : legs) order.push_back("c:" + l.name);
    ComplexTensor p = multi.permuted_to(order);
    std::size_t d = 1;
    for (const auto& l : legs) d *= l.dim;
    ChoiState out;
    out.legs = legs;
    out.matrix = p.reshaped({d, d}, {"r", "c"});
    return out;
  }

  // Split a leg into finer sublegs (row-major), e.g. a register into qubits.
  ChoiState split_leg(const std::string& name, const std::vector<Leg>& parts) const {
    std::size_t pd = 1;
    for (const auto& p : parts) pd *= p.dim;
    const int at = leg_index(name);
    if (at < 0 || legs[at].dim != pd)
      throw std::invalid_argument("split_leg: bad leg or dimensions");
    ChoiState out;
    for (int i = 0; i < static_cast<int>(legs.size()); ++i) {
      if (i == at)
        out.legs.insert(out.legs.end(), parts.begin(), parts.end());
      else
        out.legs.push_back(legs[i]);
    }
    out.matrix = matrix;  // row-major refinement keeps entry order
    return out;
  }

  ChoiState renamed(const std::string& from, const std::string& to) const {
    ChoiState out = *this;
    const int at = leg_index(from);
    if (at < 0) throw std::invalid_argument("renamed: unknown leg " + from);
    out.legs[at].name = to;
    return out;
  }

  // Reorder legs to the given name order.
  ChoiState reordered(const std::vector<std::string>& names) const {
    if (names.size() != legs.size()) throw std::invalid_argument("reordered: wrong leg count");
    std::vector<Leg> nl;
    for (const auto& n : names) {
      const int at = leg_index(n);
      if (at < 0) throw std::invalid_argument("reordered: unknown leg " + n);
      nl.push_back(legs[at]);
    }
    return from_multi(to_multi(), nl);
  }
};

inline ChoiState choi_of_state(const ComplexTensor& rho, const std::string& leg = "o0") {
  ChoiState c;
  c.legs = {{leg, rho.extent(0)}};
  c.matrix = rho.reshaped({rho.extent(0), rho.extent(1)}, {"r", "c"});
  return c;
}

// Choi state of a unitary channel: |vec(U)><vec(U)|, legs (out, in).
inline ChoiState choi_of_unitary(const ComplexTensor& u, const std::string& out_leg = "out",
                                 const std::string& in_leg = "in") {
  const std::size_t d = u.extent(0);
  if (u.extent(1) != d) throw std::invalid_argument("choi_of_unitary: square only");
  ChoiState c;
  c.legs = {{out_leg, d}, {in_leg, d}};
  c.matrix = ComplexTensor({d * d, d * d}, {"r", "c"});
  for (std::size_t r = 0; r < d * d; ++r)
    for (std::size_t s = 0; s < d * d; ++s)
      c.matrix[r * d * d + s] = u[r] * std::conj(u[s]);
  return c;
}

// Choi state of a CP map given by Kraus operators.
inline ChoiState choi_of_kraus(const std::vector<ComplexTensor>& kraus,
                               const std::string& out_leg = "out",
                               const std::string& in_leg = "in") {
  if (kraus.empty()) throw std::invalid_argument("choi_of_kraus: empty Kraus list");
  const std::size_t dr = kraus[0].extent(0), dc = kraus[0].extent(1);
  for (const auto& k : kraus)
    if (k.extent(0) != dr || k.extent(1) != dc)
      throw std::invalid_argument("choi_of_kraus: Kraus dimension mismatch");
  ChoiState c;
  c.legs = {{out_leg, dr}, {in_leg, dc}};
  const std::size_t D = dr * dc;
  c.matrix = ComplexTensor({D, D}, {"r", "c"});
  for (const auto& k : kraus)
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t s = 0; s < D; ++s) c.matrix[r * D + s] += k[r] * std::conj(k[s]);
  return c;
}

// Link product: contract shared legs (row with row, column with column,
// partial transpose folded in).  Remaining legs: a's then b's.
inline ChoiState link_product(const ChoiState& a, const ChoiState& b,
                              const std::vector<std::string>& shared) {
  std::vector<Leg> keep_a, keep_b, sh;
  for (const auto& l : a.legs) {
    bool s = false;
    for (const auto& n : shared) s = s || n == l.name;
    (s ? sh : keep_a).push_back(l);
  }
  for (const auto& l : b.legs) {
    bool s = false;
    for (const auto& n : shared) s = s || n == l.name;
    if (!s) keep_b.push_back(l);
  }
  if (sh.size() != shared.size())
    throw std::invalid_argument("link_product: shared leg missing from first factor");
  for (const auto& n : shared)
    if (b.leg_index(n) < 0)
      throw std::invalid_argument("link_product: shared leg missing from second factor");
  for (const auto& n : shared) {
    if (a.legs[a.leg_index(n)].dim != b.legs[b.leg_index(n)].dim)
      throw std::invalid_argument("link_product: leg dimension mismatch on " + n);
  }

  // group axes: A -> (ka_r, s_r, ka_c, s_c), B -> (s_r, kb_r, s_c, kb_c)
  auto group = [&](const ChoiState& c, const std::vector<Leg>& keep, bool keep_first) {
    std::vector<std::string> order;
    auto push_side = [&](const char* side) {
      if (keep_first) {
        for (const auto& l : keep) order.push_back(std::string(side) + l.name);
        for (const auto& n : shared) order.push_back(std::string(side) + n);
      } else {
        for (const auto& n : shared) order.push_back(std::string(side) + n);
        for (const auto& l : keep) order.push_back(std::string(side) + l.name);
      }
    };
    push_side("r:");
    push_side("c:");
    ComplexTensor m = c.to_multi().permuted_to(order);
    std::size_t kd = 1, sd = 1;
    for (const auto& l : keep) kd *= l.dim;
    for (const auto& n : shared) sd *= c.legs[c.leg_index(n)].dim;
    if (keep_first)
      return m.reshaped({kd, sd, kd, sd}, {"k_r", "s_r", "k_c", "s_c"});
    return m.reshaped({sd, kd, sd, kd}, {"s_r", "k_r", "s_c", "k_c"});
  };

  ComplexTensor ga = group(a, keep_a, true);
  ComplexTensor gb = group(b, keep_b, false);
  ComplexTensor prod = tensordot(ga, gb, {{"s_r", "s_r"}, {"s_c", "s_c"}});
  // axes now (k_r[a], k_c[a], k_r[b], k_c[b])
  std::size_t da = 1, db = 1;
  for (const auto& l : keep_a) da *= l.dim;
  for (const auto& l : keep_b) db *= l.dim;
  ComplexTensor arranged =
      prod.reshaped({da, da, db, db}, {"ar", "ac", "br", "bc"}).permuted_to({"ar", "br", "ac",
                                                                             "bc"});
  ChoiState out;
  out.legs = keep_a;
  out.legs.insert(out.legs.end(), keep_b.begin(), keep_b.end());
  out.matrix = arranged.reshaped({da * db, da * db}, {"r", "c"});
  return out;
}

// Trace over named legs; remaining leg order preserved.
inline ChoiState partial_trace(const ChoiState& c, const std::vector<std::string>& traced) {
  for (const auto& n : traced)
    if (c.leg_index(n) < 0) throw std::invalid_argument("partial_trace: unknown leg " + n);
  std::vector<Leg> keep;
  for (const auto& l : c.legs) {
    bool t = false;
    for (const auto& n : traced) t = t || n == l.name;
    if (!t) keep.push_back(l);
  }
  std::vector<std::string> order;
  for (const auto& l : keep) order.push_back("r:" + l.name);
  for (const auto& n : traced) order.push_back("r:" + n);
  for (const auto& l : keep) order.push_back("c:" + l.name);
  for (const auto& n : traced) order.push_back("c:" + n);
  ComplexTensor m = c.to_multi().permuted_to(order);
  std::size_t kd = 1, td = 1;
  for (const auto& l : keep) kd *= l.dim;
  for (const auto& n : traced) td *= c.legs[c.leg_index(n)].dim;
  ChoiState out;
  out.legs = keep;
  out.matrix = ComplexTensor({kd, kd}, {"r", "c"});
  for (std::size_t i = 0; i < kd; ++i)
    for (std::size_t j = 0; j < kd; ++j) {
      cplx acc = 0;
      for (std::size_t t = 0; t < td; ++t) acc += m[((i * td + t) * kd + j) * td + t];
      out.matrix[i * kd + j] = acc;
    }
  return out;
}

//=========================================================================
// Superoperators (row-major vec: vec(rho)[i*d+j] = rho[i][j])
//=========================================================================

inline ComplexTensor superop_of_unitary(const ComplexTensor& u) {
  return kron(u, u.conjugated());
}

inline ComplexTensor superop_of_kraus(const std::vector<ComplexTensor>& ks) {
  ComplexTensor s = kron(ks[0], ks[0].conjugated());
  for (std::size_t i = 1; i < ks.size(); ++i) s += kron(ks[i], ks[i].conjugated());
  return s;
}

// Choi (out, in legs) <-> superoperator reshuffle.
inline ComplexTensor choi_to_superop(const ChoiState& c) {
  if (c.legs.size() != 2) throw std::invalid_argument("choi_to_superop: need (out, in) legs");
  const std::size_t dout = c.legs[0].dim, din = c.legs[1].dim;
  ComplexTensor s({dout * dout, din * din}, {"r", "c"});
  for (std::size_t a = 0; a < dout; ++a)
    for (std::size_t b = 0; b < dout; ++b)
      for (std::size_t i = 0; i < din; ++i)
        for (std::size_t j = 0; j < din; ++j)
          s[(a * dout + b) * din * din + i * din + j] =
              c.matrix[(a * din + i) * dout * din + b * din + j];
  return s;
}

inline ChoiState superop_to_choi(const ComplexTensor& s, const std::string& out_leg = "out",
                                 const std::string& in_leg = "in") {
  const std::size_t dout = static_cast<std::size_t>(std::lround(std::sqrt(double(s.extent(0)))));
  const std::size_t din = static_cast<std::size_t>(std::lround(std::sqrt(double(s.extent(1)))));
  ChoiState c;
  c.legs = {{out_leg, dout}, {in_leg, din}};
  c.matrix = ComplexTensor({dout * din, dout * din}, {"r", "c"});
  for (std::size_t a = 0; a < dout; ++a)
    for (std::size_t b = 0; b < dout; ++b)
      for (std::size_t i = 0; i < din; ++i)
        for (std::size_t j = 0; j < din; ++j)
          c.matrix[(a * din + i) * dout * din + b * din + j] =
              s[(a * dout + b) * din * din + i * din + j];
  return c;
}

inline ComplexTensor apply_superop(const ComplexTensor& s, const ComplexTensor& rho) {
  const std::size_t d = rho.extent(0);
  ComplexTensor v = rho.reshaped({d * d}, {"v"});
  ComplexTensor out({d, d}, rho.axis_labels());
  for (std::size_t r = 0; r < d * d; ++r) {
    cplx acc = 0;
    for (std::size_t c2 = 0; c2 < d * d; ++c2) acc += s[r * d * d + c2] * v[c2];
    out[r] = acc;
  }
  return out;
}

//=========================================================================
// Measures
//=========================================================================

// sqrt(1/2 sum (sqrt(p) - sqrt(q))^2); inputs clamped at 0 and renormalised.
inline double hellinger_distance(std::vector<double> p, std::vector<double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("hellinger_distance: length mismatch");
  auto fix = [](std::vector<double>& v) {
    double s = 0;
    for (auto& x : v) {
      if (x < -1e-12) throw std::invalid_argument("hellinger_distance: negative probability");
      x = std::max(0.0, x);
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("hellinger_distance: probabilities must sum to 1");
    for (auto& x : v) x /= s;
  };
  fix(p);
  fix(q);
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    acc += d * d;
  }
  return std::sqrt(0.5 * acc);
}

// (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2
inline double uhlmann_fidelity(const ComplexTensor& rho, const ComplexTensor& sigma,
                               double tol = 1e-7) {
  for (const ComplexTensor* m : {&rho, &sigma}) {
    auto e = hermitian_eig(*m, tol);
    if (e.values.front() < -1e-7) throw std::invalid_argument("uhlmann_fidelity: non-PSD input");
    double tr = 0;
    for (double v : e.values) tr += v;
    if (std::abs(tr - 1.0) > 1e-6)
      throw std::invalid_argument("uhlmann_fidelity: inputs must have unit trace");
  }
  ComplexTensor sr = sqrtm_psd(rho, tol);
  ComplexTensor inner = matmul(sr, matmul(sigma, sr));
  // clean tiny asymmetry before the final eigensolve
  const std::size_t d = inner.extent(0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cplx v = 0.5 * (inner[i * d + j] + std::conj(inner[j * d + i]));
      inner[i * d + j] = v;
      inner[j * d + i] = std::conj(v);
    }
  auto e = hermitian_eig(inner, tol);
  double s = 0;
  for (double lam : e.values) s += std::sqrt(std::max(0.0, lam));
  return std::min(1.0, s * s);
}

// (1/2) ||a - b||_1 via a Hermitian eigensolve of the difference.
inline double trace_distance(const ComplexTensor& a, const ComplexTensor& b, double tol = 1e-8) {
  if (a.shape() != b.shape()) throw std::invalid_argument("trace_distance: dimension mismatch");
  ComplexTensor d = a;
  for (std::size_t i = 0; i < d.numel(); ++i) d[i] -= b[i];
  auto e = hermitian_eig(d, tol);
  double s = 0;
  for (double lam : e.values) s += std::abs(lam);
  return 0.5 * s;
}

//=========================================================================
// POVMs
//=========================================================================

struct POVM {
  std::vector<ComplexTensor> effects;

  double completeness_residual() const {
    ComplexTensor sum = effects.at(0);
    for (std::size_t i = 1; i < effects.size(); ++i) sum += effects[i];
    const std::size_t d = sum.extent(0);
    double r = 0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        r = std::max(r, std::abs(sum[i * d + j] - (i == j ? 1.0 : 0.0)));
    return r;
  }
};

inline POVM computational_povm() {
  POVM p;
  p.effects.push_back(ComplexTensor::matrix(2, 2, {1, 0, 0, 0}));
  p.effects.push_back(ComplexTensor::matrix(2, 2, {0, 0, 0, 1}));
  return p;
}

// Two-qubit primitives (q0 is the leftmost / most significant factor).
inline ComplexTensor cnot_matrix(bool control_is_q0 = false) {
  // default: control q1, target q0 (the template orientation used throughout)
  if (control_is_q0)
    return ComplexTensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0});
  return ComplexTensor::matrix(4, 4, {1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0});
}

// Controlled X-rotation: control on the first factor, RX(theta) on the second.
inline ComplexTensor crx_matrix(double theta) {
  ComplexTensor out = identity_tensor(4);
  ComplexTensor r = rx(theta);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) out[(2 + i) * 4 + (2 + j)] = r[i * 2 + j];
  return out;
}

}  // namespace pttkit
