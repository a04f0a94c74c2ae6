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

#include "pttkit/estimator.hpp"

namespace pttkit {

//=========================================================================
// Validation reports
//=========================================================================

struct ReconstructionReport {
  std::vector<double> distances;  // per circuit, order of the input list
  double median = 0, q1 = 0, q3 = 0;
};

inline ReconstructionReport reconstruction_report(GateSet& gs,
                                                  const std::vector<BatchItem>& circuits) {
  if (circuits.empty()) throw std::invalid_argument("reconstruction_report: empty split");
  ModelEvaluator ev(gs);
  ReconstructionReport rep;
  for (const auto& item : circuits) {
    auto p = predict_distribution(gs, item.circuit, &ev);
    double norm = 0;
    for (double x : p) norm += x;
    for (auto& x : p) x /= norm;
    std::vector<double> emp(p.size(), 0.0);
    for (std::size_t x = 0; x < p.size(); ++x) emp[x] = item.counts[x] / item.shots;
    rep.distances.push_back(hellinger_distance(p, emp));
  }
  std::vector<double> sorted = rep.distances;
  std::sort(sorted.begin(), sorted.end());
  auto quant = [&](double q) {
    const double pos = q * double(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
  };
  rep.q1 = quant(0.25);
  rep.median = quant(0.5);
  rep.q3 = quant(0.75);
  return rep;
}

//=========================================================================
// Spatiotemporal mutual information
//=========================================================================

struct MIMap {
  std::size_t n_qubits = 1, n_steps = 1;
  // flattened slot index s = q * n_steps + (j - 1)
  std::vector<double> entries;  // row-major (s1, s2); diagonal zero

  double at(SlotRef a, SlotRef b) const {
    const std::size_t s1 = a.qubit * n_steps + (a.step - 1);
    const std::size_t s2 = b.qubit * n_steps + (b.step - 1);
    return entries[s1 * n_qubits * n_steps + s2];
  }
};

// Mutual information between two conditional step marginals of a dense
// process, in nats; X-refocused at every non-selected slot.
inline double mutual_information_pair(const ChoiState& process, std::size_t n, std::size_t k,
                                      SlotRef a, SlotRef b,
                                      const ComplexTensor& refocus = pauli_1q('X')) {
  ChoiState joint = conditional_marginal(process, n, k, a, b, refocus);
  ComplexTensor rho_ab = joint.matrix.scaled(1.0 / joint.trace().real());
  ChoiState ja = partial_trace(joint, {joint.legs[2].name, joint.legs[3].name});
  ChoiState jb = partial_trace(joint, {joint.legs[0].name, joint.legs[1].name});
  ComplexTensor rho_a = ja.matrix.scaled(1.0 / ja.trace().real());
  ComplexTensor rho_b = jb.matrix.scaled(1.0 / jb.trace().real());
  const double mi = entropy_of(rho_a, 1e-7) + entropy_of(rho_b, 1e-7) - entropy_of(rho_ab, 1e-7);
  return std::max(0.0, mi);  // clamp the numerical floor
}

inline MIMap mutual_information_map(const ChoiState& process, std::size_t n, std::size_t k,
                                    const ComplexTensor& refocus = pauli_1q('X')) {
  MIMap map;
  map.n_qubits = n;
  map.n_steps = k;
  const std::size_t slots = n * k;
  map.entries.assign(slots * slots, 0.0);
  for (std::size_t s1 = 0; s1 < slots; ++s1)
    for (std::size_t s2 = s1 + 1; s2 < slots; ++s2) {
      SlotRef a{s1 / k, s1 % k + 1}, b{s2 / k, s2 % k + 1};
      const double mi = mutual_information_pair(process, n, k, a, b, refocus);
      map.entries[s1 * slots + s2] = mi;
      map.entries[s2 * slots + s1] = mi;
    }
  return map;
}

//=========================================================================
// Cartan (magic-basis) decomposition of SU(4)
//=========================================================================

inline ComplexTensor magic_basis() {
  const double s = M_SQRT1_2;
  ComplexTensor b({4, 4}, {"r", "c"});
  // columns: |00>+|11>, -i(|01>+|10>), |01>-|10>, -i(|00>-|11>)  (x 1/sqrt2)
  const cplx i(0, 1);
  b[0 * 4 + 0] = s;
  b[3 * 4 + 0] = s;
  b[1 * 4 + 1] = -i * s;
  b[2 * 4 + 1] = -i * s;
  b[1 * 4 + 2] = s;
  b[2 * 4 + 2] = -s;
  b[0 * 4 + 3] = -i * s;
  b[3 * 4 + 3] = i * s;
  return b;
}

struct KakResult {
  ComplexTensor k1;        // left local (4x4, product of singles)
  ComplexTensor k2;        // right local
  double a = 0, b = 0, c = 0;  // exp(i (a XX + b YY + c ZZ))
  cplx phase = 1.0;
};

// Split a (phase x) tensor-product unitary into its single-qubit factors.
inline std::pair<ComplexTensor, ComplexTensor> kron_factor_2q(const ComplexTensor& u) {
  // reshuffle to M[(a_r a_c),(b_r b_c)] and take the dominant dyad
  EMat m(4, 4);
  for (std::size_t ar = 0; ar < 2; ++ar)
    for (std::size_t br = 0; br < 2; ++br)
      for (std::size_t ac = 0; ac < 2; ++ac)
        for (std::size_t bc = 0; bc < 2; ++bc)
          m(ar * 2 + ac, br * 2 + bc) = u[(ar * 2 + br) * 4 + (ac * 2 + bc)];
  Eigen::JacobiSVD<EMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s0 = svd.singularValues()(0);
  ComplexTensor a({2, 2}, {"r", "c"}), b({2, 2}, {"r", "c"});
  for (std::size_t i = 0; i < 4; ++i) {
    a[i] = svd.matrixU()(i, 0) * std::sqrt(s0);
    b[i] = std::conj(svd.matrixV()(i, 0)) * std::sqrt(s0);
  }
  // unitarise: divide by sqrt(det) magnitude-phase
  auto unitarise = [](ComplexTensor& t) {
    cplx det = t[0] * t[3] - t[1] * t[2];
    cplx root = std::sqrt(det);
    if (std::abs(root) < 1e-12) throw std::runtime_error("kron_factor_2q: singular factor");
    t = t.scaled(cplx(1, 0) / root);
  };
  unitarise(a);
  unitarise(b);
  return {a, b};
}

inline KakResult kak_decompose(const ComplexTensor& u_in) {
  if (u_in.rank() != 2 || u_in.extent(0) != 4)
    throw std::invalid_argument("kak_decompose: 4x4 unitaries only");
  if (unitarity_residual(u_in) > 1e-9)
    throw std::invalid_argument("kak_decompose: input is not unitary");
  // project onto SU(4)
  EMat u = to_eigen(u_in);
  cplx det = u.determinant();
  cplx ph = std::pow(det, 0.25);
  u /= ph;

  const ComplexTensor bt = magic_basis();
  EMat bm = to_eigen(bt);
  EMat mm = bm.adjoint() * u * bm;
  EMat g = mm.transpose() * mm;  // symmetric unitary

  // simultaneous real-orthogonal diagonalisation of Re g, Im g
  Eigen::Matrix4d re = g.real(), im = g.imag();
  Eigen::Matrix4d p;
  bool ok = false;
  for (double t : {0.719438, 0.291154, 1.130774, 0.437291, 1.938211}) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(re + t * im);
    p = es.eigenvectors();
    Eigen::Matrix4cd check = p.transpose() * g * p;
    double off = 0;
    for (int i2 = 0; i2 < 4; ++i2)
      for (int j2 = 0; j2 < 4; ++j2)
        if (i2 != j2) off = std::max(off, std::abs(check(i2, j2)));
    if (off < 1e-9) {
      ok = true;
      break;
    }
  }
  if (!ok) throw std::runtime_error("kak_decompose: failed to diagonalise M^T M");
  if (p.determinant() < 0) p.col(0) *= -1.0;

  Eigen::Matrix4cd d = p.transpose() * g * p;
  std::array<double, 4> theta{};
  for (int i2 = 0; i2 < 4; ++i2) theta[i2] = 0.5 * std::arg(d(i2, i2));
  // left factor must be real with determinant +1
  auto build = [&](const std::array<double, 4>& th) {
    Eigen::Matrix4cd eminus = Eigen::Matrix4cd::Zero();
    for (int i2 = 0; i2 < 4; ++i2) eminus(i2, i2) = std::exp(cplx(0, -th[i2]));
    Eigen::Matrix4cd o1 = mm * p * eminus;
    return o1;
  };
  Eigen::Matrix4cd o1 = build(theta);
  if (o1.imag().cwiseAbs().maxCoeff() > 1e-8 || o1.real().determinant() < 0) {
    theta[0] -= kPi;
    o1 = build(theta);
  }
  if (o1.imag().cwiseAbs().maxCoeff() > 1e-8)
    throw std::runtime_error("kak_decompose: left factor not real");

  // back through the magic basis
  EMat k1m = bm * o1 * bm.adjoint();
  EMat k2m = bm * p.transpose() * bm.adjoint();
  // canonical coefficients from H = B diag(theta) B^dagger
  Eigen::Matrix4cd hd = Eigen::Matrix4cd::Zero();
  for (int i2 = 0; i2 < 4; ++i2) hd(i2, i2) = theta[i2];
  EMat h = bm * hd * bm.adjoint();
  auto coeff = [&](const std::string& label) {
    ComplexTensor pp = pauli(label);
    cplx acc = 0;
    for (int i2 = 0; i2 < 4; ++i2)
      for (int j2 = 0; j2 < 4; ++j2) acc += h(i2, j2) * pp[j2 * 4 + i2];
    return (acc / 4.0).real();
  };
  KakResult r;
  r.a = coeff("XX");
  r.b = coeff("YY");
  r.c = coeff("ZZ");
  r.phase = ph * std::exp(cplx(0, coeff("II")));
  r.k1 = from_eigen(k1m);
  r.k2 = from_eigen(k2m);
  return r;
}

// derivative of u3 with respect to one angle component (0 theta, 1 phi, 2 lam)
inline ComplexTensor du3(double theta, double phi, double lam, int comp) {
  auto drz = [](double t) {
    return ComplexTensor::matrix(
        2, 2, {cplx(0, -0.5) * std::exp(cplx(0, -t / 2)), 0, 0,
               cplx(0, 0.5) * std::exp(cplx(0, t / 2))});
  };
  switch (comp) {
    case 0:
      return matmul(rz(phi + 3 * kPi),
                    matmul(rx(kPi / 2),
                           matmul(drz(theta + kPi), matmul(rx(kPi / 2), rz(lam)))));
    case 1:
      return matmul(drz(phi + 3 * kPi),
                    matmul(rx(kPi / 2), matmul(rz(theta + kPi), matmul(rx(kPi / 2), rz(lam)))));
    default:
      return matmul(rz(phi + 3 * kPi),
                    matmul(rx(kPi / 2),
                           matmul(rz(theta + kPi), matmul(rx(kPi / 2), drz(lam)))));
  }
}

// Ideal template (three CNOTs, control q1 target q0) at the given angles,
// ordered (layer, qubit, component), layer 0 first in time.
inline ComplexTensor su4_template_matrix(const std::vector<double>& angles) {
  if (angles.size() != 24) throw std::invalid_argument("su4_template_matrix: need 24 angles");
  const ComplexTensor c10 = cnot_matrix();
  auto layer = [&](std::size_t l2) {
    const double* a0 = &angles[(l2 * 2 + 0) * 3];
    const double* a1 = &angles[(l2 * 2 + 1) * 3];
    return kron(u3(a0[0], a0[1], a0[2]), u3(a1[0], a1[1], a1[2]));
  };
  ComplexTensor u = layer(0);
  for (std::size_t l2 = 1; l2 < 4; ++l2) u = matmul(layer(l2), matmul(c10, u));
  return u;
}

// Exact noiseless template parameters for an arbitrary SU(4) target:
// Levenberg-Marquardt on the phase-aligned matrix residual with the
// analytic Jacobian, multi-started until machine precision is reached.
// Returns the 24 angles; throws if no start converges.
inline std::vector<double> solve_template_angles(const ComplexTensor& target,
                                                 std::uint64_t seed = 0,
                                                 double tol = 1e-11,
                                                 std::size_t max_starts = 80) {
  if (unitarity_residual(target) > 1e-9)
    throw std::invalid_argument("solve_template_angles: non-unitary target");
  auto residual_phase = [&](const ComplexTensor& t, cplx* phase) {
    cplx tr = trace_of(matmul(dagger(target), t));
    *phase = std::abs(tr) > 1e-12 ? tr / std::abs(tr) : cplx(1, 0);
    double r2 = 0;
    for (std::size_t i = 0; i < 16; ++i) r2 += std::norm(t[i] - *phase * target[i]);
    return r2;
  };

  Rng root = Rng(seed).stream("tmpl_solve");
  for (std::size_t start = 0; start < max_starts; ++start) {
    std::vector<double> a(24);
    Rng rng = root.stream("s", start);
    for (auto& x : a) x = rng.uniform(0, 2 * kPi);
    double lambda = 1e-3;
    cplx phase;
    double f = residual_phase(su4_template_matrix(a), &phase);
    for (int it = 0; it < 120 && f > tol * tol; ++it) {
      // residual vector r (32 reals) and Jacobian (32 x 24)
      ComplexTensor t = su4_template_matrix(a);
      cplx ph;
      f = residual_phase(t, &ph);
      Eigen::VectorXd r(32);
      for (std::size_t i = 0; i < 16; ++i) {
        const cplx d = t[i] - ph * target[i];
        r(2 * i) = d.real();
        r(2 * i + 1) = d.imag();
      }
      Eigen::MatrixXd jac(32, 24);
      const ComplexTensor c10 = cnot_matrix();
      for (std::size_t col = 0; col < 24; ++col) {
        const std::size_t l2 = col / 6, q = (col / 3) % 2, comp = col % 3;
        ComplexTensor u = identity_tensor(4);
        for (std::size_t layer = 0; layer < 4; ++layer) {
          const double* b0 = &a[(layer * 2 + 0) * 3];
          const double* b1 = &a[(layer * 2 + 1) * 3];
          ComplexTensor g0 = (layer == l2 && q == 0) ? du3(b0[0], b0[1], b0[2], int(comp))
                                                     : u3(b0[0], b0[1], b0[2]);
          ComplexTensor g1 = (layer == l2 && q == 1) ? du3(b1[0], b1[1], b1[2], int(comp))
                                                     : u3(b1[0], b1[1], b1[2]);
          ComplexTensor lay = kron(g0, g1);
          u = layer == 0 ? lay : matmul(lay, matmul(c10, u));
        }
        for (std::size_t i = 0; i < 16; ++i) {
          jac(2 * i, col) = u[i].real();
          jac(2 * i + 1, col) = u[i].imag();
        }
      }
      Eigen::MatrixXd h = jac.transpose() * jac;
      Eigen::VectorXd g = jac.transpose() * r;
      for (int damp = 0; damp < 12; ++damp) {
        Eigen::MatrixXd hd = h;
        for (int d2 = 0; d2 < 24; ++d2) hd(d2, d2) += lambda;
        Eigen::VectorXd step = hd.ldlt().solve(g);
        std::vector<double> a2 = a;
        for (int d2 = 0; d2 < 24; ++d2) a2[d2] -= step(d2);
        cplx ph2;
        const double f2 = residual_phase(su4_template_matrix(a2), &ph2);
        if (f2 < f) {
          a = std::move(a2);
          f = f2;
          lambda = std::max(lambda * 0.3, 1e-12);
          break;
        }
        lambda *= 10;
        if (damp == 11) it = 120;  // stuck
      }
    }
    if (f <= tol * tol) return a;
  }
  throw std::runtime_error("solve_template_angles: no start converged");
}


//=========================================================================
// Gate-template channels through a fitted process
//=========================================================================

// Contraction network for the effective channel of a local-gate template
// threaded through a characterised process: tunable u3 layers (hardware
// decomposition, shared learnable pulses) interleave the process steps;
// later steps and the initial output leg are traced out.  Gradients are
// taken with respect to the layer angles.
//
// Angle layout: index (layer * n_qubits + qubit) * 3 + component with
// components (theta, phi, lam).  Layer 0 acts on the channel input, layer
// `n_slots` on the output.
class TemplateChannelNet {
 public:
  TemplateChannelNet(GateSet& gs, std::size_t n_slots, const std::vector<bool>& active_layers)
      : gs_(&gs), n_slots_(n_slots), active_(active_layers) {
    if (n_slots > gs.n_steps)
      throw std::invalid_argument("TemplateChannelNet: not enough process steps");
    if (active_.size() != n_slots + 1)
      throw std::invalid_argument("TemplateChannelNet: one activity flag per layer");
    build();
  }

  std::size_t n_qubits() const { return gs_->n_qubits; }
  // angles exist only for active layers, ordered by activation
  std::size_t n_angles() const { return n_active_ * gs_->n_qubits * 3; }

  // channel Choi matrix, legs (out, in), out = ket index first
  ComplexTensor channel_choi(const std::vector<double>& angles) {
    fill(angles);
    plan_forward(open_plan_, data_, ws_);
    const std::size_t d = std::size_t(1) << gs_->n_qubits;
    std::vector<cplx> out(open_plan_.out_numel);
    plan_result(open_plan_, data_, ws_, out.data());
    ComplexTensor choi({d * d, d * d}, {"r", "c"});
    for (std::size_t i = 0; i < d * d * d * d; ++i) choi[i] = out[i] / norm_;
    return choi;
  }

  // Re Tr[W . E(angles)] / norm with a fixed Hermitian W; gradient optional
  double weighted_overlap(const std::vector<double>& angles, const ComplexTensor& w,
                          std::vector<double>* grad) {
    fill(angles);
    w_storage_ = w.conjugated();  // r-r/c-c pairing contracts W^T; conj gives Tr[W E]
    data_[w_pos_] = w_storage_.data();
    plan_forward(closed_plan_, data_, ws_);
    cplx s;
    plan_result(closed_plan_, data_, ws_, &s);
    if (grad) {
      for (auto& b : bar_) std::fill(b.begin(), b.end(), cplx(0, 0));
      const cplx seed(1.0 / norm_, 0.0);
      plan_backward(closed_plan_, net_, data_, ws_, &seed,
                    [this](int leaf, bool conj, const cplx* adj, std::size_t n) {
                      auto& dst = bar_[static_cast<std::size_t>(leaf)];
                      for (std::size_t i = 0; i < n; ++i)
                        dst[i] += conj ? std::conj(adj[i]) : adj[i];
                    });
      grad->assign(n_angles(), 0.0);
      for (std::size_t a = 0; a < n_angles(); ++a) {
        const double th = angles[a] + stage_shift(a % 3);
        const cplx d0 = cplx(0, -0.5) * std::exp(cplx(0, -th / 2));
        const cplx d1 = cplx(0, 0.5) * std::exp(cplx(0, th / 2));
        (*grad)[a] = (std::conj(bar_[a][0]) * d0 + std::conj(bar_[a][3]) * d1).real();
      }
    }
    return s.real() / norm_;
  }

 private:
  static double stage_shift(std::size_t comp) {
    return comp == 0 ? kPi : (comp == 1 ? 3 * kPi : 0.0);
  }

  void build() {
    const std::size_t n = gs_->n_qubits, k = gs_->n_steps;
    n_active_ = 0;
    layer_ordinal_.assign(active_.size(), 0);
    for (std::size_t l2 = 0; l2 < active_.size(); ++l2)
      if (active_[l2]) layer_ordinal_[l2] = n_active_++;
    net_ = WireNetwork();
    data_.clear();
    consts_.clear();
    consts_.reserve(64 + 8 * n * (k + 2));
    rz_slots_.clear();
    bar_.assign(n_angles(), std::vector<cplx>(4, cplx(0, 0)));

    std::vector<int> oket(n * (k + 1)), obra(n * (k + 1)), iket(n * k, -1), ibra(n * k, -1);
    for (auto& w : oket) w = net_.fresh_wire();
    for (auto& w : obra) w = net_.fresh_wire();

    auto add_const = [&](const ComplexTensor& t) {
      consts_.push_back(t);
      return consts_.back().data();
    };

    // tunable gate on one qubit, ket and bra chains; control chain closed
    // with basis vectors at both ends
    auto add_gate = [&](std::size_t layer, std::size_t q, int wk_in, int wb_in, int* wk_out,
                        int* wb_out) {
      const auto& pulse = gs_->pulse[q];
      const std::size_t cg = pulse.extent(2);
      const cplx* pconj = gs_->conj_cache[gs_->pulse_leaf(q)].data();
      ComplexTensor e0({cg}, {"g"});
      e0[0] = 1;
      const cplx* e0p = add_const(e0);
      int gk = net_.fresh_wire(), gb = net_.fresh_wire();
      net_.add_node_dims(e0p, {cg}, {gk});
      data_.push_back(e0p);
      net_.add_node_dims(e0p, {cg}, {gb});
      data_.push_back(e0p);
      int wk = wk_in, wb = wb_in;
      for (int stage = 0; stage < 3; ++stage) {
        const std::size_t comp = stage == 0 ? 2 : (stage == 1 ? 0 : 1);  // lam, theta, phi
        const std::size_t angle = (layer_ordinal_[layer] * gs_->n_qubits + q) * 3 + comp;
        const int ok = net_.fresh_wire(), ob = net_.fresh_wire();
        rz_slots_.push_back({angle, data_.size(), false});
        net_.add_node_dims(nullptr, {2, 2}, {ok, wk}, static_cast<int>(angle), false);
        data_.push_back(nullptr);
        rz_slots_.push_back({angle, data_.size(), true});
        net_.add_node_dims(nullptr, {2, 2}, {ob, wb}, static_cast<int>(angle), true);
        data_.push_back(nullptr);
        wk = ok;
        wb = ob;
        if (stage == 2) break;
        const int pk = net_.fresh_wire(), pb = net_.fresh_wire();
        const int gk2 = net_.fresh_wire(), gb2 = net_.fresh_wire();
        net_.add_node_dims(pulse.data(), {2, 2, cg, cg}, {pk, wk, gk, gk2});
        data_.push_back(pulse.data());
        net_.add_node_dims(pconj, {2, 2, cg, cg}, {pb, wb, gb, gb2});
        data_.push_back(pconj);
        wk = pk;
        wb = pb;
        gk = gk2;
        gb = gb2;
      }
      net_.add_node_dims(e0p, {cg}, {gk});
      data_.push_back(e0p);
      net_.add_node_dims(e0p, {cg}, {gb});
      data_.push_back(e0p);
      *wk_out = wk;
      *wb_out = wb;
    };

    std::vector<int> in_ket(n), in_bra(n), out_ket(n), out_bra(n);
    for (std::size_t q = 0; q < n; ++q) {
      int wk = net_.fresh_wire(), wb = net_.fresh_wire();
      in_ket[q] = wk;
      in_bra[q] = wb;
      for (std::size_t layer = 0; layer <= n_slots_; ++layer) {
        if (active_[layer]) {
          int wk2 = 0, wb2 = 0;
          add_gate(layer, q, wk, wb, &wk2, &wb2);
          wk = wk2;
          wb = wb2;
        }
        if (layer < n_slots_) {
          iket[q * k + layer] = wk;
          ibra[q * k + layer] = wb;
          wk = oket[q * (k + 1) + layer + 1];
          wb = obra[q * (k + 1) + layer + 1];
        }
      }
      out_ket[q] = wk;
      out_bra[q] = wb;
    }

    // trace the initial output leg and everything beyond the window
    for (std::size_t q = 0; q < n; ++q) {
      obra[q * (k + 1) + 0] = oket[q * (k + 1) + 0];
      for (std::size_t j = n_slots_ + 1; j <= k; ++j) {
        obra[q * (k + 1) + j] = oket[q * (k + 1) + j];
        const int w = net_.fresh_wire();
        iket[q * k + (j - 1)] = w;
        ibra[q * k + (j - 1)] = w;
      }
    }
    norm_ = std::pow(double(std::size_t(1) << n), double(k - n_slots_));

    std::vector<int> nu_ket(n * k), nu_bra(n * k), al_ket((n > 1 ? n - 1 : 0) * (k + 1)),
        al_bra(al_ket.size()), mu(n * (k + 1));
    for (auto& w : nu_ket) w = net_.fresh_wire();
    for (auto& w : nu_bra) w = net_.fresh_wire();
    for (auto& w : al_ket) w = net_.fresh_wire();
    for (auto& w : al_bra) w = net_.fresh_wire();
    for (auto& w : mu) w = net_.fresh_wire();
    for (int side = 0; side < 2; ++side) {
      const bool bra = side == 1;
      for (std::size_t q = 0; q < n; ++q)
        for (std::size_t j = 0; j <= k; ++j) {
          const auto& s = gs_->process.site(q, j);
          std::vector<int> wires;
          std::vector<std::size_t> dims;
          auto push = [&](std::size_t axis, int wire) {
            wires.push_back(wire);
            dims.push_back(s.extent(axis));
          };
          push(0, (bra ? obra : oket)[q * (k + 1) + j]);
          if (j > 0) push(1, (bra ? ibra : iket)[q * k + (j - 1)]);
          if (j > 0) push(2, (bra ? nu_bra : nu_ket)[q * k + j - 1]);
          if (j < k) push(3, (bra ? nu_bra : nu_ket)[q * k + j]);
          if (q > 0) push(4, (bra ? al_bra : al_ket)[(q - 1) * (k + 1) + j]);
          if (q + 1 < n) push(5, (bra ? al_bra : al_ket)[q * (k + 1) + j]);
          push(6, mu[q * (k + 1) + j]);
          const cplx* src =
              bra ? gs_->conj_cache[gs_->proc_leaf(q, j)].data() : s.data();
          net_.add_node_dims(src, dims, wires);
          data_.push_back(src);
        }
    }

    // open variant: channel ports exposed, order (out_ket.., in_ket..,
    // out_bra.., in_bra..) so the flat result reshapes to a Choi matrix
    net_.open.clear();
    for (std::size_t q = 0; q < n; ++q) net_.open.push_back(out_ket[q]);
    for (std::size_t q = 0; q < n; ++q) net_.open.push_back(in_ket[q]);
    for (std::size_t q = 0; q < n; ++q) net_.open.push_back(out_bra[q]);
    for (std::size_t q = 0; q < n; ++q) net_.open.push_back(in_bra[q]);
    open_plan_ = compile_plan(net_, false);

    // closed variant: W node on the channel ports
    WireNetwork closed = net_;
    closed.open.clear();
    std::vector<int> wwires;
    for (std::size_t q = 0; q < n; ++q) wwires.push_back(out_ket[q]);
    for (std::size_t q = 0; q < n; ++q) wwires.push_back(in_ket[q]);
    for (std::size_t q = 0; q < n; ++q) wwires.push_back(out_bra[q]);
    for (std::size_t q = 0; q < n; ++q) wwires.push_back(in_bra[q]);
    w_pos_ = data_.size();
    std::vector<std::size_t> wdims(4 * n, 2);
    closed.add_node_dims(nullptr, wdims, wwires);
    data_.push_back(nullptr);
    net_ = std::move(closed);
    closed_plan_ = compile_plan(net_, false);
    rz_storage_.assign(rz_slots_.size(), ComplexTensor({2, 2}, {"r", "c"}));
  }

  void fill(const std::vector<double>& angles) {
    if (angles.size() != n_angles())
      throw std::invalid_argument("TemplateChannelNet: wrong angle count");
    for (std::size_t i = 0; i < rz_slots_.size(); ++i) {
      const auto& sl = rz_slots_[i];
      ComplexTensor v = rz(angles[sl.angle] + stage_shift(sl.angle % 3));
      if (sl.conj) v = v.conjugated();
      rz_storage_[i] = std::move(v);
      data_[sl.data_pos] = rz_storage_[i].data();
    }
  }

  struct RzSlot {
    std::size_t angle;
    std::size_t data_pos;
    bool conj;
  };

  GateSet* gs_;
  std::size_t n_slots_;
  std::vector<bool> active_;
  std::size_t n_active_ = 0;
  std::vector<std::size_t> layer_ordinal_;
  WireNetwork net_;
  Plan open_plan_, closed_plan_;
  std::vector<const cplx*> data_;
  std::vector<ComplexTensor> consts_;
  std::vector<RzSlot> rz_slots_;
  std::vector<ComplexTensor> rz_storage_;
  std::vector<std::vector<cplx>> bar_;
  ComplexTensor w_storage_;
  std::size_t w_pos_ = 0;
  double norm_ = 1;
  Workspace ws_;
};

//=========================================================================
// Noise-aware SU(4) decomposition
//=========================================================================

struct Su4Options {
  std::size_t iters = 300;
  double lr = 0.05;
  std::size_t random_starts = 3;
  std::uint64_t seed = 1;
  bool evaluate_cnot_counts = false;
};

struct DecompositionResult {
  std::vector<double> angles;     // 24 optimised angles for the 3-CNOT template
  double achieved = 0;            // overlap error at the optimum
  double naive = 0;               // overlap error at the analytic angles
  std::array<double, 4> delta{};  // best error per CNOT count (when evaluated)
  int best_count = 3;
};

namespace andetail {

// minimise the overlap error by Adam over the template angles
inline double descend_angles(TemplateChannelNet& net, const ComplexTensor& target_superop_w,
                             std::vector<double>& angles, std::size_t iters, double lr) {
  AdamState st;
  AdamConfig cfg;
  cfg.lr = lr;
  std::vector<double> grad;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_angles = angles;
  for (std::size_t it = 0; it < iters; ++it) {
    const double overlap = net.weighted_overlap(angles, target_superop_w, &grad);
    const double err = 1.0 - overlap / 16.0;
    if (err < best) {
      best = err;
      best_angles = angles;
    }
    for (auto& g : grad) g = -g / 16.0;  // d err / d angle
    adam_step(angles, grad, st, cfg, it + 1 > iters * 4 / 5 ? 0.1 : 1.0);
  }
  const double final_err = 1.0 - net.weighted_overlap(angles, target_superop_w, nullptr) / 16.0;
  if (final_err < best) {
    best = final_err;
    best_angles = angles;
  }
  angles = best_angles;
  return best;
}

}  // namespace andetail

// Minimise 1 - Re Tr[E(angles) U_target^dag]/d^2 over the 24 local angles
// of the 3-CNOT template, multi-start including the analytic parameters.
inline DecompositionResult optimize_su4(GateSet& gs, const ComplexTensor& target,
                                        const Su4Options& opts = {}) {
  if (unitarity_residual(target) > 1e-9)
    throw std::invalid_argument("optimize_su4: non-unitary target");
  DecompositionResult res;
  // Hilbert-Schmidt pairing of Choi matrices equals the superoperator
  // overlap: Tr[Choi(U) E_choi] = Tr[E_superop U_superop^dag]
  const ComplexTensor w = choi_of_unitary(target).matrix;

  TemplateChannelNet net(gs, 3, {true, true, true, true});
  std::vector<double> naive_angles = solve_template_angles(target, opts.seed);
  res.naive = 1.0 - net.weighted_overlap(naive_angles, w, nullptr) / 16.0;

  Rng rng = Rng(opts.seed).stream("su4_starts");
  std::vector<std::vector<double>> starts = {naive_angles};
  for (std::size_t s = 0; s < opts.random_starts; ++s) {
    std::vector<double> a(24);
    for (auto& x : a) x = rng.uniform(0, 2 * kPi);
    starts.push_back(std::move(a));
  }
  double best = std::numeric_limits<double>::infinity();
  for (auto& start : starts) {
    std::vector<double> a = start;
    const double err = andetail::descend_angles(net, w, a, opts.iters, opts.lr);
    if (err < best) {
      best = err;
      res.angles = a;
    }
  }
  res.achieved = std::min(best, res.naive);
  if (res.naive <= best) res.angles = naive_angles;

  if (opts.evaluate_cnot_counts) {
    for (std::size_t cnots = 0; cnots <= 3; ++cnots) {
      if (cnots == 3) {
        res.delta[3] = res.achieved;
        continue;
      }
      TemplateChannelNet subnet(gs, cnots, std::vector<bool>(cnots + 1, true));
      double sub_best = std::numeric_limits<double>::infinity();
      Rng rng2 = Rng(opts.seed).stream("su4_sub", cnots);
      for (std::size_t s = 0; s < opts.random_starts + 2; ++s) {
        std::vector<double> a(subnet.n_angles());
        for (auto& x : a) x = rng2.uniform(0, 2 * kPi);
        sub_best = std::min(sub_best, andetail::descend_angles(subnet, w, a, opts.iters,
                                                               opts.lr));
      }
      res.delta[cnots] = sub_best;
    }
    res.best_count = 0;
    for (int i = 1; i < 4; ++i)
      if (res.delta[i] < res.delta[res.best_count]) res.best_count = i;
  } else {
    res.delta = {1, 1, 1, res.achieved};
    res.best_count = 3;
  }
  return res;
}

//=========================================================================
// Randomised-benchmarking forecast
//=========================================================================

struct RbOptions {
  std::vector<std::size_t> lengths = {1, 2, 4, 8, 16, 32};
  std::size_t n_sequences = 20;
  std::uint64_t seed = 1;
};

struct RbResult {
  std::vector<std::size_t> lengths;
  std::vector<double> survival;  // mean over sequences per length
  double amplitude = 0, offset = 0, rate_p = 1;
  double avg_gate_fidelity = 1;
};

// Compose fitted effective channels for random gate sequences, invert with
// the exact inverse unitary, fit A p^m + B.
inline RbResult rb_curve_predict(const std::vector<ComplexTensor>& channel_superops,
                                 const std::vector<ComplexTensor>& ideal_unitaries,
                                 const RbOptions& opts = {}) {
  if (channel_superops.empty() || channel_superops.size() != ideal_unitaries.size())
    throw std::invalid_argument("rb_curve_predict: need matching channel/unitary lists");
  const std::size_t d = ideal_unitaries[0].extent(0);
  RbResult res;
  res.lengths = opts.lengths;
  Rng root = Rng(opts.seed).stream("rb");
  std::vector<cplx> rho0(d * d, 0.0);
  rho0[0] = 1.0;  // vec(|0..0><0..0|)
  for (std::size_t li = 0; li < opts.lengths.size(); ++li) {
    const std::size_t m = opts.lengths[li];
    double mean = 0;
    for (std::size_t s = 0; s < opts.n_sequences; ++s) {
      Rng rng = root.stream("seq", li, s);
      std::vector<cplx> v = rho0;
      ComplexTensor ideal = identity_tensor(d);
      for (std::size_t g = 0; g < m; ++g) {
        const std::size_t pick = rng.uniform_index(channel_superops.size());
        const auto& sop = channel_superops[pick];
        std::vector<cplx> nv(d * d, 0.0);
        for (std::size_t r = 0; r < d * d; ++r) {
          cplx acc = 0;
          for (std::size_t c2 = 0; c2 < d * d; ++c2) acc += sop[r * d * d + c2] * v[c2];
          nv[r] = acc;
        }
        v = std::move(nv);
        ideal = matmul(ideal_unitaries[pick], ideal);
      }
      ComplexTensor inv_sop = superop_of_unitary(dagger(ideal));
      cplx surv = 0;
      for (std::size_t c2 = 0; c2 < d * d; ++c2) surv += inv_sop[0 * d * d + c2] * v[c2];
      mean += surv.real();
    }
    res.survival.push_back(mean / double(opts.n_sequences));
  }

  // separable least squares: golden-section over p, (A, B) linear
  auto residual = [&](double p, double* a_out, double* b_out) {
    double sxx = 0, sx = 0, sxy = 0, sy = 0, n = double(res.lengths.size());
    for (std::size_t i = 0; i < res.lengths.size(); ++i) {
      const double x = std::pow(p, double(res.lengths[i]));
      sxx += x * x;
      sx += x;
      sxy += x * res.survival[i];
      sy += res.survival[i];
    }
    const double det = n * sxx - sx * sx;
    double a = 0, b = sy / n;
    if (std::abs(det) > 1e-14) {
      a = (n * sxy - sx * sy) / det;
      b = (sxx * sy - sx * sxy) / det;
    }
    double r2 = 0;
    for (std::size_t i = 0; i < res.lengths.size(); ++i) {
      const double fit = a * std::pow(p, double(res.lengths[i])) + b;
      r2 += (fit - res.survival[i]) * (fit - res.survival[i]);
    }
    if (a_out) *a_out = a;
    if (b_out) *b_out = b;
    return r2;
  };
  double spread = 0;
  for (double sv : res.survival)
    spread = std::max(spread, std::abs(sv - res.survival.front()));
  if (spread < 1e-12) {
    res.rate_p = 1.0;
    res.amplitude = 0.0;
    res.offset = res.survival.front();
  } else {
    double lo = 0.0, hi = 1.0;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    for (int it = 0; it < 80; ++it) {
      if (residual(x1, nullptr, nullptr) < residual(x2, nullptr, nullptr)) {
        hi = x2;
        x2 = x1;
        x1 = hi - gr * (hi - lo);
      } else {
        lo = x1;
        x1 = x2;
        x2 = lo + gr * (hi - lo);
      }
    }
    res.rate_p = 0.5 * (lo + hi);
    residual(res.rate_p, &res.amplitude, &res.offset);
  }
  res.avg_gate_fidelity = res.rate_p + (1.0 - res.rate_p) / double(d);
  return res;
}

//=========================================================================
// Dynamical-decoupling optimisation
//=========================================================================

struct DDOptions {
  std::size_t iters = 250;
  double lr = 0.05;
  std::size_t random_starts = 5;
  std::uint64_t seed = 1;
};

struct DDResult {
  std::size_t window = 0;
  std::vector<double> angles;  // 3 per decoupling slot (window-1 slots)
  double achieved = 0;         // trace distance to the identity channel
  double idle = 0;
  double xy4 = 0;
};

inline std::vector<double> xy4_angles(std::size_t n_slots) {
  std::vector<double> angles(3 * n_slots, 0.0);
  const ZyzAngles ax = zyz_angles(pauli_1q('X'));
  const ZyzAngles ay = zyz_angles(pauli_1q('Y'));
  for (std::size_t s = 0; s < n_slots; ++s) {
    const ZyzAngles& a = (s % 2 == 0) ? ax : ay;
    angles[3 * s + 0] = a.theta;
    angles[3 * s + 1] = a.phi;
    angles[3 * s + 2] = a.lam;
  }
  return angles;
}

namespace andetail {

inline double dd_trace_distance(TemplateChannelNet& net, const std::vector<double>& angles,
                                const ComplexTensor& id_choi) {
  ComplexTensor choi = net.channel_choi(angles);
  // symmetrise away contraction round-off before the eigensolve
  const std::size_t dd2 = choi.extent(0);
  for (std::size_t i = 0; i < dd2; ++i)
    for (std::size_t j = i; j < dd2; ++j) {
      cplx v = 0.5 * (choi[i * dd2 + j] + std::conj(choi[j * dd2 + i]));
      choi[i * dd2 + j] = v;
      choi[j * dd2 + i] = std::conj(v);
    }
  return trace_distance(choi, id_choi, 1e-7);
}

}  // namespace andetail

// Trace out slots beyond t_window, minimise the trace distance between the
// conditional channel and the identity (iteratively re-linearised trace
// norm); starts: identity angles, XY4 tiling, random.
inline DDResult optimize_dd(GateSet& gs, std::size_t window, const DDOptions& opts = {}) {
  if (gs.n_qubits != 1) throw std::invalid_argument("optimize_dd: single-qubit processes only");
  if (window < 1 || window > gs.n_steps)
    throw std::invalid_argument("optimize_dd: window out of range");
  const std::size_t n_slots = window - 1;
  const std::size_t d = 2;

  // layers: 0 = input port (inactive: the prepared state enters directly),
  // 1..window-1 = decoupling gates, window = output (inactive)
  std::vector<bool> active(window + 1, true);
  active[0] = false;
  active[window] = false;
  TemplateChannelNet net(gs, window, active);
  ChoiState idc = choi_of_unitary(identity_tensor(d));
  const ComplexTensor& id_choi = idc.matrix;

  DDResult res;
  res.window = window;

  // idle reference: no gates at all
  {
    TemplateChannelNet idle_net(gs, window, std::vector<bool>(window + 1, false));
    res.idle = andetail::dd_trace_distance(idle_net, {}, id_choi);
  }
  res.xy4 = n_slots > 0 ? andetail::dd_trace_distance(net, xy4_angles(n_slots), id_choi)
                        : res.idle;
  if (n_slots == 0) {
    res.achieved = res.idle;
    return res;
  }

  std::vector<std::vector<double>> starts;
  starts.push_back(std::vector<double>(3 * n_slots, 0.0));  // identity gates
  starts.push_back(xy4_angles(n_slots));
  Rng rng = Rng(opts.seed).stream("dd_starts");
  for (std::size_t s = 0; s < opts.random_starts; ++s) {
    std::vector<double> a(3 * n_slots);
    for (auto& x : a) x = rng.uniform(0, 2 * kPi);
    starts.push_back(std::move(a));
  }

  double best = std::numeric_limits<double>::infinity();
  for (auto& start : starts) {
    std::vector<double> a = start;
    AdamState st;
    AdamConfig acfg;
    acfg.lr = opts.lr;
    std::vector<double> grad;
    double run_best = andetail::dd_trace_distance(net, a, id_choi);
    std::vector<double> run_best_angles = a;
    for (std::size_t it = 0; it < opts.iters; ++it) {
      // re-linearise: W = sign(E - I); d/dtheta (1/2)Tr[W (E - I)]
      ComplexTensor choi = net.channel_choi(a);
      ComplexTensor diff = choi;
      for (std::size_t e = 0; e < diff.numel(); ++e) diff[e] -= id_choi[e];
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i; j < 4; ++j) {
          cplx v = 0.5 * (diff[i * 4 + j] + std::conj(diff[j * 4 + i]));
          diff[i * 4 + j] = v;
          diff[j * 4 + i] = std::conj(v);
        }
      ComplexTensor w = hermitian_function(diff, [](double lam) {
        return lam >= 0 ? 1.0 : -1.0;
      }, 1e-7);
      net.weighted_overlap(a, w, &grad);
      for (auto& g : grad) g *= 0.5;
      adam_step(a, grad, st, acfg, it + 1 > opts.iters * 4 / 5 ? 0.2 : 1.0);
      const double td = andetail::dd_trace_distance(net, a, id_choi);
      if (td < run_best) {
        run_best = td;
        run_best_angles = a;
      }
    }
    if (run_best < best) {
      best = run_best;
      res.angles = run_best_angles;
    }
  }
  res.achieved = std::min({best, res.idle, res.xy4});
  if (res.xy4 <= best && res.xy4 <= res.idle) res.angles = xy4_angles(n_slots);
  if (res.idle < best && res.idle < res.xy4) res.angles.assign(3 * n_slots, 0.0);
  return res;
}

// Decoupling circuit: slot 0 prepares, slots 1..window-1 run the sequence
// (idle slots when `angles` is empty), later slots idle.
inline CircuitSpec dd_circuit(std::size_t k, std::size_t window, const ZyzAngles& prep,
                              const std::vector<double>& angles) {
  CircuitSpec c;
  c.n_qubits = 1;
  c.n_steps = k;
  c.gates.assign(k, {GateSpec::idle()});
  c.gates[0][0] = GateSpec::from_u3(prep.theta, prep.phi, prep.lam);
  for (std::size_t s = 0; s + 1 < window; ++s) {
    if (angles.empty()) continue;
    c.gates[s + 1][0] =
        GateSpec::from_u3(angles[3 * s + 0], angles[3 * s + 1], angles[3 * s + 2]);
  }
  c.basis = "Z";
  return c;
}

// Per-state trace distances between the decoupled and ideal states after
// `window` steps of the simulator.
inline std::vector<double> dd_state_protection_eval(const NoiseModel& model,
                                                    std::size_t window,
                                                    const std::vector<double>& angles,
                                                    std::size_t n_states, std::uint64_t seed) {
  std::vector<double> out;
  Rng root = Rng(seed).stream("dd_eval");
  for (std::size_t s = 0; s < n_states; ++s) {
    Rng rng = root.stream("state", s);
    ZyzAngles prep{rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi)};
    CircuitSpec c = dd_circuit(model.n_steps(), window, prep, angles);
    ComplexTensor rho = reduced_state_after(model, c, window);
    ComplexTensor u = u3(prep.theta, prep.phi, prep.lam);
    ComplexTensor ideal({2, 2}, {"r", "c"});
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) ideal[i * 2 + j] = u[i * 2] * std::conj(u[j * 2]);
    out.push_back(trace_distance(rho, ideal, 1e-7));
  }
  return out;
}

//=========================================================================
// Toy linear-inversion gate-set recovery (k = 1, n = 1)
//=========================================================================

struct ToyGateSet {
  std::vector<ComplexTensor> gate_superops;  // 4x4; element 0 must be the null gate
  ComplexTensor rho;                         // 2x2 initial state
  ComplexTensor effect;                      // 2x2 POVM effect
};

struct LinearInversionResult {
  std::vector<ComplexTensor> gates;  // recovered superops, gauge-transformed
  std::vector<cplx> state_vec;       // recovered |rho>> (gauge)
  std::vector<cplx> effect_vec;      // recovered <<E| (gauge)
  double condition_number = 0;
  double max_prediction_error = 0;
};

// Self-consistent linear inversion: measure p_ij^mu = <<E|F_i B_mu F_j|rho>>,
// invert the fiducial Gram matrix, reproduce every probability.
inline LinearInversionResult linear_inversion_estimate(const ToyGateSet& truth,
                                                       const std::vector<std::size_t>& fid) {
  const std::size_t nf = fid.size();
  if (nf != 4) throw std::invalid_argument("linear_inversion_estimate: need 4 fiducials");
  if (fid[0] != 0) throw std::invalid_argument("linear_inversion_estimate: fid[0] must be null");
  const std::size_t ng = truth.gate_superops.size();

  auto vec_rho = [&](const ComplexTensor& r) {
    std::vector<cplx> v(4);
    for (std::size_t i = 0; i < 4; ++i) v[i] = r[i];
    return v;
  };
  std::vector<cplx> rho = vec_rho(truth.rho);
  std::vector<cplx> eff = vec_rho(truth.effect);

  auto apply = [&](const ComplexTensor& sop, const std::vector<cplx>& v) {
    std::vector<cplx> out(4, 0.0);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c2 = 0; c2 < 4; ++c2) out[r] += sop[r * 4 + c2] * v[c2];
    return out;
  };
  auto braket = [&](const std::vector<cplx>& e, const std::vector<cplx>& v) {
    // <<E|v>> = Tr[E^dag rho] for Hermitian effects = sum conj(E_i) v_i
    cplx acc = 0;
    for (std::size_t i = 0; i < 4; ++i) acc += std::conj(e[i]) * v[i];
    return acc;
  };

  // measured probabilities p[mu][i][j]
  auto prob = [&](std::size_t mu, std::size_t i, std::size_t j) {
    auto v = apply(truth.gate_superops[fid[j]], rho);
    v = apply(truth.gate_superops[mu], v);
    v = apply(truth.gate_superops[fid[i]], v);
    return braket(eff, v).real();
  };

  EMat g(nf, nf);
  for (std::size_t i = 0; i < nf; ++i)
    for (std::size_t j = 0; j < nf; ++j) g(i, j) = prob(0, i, j);
  Eigen::JacobiSVD<EMat> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double cond = svd.singularValues()(0) / svd.singularValues()(nf - 1);
  if (cond > 1e8) throw std::runtime_error("linear_inversion_estimate: singular Gram matrix");
  EMat ginv = g.inverse();

  LinearInversionResult res;
  res.condition_number = cond;
  for (std::size_t mu = 0; mu < ng; ++mu) {
    EMat bt(nf, nf);
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t j = 0; j < nf; ++j) bt(i, j) = prob(mu, i, j);
    res.gates.push_back(from_eigen(ginv * bt));
  }
  // state and measurement vectors (gauge-transformed)
  EVec upsilon(nf);
  for (std::size_t i = 0; i < nf; ++i) upsilon(i) = prob(0, i, 0);
  EVec ub = ginv * upsilon;
  res.state_vec.assign(ub.data(), ub.data() + nf);
  for (std::size_t j = 0; j < nf; ++j) res.effect_vec.push_back(prob(0, 0, j));

  // verify the gauge-invariant predictions
  auto rec_apply = [&](std::size_t mu, const std::vector<cplx>& v) {
    std::vector<cplx> out(4, 0.0);
    const auto& sop = res.gates[mu];
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c2 = 0; c2 < 4; ++c2) out[r] += sop[r * 4 + c2] * v[c2];
    return out;
  };
  double worst = 0;
  for (std::size_t mu = 0; mu < ng; ++mu)
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t j = 0; j < nf; ++j) {
        auto v = rec_apply(fid[j], res.state_vec);
        v = rec_apply(mu, v);
        v = rec_apply(fid[i], v);
        cplx pred = 0;
        for (std::size_t e2 = 0; e2 < nf; ++e2) pred += res.effect_vec[e2] * v[e2];
        worst = std::max(worst, std::abs(pred.real() - prob(mu, i, j)));
      }
  res.max_prediction_error = worst;
  return res;
}

}  // namespace pttkit
