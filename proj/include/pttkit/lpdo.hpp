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

#include <unordered_map>

#include "pttkit/io.hpp"
#include "pttkit/noise_sim.hpp"

namespace pttkit {

//=========================================================================
// Locally purified process-tensor networks.
//
// Every site tensor carries the canonical axis list
//   ("o", "i", "nu_l", "nu_r", "al_u", "al_d", "mu")
// where o/i are the physical output/input legs of the step, nu_* the
// temporal bonds, al_* the spatial bonds between neighbouring qubits and
// mu the Kraus (purification) bond contracted against the conjugate
// network.  Boundary bonds have extent 1 (j=0 has no input leg or left
// bond, j=k no right bond, row edges no spatial bond).  The represented
// Choi operator is PSD by construction.
//=========================================================================

inline const std::vector<std::string>& site_axes() {
  static const std::vector<std::string> axes = {"o", "i", "nu_l", "nu_r", "al_u", "al_d", "mu"};
  return axes;
}

struct ProcessTensorLPDO {
  std::size_t n_qubits = 1;
  std::size_t n_steps = 1;
  std::vector<ComplexTensor> sites;  // index q * (n_steps + 1) + j

  ComplexTensor& site(std::size_t q, std::size_t j) { return sites[q * (n_steps + 1) + j]; }
  const ComplexTensor& site(std::size_t q, std::size_t j) const {
    return sites[q * (n_steps + 1) + j];
  }

  void validate() const {
    if (sites.size() != n_qubits * (n_steps + 1))
      throw std::invalid_argument("ProcessTensorLPDO: wrong site count");
    for (std::size_t q = 0; q < n_qubits; ++q)
      for (std::size_t j = 0; j <= n_steps; ++j) {
        const auto& s = site(q, j);
        if (s.rank() != 7 || s.axis_labels() != site_axes())
          throw std::invalid_argument("ProcessTensorLPDO: non-canonical site axes");
        if (s.extent(0) != 2) throw std::invalid_argument("ProcessTensorLPDO: o leg must be 2");
        if (j == 0 && s.extent(1) != 1)
          throw std::invalid_argument("ProcessTensorLPDO: initial site has no input leg");
        if (j > 0 && s.extent(1) != 2)
          throw std::invalid_argument("ProcessTensorLPDO: i leg must be 2");
        if (j == 0 && s.extent(2) != 1)
          throw std::invalid_argument("ProcessTensorLPDO: left temporal boundary");
        if (j == n_steps && s.extent(3) != 1)
          throw std::invalid_argument("ProcessTensorLPDO: right temporal boundary");
        if (q == 0 && s.extent(4) != 1)
          throw std::invalid_argument("ProcessTensorLPDO: top spatial boundary");
        if (q == n_qubits - 1 && s.extent(5) != 1)
          throw std::invalid_argument("ProcessTensorLPDO: bottom spatial boundary");
        if (j != 0 && j != n_steps && s.extent(6) != 1)
          throw std::invalid_argument("ProcessTensorLPDO: Kraus bonds live on first/last sites");
      }
    // bond extents must agree between neighbours
    for (std::size_t q = 0; q < n_qubits; ++q)
      for (std::size_t j = 0; j < n_steps; ++j)
        if (site(q, j).extent(3) != site(q, j + 1).extent(2))
          throw std::invalid_argument("ProcessTensorLPDO: temporal bond mismatch");
    for (std::size_t q = 0; q + 1 < n_qubits; ++q)
      for (std::size_t j = 0; j <= n_steps; ++j)
        if (site(q, j).extent(5) != site(q + 1, j).extent(4))
          throw std::invalid_argument("ProcessTensorLPDO: spatial bond mismatch");
  }
};

// Bell-pair site padded with zeros on the bond axes plus an i.i.d. complex
// Gaussian perturbation; Psi0 encodes |0>.
inline ProcessTensorLPDO init_process_lpdo(std::size_t n, std::size_t k, std::size_t chi_nu,
                                           std::size_t chi_alpha, std::size_t chi_mu,
                                           double scale, std::uint64_t seed,
                                           std::size_t chi_mu0 = 1) {
  if (chi_nu < 1 || chi_alpha < 1 || chi_mu < 1 || chi_mu0 < 1)
    throw std::invalid_argument("init_process_lpdo: bond dims must be >= 1");
  ProcessTensorLPDO pt;
  pt.n_qubits = n;
  pt.n_steps = k;
  Rng root = Rng(seed).stream("lpdo_init");
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t j = 0; j <= k; ++j) {
      const std::size_t nu_l = (j == 0) ? 1 : chi_nu;
      const std::size_t nu_r = (j == k) ? 1 : chi_nu;
      const std::size_t au = (q == 0) ? 1 : chi_alpha;
      const std::size_t ad = (q == n - 1) ? 1 : chi_alpha;
      const std::size_t mu = (j == 0) ? chi_mu0 : (j == k ? chi_mu : 1);
      const std::size_t iext = j == 0 ? 1 : 2;
      ComplexTensor s({2, iext, nu_l, nu_r, au, ad, mu}, site_axes());
      Rng rng = root.stream("site", q, j);
      for (std::size_t e = 0; e < s.numel(); ++e) s[e] = rng.cgaussian(scale);
      if (j == 0) {
        s.at({0, 0, 0, 0, 0, 0, 0}) += 1.0;  // |0>
      } else {
        s.at({0, 0, 0, 0, 0, 0, 0}) += 1.0;  // |Phi+> = sum_i |ii>
        s.at({1, 1, 0, 0, 0, 0, 0}) += 1.0;
      }
      pt.sites.push_back(std::move(s));
    }
  pt.validate();
  return pt;
}

inline ComplexTensor random_hermitian(std::size_t d, double scale, Rng& rng) {
  ComplexTensor h({d, d}, {"r", "c"});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cplx v = rng.cgaussian(scale);
      if (i == j) v = v.real();
      h[i * d + j] = v;
      h[j * d + i] = std::conj(v);
    }
  return h;
}

// Exact LPDO encoding of a model's system-environment dynamics: the
// environment index is the temporal bond on the first qubit row; multi-
// qubit step slabs are split by full-rank SVDs down the qubit chain.
inline ProcessTensorLPDO lpdo_from_model(const NoiseModel& m) {
  const std::size_t n = m.n_system, k = m.n_steps(), dE = m.d_env(), dS = m.d_sys();
  ProcessTensorLPDO pt;
  pt.n_qubits = n;
  pt.n_steps = k;
  pt.sites.resize(n * (k + 1));

  // joint slab -> per-qubit sites, row 0 carrying (nu_l, nu_r, mu)
  auto split_rows = [&](ComplexTensor joint, std::size_t j) {
    // joint axes: o0..o(n-1), i0..i(n-1) (extent 1 allowed), nu_l, nu_r, mu
    for (std::size_t q = 0; q < n; ++q) {
      const bool last = q == n - 1;
      std::vector<std::string> left = {"o" + std::to_string(q), "i" + std::to_string(q)};
      if (q == 0) {
        left.push_back("nu_l");
        left.push_back("nu_r");
        left.push_back("mu");
      } else {
        left.push_back("al_u");
      }
      if (last) {
        // remaining tensor is the final site
        std::vector<std::string> order = left;
        ComplexTensor s = joint.permuted_to(order);
        auto sh = s.shape();
        std::size_t nu_l = 1, nu_r = 1, mu = 1, au = 1;
        std::size_t oext = sh[0], iext = sh[1];
        if (q == 0) {
          nu_l = sh[2];
          nu_r = sh[3];
          mu = sh[4];
        } else {
          au = sh[2];
        }
        pt.site(q, j) =
            s.reshaped({oext, iext, nu_l, nu_r, au, 1, mu}, site_axes());
        return;
      }
      std::vector<std::string> right;
      for (const auto& lbl : joint.axis_labels()) {
        bool in_left = false;
        for (const auto& l2 : left) in_left = in_left || l2 == lbl;
        if (!in_left) right.push_back(lbl);
      }
      auto svd = svd_split(joint, left, right, std::size_t(-1), "al_d");
      // build this row's site from U * sqrt(S); pass sqrt(S) V onward
      ComplexTensor u = svd.u;
      const std::size_t bond = svd.s.size();
      for (std::size_t r = 0; r < u.numel() / bond; ++r)
        for (std::size_t b = 0; b < bond; ++b) u[r * bond + b] *= std::sqrt(svd.s[b]);
      ComplexTensor v = svd.v;
      for (std::size_t b = 0; b < bond; ++b)
        for (std::size_t c2 = 0; c2 < v.numel() / bond; ++c2)
          v[b * (v.numel() / bond) + c2] *= std::sqrt(svd.s[b]);
      if (q == 0) {
        // svd puts the bond last; canonical order wants al_d before mu
        ComplexTensor up = u.permuted_to({"o0", "i0", "nu_l", "nu_r", "al_d", "mu"});
        auto ush = up.shape();
        pt.site(q, j) =
            up.reshaped({ush[0], ush[1], ush[2], ush[3], 1, bond, ush[5]}, site_axes());
      } else {
        auto ush = u.shape();
        pt.site(q, j) =
            u.reshaped({ush[0], ush[1], 1, 1, ush[2], bond, 1}, site_axes());
      }
      v.rename_axis("al_d", "al_u");
      joint = std::move(v);
    }
  };

  // initial state: eigendecomposition, mu0 = kept rank
  {
    auto eig = hermitian_eig(m.initial_se_state);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < eig.values.size(); ++i)
      if (eig.values[i] > 1e-12) keep.push_back(i);
    const std::size_t rank = keep.size();
    std::vector<std::size_t> shape;
    std::vector<std::string> labels;
    for (std::size_t q = 0; q < n; ++q) {
      shape.push_back(2);
      labels.push_back("o" + std::to_string(q));
    }
    for (std::size_t q = 0; q < n; ++q) {
      shape.push_back(1);
      labels.push_back("i" + std::to_string(q));
    }
    shape.insert(shape.end(), {1, dE, rank});
    labels.insert(labels.end(), {"nu_l", "nu_r", "mu"});
    ComplexTensor joint(shape, labels);
    const std::size_t D = m.d_total();
    for (std::size_t s = 0; s < dS; ++s)
      for (std::size_t e = 0; e < dE; ++e)
        for (std::size_t r = 0; r < rank; ++r)
          joint[(s * dE + e) * rank + r] =
              std::sqrt(eig.values[keep[r]]) * eig.vectors[(s * dE + e) * D + keep[r]];
    split_rows(std::move(joint), 0);
  }

  // step slabs: Phi[o, i, nu_l(=E in), nu_r(=E out)] = <o nu_r|U|i nu_l>,
  // with the final slab exposing its outgoing environment as the Kraus bond
  for (std::size_t j = 1; j <= k; ++j) {
    const ComplexTensor& u = m.step_unitaries[j - 1];
    const bool last = j == k;
    std::vector<std::size_t> shape;
    std::vector<std::string> labels;
    for (std::size_t q = 0; q < n; ++q) {
      shape.push_back(2);
      labels.push_back("o" + std::to_string(q));
    }
    for (std::size_t q = 0; q < n; ++q) {
      shape.push_back(2);
      labels.push_back("i" + std::to_string(q));
    }
    shape.insert(shape.end(), {dE, last ? std::size_t(1) : dE, last ? dE : std::size_t(1)});
    labels.insert(labels.end(), {"nu_l", "nu_r", "mu"});
    ComplexTensor joint(shape, labels);
    const std::size_t D = m.d_total();
    for (std::size_t so = 0; so < dS; ++so)
      for (std::size_t si = 0; si < dS; ++si)
        for (std::size_t el = 0; el < dE; ++el)
          for (std::size_t er = 0; er < dE; ++er) {
            const cplx v = u[(so * dE + er) * D + (si * dE + el)];
            // index order: o.., i.., nu_l, nu_r, mu
            const std::size_t nu_r = last ? 0 : er;
            const std::size_t mu = last ? er : 0;
            const std::size_t flat =
                ((so * dS + si) * dE + el) * (last ? 1 : dE) * (last ? dE : 1) +
                (last ? mu : nu_r);
            joint[flat] = v;
          }
    split_rows(std::move(joint), j);
  }
  pt.validate();
  return pt;
}

// Random-dilation starting point for fits: the exact LPDO of a random
// exchange-bath model whose environment dimension equals the target
// temporal bond.  Bell-plus-noise starts sit on the rank-one bond saddle
// of the Markov point and reliably stall; a random physical process at
// the target bond dimension trains straight through.
inline ProcessTensorLPDO init_process_physical(std::size_t n, std::size_t k,
                                               std::size_t env_dim, double j_lo, double j_hi,
                                               std::uint64_t seed) {
  if (env_dim == 1) {
    NoiseModel m = noiseless_model(n, k);
    return lpdo_from_model(m);
  }
  if (env_dim == 2) {
    NoiseModel m = build_exchange_bath(n, k, JRanges::isotropic(j_lo, j_hi), 1.0, seed);
    return lpdo_from_model(m);
  }
  // general environment: static random Hermitian coupling on S (x) E
  NoiseModel m;
  m.n_system = n;
  m.env_dims = {env_dim};
  m.seed = seed;
  const std::size_t d = m.d_total();
  Rng rng = Rng(seed).stream("phys_init");
  ComplexTensor h = random_hermitian(d, 0.5 * (j_lo + j_hi), rng);
  ComplexTensor u = expm_hermitian(h, cplx(0, -1.0));
  for (std::size_t j = 0; j < k; ++j) m.step_unitaries.push_back(u);
  ComplexTensor rho0({d, d}, {"r", "c"});
  rho0[0] = 1.0;
  m.initial_se_state = rho0;
  return lpdo_from_model(m);
}

//=========================================================================
// GateSet: process LPDO + shared physical-pulse tensors + POVM effects.
//
// pulse(q):    axes ("po", "pi", "g_l", "g_r") - physical out/in, control
//              bond from the previous/to the next pulse occurrence.
// boundary(q): axes ("g",) - opens the control chain (e_0 when ideal).
// povm(q):     axes ("x", "delta", "g", "p") - outcome, Kraus leg, control
//              chain terminal, physical; effect_x = sum_delta M M^dagger.
//=========================================================================

struct ControlDims {
  std::size_t chi_gamma = 1;
  std::size_t chi_delta = 2;
};

struct GateSet {
  std::size_t n_qubits = 1;
  std::size_t n_steps = 1;
  ProcessTensorLPDO process;
  std::vector<ComplexTensor> pulse;
  std::vector<ComplexTensor> boundary;
  std::vector<ComplexTensor> povm;
  bool learn_process = true, learn_pulse = true, learn_povm = true;

  // conjugate caches (refreshed in place; addresses stay stable)
  std::vector<ComplexTensor> conj_cache;  // one per leaf

  std::size_t leaf_count() const { return n_qubits * (n_steps + 1) + 3 * n_qubits; }
  std::size_t proc_leaf(std::size_t q, std::size_t j) const { return q * (n_steps + 1) + j; }
  std::size_t pulse_leaf(std::size_t q) const { return n_qubits * (n_steps + 1) + q; }
  std::size_t boundary_leaf(std::size_t q) const {
    return n_qubits * (n_steps + 1) + n_qubits + q;
  }
  std::size_t povm_leaf(std::size_t q) const {
    return n_qubits * (n_steps + 1) + 2 * n_qubits + q;
  }

  ComplexTensor& leaf(std::size_t id) {
    const std::size_t np = n_qubits * (n_steps + 1);
    if (id < np) return process.sites[id];
    const std::size_t r = id - np;
    if (r < n_qubits) return pulse[r];
    if (r < 2 * n_qubits) return boundary[r - n_qubits];
    return povm[r - 2 * n_qubits];
  }
  const ComplexTensor& leaf(std::size_t id) const {
    return const_cast<GateSet*>(this)->leaf(id);
  }

  bool leaf_is_learnable(std::size_t id) const {
    const std::size_t np = n_qubits * (n_steps + 1);
    if (id < np) return learn_process;
    const std::size_t r = id - np;
    if (r < 2 * n_qubits) return learn_pulse;
    return learn_povm;
  }
  std::vector<bool> learnable_mask() const {
    std::vector<bool> m(leaf_count());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = leaf_is_learnable(i);
    return m;
  }

  void refresh_conj() {
    if (conj_cache.size() != leaf_count()) {
      conj_cache.clear();
      for (std::size_t i = 0; i < leaf_count(); ++i) conj_cache.push_back(leaf(i));
    }
    for (std::size_t i = 0; i < leaf_count(); ++i) {
      const auto& v = leaf(i);
      auto& c = conj_cache[i];
      for (std::size_t e = 0; e < v.numel(); ++e) c[e] = std::conj(v[e]);
    }
  }

  // flat real parameter vector over learnable leaves (re, im interleaved)
  std::vector<double> param_vector() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < leaf_count(); ++i) {
      if (!leaf_is_learnable(i)) continue;
      const auto& t = leaf(i);
      for (std::size_t e = 0; e < t.numel(); ++e) {
        v.push_back(t[e].real());
        v.push_back(t[e].imag());
      }
    }
    return v;
  }
  void set_param_vector(const std::vector<double>& v) {
    std::size_t at = 0;
    for (std::size_t i = 0; i < leaf_count(); ++i) {
      if (!leaf_is_learnable(i)) continue;
      auto& t = leaf(i);
      for (std::size_t e = 0; e < t.numel(); ++e) {
        t[e] = cplx(v.at(at), v.at(at + 1));
        at += 2;
      }
    }
    if (at != v.size()) throw std::invalid_argument("set_param_vector: length mismatch");
    refresh_conj();
  }
};

// Ideal control tensors: exact sqrt(X) pulse at the (0,0) control-bond
// slice, computational-basis POVM; non-ideal slices perturbed at
// `control_scale` so optimisation can reach them.
inline GateSet make_gateset(ProcessTensorLPDO process, const ControlDims& cd,
                            double control_scale, std::uint64_t seed) {
  GateSet gs;
  gs.n_qubits = process.n_qubits;
  gs.n_steps = process.n_steps;
  gs.process = std::move(process);
  Rng root = Rng(seed).stream("control_init");
  const ComplexTensor sx = rx(kPi / 2);
  for (std::size_t q = 0; q < gs.n_qubits; ++q) {
    ComplexTensor p({2, 2, cd.chi_gamma, cd.chi_gamma}, {"po", "pi", "g_l", "g_r"});
    Rng rng = root.stream("pulse", q);
    for (std::size_t e = 0; e < p.numel(); ++e)
      p[e] = cd.chi_gamma > 1 ? rng.cgaussian(control_scale) : cplx(0, 0);
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) p.at({a, b, 0, 0}) = sx[a * 2 + b];
    gs.pulse.push_back(std::move(p));

    ComplexTensor bv({cd.chi_gamma}, {"g"});
    Rng brng = root.stream("boundary", q);
    for (std::size_t e = 1; e < bv.numel(); ++e) bv[e] = brng.cgaussian(control_scale);
    bv[0] = 1.0;
    gs.boundary.push_back(std::move(bv));

    ComplexTensor m({2, cd.chi_delta, cd.chi_gamma, 2}, {"x", "delta", "g", "p"});
    Rng mrng = root.stream("povm", q);
    if (cd.chi_delta > 1 || cd.chi_gamma > 1)
      for (std::size_t e = 0; e < m.numel(); ++e) m[e] = mrng.cgaussian(control_scale);
    m.at({0, 0, 0, 0}) = 1.0;  // M_0 = |0><0|
    m.at({0, 0, 0, 1}) = 0.0;
    m.at({1, 0, 0, 0}) = 0.0;
    m.at({1, 0, 0, 1}) = 1.0;  // M_1 = |1><1|
    gs.povm.push_back(std::move(m));
  }
  gs.refresh_conj();
  return gs;
}

inline GateSet ideal_gateset(std::size_t n, std::size_t k, const ControlDims& cd = {}) {
  ProcessTensorLPDO pt = init_process_lpdo(n, k, 1, 1, 1, 0.0, 0);
  GateSet gs = make_gateset(std::move(pt), cd, 0.0, 0);
  return gs;
}

// Physical starting point for the control tensors: each pulse becomes the
// dilation of sqrt(X) weakly coupled to a control environment of dimension
// chi_gamma (a random static unitary on the joint space), and each
// measurement site an isometric extension of the ideal readout.  The
// represented instruments are exactly trace preserving at the start and
// every control bond carries first-order gradient signal.
inline void randomize_control_dilation(GateSet& gs, double eps, std::uint64_t seed) {
  Rng root = Rng(seed).stream("ctrl_dilation");
  for (std::size_t q = 0; q < gs.n_qubits; ++q) {
    auto& pulse = gs.pulse[q];
    const std::size_t cg = pulse.extent(2);
    if (cg > 1) {
      const std::size_t d = 2 * cg;
      Rng rng = root.stream("pulse", q);
      ComplexTensor h = random_hermitian(d, 1.0, rng);
      ComplexTensor rot = expm_hermitian(h, cplx(0, -eps));
      // V = exp(-i eps H) (sqrtX (x) I), basis |p, g>
      ComplexTensor sx = rx(kPi / 2);
      ComplexTensor base({d, d}, {"r", "c"});
      for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t p2 = 0; p2 < 2; ++p2)
          for (std::size_t g = 0; g < cg; ++g)
            base[(p * cg + g) * d + (p2 * cg + g)] = sx[p * 2 + p2];
      ComplexTensor v = matmul(rot, base);
      for (std::size_t po = 0; po < 2; ++po)
        for (std::size_t pi = 0; pi < 2; ++pi)
          for (std::size_t gl = 0; gl < cg; ++gl)
            for (std::size_t gr = 0; gr < cg; ++gr)
              pulse.at({po, pi, gl, gr}) = v[(po * cg + gr) * d + (pi * cg + gl)];
    }
    auto& m = gs.povm[q];
    const std::size_t cd2 = m.extent(1), cgm = m.extent(2);
    if (cgm > 1 || cd2 > 1) {
      const std::size_t rows = 2 * cd2, cols = 2 * cgm;
      if (rows < cols) throw std::invalid_argument("randomize_control_dilation: chi_delta < chi_gamma");
      Rng rng = root.stream("povm", q);
      ComplexTensor h = random_hermitian(rows, 1.0, rng);
      ComplexTensor rot = expm_hermitian(h, cplx(0, -eps));
      ComplexTensor w0({rows, cols}, {"r", "c"});
      for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t g = 0; g < std::min(cd2, cgm); ++g)
          w0[(x * cd2 + g) * cols + (x * cgm + g)] = 1.0;
      ComplexTensor w = matmul(rot, w0);
      for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t dd = 0; dd < cd2; ++dd)
          for (std::size_t g = 0; g < cgm; ++g)
            for (std::size_t p = 0; p < 2; ++p)
              m.at({x, dd, g, p}) = w[(x * cd2 + dd) * cols + (p * cgm + g)];
    }
  }
  gs.refresh_conj();
}

// Mixture-type control start: the control bond indexes classical branches,
// each branch a coherently over/under-rotated pulse, the measurement site
// pairing branches diagonally through its Kraus leg.  This is the natural
// physical family for quasistatic control noise.
inline void randomize_control_mixture(GateSet& gs, double spread, double coupling_noise,
                                      std::uint64_t seed) {
  Rng root = Rng(seed).stream("ctrl_mixture");
  for (std::size_t q = 0; q < gs.n_qubits; ++q) {
    auto& pulse = gs.pulse[q];
    const std::size_t cg = pulse.extent(2);
    if (cg > 1) {
      Rng rng = root.stream("pulse", q);
      std::vector<double> offs(cg);
      for (std::size_t g = 0; g < cg; ++g)
        offs[g] = spread * (cg == 2 ? (g == 0 ? 1.0 : -1.0) : rng.gaussian());
      for (std::size_t e = 0; e < pulse.numel(); ++e) pulse[e] = rng.cgaussian(coupling_noise);
      for (std::size_t g = 0; g < cg; ++g) {
        ComplexTensor r = rx(kPi / 2 + offs[g]);
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) pulse.at({a, b, g, g}) += r[a * 2 + b];
      }
    }
    auto& bv = gs.boundary[q];
    if (bv.numel() > 1) {
      for (std::size_t g = 0; g < bv.numel(); ++g)
        bv[g] = 1.0 / std::sqrt(double(bv.numel()));
    }
    auto& m = gs.povm[q];
    const std::size_t cd2 = m.extent(1), cgm = m.extent(2);
    if (cgm > 1) {
      Rng rng = root.stream("povm", q);
      for (std::size_t e = 0; e < m.numel(); ++e) m[e] = rng.cgaussian(coupling_noise);
      for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t g = 0; g < cgm; ++g)
          if (g < cd2) m.at({x, g, g, x}) += 1.0;
    }
  }
  gs.refresh_conj();
}

// Grow the control bond of a fitted time-local gate set: each new branch
// applies the learned pulse with a coherent offset, branches mix through
// the measurement site's Kraus leg, the boundary starts uniform.  Used for
// the manual expand-until-explained loop.
inline GateSet expand_control_mixture(const GateSet& gs, std::size_t chi_gamma, double spread,
                                      double coupling_noise, std::uint64_t seed) {
  if (chi_gamma < 2) throw std::invalid_argument("expand_control_mixture: need chi_gamma >= 2");
  GateSet out;
  out.n_qubits = gs.n_qubits;
  out.n_steps = gs.n_steps;
  out.process = gs.process;
  out.learn_process = gs.learn_process;
  out.learn_pulse = gs.learn_pulse;
  out.learn_povm = gs.learn_povm;
  Rng root = Rng(seed).stream("expand_ctrl");
  const std::size_t cd = chi_gamma;
  for (std::size_t q = 0; q < gs.n_qubits; ++q) {
    Rng rng = root.stream("q", q);
    ComplexTensor pulse({2, 2, chi_gamma, chi_gamma}, {"po", "pi", "g_l", "g_r"});
    for (std::size_t e = 0; e < pulse.numel(); ++e) pulse[e] = rng.cgaussian(coupling_noise);
    for (std::size_t g = 0; g < chi_gamma; ++g) {
      const double off =
          chi_gamma == 2 ? (g == 0 ? spread : -spread) : spread * rng.gaussian();
      ComplexTensor base({2, 2}, {"r", "c"});
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) base[a * 2 + b] = gs.pulse[q].at({a, b, 0, 0});
      ComplexTensor r = matmul(rx(off), base);
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) pulse.at({a, b, g, g}) += r[a * 2 + b];
    }
    out.pulse.push_back(std::move(pulse));

    ComplexTensor bv({chi_gamma}, {"g"});
    for (std::size_t g = 0; g < chi_gamma; ++g) bv[g] = 1.0 / std::sqrt(double(chi_gamma));
    out.boundary.push_back(std::move(bv));

    ComplexTensor m({2, cd, chi_gamma, 2}, {"x", "delta", "g", "p"});
    for (std::size_t e = 0; e < m.numel(); ++e) m[e] = rng.cgaussian(coupling_noise);
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t g = 0; g < chi_gamma; ++g)
        for (std::size_t p = 0; p < 2; ++p)
          m.at({x, g, g, p}) += gs.povm[q].at({x, 0, 0, p});
    out.povm.push_back(std::move(m));
  }
  out.refresh_conj();
  return out;
}

//=========================================================================
// Pauli constraints (process causality / tester trace preservation)
//=========================================================================

// Legs ordered (o_k, i_k, o_{k-1}, ..., i_1, o_0); labels are n-qubit
// Pauli strings; expectation target is 0 except for the tester
// normalisation constraint.
struct PauliConstraint {
  std::vector<std::string> labels;  // 2k+1 entries
  double target = 0.0;
};

inline std::size_t leg_slot_o(std::size_t k, std::size_t j) { return 2 * (k - j); }
inline std::size_t leg_slot_i(std::size_t k, std::size_t j) { return 2 * (k - j) + 1; }

inline std::string random_pauli_label(std::size_t n, Rng& rng, bool traceless) {
  static const char p[] = {'I', 'X', 'Y', 'Z'};
  std::string s(n, 'I');
  do {
    for (std::size_t q = 0; q < n; ++q) s[q] = p[rng.uniform_index(4)];
  } while (traceless && s == std::string(n, 'I'));
  return s;
}

// The six-step construction: random j in [1,k]; identity at o_j and all
// later slots; random traceless Pauli at i_j; fully random earlier.
inline std::vector<PauliConstraint> sample_causality_constraints(std::size_t n, std::size_t k,
                                                                 std::size_t m_causal,
                                                                 Rng rng) {
  if (m_causal < 1) throw std::invalid_argument("sample_causality_constraints: need m >= 1");
  std::vector<PauliConstraint> out;
  const std::string id(n, 'I');
  for (std::size_t c = 0; c < m_causal; ++c) {
    const std::size_t j = 1 + rng.uniform_index(k);
    PauliConstraint pc;
    pc.labels.assign(2 * k + 1, id);
    pc.labels[leg_slot_i(k, j)] = random_pauli_label(n, rng, true);
    for (std::size_t m2 = 1; m2 < j; ++m2) {
      pc.labels[leg_slot_o(k, m2)] = random_pauli_label(n, rng, false);
      pc.labels[leg_slot_i(k, m2)] = random_pauli_label(n, rng, false);
    }
    pc.labels[leg_slot_o(k, 0)] = random_pauli_label(n, rng, false);
    out.push_back(std::move(pc));
  }
  return out;
}

// Mirrored conditions for the outcome-summed tester: traceless Pauli at
// o_{j-1}, identity at i_j and everything later; random earlier teeth.
// j = k+1 selects the POVM-completeness condition (traceless at o_k).
// One normalisation constraint (all identity, target d_S^(k+1)) is
// appended so uniform rescalings of the instrument are penalised too.
inline std::vector<PauliConstraint> sample_tester_constraints(std::size_t n, std::size_t k,
                                                              std::size_t m_causal, Rng rng) {
  std::vector<PauliConstraint> out;
  const std::string id(n, 'I');
  for (std::size_t c = 0; c + 1 < m_causal; ++c) {
    const std::size_t j = 1 + rng.uniform_index(k + 1);
    PauliConstraint pc;
    pc.labels.assign(2 * k + 1, id);
    if (j == k + 1) {
      pc.labels[leg_slot_o(k, k)] = random_pauli_label(n, rng, true);
    } else {
      pc.labels[leg_slot_o(k, j - 1)] = random_pauli_label(n, rng, true);
      for (std::size_t m2 = 1; m2 < j; ++m2) {
        pc.labels[leg_slot_i(k, m2)] = random_pauli_label(n, rng, false);
        if (m2 >= 1 && m2 - 1 >= 1)
          pc.labels[leg_slot_o(k, m2 - 1)] = random_pauli_label(n, rng, false);
      }
      if (j >= 2) pc.labels[leg_slot_o(k, 0)] = random_pauli_label(n, rng, false);
    }
    out.push_back(std::move(pc));
  }
  PauliConstraint norm;
  norm.labels.assign(2 * k + 1, id);
  norm.target = std::pow(2.0, double(n) * double(k + 1));
  out.push_back(std::move(norm));
  return out;
}

//=========================================================================
// Network assembly and evaluation
//=========================================================================

struct GradAccum {
  std::vector<std::vector<cplx>> g;  // indexed by leaf
  void init(const GateSet& gs) {
    g.assign(gs.leaf_count(), {});
    for (std::size_t i = 0; i < gs.leaf_count(); ++i)
      g[i].assign(gs.leaf(i).numel(), cplx(0, 0));
  }
  void clear() {
    for (auto& v : g) std::fill(v.begin(), v.end(), cplx(0, 0));
  }
  void add(int leaf, bool conj, const cplx* adj, std::size_t n) {
    auto& dst = g[static_cast<std::size_t>(leaf)];
    if (conj)
      for (std::size_t i = 0; i < n; ++i) dst[i] += std::conj(adj[i]);
    else
      for (std::size_t i = 0; i < n; ++i) dst[i] += adj[i];
  }
  // L2 norm over learnable real parameters
  double norm(const GateSet& gs) const {
    double s = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!gs.leaf_is_learnable(i)) continue;
      for (const auto& v : g[i]) s += std::norm(v);
    }
    return std::sqrt(s);
  }
};

struct CachedPlan {
  WireNetwork net;
  Plan plan;
};

using PlanCache = std::unordered_map<std::string, CachedPlan>;

// A network instantiated for one circuit (or one constraint family):
// node buffers and per-circuit constants, bound to a cached plan.
struct BuiltNetwork {
  std::string key;
  WireNetwork net;                    // structure (wires, leaves)
  std::vector<const cplx*> data;      // node value buffers
  std::vector<ComplexTensor> consts;  // circuit-owned constant tensors
  std::vector<int> pauli_nodes;       // node ids of swappable Pauli factors (constraint nets)
  const CachedPlan* compiled = nullptr;
};

namespace lpdodetail {

// Pauli matrices as contraction nodes (wire order: bra leg, ket leg).
inline const ComplexTensor& pauli_node(char c) {
  static const ComplexTensor tabs[4] = {pauli_1q('I'), pauli_1q('X'), pauli_1q('Y'),
                                        pauli_1q('Z')};
  switch (c) {
    case 'I': return tabs[0];
    case 'X': return tabs[1];
    case 'Y': return tabs[2];
    default: return tabs[3];
  }
}

// outcome selector delta[x, x_ket, x_bra]
inline const ComplexTensor& outcome_delta() {
  static const ComplexTensor d = [] {
    ComplexTensor t({2, 2, 2}, {"x", "xk", "xb"});
    t.at({0, 0, 0}) = 1.0;
    t.at({1, 1, 1}) = 1.0;
    return t;
  }();
  return d;
}

struct SiteWires {
  // per (q, j): wires of the 7 canonical axes, ket and bra copies
  std::vector<int> ket, bra;
};

}  // namespace lpdodetail

// Builds networks for a fixed GateSet.  Not thread-safe; use one
// evaluator per worker, sharing nothing but the (immutable) gateset.
class ModelEvaluator {
 public:
  explicit ModelEvaluator(GateSet& gs) : gs_(&gs) {}

  GateSet& gateset() { return *gs_; }
  const GateSet& gateset() const { return *gs_; }

  //--- probability networks ------------------------------------------------

  // Open outcome wires (one per qubit, qubit 0 first): result is the
  // outcome distribution p[x].
  void build_probability(const CircuitSpec& circuit, BuiltNetwork& b) {
    begin(b);
    std::string key = "p|";
    alloc_phys_wires();
    std::vector<int> open;
    for (std::size_t q = 0; q < gs_->n_qubits; ++q) {
      const int xw = add_tester_chain(b, circuit, q, key, /*sum_outcomes=*/false);
      open.push_back(xw);
    }
    add_process_nodes(b, key);
    b.net.open = open;
    finish(b, key);
  }

  // Process Pauli expectation Tr[P Upsilon]; Pauli node values are
  // swappable so one compiled plan serves every constraint.
  void build_process_expectation(BuiltNetwork& b) {
    begin(b);
    std::string key = "c|";
    add_process_nodes(b, key);
    for (std::size_t q = 0; q < gs_->n_qubits; ++q)
      for (std::size_t leg = 0; leg < 2 * gs_->n_steps + 1; ++leg) {
        const int kw = sw_.ket[wire_index(q, leg)];
        const int bw = sw_.bra[wire_index(q, leg)];
        b.pauli_nodes.push_back(static_cast<int>(
            b.net.add_node(&lpdodetail::pauli_node('I'), {bw, kw})));
        b.data.push_back(lpdodetail::pauli_node('I').data());
      }
    key += "P";
    finish(b, key);
  }

  // Outcome-summed tester Pauli expectation Tr[P sum_x A].
  void build_tester_expectation(const CircuitSpec& circuit, BuiltNetwork& b) {
    for (const auto& layer : circuit.gates)
      for (const auto& g : layer)
        if (g.kind == GateSpec::Kind::Idle)
          throw std::invalid_argument("tester expectation: idle slots unsupported");
    begin(b);
    std::string key = "t|";
    alloc_phys_wires();
    for (std::size_t q = 0; q < gs_->n_qubits; ++q)
      add_tester_chain(b, circuit, q, key, /*sum_outcomes=*/true);
    for (std::size_t q = 0; q < gs_->n_qubits; ++q)
      for (std::size_t leg = 0; leg < 2 * gs_->n_steps + 1; ++leg) {
        const int kw = sw_.ket[wire_index(q, leg)];
        const int bw = sw_.bra[wire_index(q, leg)];
        b.pauli_nodes.push_back(static_cast<int>(
            b.net.add_node(&lpdodetail::pauli_node('I'), {bw, kw})));
        b.data.push_back(lpdodetail::pauli_node('I').data());
      }
    key += "P";
    finish(b, key);
  }

  void set_constraint(BuiltNetwork& b, const PauliConstraint& pc) {
    const std::size_t n = gs_->n_qubits;
    std::size_t at = 0;
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t leg = 0; leg < pc.labels.size(); ++leg) {
        const char c = pc.labels[leg].at(q);
        b.data[static_cast<std::size_t>(b.pauli_nodes[at])] =
            lpdodetail::pauli_node(c).data();
        ++at;
      }
  }

  //--- execution ------------------------------------------------------------

  // forward into `out` (size = plan out_numel)
  void forward(BuiltNetwork& b, cplx* out) {
    plan_forward(b.compiled->plan, b.data, ws_);
    plan_result(b.compiled->plan, b.data, ws_, out);
  }

  // reverse from `seed` (same layout as the forward output)
  void backward(BuiltNetwork& b, const cplx* seed, GradAccum& acc) {
    plan_backward(b.compiled->plan, b.net, b.data, ws_, seed,
                  [&acc](int leaf, bool conj, const cplx* adj, std::size_t n) {
                    acc.add(leaf, conj, adj, n);
                  });
  }

  std::size_t out_numel(const BuiltNetwork& b) const { return b.compiled->plan.out_numel; }

  PlanCache& cache() { return cache_; }

 private:
  // wire bookkeeping: leg index within a qubit row, order
  // (o_k, i_k, o_{k-1}, ..., i_1, o_0) to match constraint label order
  std::size_t wire_index(std::size_t q, std::size_t leg) const {
    return q * (2 * gs_->n_steps + 1) + leg;
  }

  void begin(BuiltNetwork& b) {
    b.net = WireNetwork();
    b.data.clear();
    b.consts.clear();
    b.consts.reserve(16 * gs_->n_qubits * (gs_->n_steps + 2));
    b.pauli_nodes.clear();
    b.compiled = nullptr;
    net_ = &b.net;
    phys_allocated_ = false;
  }

  void alloc_phys_wires() {
    const std::size_t n = gs_->n_qubits, k = gs_->n_steps;
    sw_.ket.assign(n * (2 * k + 1), -1);
    sw_.bra.assign(n * (2 * k + 1), -1);
    // only o-legs get fresh wires up front; i-legs come from tester chains
    // (or are allocated with the process nodes in expectation networks)
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t j = 0; j <= k; ++j) {
        sw_.ket[wire_index(q, leg_slot_o(k, j))] = net_->fresh_wire();
        sw_.bra[wire_index(q, leg_slot_o(k, j))] = net_->fresh_wire();
      }
    phys_allocated_ = true;
  }

  // Process ket+bra sites; i-leg wires not provided by a tester chain are
  // allocated fresh here (expectation networks).
  void add_process_nodes(BuiltNetwork& b, std::string& key) {
    if (!phys_allocated_) alloc_phys_wires();
    const std::size_t n = gs_->n_qubits, k = gs_->n_steps;
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t j = 1; j <= k; ++j) {
        if (sw_.ket[wire_index(q, leg_slot_i(k, j))] < 0)
          sw_.ket[wire_index(q, leg_slot_i(k, j))] = net_->fresh_wire();
        if (sw_.bra[wire_index(q, leg_slot_i(k, j))] < 0)
          sw_.bra[wire_index(q, leg_slot_i(k, j))] = net_->fresh_wire();
      }
    // bond wires
    nu_ket_.assign(n * k, 0);
    nu_bra_.assign(n * k, 0);
    for (auto& w : nu_ket_) w = net_->fresh_wire();
    for (auto& w : nu_bra_) w = net_->fresh_wire();
    al_ket_.assign((n > 1 ? n - 1 : 0) * (k + 1), 0);
    al_bra_.assign(al_ket_.size(), 0);
    for (auto& w : al_ket_) w = net_->fresh_wire();
    for (auto& w : al_bra_) w = net_->fresh_wire();
    mu_.assign(n * (k + 1), 0);
    for (auto& w : mu_) w = net_->fresh_wire();

    key += std::to_string(n) + "x" + std::to_string(k) + "|";
    for (int side = 0; side < 2; ++side) {
      const bool bra = side == 1;
      for (std::size_t q = 0; q < n; ++q)
        for (std::size_t j = 0; j <= k; ++j) {
          const ComplexTensor& s = gs_->process.site(q, j);
          const std::size_t leaf = gs_->proc_leaf(q, j);
          std::vector<int> wires;
          std::vector<std::size_t> dims;
          auto push = [&](std::size_t axis, int wire) {
            wires.push_back(wire);
            dims.push_back(s.extent(axis));
          };
          auto& pk = bra ? sw_.bra : sw_.ket;
          push(0, pk[wire_index(q, leg_slot_o(k, j))]);
          if (j > 0) push(1, pk[wire_index(q, leg_slot_i(k, j))]);
          auto& nu = bra ? nu_bra_ : nu_ket_;
          if (j > 0) push(2, nu[q * k + (j - 1)]);
          if (j < k) push(3, nu[q * k + j]);
          auto& al = bra ? al_bra_ : al_ket_;
          if (q > 0) push(4, al[(q - 1) * (k + 1) + j]);
          if (q + 1 < n) push(5, al[q * (k + 1) + j]);
          push(6, mu_[q * (k + 1) + j]);
          const cplx* src = bra ? gs_->conj_cache[leaf].data() : s.data();
          b.net.add_node_dims(src, dims, wires, static_cast<int>(leaf), bra);
          b.data.push_back(src);
          if (!bra) {
            key += "s";
            for (auto d : dims) key += std::to_string(d) + ",";
          }
        }
    }
  }

  // One qubit's control chain (ket and bra).  Returns the open outcome
  // wire (or -1 when sum_outcomes).  Overwrites the i-leg wires of this
  // qubit with the chain outputs.
  int add_tester_chain(BuiltNetwork& b, const CircuitSpec& circuit, std::size_t q,
                       std::string& key, bool sum_outcomes) {
    net_ = &b.net;
    const std::size_t k = gs_->n_steps;
    const std::size_t cg = gs_->pulse[q].extent(2);
    key += "q" + std::to_string(cg) + ":";
    int gamma[2];
    for (int side = 0; side < 2; ++side) {
      const std::size_t bleaf = gs_->boundary_leaf(q);
      gamma[side] = net_->fresh_wire();
      const cplx* src = side ? gs_->conj_cache[bleaf].data() : gs_->boundary[q].data();
      b.net.add_node_dims(src, {cg}, {gamma[side]}, static_cast<int>(bleaf), side == 1);
      b.data.push_back(src);
    }
    auto add_const = [&](const ComplexTensor& t) -> std::pair<const cplx*, const cplx*> {
      b.consts.push_back(t);
      const cplx* v = b.consts.back().data();
      b.consts.push_back(t.conjugated());
      const cplx* c = b.consts.back().data();
      return {v, c};
    };
    auto add_gate = [&](const ZyzAngles& a, int in_ket, int in_bra, int* out_ket,
                        int* out_bra) {
      const double zs[3] = {a.lam, a.theta + kPi, a.phi + 3 * kPi};
      int wk = in_ket, wb = in_bra;
      for (int stage = 0; stage < 3; ++stage) {
        auto [zv, zc] = add_const(rz(zs[stage]));
        const int ok = net_->fresh_wire(), ob = net_->fresh_wire();
        b.net.add_node_dims(zv, {2, 2}, {ok, wk});
        b.data.push_back(zv);
        b.net.add_node_dims(zc, {2, 2}, {ob, wb});
        b.data.push_back(zc);
        wk = ok;
        wb = ob;
        if (stage == 2) break;
        // learnable pulse occurrence
        const std::size_t pleaf = gs_->pulse_leaf(q);
        const int pk = net_->fresh_wire(), pb = net_->fresh_wire();
        const int gk = net_->fresh_wire(), gb = net_->fresh_wire();
        b.net.add_node_dims(gs_->pulse[q].data(), {2, 2, cg, cg}, {pk, wk, gamma[0], gk},
                            static_cast<int>(pleaf), false);
        b.data.push_back(gs_->pulse[q].data());
        b.net.add_node_dims(gs_->conj_cache[pleaf].data(), {2, 2, cg, cg},
                            {pb, wb, gamma[1], gb}, static_cast<int>(pleaf), true);
        b.data.push_back(gs_->conj_cache[pleaf].data());
        wk = pk;
        wb = pb;
        gamma[0] = gk;
        gamma[1] = gb;
      }
      *out_ket = wk;
      *out_bra = wb;
    };

    for (std::size_t j = 0; j < k; ++j) {
      const GateSpec& g = circuit.gates[j][q];
      const int in_ket = sw_.ket[wire_index(q, leg_slot_o(k, j))];
      const int in_bra = sw_.bra[wire_index(q, leg_slot_o(k, j))];
      if (g.kind == GateSpec::Kind::Idle) {
        sw_.ket[wire_index(q, leg_slot_i(k, j + 1))] = in_ket;
        sw_.bra[wire_index(q, leg_slot_i(k, j + 1))] = in_bra;
        key += "-";
        continue;
      }
      int ok = 0, ob = 0;
      add_gate(gate_angles(g), in_ket, in_bra, &ok, &ob);
      sw_.ket[wire_index(q, leg_slot_i(k, j + 1))] = ok;
      sw_.bra[wire_index(q, leg_slot_i(k, j + 1))] = ob;
      key += "g";
    }
    // measurement: optional basis rotation then the POVM site
    int mk = sw_.ket[wire_index(q, leg_slot_o(k, k))];
    int mb = sw_.bra[wire_index(q, leg_slot_o(k, k))];
    if (circuit.basis[q] != 'Z') {
      int ok = 0, ob = 0;
      add_gate(zyz_angles(basis_change(circuit.basis[q])), mk, mb, &ok, &ob);
      mk = ok;
      mb = ob;
      key += "b";
    }
    const std::size_t mleaf = gs_->povm_leaf(q);
    const std::size_t cd = gs_->povm[q].extent(1);
    const int delta = net_->fresh_wire();
    int xk = net_->fresh_wire();
    int xb = sum_outcomes ? xk : net_->fresh_wire();
    b.net.add_node_dims(gs_->povm[q].data(), {2, cd, cg, 2}, {xk, delta, gamma[0], mk},
                        static_cast<int>(mleaf), false);
    b.data.push_back(gs_->povm[q].data());
    b.net.add_node_dims(gs_->conj_cache[mleaf].data(), {2, cd, cg, 2},
                        {xb, delta, gamma[1], mb}, static_cast<int>(mleaf), true);
    b.data.push_back(gs_->conj_cache[mleaf].data());
    key += "m" + std::to_string(cd) + (sum_outcomes ? "S" : "O");
    if (sum_outcomes) return -1;
    const int xo = net_->fresh_wire();
    b.net.add_node_dims(lpdodetail::outcome_delta().data(), {2, 2, 2}, {xo, xk, xb});
    b.data.push_back(lpdodetail::outcome_delta().data());
    return xo;
  }

  void finish(BuiltNetwork& b, std::string& key) {
    for (std::size_t q = 0; q < gs_->n_qubits; ++q) {
      key += gs_->leaf_is_learnable(gs_->proc_leaf(q, 0)) ? "L" : "F";
      key += gs_->leaf_is_learnable(gs_->pulse_leaf(q)) ? "L" : "F";
      key += gs_->leaf_is_learnable(gs_->povm_leaf(q)) ? "L" : "F";
    }
    b.key = std::move(key);
    auto it = cache_.find(b.key);
    if (it == cache_.end()) {
      CachedPlan cp;
      cp.net = b.net;
      const auto mask = gs_->learnable_mask();
      cp.plan = compile_plan(b.net, true, &mask);
      it = cache_.emplace(b.key, std::move(cp)).first;
    }
    b.compiled = &it->second;
  }

  GateSet* gs_;
  PlanCache cache_;
  Workspace ws_;
  WireNetwork* net_ = nullptr;
  lpdodetail::SiteWires sw_;
  std::vector<int> nu_ket_, nu_bra_, al_ket_, al_bra_, mu_;
  bool phys_allocated_ = false;
};

//=========================================================================
// Public model operations
//=========================================================================

// Outcome distribution predicted by the gate set for one circuit.
inline std::vector<double> predict_distribution(GateSet& gs, const CircuitSpec& circuit,
                                                ModelEvaluator* ev = nullptr) {
  circuit.validate();
  if (circuit.n_qubits != gs.n_qubits || circuit.n_steps != gs.n_steps)
    throw std::invalid_argument("predict: circuit incompatible with gate set");
  ModelEvaluator local(gs);
  ModelEvaluator& e = ev ? *ev : local;
  BuiltNetwork b;
  e.build_probability(circuit, b);
  std::vector<cplx> out(e.out_numel(b));
  e.forward(b, out.data());
  std::vector<double> p(out.size());
  double scale = 1e-12;
  for (const auto& v : out) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (std::abs(out[i].imag()) > 1e-8 * std::max(1.0, scale))
      throw std::logic_error("predict: non-real probability from PSD network");
    p[i] = out[i].real();
  }
  return p;
}

inline double predict_probability(GateSet& gs, const CircuitSpec& circuit,
                                  const std::string& outcome, ModelEvaluator* ev = nullptr) {
  if (outcome.size() != gs.n_qubits)
    throw std::invalid_argument("predict_probability: outcome length mismatch");
  auto p = predict_distribution(gs, circuit, ev);
  const double v = p.at(outcome_index(outcome));
  if (v < -1e-9) throw std::logic_error("predict_probability: negative probability");
  return v;
}

// Causality penalty sum_c (Re Tr[P_c Upsilon])^2, evaluated without
// densifying.  Gradients accumulate 2 kappa e_c seeds when `acc` given.
inline double causality_penalty(GateSet& gs, const std::vector<PauliConstraint>& constraints,
                                ModelEvaluator& ev, double kappa = 1.0,
                                GradAccum* acc = nullptr) {
  BuiltNetwork b;
  ev.build_process_expectation(b);
  double total = 0;
  for (const auto& pc : constraints) {
    ev.set_constraint(b, pc);
    cplx e;
    ev.forward(b, &e);
    const double r = e.real() - pc.target;
    total += r * r;
    if (acc) {
      const cplx seed(2.0 * kappa * r, 0.0);
      ev.backward(b, &seed, *acc);
    }
  }
  return total;
}

// Trace-preservation penalty of outcome-summed testers for the given
// circuits (typically one representative per tester structure).
inline double tp_penalty(GateSet& gs, const std::vector<const CircuitSpec*>& circuits,
                         const std::vector<PauliConstraint>& constraints, ModelEvaluator& ev,
                         double kappa = 1.0, GradAccum* acc = nullptr) {
  double total = 0;
  BuiltNetwork b;
  for (const CircuitSpec* c : circuits) {
    ev.build_tester_expectation(*c, b);
    for (const auto& pc : constraints) {
      ev.set_constraint(b, pc);
      cplx e;
      ev.forward(b, &e);
      double r;
      if (pc.target != 0.0)
        r = (e.real() - pc.target) / pc.target;  // relative normalisation residual
      else
        r = e.real();
      total += r * r;
      if (acc) {
        const cplx seed(2.0 * kappa * r / (pc.target != 0.0 ? pc.target : 1.0), 0.0);
        ev.backward(b, &seed, *acc);
      }
    }
  }
  return total;
}

// Full contraction of the LPDO into a dense Choi state, legs
// (o_k:q0.., i_k:q0.., ..., o_0:q0..) per the paper's ordering.
inline ChoiState lpdo_to_dense(const ProcessTensorLPDO& pt) {
  pt.validate();
  const std::size_t n = pt.n_qubits, k = pt.n_steps;
  const std::size_t phys = n * (2 * k + 1);
  if (phys > 14) throw std::invalid_argument("lpdo_to_dense: dimension guard exceeded");

  WireNetwork net;
  // physical wires ordered (slot-major, qubit ascending)
  std::vector<int> phys_wires(phys);
  std::vector<Leg> legs(phys);
  std::size_t at = 0;
  for (std::size_t leg = 0; leg < 2 * k + 1; ++leg)
    for (std::size_t q = 0; q < n; ++q) {
      const bool is_o = leg % 2 == 0;
      const std::size_t j = is_o ? k - leg / 2 : k - (leg - 1) / 2;
      legs[at] = {(is_o ? "o" : "i") + std::to_string(j) + ":q" + std::to_string(q), 2};
      phys_wires[at] = net.fresh_wire();
      ++at;
    }
  auto wire_of = [&](std::size_t q, bool is_o, std::size_t j) {
    const std::size_t leg = is_o ? leg_slot_o(k, j) : leg_slot_i(k, j);
    return phys_wires[leg * n + q];
  };

  std::vector<int> nu(n * k), al((n > 1 ? n - 1 : 0) * (k + 1)), mu(n * (k + 1));
  for (auto& w : nu) w = net.fresh_wire();
  for (auto& w : al) w = net.fresh_wire();
  for (auto& w : mu) w = net.fresh_wire();

  std::vector<const cplx*> data;
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t j = 0; j <= k; ++j) {
      const ComplexTensor& s = pt.site(q, j);
      std::vector<int> wires;
      std::vector<std::size_t> dims;
      auto push = [&](std::size_t axis, int w) {
        wires.push_back(w);
        dims.push_back(s.extent(axis));
      };
      push(0, wire_of(q, true, j));
      if (j > 0) push(1, wire_of(q, false, j));
      if (j > 0) push(2, nu[q * k + j - 1]);
      if (j < k) push(3, nu[q * k + j]);
      if (q > 0) push(4, al[(q - 1) * (k + 1) + j]);
      if (q + 1 < n) push(5, al[q * (k + 1) + j]);
      push(6, mu[q * (k + 1) + j]);
      net.add_node_dims(s.data(), dims, wires);
      data.push_back(s.data());
    }
  net.open = phys_wires;
  for (int w : mu) net.open.push_back(w);

  Plan plan = compile_plan(net, false);
  Workspace ws;
  plan_forward(plan, data, ws);
  std::vector<cplx> ket(plan.out_numel);
  plan_result(plan, data, ws, ket.data());

  const std::size_t D = std::size_t(1) << phys;
  const std::size_t muD = plan.out_numel / D;
  ChoiState out;
  out.legs = legs;
  out.matrix = ComplexTensor({D, D}, {"r", "c"});
  for (std::size_t r = 0; r < D; ++r)
    for (std::size_t c2 = 0; c2 < D; ++c2) {
      cplx acc = 0;
      for (std::size_t m2 = 0; m2 < muD; ++m2)
        acc += ket[r * muD + m2] * std::conj(ket[c2 * muD + m2]);
      out.matrix[r * D + c2] = acc;
    }
  return out;
}

// Joint two-slot conditional dynamical map (Eq. 12 recipe): refocusing
// gates contracted at every non-selected slot, maximally mixed inputs and
// traced outputs at the cut points, renormalised to trace d^2.
struct SlotRef {
  std::size_t qubit;
  std::size_t step;  // 1..k
};

inline ChoiState conditional_marginal(const ChoiState& process, std::size_t n_qubits,
                                      std::size_t n_steps, SlotRef a, SlotRef b,
                                      const ComplexTensor& refocus = pauli_1q('X')) {
  const std::size_t k = n_steps;
  if (a.step < 1 || a.step > k || b.step < 1 || b.step > k)
    throw std::invalid_argument("conditional_marginal: slot out of range");
  if (a.qubit == b.qubit && a.step == b.step)
    throw std::invalid_argument("conditional_marginal: slots must differ");
  auto leg_o = [&](std::size_t q, std::size_t j) {
    return "o" + std::to_string(j) + ":q" + std::to_string(q);
  };
  auto leg_i = [&](std::size_t q, std::size_t j) {
    return "i" + std::to_string(j) + ":q" + std::to_string(q);
  };
  // a slot's o and i legs are both open when the slot is selected
  auto is_open = [&](std::size_t q, std::size_t j) {
    return (q == a.qubit && j == a.step) || (q == b.qubit && j == b.step);
  };
  ChoiState acc = process;
  const ComplexTensor mixed = identity_tensor(2).scaled(0.5);
  const ComplexTensor tracer = identity_tensor(2);
  // gate slots s = 0..k-1 connect o_s -> i_{s+1}
  for (std::size_t q = 0; q < n_qubits; ++q)
    for (std::size_t s = 0; s < k; ++s) {
      const bool o_open = is_open(q, s);      // o_s open iff slot s selected
      const bool i_open = is_open(q, s + 1);  // i_{s+1} open iff slot s+1 selected
      if (!o_open && !i_open) {
        ChoiState g = choi_of_unitary(refocus, leg_i(q, s + 1), leg_o(q, s));
        acc = link_product(acc, g, {leg_i(q, s + 1), leg_o(q, s)});
      } else if (o_open && !i_open) {
        ChoiState st;
        st.legs = {{leg_i(q, s + 1), 2}};
        st.matrix = mixed;
        acc = link_product(acc, st, {leg_i(q, s + 1)});
      } else if (!o_open && i_open) {
        ChoiState tr;
        tr.legs = {{leg_o(q, s), 2}};
        tr.matrix = tracer;
        acc = link_product(acc, tr, {leg_o(q, s)});
      }
    }
  // final outputs o_k traced when not selected
  for (std::size_t q = 0; q < n_qubits; ++q) {
    if (is_open(q, k)) continue;
    ChoiState tr;
    tr.legs = {{leg_o(q, k), 2}};
    tr.matrix = tracer;
    acc = link_product(acc, tr, {leg_o(q, k)});
  }
  acc = acc.reordered({leg_o(a.qubit, a.step), leg_i(a.qubit, a.step), leg_o(b.qubit, b.step),
                       leg_i(b.qubit, b.step)});
  const double tr = acc.trace().real();
  if (std::abs(tr) < 1e-14)
    throw std::runtime_error("conditional_marginal: vanishing trace");
  acc.matrix = acc.matrix.scaled(4.0 / tr);
  return acc;
}

//=========================================================================
// Checkpoints
//=========================================================================

inline void save_gateset(const GateSet& gs, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_gateset: cannot open " + path);
  nlohmann::json manifest;
  manifest["n_qubits"] = gs.n_qubits;
  manifest["n_steps"] = gs.n_steps;
  manifest["learn"] = {{"process", gs.learn_process},
                       {"pulse", gs.learn_pulse},
                       {"povm", gs.learn_povm}};
  nlohmann::json sharing = nlohmann::json::array();
  for (std::size_t q = 0; q < gs.n_qubits; ++q)
    for (std::size_t j = 0; j <= gs.n_steps; ++j)
      sharing.push_back("proc/q" + std::to_string(q) + "/s" + std::to_string(j));
  for (std::size_t q = 0; q < gs.n_qubits; ++q) sharing.push_back("pulse/q" + std::to_string(q));
  for (std::size_t q = 0; q < gs.n_qubits; ++q)
    sharing.push_back("boundary/q" + std::to_string(q));
  for (std::size_t q = 0; q < gs.n_qubits; ++q) sharing.push_back("povm/q" + std::to_string(q));
  manifest["tensors"] = sharing;
  const std::string ms = manifest.dump();
  iodetail::write_u64(f, ms.size());
  f.write(ms.data(), static_cast<std::streamsize>(ms.size()));
  GateSet& g = const_cast<GateSet&>(gs);
  for (std::size_t i = 0; i < gs.leaf_count(); ++i)
    write_tensor_record(f, sharing[i].get<std::string>(), g.leaf(i));
}

inline GateSet load_gateset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_gateset: cannot open " + path);
  const std::uint64_t mlen = iodetail::read_u64(f);
  std::string ms(mlen, '\0');
  f.read(ms.data(), static_cast<std::streamsize>(mlen));
  nlohmann::json manifest = nlohmann::json::parse(ms);
  GateSet gs;
  gs.n_qubits = manifest.at("n_qubits");
  gs.n_steps = manifest.at("n_steps");
  gs.learn_process = manifest.at("learn").at("process");
  gs.learn_pulse = manifest.at("learn").at("pulse");
  gs.learn_povm = manifest.at("learn").at("povm");
  gs.process.n_qubits = gs.n_qubits;
  gs.process.n_steps = gs.n_steps;
  const auto names = manifest.at("tensors").get<std::vector<std::string>>();
  for (const auto& expect : names) {
    auto [name, t] = read_tensor_record(f);
    if (name != expect) throw std::runtime_error("load_gateset: record order mismatch");
    if (name.rfind("proc/", 0) == 0)
      gs.process.sites.push_back(std::move(t));
    else if (name.rfind("pulse/", 0) == 0)
      gs.pulse.push_back(std::move(t));
    else if (name.rfind("boundary/", 0) == 0)
      gs.boundary.push_back(std::move(t));
    else
      gs.povm.push_back(std::move(t));
  }
  gs.process.validate();
  gs.refresh_conj();
  return gs;
}

}  // namespace pttkit
