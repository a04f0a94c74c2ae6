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

#include <nlohmann/json.hpp>

#include "pttkit/quantum.hpp"
#include "pttkit/rng.hpp"

namespace pttkit {

//=========================================================================
// Circuits
//=========================================================================

struct GateSpec {
  enum class Kind { Clifford, U3, Named, Idle };
  Kind kind = Kind::Idle;
  int clifford_index = 0;
  double theta = 0, phi = 0, lam = 0;
  std::string name;

  static GateSpec clifford(int i) {
    GateSpec g;
    g.kind = Kind::Clifford;
    g.clifford_index = i;
    return g;
  }
  static GateSpec from_u3(double theta, double phi, double lam) {
    GateSpec g;
    g.kind = Kind::U3;
    g.theta = theta;
    g.phi = phi;
    g.lam = lam;
    return g;
  }
  static GateSpec named(std::string n) {
    GateSpec g;
    g.kind = Kind::Named;
    g.name = std::move(n);
    return g;
  }
  static GateSpec idle() { return GateSpec{}; }
};

// Canonical hardware angles (theta, phi, lam) for a non-idle gate.
inline ZyzAngles gate_angles(const GateSpec& g) {
  switch (g.kind) {
    case GateSpec::Kind::Clifford: {
      const auto& c = single_qubit_cliffords().at(g.clifford_index);
      return {c.theta, c.phi, c.lam};
    }
    case GateSpec::Kind::U3: return {g.theta, g.phi, g.lam};
    case GateSpec::Kind::Named: return zyz_angles(named_gate(g.name));
    default: throw std::invalid_argument("gate_angles: idle slot has no angles");
  }
}

struct CircuitSpec {
  std::size_t n_qubits = 1;
  std::size_t n_steps = 1;
  std::vector<std::vector<GateSpec>> gates;  // [step][qubit]
  std::string basis;                         // one of X,Y,Z per qubit

  void validate() const {
    if (gates.size() != n_steps) throw std::invalid_argument("CircuitSpec: step grid incomplete");
    for (const auto& layer : gates)
      if (layer.size() != n_qubits)
        throw std::invalid_argument("CircuitSpec: qubit grid incomplete");
    if (basis.size() != n_qubits) throw std::invalid_argument("CircuitSpec: basis length");
  }
};

struct CircuitRecord {
  CircuitSpec circuit;
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t shots = 0;
  std::string split = "train";
};

struct CircuitDataset {
  std::size_t n_qubits = 1;
  std::size_t n_steps = 1;
  std::uint64_t shots_default = 1024;
  std::uint64_t seed = 0;
  std::vector<CircuitRecord> circuits;

  std::vector<const CircuitRecord*> split_view(const std::string& which) const {
    std::vector<const CircuitRecord*> v;
    for (const auto& c : circuits)
      if (c.split == which) v.push_back(&c);
    return v;
  }
};

inline std::string outcome_string(std::size_t index, std::size_t n_qubits) {
  std::string s(n_qubits, '0');
  for (std::size_t q = 0; q < n_qubits; ++q)
    if (index & (std::size_t(1) << (n_qubits - 1 - q))) s[q] = '1';
  return s;
}

inline std::size_t outcome_index(const std::string& s) {
  std::size_t idx = 0;
  for (char c : s) idx = idx * 2 + (c == '1' ? 1 : 0);
  return idx;
}

//=========================================================================
// Noise model: driven system-environment dynamics
//=========================================================================

struct ControlProfile {
  enum class Kind { Ideal, CoherentOffset, Quasistatic1f, Spillage };
  Kind kind = Kind::Ideal;
  double epsilon = 0.0;         // coherent offset added to each physical pulse
  double sigma = 0.05 * kPi;    // quasistatic stationary standard deviation
  double alpha = 1.0;           // 1/f exponent
  double f_lo = 0.0, f_hi = 0.5;
  double spill_angle = 0.0;     // CR_X angle onto the environment

  static ControlProfile ideal() { return {}; }
  static ControlProfile coherent_offset(double eps) {
    ControlProfile p;
    p.kind = Kind::CoherentOffset;
    p.epsilon = eps;
    return p;
  }
  static ControlProfile quasistatic_1f(double alpha, double sigma, double f_lo = 0.0,
                                       double f_hi = 0.5) {
    ControlProfile p;
    p.kind = Kind::Quasistatic1f;
    p.alpha = alpha;
    p.sigma = sigma;
    p.f_lo = f_lo;
    p.f_hi = f_hi;
    return p;
  }
  static ControlProfile spillage(double angle) {
    ControlProfile p;
    p.kind = Kind::Spillage;
    p.spill_angle = angle;
    return p;
  }
};

struct NoiseModel {
  std::size_t n_system = 1;
  std::vector<std::size_t> env_dims = {2};
  double dt = 1.0;
  std::vector<ComplexTensor> step_unitaries;  // on S (x) E, one per interval
  ComplexTensor initial_se_state;             // density matrix on S (x) E
  ControlProfile control;
  std::uint64_t seed = 0;

  std::size_t n_steps() const { return step_unitaries.size(); }
  std::size_t d_sys() const { return std::size_t(1) << n_system; }
  std::size_t d_env() const {
    std::size_t d = 1;
    for (auto e : env_dims) d *= e;
    return d;
  }
  std::size_t d_total() const { return d_sys() * d_env(); }
};

namespace simdetail {

// Lift a single-qubit operator onto the full S (x) E space.
inline ComplexTensor lift_1q(const ComplexTensor& op, std::size_t qubit, std::size_t n_system,
                             std::size_t d_env) {
  ComplexTensor m = op;
  if (qubit > 0) m = kron(identity_tensor(std::size_t(1) << qubit), m);
  const std::size_t rest = n_system - 1 - qubit;
  if (rest > 0) m = kron(m, identity_tensor(std::size_t(1) << rest));
  if (d_env > 1) m = kron(m, identity_tensor(d_env));
  return m;
}

// Controlled environment rotation: control on system qubit, RX on the
// (two-level) environment.
inline ComplexTensor lift_crx_env(double angle, std::size_t qubit, std::size_t n_system,
                                  std::size_t d_env) {
  if (d_env != 2)
    throw std::invalid_argument("spillage control requires a single-qubit environment");
  const std::size_t d_sys = std::size_t(1) << n_system;
  const std::size_t d = d_sys * d_env;
  ComplexTensor out({d, d}, {"r", "c"});
  ComplexTensor r = rx(angle);
  for (std::size_t s = 0; s < d_sys; ++s) {
    const bool on = (s >> (n_system - 1 - qubit)) & 1;
    for (std::size_t e = 0; e < 2; ++e)
      for (std::size_t e2 = 0; e2 < 2; ++e2) {
        const cplx v = on ? r[e * 2 + e2] : (e == e2 ? cplx(1, 0) : cplx(0, 0));
        out[(s * 2 + e) * d + (s * 2 + e2)] = v;
      }
  }
  return out;
}

inline void apply_unitary_inplace(ComplexTensor& rho, const ComplexTensor& u) {
  rho = matmul(u, matmul(rho, dagger(u)));
}

}  // namespace simdetail

// Exchange coupling of every system qubit to one shared environment qubit:
// H = sum_q Jx^q XX + Jy^q YY + Jz^q ZZ acting on (q, E).
struct JRanges {
  std::array<double, 2> jx{0.0, 0.0}, jy{0.0, 0.0}, jz{0.0, 0.0};
  static JRanges isotropic(double lo, double hi) { return {{lo, hi}, {lo, hi}, {lo, hi}}; }
  static JRanges z_only(double lo, double hi) { return {{0, 0}, {0, 0}, {lo, hi}}; }
};

inline NoiseModel build_exchange_bath(std::size_t n_system, std::size_t n_steps,
                                      const JRanges& ranges, double dt, std::uint64_t seed,
                                      bool env_mixed = false) {
  if (n_system < 1) throw std::invalid_argument("build_exchange_bath: need n_system >= 1");
  NoiseModel m;
  m.n_system = n_system;
  m.env_dims = {2};
  m.dt = dt;
  m.seed = seed;
  Rng rng = Rng(seed).stream("bath");
  const std::size_t d = m.d_total();
  ComplexTensor h({d, d}, {"r", "c"});
  for (std::size_t q = 0; q < n_system; ++q) {
    const double jx = rng.uniform(ranges.jx[0], ranges.jx[1]);
    const double jy = rng.uniform(ranges.jy[0], ranges.jy[1]);
    const double jz = rng.uniform(ranges.jz[0], ranges.jz[1]);
    // two-site terms on (q, E)
    auto add_term = [&](char p, double coeff) {
      if (coeff == 0.0) return;
      ComplexTensor sq = simdetail::lift_1q(pauli_1q(p), q, n_system, 1);  // system part
      ComplexTensor full = kron(sq, pauli_1q(p));
      for (std::size_t i = 0; i < h.numel(); ++i) h[i] += coeff * full[i];
    };
    add_term('X', jx);
    add_term('Y', jy);
    add_term('Z', jz);
  }
  ComplexTensor u = expm_hermitian(h, cplx(0, -dt));
  for (std::size_t j = 0; j < n_steps; ++j) m.step_unitaries.push_back(u);

  ComplexTensor rho0({d, d}, {"r", "c"});
  if (env_mixed) {
    // |0..0>_S (x) I/2: a pure-dephasing Jz bath then acts as a static
    // random field rather than a coherent rotation
    rho0[0] = 0.5;
    rho0[1 * d + 1] = 0.5;
  } else {
    rho0[0] = 1.0;  // |0...0>_S (x) |0>_E
  }
  m.initial_se_state = rho0;
  return m;
}

inline NoiseModel noiseless_model(std::size_t n_system, std::size_t n_steps) {
  NoiseModel m;
  m.n_system = n_system;
  m.env_dims = {1};
  const std::size_t d = m.d_total();
  for (std::size_t j = 0; j < n_steps; ++j) m.step_unitaries.push_back(identity_tensor(d));
  ComplexTensor rho0({d, d}, {"r", "c"});
  rho0[0] = 1.0;
  m.initial_se_state = rho0;
  return m;
}

//-------------------------------------------------------------------------
// Exact density-matrix evolution
//-------------------------------------------------------------------------

// Exact Born probabilities over measurement outcomes (bitstring order,
// qubit 0 leftmost).  For the quasistatic profile the result is
// conditional on the single offset `quasistatic_eps`.
inline std::vector<double> run_circuit_with_epsilon(const NoiseModel& model,
                                                    const CircuitSpec& circuit,
                                                    double quasistatic_eps) {
  circuit.validate();
  if (circuit.n_qubits != model.n_system || circuit.n_steps != model.n_steps())
    throw std::invalid_argument("run_circuit_exact: circuit grid does not match model dims");
  const std::size_t n = model.n_system, d_env = model.d_env(), d = model.d_total();
  const std::size_t d_sys = model.d_sys();

  double pulse_shift = 0.0;
  if (model.control.kind == ControlProfile::Kind::CoherentOffset)
    pulse_shift = model.control.epsilon;
  else if (model.control.kind == ControlProfile::Kind::Quasistatic1f)
    pulse_shift = quasistatic_eps;

  const ComplexTensor pulse = rx(kPi / 2 + pulse_shift);
  std::vector<ComplexTensor> lifted_pulse, lifted_spill;
  for (std::size_t q = 0; q < n; ++q) {
    lifted_pulse.push_back(simdetail::lift_1q(pulse, q, n, d_env));
    if (model.control.kind == ControlProfile::Kind::Spillage)
      lifted_spill.push_back(
          simdetail::lift_crx_env(model.control.spill_angle, q, n, d_env));
  }

  ComplexTensor rho = model.initial_se_state;
  auto apply_gate = [&](std::size_t q, const ZyzAngles& a) {
    using simdetail::apply_unitary_inplace;
    using simdetail::lift_1q;
    apply_unitary_inplace(rho, lift_1q(rz(a.lam), q, n, d_env));
    apply_unitary_inplace(rho, lifted_pulse[q]);
    if (!lifted_spill.empty()) apply_unitary_inplace(rho, lifted_spill[q]);
    apply_unitary_inplace(rho, lift_1q(rz(a.theta + kPi), q, n, d_env));
    apply_unitary_inplace(rho, lifted_pulse[q]);
    if (!lifted_spill.empty()) apply_unitary_inplace(rho, lifted_spill[q]);
    apply_unitary_inplace(rho, lift_1q(rz(a.phi + 3 * kPi), q, n, d_env));
  };

  for (std::size_t j = 0; j < circuit.n_steps; ++j) {
    for (std::size_t q = 0; q < n; ++q) {
      const GateSpec& g = circuit.gates[j][q];
      if (g.kind == GateSpec::Kind::Idle) continue;
      apply_gate(q, gate_angles(g));
    }
    simdetail::apply_unitary_inplace(rho, model.step_unitaries[j]);
  }
  // measurement-basis rotations are physical gates too
  for (std::size_t q = 0; q < n; ++q) {
    if (circuit.basis[q] == 'Z') continue;
    apply_gate(q, zyz_angles(basis_change(circuit.basis[q])));
  }

  std::vector<double> p(d_sys, 0.0);
  for (std::size_t s = 0; s < d_sys; ++s) {
    double acc = 0;
    for (std::size_t e = 0; e < d_env; ++e) {
      const std::size_t i = s * d_env + e;
      acc += rho[i * d + i].real();
    }
    p[s] = acc;
  }
  return p;
}

// One quasistatic draw per call, derived deterministically from
// (model.seed, draw_index); other profiles ignore the draw.
inline std::vector<double> run_circuit_exact(const NoiseModel& model, const CircuitSpec& circuit,
                                             std::uint64_t draw_index = 0) {
  double eps = 0.0;
  if (model.control.kind == ControlProfile::Kind::Quasistatic1f) {
    OneOverFConfig cfg{model.control.alpha, model.control.f_lo, model.control.f_hi};
    auto seq = sample_one_over_f(model.control.alpha, 16, cfg,
                                 Rng(model.seed).stream("eps_draw", draw_index));
    eps = model.control.sigma * seq[0];
  }
  return run_circuit_with_epsilon(model, circuit, eps);
}

// Reduced system density matrix after `upto_steps` steps of the driven
// evolution (no measurement), quasistatic offset fixed at `eps`.
inline ComplexTensor reduced_state_after(const NoiseModel& model, const CircuitSpec& circuit,
                                         std::size_t upto_steps, double eps = 0.0) {
  circuit.validate();
  if (upto_steps > model.n_steps())
    throw std::invalid_argument("reduced_state_after: step count out of range");
  const std::size_t n = model.n_system, d_env = model.d_env(), d = model.d_total();
  const std::size_t d_sys = model.d_sys();
  double pulse_shift = 0.0;
  if (model.control.kind == ControlProfile::Kind::CoherentOffset)
    pulse_shift = model.control.epsilon;
  else if (model.control.kind == ControlProfile::Kind::Quasistatic1f)
    pulse_shift = eps;
  const ComplexTensor pulse = rx(kPi / 2 + pulse_shift);
  std::vector<ComplexTensor> lifted_pulse, lifted_spill;
  for (std::size_t q = 0; q < n; ++q) {
    lifted_pulse.push_back(simdetail::lift_1q(pulse, q, n, d_env));
    if (model.control.kind == ControlProfile::Kind::Spillage)
      lifted_spill.push_back(simdetail::lift_crx_env(model.control.spill_angle, q, n, d_env));
  }
  ComplexTensor rho = model.initial_se_state;
  for (std::size_t j = 0; j < upto_steps; ++j) {
    for (std::size_t q = 0; q < n; ++q) {
      const GateSpec& g = circuit.gates[j][q];
      if (g.kind == GateSpec::Kind::Idle) continue;
      const ZyzAngles a = gate_angles(g);
      using simdetail::apply_unitary_inplace;
      using simdetail::lift_1q;
      apply_unitary_inplace(rho, lift_1q(rz(a.lam), q, n, d_env));
      apply_unitary_inplace(rho, lifted_pulse[q]);
      if (!lifted_spill.empty()) apply_unitary_inplace(rho, lifted_spill[q]);
      apply_unitary_inplace(rho, lift_1q(rz(a.theta + kPi), q, n, d_env));
      apply_unitary_inplace(rho, lifted_pulse[q]);
      if (!lifted_spill.empty()) apply_unitary_inplace(rho, lifted_spill[q]);
      apply_unitary_inplace(rho, lift_1q(rz(a.phi + 3 * kPi), q, n, d_env));
    }
    simdetail::apply_unitary_inplace(rho, model.step_unitaries[j]);
  }
  ComplexTensor out({d_sys, d_sys}, {"r", "c"});
  for (std::size_t s = 0; s < d_sys; ++s)
    for (std::size_t s2 = 0; s2 < d_sys; ++s2) {
      cplx acc = 0;
      for (std::size_t e = 0; e < d_env; ++e) acc += rho[(s * d_env + e) * d + (s2 * d_env + e)];
      out[s * d_sys + s2] = acc;
    }
  return out;
}

// Noiseless reference: pure-state evolution with exact gates, no bath.
inline std::vector<double> run_circuit_pure(const CircuitSpec& circuit) {
  circuit.validate();
  const std::size_t n = circuit.n_qubits, d = std::size_t(1) << n;
  std::vector<cplx> psi(d, 0.0);
  psi[0] = 1.0;
  auto apply = [&](const ComplexTensor& u1, std::size_t q) {
    ComplexTensor u = simdetail::lift_1q(u1, q, n, 1);
    std::vector<cplx> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      if (psi[i] == cplx(0, 0)) continue;
      for (std::size_t r = 0; r < d; ++r) out[r] += u[r * d + i] * psi[i];
    }
    psi = std::move(out);
  };
  for (std::size_t j = 0; j < circuit.n_steps; ++j)
    for (std::size_t q = 0; q < n; ++q) {
      const GateSpec& g = circuit.gates[j][q];
      if (g.kind == GateSpec::Kind::Idle) continue;
      const ZyzAngles a = gate_angles(g);
      apply(u3(a.theta, a.phi, a.lam), q);
    }
  for (std::size_t q = 0; q < n; ++q)
    if (circuit.basis[q] != 'Z') apply(basis_change(circuit.basis[q]), q);
  std::vector<double> p(d);
  for (std::size_t i = 0; i < d; ++i) p[i] = std::norm(psi[i]);
  return p;
}

//-------------------------------------------------------------------------
// Shot sampling and dataset generation
//-------------------------------------------------------------------------

inline std::map<std::string, std::uint64_t> sample_counts(const std::vector<double>& p,
                                                          std::uint64_t shots, Rng rng) {
  const std::size_t n_qubits = static_cast<std::size_t>(std::llround(std::log2(double(p.size()))));
  auto counts = multinomial_sample(p, shots, rng);
  std::map<std::string, std::uint64_t> out;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) out[outcome_string(i, n_qubits)] = counts[i];
  return out;
}

inline CircuitSpec random_clifford_circuit(std::size_t n, std::size_t k, Rng& rng) {
  CircuitSpec c;
  c.n_qubits = n;
  c.n_steps = k;
  c.gates.assign(k, std::vector<GateSpec>(n));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t q = 0; q < n; ++q)
      c.gates[j][q] = GateSpec::clifford(static_cast<int>(rng.uniform_index(24)));
  c.basis.clear();
  for (std::size_t q = 0; q < n; ++q) c.basis += "XYZ"[rng.uniform_index(3)];
  return c;
}

inline CircuitSpec random_u3_circuit(std::size_t n, std::size_t k, Rng& rng) {
  CircuitSpec c;
  c.n_qubits = n;
  c.n_steps = k;
  c.gates.assign(k, std::vector<GateSpec>(n));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t q = 0; q < n; ++q)
      c.gates[j][q] = GateSpec::from_u3(rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi),
                                        rng.uniform(0, 2 * kPi));
  c.basis.clear();
  for (std::size_t q = 0; q < n; ++q) c.basis += "XYZ"[rng.uniform_index(3)];
  return c;
}

// Train circuits: uniformly random Cliffords per (qubit, step), random
// measurement bases.  Validation circuits: random u3 angles, optionally at
// a higher shot count.  Quasistatic control draws one offset per shot from
// the 1/f stream of the circuit.
inline CircuitDataset generate_dataset(const NoiseModel& model, std::size_t n_train,
                                       std::size_t n_validation, std::uint64_t shots,
                                       std::uint64_t seed, std::uint64_t validation_shots = 0) {
  CircuitDataset ds;
  ds.n_qubits = model.n_system;
  ds.n_steps = model.n_steps();
  ds.shots_default = shots;
  ds.seed = seed;
  Rng root(seed);
  const bool quasistatic = model.control.kind == ControlProfile::Kind::Quasistatic1f;
  if (validation_shots == 0) validation_shots = shots;

  const std::size_t total = n_train + n_validation;
  for (std::size_t c = 0; c < total; ++c) {
    const bool train = c < n_train;
    Rng gate_rng = root.stream(train ? "train_gates" : "val_gates", c);
    CircuitRecord rec;
    rec.circuit = train ? random_clifford_circuit(model.n_system, model.n_steps(), gate_rng)
                        : random_u3_circuit(model.n_system, model.n_steps(), gate_rng);
    rec.split = train ? "train" : "validation";
    rec.shots = train ? shots : validation_shots;
    if (!quasistatic) {
      const auto p = run_circuit_with_epsilon(model, rec.circuit, 0.0);
      rec.counts = sample_counts(p, rec.shots, root.stream("counts", c));
    } else {
      // per-shot offsets from a 1/f sequence local to this circuit
      OneOverFConfig cfg{model.control.alpha, model.control.f_lo, model.control.f_hi};
      auto eps = sample_one_over_f(model.control.alpha, rec.shots, cfg, root.stream("eps", c));
      Rng srng = root.stream("counts", c);
      std::map<std::size_t, std::uint64_t> acc;
      // cache distributions per quantised offset to avoid one evolution per shot
      std::map<long, std::vector<double>> cache;
      for (std::uint64_t s = 0; s < rec.shots; ++s) {
        const double e = model.control.sigma * eps[s];
        const long key = std::lround(e * 4096.0);
        auto it = cache.find(key);
        if (it == cache.end())
          it = cache.emplace(key, run_circuit_with_epsilon(model, rec.circuit,
                                                           double(key) / 4096.0))
                   .first;
        const auto& p = it->second;
        double u = srng.uniform();
        std::size_t x = 0;
        for (; x + 1 < p.size(); ++x) {
          if (u < p[x]) break;
          u -= std::max(0.0, p[x]);
        }
        ++acc[x];
      }
      for (const auto& [k, v] : acc) rec.counts[outcome_string(k, model.n_system)] = v;
    }
    ds.circuits.push_back(std::move(rec));
  }
  return ds;
}

//-------------------------------------------------------------------------
// Dense process tensor of a model (the link-product path)
//-------------------------------------------------------------------------

// Upsilon_{k:0} = Tr_E[ U_k * ... * U_1 * rho0 ] with per-qubit legs named
// "o<j>:q<q>" / "i<j>:q<q>", ordered (o_k, i_k, ..., i_1, o_0).
inline ChoiState process_choi(const NoiseModel& model) {
  const std::size_t dS = model.d_sys(), dE = model.d_env();
  const std::size_t k = model.n_steps();
  ChoiState acc = choi_of_state(model.initial_se_state, "se");
  acc = acc.split_leg("se", {{"o0", dS}, {"E", dE}});
  for (std::size_t j = 1; j <= k; ++j) {
    ChoiState u = choi_of_unitary(model.step_unitaries[j - 1], "uo", "ui");
    u = u.split_leg("uo", {{"o" + std::to_string(j), dS}, {"Eo", dE}});
    u = u.split_leg("ui", {{"i" + std::to_string(j), dS}, {"E", dE}});
    acc = link_product(acc, u, {"E"});
    acc = acc.renamed("Eo", "E");
  }
  acc = partial_trace(acc, {"E"});
  // canonical leg order with per-qubit splits
  std::vector<std::string> order;
  for (std::size_t j = k; j >= 1; --j) {
    order.push_back("o" + std::to_string(j));
    order.push_back("i" + std::to_string(j));
  }
  order.push_back("o0");
  acc = acc.reordered(order);
  ChoiState out = acc;
  for (const auto& name : order) {
    std::vector<Leg> parts;
    for (std::size_t q = 0; q < model.n_system; ++q)
      parts.push_back({name + ":q" + std::to_string(q), 2});
    out = out.split_leg(name, parts);
  }
  return out;
}

// Dense Born-rule evaluation (Eq. 5 path): link the process with the
// tester built from per-slot gate Choi states and the transposed POVM
// effect.  Control must be unitary and time-local (ideal or coherent).
inline double born_probability_dense(const ChoiState& process, const NoiseModel& model,
                                     const CircuitSpec& circuit, const std::string& outcome) {
  const std::size_t n = model.n_system;
  if (model.control.kind != ControlProfile::Kind::Ideal &&
      model.control.kind != ControlProfile::Kind::CoherentOffset)
    throw std::invalid_argument("born_probability_dense: time-local unitary control only");
  const double shift =
      model.control.kind == ControlProfile::Kind::CoherentOffset ? model.control.epsilon : 0.0;
  auto noisy_u3 = [&](const ZyzAngles& a) {
    return matmul(rz(a.phi + 3 * kPi),
                  matmul(rx(kPi / 2 + shift),
                         matmul(rz(a.theta + kPi), matmul(rx(kPi / 2 + shift), rz(a.lam)))));
  };

  ChoiState acc = process;
  std::vector<std::string> all_shared;
  // gate slots j = 0..k-1 connect legs o_j -> i_{j+1}
  std::vector<ChoiState> testers;
  for (std::size_t j = 0; j < circuit.n_steps; ++j)
    for (std::size_t q = 0; q < n; ++q) {
      const GateSpec& g = circuit.gates[j][q];
      const std::string qs = ":q" + std::to_string(q);
      ComplexTensor u = g.kind == GateSpec::Kind::Idle ? identity_tensor(2)
                                                       : noisy_u3(gate_angles(g));
      testers.push_back(choi_of_unitary(u, "i" + std::to_string(j + 1) + qs,
                                        "o" + std::to_string(j) + qs));
    }
  // terminating measurement on o_k: transposed effect (the link convention
  // contracts row with row, so Tr[Pi rho] needs Pi^T here)
  for (std::size_t q = 0; q < n; ++q) {
    const std::string qs = ":q" + std::to_string(q);
    ComplexTensor v = basis_change(circuit.basis[q]);
    ComplexTensor vn = circuit.basis[q] == 'Z' ? identity_tensor(2)
                                               : noisy_u3(zyz_angles(basis_change(circuit.basis[q])));
    const int bit = outcome.at(q) == '1' ? 1 : 0;
    ComplexTensor eff = computational_povm().effects[bit];
    // effect conjugated by the (noisy) basis rotation: V^dag Pi V
    ComplexTensor rotated = matmul(dagger(vn), matmul(eff, vn));
    (void)v;
    ComplexTensor t = rotated.permuted({1, 0});  // transpose
    ChoiState m;
    m.legs = {{"o" + std::to_string(circuit.n_steps) + qs, 2}};
    m.matrix = t.reshaped({2, 2}, {"r", "c"});
    testers.push_back(std::move(m));
  }
  for (auto& t : testers) {
    std::vector<std::string> shared;
    for (const auto& l : t.legs) shared.push_back(l.name);
    acc = link_product(acc, t, shared);
  }
  if (!acc.legs.empty()) throw std::logic_error("born_probability_dense: legs left open");
  return acc.matrix[0].real();
}

//-------------------------------------------------------------------------
// Dataset JSON
//-------------------------------------------------------------------------

inline nlohmann::json gate_to_json(const GateSpec& g) {
  switch (g.kind) {
    case GateSpec::Kind::Clifford: return {{"kind", "clifford"}, {"i", g.clifford_index}};
    case GateSpec::Kind::U3:
      return {{"kind", "u3"}, {"theta", g.theta}, {"phi", g.phi}, {"lam", g.lam}};
    case GateSpec::Kind::Named: return {{"kind", "named"}, {"name", g.name}};
    default: return {{"kind", "named"}, {"name", "IDLE"}};
  }
}

inline GateSpec gate_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind");
  if (kind == "clifford") return GateSpec::clifford(j.at("i"));
  if (kind == "u3") return GateSpec::from_u3(j.at("theta"), j.at("phi"), j.at("lam"));
  if (kind == "named") {
    const std::string name = j.at("name");
    if (name == "IDLE") return GateSpec::idle();
    return GateSpec::named(name);
  }
  throw std::invalid_argument("gate_from_json: unknown kind '" + kind + "'");
}

inline nlohmann::json dataset_to_json(const CircuitDataset& ds) {
  nlohmann::json j;
  j["meta"] = {{"n_qubits", ds.n_qubits},
               {"n_steps", ds.n_steps},
               {"shots_default", ds.shots_default},
               {"seed", ds.seed}};
  j["circuits"] = nlohmann::json::array();
  for (const auto& rec : ds.circuits) {
    nlohmann::json c;
    c["gates"] = nlohmann::json::array();
    for (const auto& layer : rec.circuit.gates) {
      nlohmann::json l = nlohmann::json::array();
      for (const auto& g : layer) l.push_back(gate_to_json(g));
      c["gates"].push_back(l);
    }
    c["basis"] = nlohmann::json::array();
    for (char b : rec.circuit.basis) c["basis"].push_back(std::string(1, b));
    c["counts"] = nlohmann::json::object();
    for (const auto& [k, v] : rec.counts) c["counts"][k] = v;
    c["shots"] = rec.shots;
    c["split"] = rec.split;
    j["circuits"].push_back(std::move(c));
  }
  return j;
}

inline CircuitDataset dataset_from_json(const nlohmann::json& j) {
  CircuitDataset ds;
  ds.n_qubits = j.at("meta").at("n_qubits");
  ds.n_steps = j.at("meta").at("n_steps");
  ds.shots_default = j.at("meta").at("shots_default");
  ds.seed = j.at("meta").at("seed");
  for (const auto& c : j.at("circuits")) {
    CircuitRecord rec;
    rec.circuit.n_qubits = ds.n_qubits;
    rec.circuit.n_steps = ds.n_steps;
    for (const auto& layer : c.at("gates")) {
      std::vector<GateSpec> l;
      for (const auto& g : layer) l.push_back(gate_from_json(g));
      rec.circuit.gates.push_back(std::move(l));
    }
    for (const auto& b : c.at("basis")) rec.circuit.basis += b.get<std::string>();
    for (auto it = c.at("counts").begin(); it != c.at("counts").end(); ++it)
      rec.counts[it.key()] = it.value().get<std::uint64_t>();
    rec.shots = c.at("shots");
    rec.split = c.at("split");
    rec.circuit.validate();
    ds.circuits.push_back(std::move(rec));
  }
  return ds;
}

inline void save_dataset(const CircuitDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
  f << dataset_to_json(ds).dump();
}

inline CircuitDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  nlohmann::json j;
  f >> j;
  return dataset_from_json(j);
}

}  // namespace pttkit
