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

#include <gtest/gtest.h>

#include "pttkit/estimator.hpp"

using namespace pttkit;

namespace {

std::vector<BatchItem> synthetic_batch(GateSet& gs, std::size_t n_circuits, double shots,
                                       std::uint64_t seed) {
  // counts = shots * p: the model's own exact probabilities
  std::vector<BatchItem> items;
  Rng rng(seed);
  ModelEvaluator ev(gs);
  for (std::size_t i = 0; i < n_circuits; ++i) {
    Rng gr = rng.stream("c", i);
    BatchItem it;
    it.circuit = random_clifford_circuit(gs.n_qubits, gs.n_steps, gr);
    auto p = predict_distribution(gs, it.circuit, &ev);
    it.counts.resize(p.size());
    for (std::size_t x = 0; x < p.size(); ++x) it.counts[x] = shots * p[x];
    it.shots = shots;
    items.push_back(std::move(it));
  }
  return items;
}

ObjectiveSpec make_spec(const std::vector<BatchItem>& items, double kappa,
                        std::size_t n, std::size_t k, std::size_t m_causal,
                        std::uint64_t seed) {
  ObjectiveSpec spec;
  for (const auto& it : items) spec.batch.push_back(&it);
  spec.kappa = kappa;
  if (kappa > 0) {
    spec.process_constraints =
        sample_causality_constraints(n, k, m_causal, Rng(seed).stream("pc"));
    spec.tester_constraints = sample_tester_constraints(n, k, m_causal, Rng(seed).stream("tc"));
    spec.tp_circuits = {&items.front().circuit};
  }
  return spec;
}

}  // namespace

TEST(Objective, EntropyFloorOnExactCounts) {
  GateSet gs = ideal_gateset(1, 2);
  auto items = synthetic_batch(gs, 5, 100.0, 3);
  auto spec = make_spec(items, 1.0, 1, 2, 40, 9);
  ModelEvaluator ev(gs);
  auto br = objective(gs, spec, ev);
  // cross entropy equals sum_d shots * H(p_d); penalties vanish
  double expect = 0;
  for (const auto& it : items)
    for (double c : it.counts)
      if (c > 1e-12) expect -= c * std::log(c / it.shots);
  EXPECT_NEAR(br.cross_entropy, expect, 1e-8 * std::max(1.0, expect));
  EXPECT_LT(br.causality, 1e-18);
  EXPECT_LT(br.tp, 1e-18);
}

TEST(Objective, KappaZeroRemovesPenalties) {
  NoiseModel m = build_exchange_bath(1, 2, JRanges::isotropic(0.2, 0.6), 1.0, 5);
  GateSet gs = make_gateset(init_process_lpdo(1, 2, 2, 1, 2, 0.1, 3), {}, 0.0, 0);
  auto items = synthetic_batch(gs, 4, 64.0, 8);
  auto spec0 = make_spec(items, 0.0, 1, 2, 40, 9);
  auto spec1 = make_spec(items, 1.0, 1, 2, 40, 9);
  ModelEvaluator ev(gs);
  auto b0 = objective(gs, spec0, ev);
  auto b1 = objective(gs, spec1, ev);
  EXPECT_EQ(b0.causality, 0.0);
  EXPECT_EQ(b0.tp, 0.0);
  EXPECT_NEAR(b0.total, b0.cross_entropy, 0.0);
  EXPECT_GT(b1.causality + b1.tp, 0.0);
  EXPECT_NEAR(b0.cross_entropy, b1.cross_entropy, 1e-12);
}

// Slow dense re-implementation of the data term on a random instance.
TEST(Objective, MatchesDenseReimplementation) {
  NoiseModel m = build_exchange_bath(1, 2, JRanges::isotropic(0.3, 0.8), 1.0, 21);
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  // perturb the pulse so control is nontrivial but still chi_gamma = 1
  gs.pulse[0].at({0, 0, 0, 0}) += cplx(0.02, -0.01);
  gs.pulse[0].at({1, 0, 0, 0}) += cplx(-0.015, 0.03);
  gs.refresh_conj();

  auto items = synthetic_batch(gs, 6, 128.0, 4);
  // re-prediction through dense link products
  ChoiState ups = lpdo_to_dense(gs.process);
  auto dense_p = [&](const CircuitSpec& c, std::size_t x) {
    ComplexTensor pulse({2, 2}, {"r", "c"});
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) pulse[a * 2 + b] = gs.pulse[0].at({a, b, 0, 0});
    auto gate_u = [&](const ZyzAngles& ang) {
      return matmul(rz(ang.phi + 3 * kPi),
                    matmul(pulse, matmul(rz(ang.theta + kPi), matmul(pulse, rz(ang.lam)))));
    };
    ChoiState acc = ups;
    for (std::size_t j = 0; j < c.n_steps; ++j) {
      ChoiState g = choi_of_unitary(gate_u(gate_angles(c.gates[j][0])),
                                    "i" + std::to_string(j + 1) + ":q0",
                                    "o" + std::to_string(j) + ":q0");
      acc = link_product(acc, g, {g.legs[0].name, g.legs[1].name});
    }
    ComplexTensor eff = computational_povm().effects[x];
    ComplexTensor vb = basis_change(c.basis[0]);
    ComplexTensor veff =
        c.basis[0] == 'Z'
            ? eff
            : matmul(dagger(gate_u(zyz_angles(vb))), matmul(eff, gate_u(zyz_angles(vb))));
    ChoiState meas;
    meas.legs = {{"o" + std::to_string(c.n_steps) + ":q0", 2}};
    meas.matrix = veff.permuted({1, 0}).reshaped({2, 2}, {"r", "c"});
    acc = link_product(acc, meas, {meas.legs[0].name});
    return acc.matrix[0].real();
  };

  double dense_ce = 0;
  for (const auto& it : items) {
    double norm = 0;
    std::vector<double> p(2);
    for (std::size_t x = 0; x < 2; ++x) {
      p[x] = dense_p(it.circuit, x);
      norm += p[x];
    }
    for (std::size_t x = 0; x < 2; ++x)
      if (it.counts[x] > 0) dense_ce -= it.counts[x] * std::log(std::max(p[x] / norm, 1e-12));
  }

  auto spec = make_spec(items, 0.0, 1, 2, 0, 0);
  ModelEvaluator ev(gs);
  auto br = objective(gs, spec, ev);
  EXPECT_NEAR(br.cross_entropy, dense_ce, 1e-9 * std::max(1.0, std::abs(dense_ce)));
}

TEST(Gradient, FiniteDifferenceAgreement) {
  // (n=1, k=2, chi=1) and (n=1, k=3, chi_nu=2, chi_gamma=2)
  struct Case {
    std::size_t n, k, chi_nu, chi_gamma;
  };
  for (const Case cs : {Case{1, 2, 1, 1}, Case{1, 3, 2, 2}}) {
    // generic parameter values: sizeable perturbations keep every gradient
    // entry well above the finite-difference noise floor
    ProcessTensorLPDO pt =
        init_process_lpdo(cs.n, cs.k, cs.chi_nu, 1, cs.chi_nu, 0.3, 5 + cs.k);
    GateSet gs = make_gateset(std::move(pt), {cs.chi_gamma, 2}, 0.2, 6);
    auto items = synthetic_batch(gs, 3, 8.0, 7);
    // make the data disagree with the model so gradients are generic
    for (auto& it : items) {
      it.counts[0] += 2.0;
      it.counts[1] += 1.0;
      it.shots += 3.0;
    }
    auto spec = make_spec(items, 1.0, cs.n, cs.k, 20, 11);
    auto rep = gradient_check(gs, spec, 1e-6);
    EXPECT_GT(rep.params_checked, 20u);
    EXPECT_LT(rep.max_rel_err, 1e-5) << "n=" << cs.n << " k=" << cs.k;
  }
}

TEST(Gradient, UntouchedParameterHasZeroGradient) {
  GateSet gs = make_gateset(init_process_lpdo(1, 2, 2, 1, 2, 0.1, 3), {}, 0.0, 0);
  // all-idle circuit with Z basis: no pulse nodes anywhere
  BatchItem it;
  it.circuit.n_qubits = 1;
  it.circuit.n_steps = 2;
  it.circuit.gates.assign(2, {GateSpec::idle()});
  it.circuit.basis = "Z";
  it.counts = {30.0, 2.0};
  it.shots = 32.0;
  ObjectiveSpec spec;
  spec.batch = {&it};
  spec.kappa = 0.0;
  ModelEvaluator ev(gs);
  GradAccum acc;
  acc.init(gs);
  objective(gs, spec, ev, &acc);
  double pulse_norm = 0;
  for (const auto& v : acc.g[gs.pulse_leaf(0)]) pulse_norm += std::norm(v);
  EXPECT_EQ(pulse_norm, 0.0);
  double proc_norm = 0;
  for (const auto& v : acc.g[gs.proc_leaf(0, 1)]) proc_norm += std::norm(v);
  EXPECT_GT(proc_norm, 0.0);
}

TEST(Gradient, StationaryAtExactGeneratingGateset) {
  GateSet gs = make_gateset(init_process_lpdo(1, 2, 2, 1, 2, 0.2, 13), {}, 0.0, 0);
  auto items = synthetic_batch(gs, 5, 200.0, 3);
  auto spec = make_spec(items, 0.0, 1, 2, 0, 0);
  ModelEvaluator ev(gs);
  GradAccum acc;
  acc.init(gs);
  objective(gs, spec, ev, &acc);
  EXPECT_LT(acc.norm(gs), 1e-8);
}

TEST(Gradient, FdErrorConvexInLogH) {
  GateSet gs = make_gateset(init_process_lpdo(1, 2, 1, 1, 1, 0.1, 2), {}, 0.0, 0);
  auto items = synthetic_batch(gs, 2, 40.0, 5);
  for (auto& it : items) it.counts[0] += 3.0;
  auto spec = make_spec(items, 0.0, 1, 2, 0, 0);
  double errs[3];
  int i = 0;
  for (double h : {1e-5, 1e-6, 1e-7})
    errs[i++] = gradient_check(gs, spec, h, 40).max_rel_err;
  // truncation versus round-off: the middle step size should not be the worst
  EXPECT_LE(errs[1], std::max(errs[0], errs[2]) + 1e-12);
}

TEST(Adam, FirstStepAndDeterminism) {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  std::vector<double> p = {1.0, -2.0};
  std::vector<double> g = {0.5, -0.25};
  AdamState st;
  adam_step(p, g, st, cfg);
  // first step: -lr * g/(|g| + eps') with bias correction exact at t=1
  for (int i = 0; i < 2; ++i) {
    const double expect =
        (i == 0 ? 1.0 : -2.0) - cfg.lr * g[i] / (std::sqrt(g[i] * g[i]) + cfg.eps);
    EXPECT_NEAR(p[i], expect, 1e-12);
  }
  // zero gradient from a fresh state: parameters unchanged exactly
  std::vector<double> p2 = p;
  AdamState st0;
  adam_step(p2, {0.0, 0.0}, st0, cfg);
  EXPECT_EQ(p2[0], p[0]);
  EXPECT_EQ(p2[1], p[1]);
  adam_step(p2, {0.0, 0.0}, st0, cfg);
  EXPECT_EQ(p2[0], p[0]);
  // identical runs are bit-identical
  AdamState s1, s2;
  std::vector<double> a1 = {0.3, 0.7}, a2 = {0.3, 0.7};
  for (int t = 0; t < 10; ++t) {
    std::vector<double> g2 = {0.1 * t, -0.05};
    adam_step(a1, g2, s1, cfg);
    adam_step(a2, g2, s2, cfg);
  }
  EXPECT_EQ(a1[0], a2[0]);
  EXPECT_EQ(a1[1], a2[1]);
}

TEST(Fit, RecoversCoherentErrorOnTinyInstance) {
  // 1 qubit + TLS bath, k=2, pi/16 coherent pulse error
  NoiseModel m = build_exchange_bath(1, 2, JRanges::isotropic(0.3, 0.7), 1.0, 31);
  m.control = ControlProfile::coherent_offset(kPi / 16);
  CircuitDataset ds = generate_dataset(m, 150, 40, 512, 77);

  GateSet gs = make_gateset(init_process_lpdo(1, 2, 2, 1, 2, 0.1, 5), {}, 0.0, 9);
  FitConfig cfg;
  cfg.m_batch = 150;
  cfg.m_causal = 50;
  cfg.max_iters = 800;
  cfg.val_every = 25;
  cfg.seed = 13;
  cfg.adam.lr = 1e-2;
  FitResult res = fit(ds, gs, cfg);

  std::vector<BatchItem> val;
  for (const auto& rec : ds.circuits)
    if (rec.split == "validation") val.push_back(BatchItem::from_record(rec));
  const double floor = data_entropy_per_shot(val);
  EXPECT_LT(res.best_val_ce - floor, 0.02);
  // causality expectations survive the fit
  ModelEvaluator ev(gs);
  auto cs = sample_causality_constraints(1, 2, 200, Rng(1234));
  BuiltNetwork b;
  ev.build_process_expectation(b);
  double worst = 0;
  for (const auto& pc : cs) {
    ev.set_constraint(b, pc);
    cplx e;
    ev.forward(b, &e);
    worst = std::max(worst, std::abs(e.real()));
  }
  EXPECT_LT(worst, 5e-3);
}

TEST(Fit, WorkerCountDoesNotChangeResults) {
  NoiseModel m = build_exchange_bath(1, 2, JRanges::isotropic(0.3, 0.6), 1.0, 3);
  CircuitDataset ds = generate_dataset(m, 40, 10, 128, 5);
  FitConfig cfg;
  cfg.m_batch = 40;
  cfg.m_causal = 20;
  cfg.max_iters = 30;
  cfg.val_every = 10;
  cfg.seed = 2;

  GateSet g1 = make_gateset(init_process_lpdo(1, 2, 2, 1, 2, 0.1, 4), {}, 0.0, 1);
  GateSet g2 = make_gateset(init_process_lpdo(1, 2, 2, 1, 2, 0.1, 4), {}, 0.0, 1);
  FitConfig c1 = cfg, c2 = cfg;
  c1.workers = 1;
  c2.workers = 2;
  FitResult r1 = fit(ds, g1, c1);
  FitResult r2 = fit(ds, g2, c2);
  ASSERT_EQ(r1.trace.rows.size(), r2.trace.rows.size());
  for (std::size_t i = 0; i < r1.trace.rows.size(); ++i)
    EXPECT_EQ(r1.trace.rows[i].objective, r2.trace.rows[i].objective) << "iter " << i;
  auto p1 = g1.param_vector(), p2 = g2.param_vector();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i], p2[i]);
}

TEST(Fit, OrderingInvarianceInDistribution) {
  // shuffled train order changes nothing but the circuit identities seen
  // per minibatch; final validation CE should overlap across seeds
  NoiseModel m = build_exchange_bath(1, 1, JRanges::isotropic(0.2, 0.5), 1.0, 9);
  CircuitDataset ds = generate_dataset(m, 60, 15, 256, 21);
  CircuitDataset shuffled = ds;
  std::reverse(shuffled.circuits.begin(), shuffled.circuits.end());

  auto run = [&](const CircuitDataset& d, std::uint64_t seed) {
    GateSet gs = make_gateset(init_process_lpdo(1, 1, 2, 1, 2, 0.1, seed), {}, 0.0, seed);
    FitConfig cfg;
    cfg.m_batch = 30;
    cfg.m_causal = 20;
    cfg.max_iters = 120;
    cfg.val_every = 20;
    cfg.seed = seed;
    return fit(d, gs, cfg).best_val_ce;
  };
  std::vector<double> a, b;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    a.push_back(run(ds, s));
    b.push_back(run(shuffled, s));
  }
  auto stats = [](const std::vector<double>& v) {
    double mean = 0, var = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / (v.size() - 1) / v.size())};
  };
  auto [ma, sa] = stats(a);
  auto [mb, sb] = stats(b);
  EXPECT_LT(std::abs(ma - mb), 2.0 * std::sqrt(sa * sa + sb * sb) + 1e-4);
}
