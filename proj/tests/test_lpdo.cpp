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

#include <filesystem>

#include "pttkit/lpdo.hpp"

using namespace pttkit;

namespace {

GateSet encoded_gateset(const NoiseModel& m, const ControlDims& cd = {}) {
  return make_gateset(lpdo_from_model(m), cd, 0.0, 0);
}

void set_pulse(GateSet& gs, const ComplexTensor& p2x2) {
  for (std::size_t q = 0; q < gs.n_qubits; ++q) {
    auto& p = gs.pulse[q];
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) p.at({a, b, 0, 0}) = p2x2[a * 2 + b];
  }
  gs.refresh_conj();
}

ChoiState appendix_a_process() {
  // 0.5 (2 Phi+)(x)(2 Phi+) + 0.5 (2 Psi+)(x)(2 Psi+) (x) |0><0|
  ChoiState bell2 = choi_of_unitary(identity_tensor(2), "o2:q0", "i2:q0");
  ChoiState bell1 = choi_of_unitary(identity_tensor(2), "o1:q0", "i1:q0");
  ChoiState xbell2 = choi_of_unitary(pauli_1q('X'), "o2:q0", "i2:q0");
  ChoiState xbell1 = choi_of_unitary(pauli_1q('X'), "o1:q0", "i1:q0");
  ComplexTensor rho0 = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  ComplexTensor a = kron(kron(bell2.matrix, bell1.matrix), rho0);
  ComplexTensor b = kron(kron(xbell2.matrix, xbell1.matrix), rho0);
  ChoiState out;
  out.legs = {{"o2:q0", 2}, {"i2:q0", 2}, {"o1:q0", 2}, {"i1:q0", 2}, {"o0:q0", 2}};
  out.matrix = ComplexTensor({32, 32}, {"r", "c"});
  for (std::size_t i = 0; i < 32 * 32; ++i) out.matrix[i] = 0.5 * a[i] + 0.5 * b[i];
  return out;
}

}  // namespace

TEST(InitLpdo, IdealIsBellChainTimesGround) {
  ProcessTensorLPDO pt = init_process_lpdo(1, 2, 1, 1, 1, 0.0, 3);
  ChoiState ups = lpdo_to_dense(pt);
  // expected (2 Phi+)(x)(2 Phi+)(x)|0><0|
  ChoiState b2 = choi_of_unitary(identity_tensor(2), "a", "b");
  ComplexTensor expect = kron(kron(b2.matrix, b2.matrix), ComplexTensor::matrix(2, 2, {1, 0, 0, 0}));
  ASSERT_EQ(ups.matrix.numel(), expect.numel());
  for (std::size_t i = 0; i < expect.numel(); ++i)
    EXPECT_NEAR(std::abs(ups.matrix[i] - expect[i]), 0, 1e-12);
}

TEST(InitLpdo, IdealPredictsIdentityCircuit) {
  GateSet gs = ideal_gateset(1, 3);
  CircuitSpec c;
  c.n_qubits = 1;
  c.n_steps = 3;
  c.gates.assign(3, {GateSpec::clifford(0)});
  c.basis = "Z";
  auto p = predict_distribution(gs, c);
  EXPECT_NEAR(p[0], 1.0, 1e-10);
  EXPECT_NEAR(p[1], 0.0, 1e-10);
}

TEST(InitLpdo, PerturbedStaysNearIdeal) {
  ProcessTensorLPDO pt = init_process_lpdo(1, 2, 2, 1, 2, 0.1, 11);
  ChoiState ups = lpdo_to_dense(pt);
  ProcessTensorLPDO ideal = init_process_lpdo(1, 2, 1, 1, 1, 0.0, 0);
  ChoiState ups0 = lpdo_to_dense(ideal);
  ComplexTensor a = ups.matrix.scaled(1.0 / ups.trace().real());
  ComplexTensor b = ups0.matrix.scaled(1.0 / ups0.trace().real());
  EXPECT_LT(trace_distance(a, b, 1e-7), 0.5);
}

TEST(InitLpdo, PsdByConstruction) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ProcessTensorLPDO pt = init_process_lpdo(1, 2, 2, 1, 2, 0.5, seed);
    ChoiState ups = lpdo_to_dense(pt);
    auto e = hermitian_eig(ups.matrix, 1e-7);
    EXPECT_GT(e.values.front(), -1e-10);
  }
}

TEST(InitLpdo, TraceMatchesAllIdentityExpectation) {
  ProcessTensorLPDO pt = init_process_lpdo(1, 2, 2, 1, 2, 0.3, 7);
  ChoiState ups = lpdo_to_dense(pt);
  GateSet gs = make_gateset(pt, {}, 0.0, 0);
  ModelEvaluator ev(gs);
  PauliConstraint all_id;
  all_id.labels.assign(5, "I");
  BuiltNetwork b;
  ev.build_process_expectation(b);
  ev.set_constraint(b, all_id);
  cplx e;
  ev.forward(b, &e);
  EXPECT_NEAR(e.real(), ups.trace().real(), 1e-9 * std::max(1.0, std::abs(ups.trace().real())));
}

TEST(Encoding, DenseMatchesLinkProductPath) {
  for (int t = 0; t < 4; ++t) {
    const std::size_t n = t < 2 ? 1 : 2, k = 2;
    NoiseModel m = build_exchange_bath(n, k, JRanges::isotropic(0.2, 0.9), 1.0, 40 + t);
    ChoiState direct = process_choi(m);
    ChoiState viaLpdo = lpdo_to_dense(lpdo_from_model(m));
    ASSERT_EQ(direct.matrix.numel(), viaLpdo.matrix.numel());
    for (std::size_t i = 0; i < direct.matrix.numel(); ++i)
      EXPECT_NEAR(std::abs(direct.matrix[i] - viaLpdo.matrix[i]), 0, 1e-10);
  }
}

TEST(Predict, MatchesNoiselessSimulatorOnCliffords) {
  Rng rng(3);
  GateSet gs1 = ideal_gateset(1, 3);
  GateSet gs2 = ideal_gateset(2, 2);
  ModelEvaluator e1(gs1), e2(gs2);
  for (int t = 0; t < 30; ++t) {
    const bool two = t % 3 == 0;
    GateSet& gs = two ? gs2 : gs1;
    Rng gr = rng.stream("c", t);
    CircuitSpec c = t % 2 ? random_clifford_circuit(gs.n_qubits, gs.n_steps, gr)
                          : random_u3_circuit(gs.n_qubits, gs.n_steps, gr);
    auto pm = predict_distribution(gs, c, two ? &e2 : &e1);
    auto ps = run_circuit_pure(c);
    for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_NEAR(pm[i], ps[i], 1e-9);
  }
}

TEST(Predict, MatchesNoisySimulatorWithEncodedProcess) {
  Rng rng(5);
  for (int t = 0; t < 6; ++t) {
    const std::size_t n = t < 4 ? 1 : 2, k = t < 4 ? 3 : 2;
    NoiseModel m = build_exchange_bath(n, k, JRanges::isotropic(0.2, 0.8), 1.0, 60 + t);
    m.control = ControlProfile::coherent_offset(kPi / 16);
    GateSet gs = encoded_gateset(m);
    set_pulse(gs, rx(kPi / 2 + kPi / 16));
    ModelEvaluator ev(gs);
    for (int cidx = 0; cidx < 4; ++cidx) {
      Rng gr = rng.stream("cc", t * 10 + cidx);
      CircuitSpec c = random_clifford_circuit(n, k, gr);
      auto pm = predict_distribution(gs, c, &ev);
      auto ps = run_circuit_exact(m, c);
      for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_NEAR(pm[i], ps[i], 1e-10);
    }
  }
}

TEST(Predict, OutcomeSumIsOne) {
  NoiseModel m = build_exchange_bath(2, 2, JRanges::isotropic(0.2, 0.6), 1.0, 19);
  GateSet gs = encoded_gateset(m);
  Rng rng(77);
  for (int t = 0; t < 5; ++t) {
    Rng gr = rng.stream("c", t);
    CircuitSpec c = random_u3_circuit(2, 2, gr);
    auto p = predict_distribution(gs, c);
    double s = 0;
    for (double v : p) s += v;
    EXPECT_NEAR(s, 1.0, 1e-8);
  }
}

// Eq. 5 oracle: exactly-encoded processes match the dense Born rule.
TEST(Predict, MatchesDenseBornRule) {
  Rng rng(8);
  for (int t = 0; t < 6; ++t) {
    const std::size_t n = t < 4 ? 1 : 2, k = t % 2 + 1;
    NoiseModel m = build_exchange_bath(n, k, JRanges::isotropic(0.1, 1.0), 1.0, 90 + t);
    GateSet gs = encoded_gateset(m);
    ChoiState ups = process_choi(m);
    ModelEvaluator ev(gs);
    for (int cidx = 0; cidx < 3; ++cidx) {
      Rng gr = rng.stream("c", t * 10 + cidx);
      CircuitSpec c = random_clifford_circuit(n, k, gr);
      auto pm = predict_distribution(gs, c, &ev);
      for (std::size_t x = 0; x < pm.size(); ++x) {
        const double pd = born_probability_dense(ups, m, c, outcome_string(x, n));
        EXPECT_NEAR(pm[x], pd, 1e-10);
      }
    }
  }
}

TEST(Predict, QuadraticInEachSite) {
  GateSet gs = ideal_gateset(1, 2);
  Rng rng(4);
  CircuitSpec c = random_clifford_circuit(1, 2, rng);
  auto p0 = predict_distribution(gs, c);
  // double one site: every probability scales by exactly 4
  auto& site = gs.process.site(0, 1);
  for (std::size_t i = 0; i < site.numel(); ++i) site[i] *= 2.0;
  gs.refresh_conj();
  auto p1 = predict_distribution(gs, c);
  for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_NEAR(p1[i], 4.0 * p0[i], 1e-10);
}

TEST(Constraints, ConstructiveProperty) {
  Rng rng(15);
  auto cs = sample_causality_constraints(2, 3, 200, rng);
  for (const auto& pc : cs) {
    ASSERT_EQ(pc.labels.size(), 7u);
    // find j: the latest slot with a non-identity i label
    int j = -1;
    for (int jj = 3; jj >= 1 && j < 0; --jj)
      if (pc.labels[leg_slot_i(3, jj)] != "II") j = jj;
    ASSERT_GE(j, 1);
    EXPECT_EQ(pc.labels[leg_slot_o(3, j)], "II");
    for (int m = j + 1; m <= 3; ++m) {
      EXPECT_EQ(pc.labels[leg_slot_o(3, m)], "II");
      EXPECT_EQ(pc.labels[leg_slot_i(3, m)], "II");
    }
  }
}

TEST(Constraints, EnumerationAtKOne) {
  Rng rng(16);
  auto cs = sample_causality_constraints(1, 1, 10000, rng);
  std::map<std::string, int> seen;
  for (const auto& pc : cs) {
    EXPECT_EQ(pc.labels[0], "I");  // o_1 identity always
    seen[pc.labels[0] + pc.labels[1] + pc.labels[2]]++;
  }
  // label space {I} x {X,Y,Z} x {I,X,Y,Z}: all 12 appear
  EXPECT_EQ(seen.size(), 12u);
}

TEST(Constraints, IdealProcessHasZeroExpectations) {
  GateSet gs = ideal_gateset(1, 2);
  ModelEvaluator ev(gs);
  Rng rng(21);
  auto cs = sample_causality_constraints(1, 2, 100, rng);
  BuiltNetwork b;
  ev.build_process_expectation(b);
  for (const auto& pc : cs) {
    ev.set_constraint(b, pc);
    cplx e;
    ev.forward(b, &e);
    EXPECT_LT(std::abs(e), 1e-12);
  }
}

TEST(Penalty, CausalityMatchesDenseAndDescends) {
  GateSet gs = ideal_gateset(1, 2);
  // bias the i_1 leg of step-1 site
  auto& s = gs.process.site(0, 1);
  s.at({0, 0, 0, 0, 0, 0, 0}) = 1.3;
  s.at({1, 0, 0, 0, 0, 0, 0}) = 0.2;
  gs.refresh_conj();
  ModelEvaluator ev(gs);
  Rng rng(31);
  auto cs = sample_causality_constraints(1, 2, 50, rng);
  GradAccum acc;
  acc.init(gs);
  const double pen = causality_penalty(gs, cs, ev, 1.0, &acc);
  EXPECT_GT(pen, 1e-6);

  // dense oracle for each expectation
  ChoiState ups = lpdo_to_dense(gs.process);
  double pen_dense = 0;
  for (const auto& pc : cs) {
    ComplexTensor p = pauli(pc.labels[0]);
    for (std::size_t l = 1; l < pc.labels.size(); ++l) p = kron(p, pauli(pc.labels[l]));
    cplx tr = 0;
    const std::size_t D = ups.matrix.extent(0);
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t c2 = 0; c2 < D; ++c2) tr += p[r * D + c2] * ups.matrix[c2 * D + r];
    pen_dense += tr.real() * tr.real();
  }
  EXPECT_NEAR(pen, pen_dense, 1e-10 * std::max(1.0, pen_dense));

  // descent along the negative gradient
  const double gn = acc.norm(gs);
  ASSERT_GT(gn, 0);
  const double eta = 1e-3 / gn;
  for (std::size_t i = 0; i < gs.leaf_count(); ++i) {
    if (!gs.leaf_is_learnable(i)) continue;
    auto& t = gs.leaf(i);
    for (std::size_t e2 = 0; e2 < t.numel(); ++e2) t[e2] -= eta * acc.g[i][e2];
  }
  gs.refresh_conj();
  const double pen2 = causality_penalty(gs, cs, ev, 1.0, nullptr);
  EXPECT_LT(pen2, pen);
}

TEST(Penalty, TpZeroForIdealAndPositiveForRescaledPovm) {
  GateSet gs = ideal_gateset(1, 2);
  ModelEvaluator ev(gs);
  Rng rng(41);
  auto cs = sample_tester_constraints(1, 2, 60, rng);
  Rng gr(2);
  CircuitSpec c = random_clifford_circuit(1, 2, gr);
  std::vector<const CircuitSpec*> circs = {&c};
  const double pen0 = tp_penalty(gs, circs, cs, ev, 1.0, nullptr);
  EXPECT_LT(pen0, 1e-18);

  // rescale both effects by 0.9: completeness violated
  for (std::size_t i = 0; i < gs.povm[0].numel(); ++i) gs.povm[0][i] *= std::sqrt(0.9);
  gs.refresh_conj();
  const double pen1 = tp_penalty(gs, circs, cs, ev, 1.0, nullptr);
  EXPECT_GT(pen1, 1e-4);

  // relabeling outcomes leaves the outcome-summed penalty unchanged
  auto& m = gs.povm[0];
  for (std::size_t d = 0; d < m.extent(1); ++d)
    for (std::size_t g = 0; g < m.extent(2); ++g)
      for (std::size_t p = 0; p < 2; ++p) std::swap(m.at({0, d, g, p}), m.at({1, d, g, p}));
  gs.refresh_conj();
  const double pen2 = tp_penalty(gs, circs, cs, ev, 1.0, nullptr);
  EXPECT_NEAR(pen1, pen2, 1e-12 * std::max(1.0, pen1));
}

TEST(Marginal, IdentityProcessGivesProductOfIdentityChannels) {
  ProcessTensorLPDO pt = init_process_lpdo(1, 2, 1, 1, 1, 0.0, 0);
  ChoiState ups = lpdo_to_dense(pt);
  ChoiState m = conditional_marginal(ups, 1, 2, {0, 1}, {0, 2});
  ChoiState b1 = choi_of_unitary(identity_tensor(2), "o1", "i1");
  ChoiState b2 = choi_of_unitary(identity_tensor(2), "o2", "i2");
  ComplexTensor expect = kron(b1.matrix, b2.matrix);
  EXPECT_NEAR(m.trace().real(), 4.0, 1e-9);
  for (std::size_t i = 0; i < expect.numel(); ++i)
    EXPECT_NEAR(std::abs(m.matrix[i] - expect[i]), 0, 1e-9);
}

TEST(Marginal, AppendixACorrelatedProcess) {
  ChoiState ups = appendix_a_process();
  ChoiState m = conditional_marginal(ups, 1, 2, {0, 1}, {0, 2});
  // expected: the rank-2 correlated mixture itself, legs (o1,i1,o2,i2)
  ChoiState b1 = choi_of_unitary(identity_tensor(2), "o", "i");
  ChoiState x1 = choi_of_unitary(pauli_1q('X'), "o", "i");
  ComplexTensor expect({16, 16}, {"r", "c"});
  ComplexTensor e1 = kron(b1.matrix, b1.matrix);
  ComplexTensor e2 = kron(x1.matrix, x1.matrix);
  for (std::size_t i = 0; i < 256; ++i) expect[i] = 0.5 * e1[i] + 0.5 * e2[i];
  EXPECT_NEAR(m.trace().real(), 4.0, 1e-9);
  for (std::size_t i = 0; i < 256; ++i)
    EXPECT_NEAR(std::abs(m.matrix[i] - expect[i]), 0, 1e-9);
}

TEST(Checkpoint, TensorRecordRoundTrip) {
  Rng rng(9);
  ComplexTensor t({2, 3}, {"a", "b"});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.cgaussian();
  const auto path = std::filesystem::temp_directory_path() / "pttkit_rec.bin";
  {
    std::ofstream f(path, std::ios::binary);
    write_tensor_record(f, "test", t);
  }
  std::ifstream f(path, std::ios::binary);
  auto [name, t2] = read_tensor_record(f);
  EXPECT_EQ(name, "test");
  EXPECT_EQ(t2.shape(), t.shape());
  EXPECT_EQ(t2.axis_labels(), t.axis_labels());
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(t[i], t2[i]);
}

TEST(Checkpoint, GateSetRoundTripBitExact) {
  NoiseModel m = build_exchange_bath(1, 2, JRanges::isotropic(0.2, 0.7), 1.0, 5);
  GateSet gs = make_gateset(lpdo_from_model(m), {2, 2}, 0.01, 3);
  const auto path = std::filesystem::temp_directory_path() / "pttkit_model.bin";
  save_gateset(gs, path.string());
  GateSet gs2 = load_gateset(path.string());
  ASSERT_EQ(gs2.leaf_count(), gs.leaf_count());
  for (std::size_t i = 0; i < gs.leaf_count(); ++i) {
    const auto& a = gs.leaf(i);
    const auto& b = gs2.leaf(i);
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t e = 0; e < a.numel(); ++e) EXPECT_EQ(a[e], b[e]);
  }
  // predictions agree exactly
  Rng gr(1);
  CircuitSpec c = random_clifford_circuit(1, 2, gr);
  auto p1 = predict_distribution(gs, c);
  auto p2 = predict_distribution(gs2, c);
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i], p2[i]);
}
