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

#include "pttkit/analysis.hpp"

using namespace pttkit;

namespace {

ComplexTensor random_su4(Rng& rng) {
  EMat m(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = cplx(rng.gaussian(), rng.gaussian());
  Eigen::HouseholderQR<EMat> qr(m);
  EMat q = qr.householderQ();
  return from_eigen(q);
}

NoiseModel cnot_process(std::size_t k = 3) {
  NoiseModel m;
  m.n_system = 2;
  m.env_dims = {1};
  for (std::size_t j = 0; j < k; ++j) m.step_unitaries.push_back(cnot_matrix());
  ComplexTensor rho0({4, 4}, {"r", "c"});
  rho0[0] = 1.0;
  m.initial_se_state = rho0;
  return m;
}

ChoiState appendix_a_process() {
  ChoiState bell2 = choi_of_unitary(identity_tensor(2), "o2:q0", "i2:q0");
  ChoiState xbell2 = choi_of_unitary(pauli_1q('X'), "o2:q0", "i2:q0");
  ComplexTensor rho0 = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  ComplexTensor a = kron(kron(bell2.matrix, bell2.matrix), rho0);
  ComplexTensor b = kron(kron(xbell2.matrix, xbell2.matrix), rho0);
  ChoiState out;
  out.legs = {{"o2:q0", 2}, {"i2:q0", 2}, {"o1:q0", 2}, {"i1:q0", 2}, {"o0:q0", 2}};
  out.matrix = ComplexTensor({32, 32}, {"r", "c"});
  for (std::size_t i = 0; i < 32 * 32; ++i) out.matrix[i] = 0.5 * a[i] + 0.5 * b[i];
  return out;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(Report, PerfectModelInfiniteShots) {
  GateSet gs = ideal_gateset(1, 2);
  ModelEvaluator ev(gs);
  Rng rng(3);
  std::vector<BatchItem> items;
  for (int i = 0; i < 10; ++i) {
    BatchItem it;
    Rng gr = rng.stream("c", i);
    it.circuit = random_u3_circuit(1, 2, gr);
    auto p = predict_distribution(gs, it.circuit, &ev);
    it.counts = {1e6 * p[0], 1e6 * p[1]};
    it.shots = 1e6;
    items.push_back(std::move(it));
  }
  auto rep = reconstruction_report(gs, items);
  EXPECT_LT(rep.median, 1e-9);
  EXPECT_LT(rep.q3, 1e-9);
}

TEST(Report, ShotNoiseScaling) {
  GateSet gs = ideal_gateset(1, 2);
  ModelEvaluator ev(gs);
  Rng rng(5);
  std::vector<double> medians;
  for (std::uint64_t shots : {256u, 1024u, 4096u}) {
    std::vector<BatchItem> items;
    for (int i = 0; i < 40; ++i) {
      BatchItem it;
      Rng gr = rng.stream("c", i);
      it.circuit = random_u3_circuit(1, 2, gr);
      auto p = predict_distribution(gs, it.circuit, &ev);
      auto counts = multinomial_sample(p, shots, rng.stream("s", shots, i));
      it.counts = {double(counts[0]), double(counts[1])};
      it.shots = double(shots);
      items.push_back(std::move(it));
    }
    medians.push_back(reconstruction_report(gs, items).median);
  }
  // ~ 1/sqrt(shots): quadrupling the shots roughly halves the median
  EXPECT_LT(medians[1], medians[0] * 0.75);
  EXPECT_LT(medians[2], medians[1] * 0.75);
  // a deliberately wrong model is far off the noise floor
  GateSet wrong = ideal_gateset(1, 2);
  auto& site = wrong.process.site(0, 1);
  site.at({0, 0, 0, 0, 0, 0, 0}) = 0.0;  // kills the identity component: ~X-type process
  site.at({0, 1, 0, 0, 0, 0, 0}) = 1.0;
  site.at({1, 0, 0, 0, 0, 0, 0}) = 1.0;
  site.at({1, 1, 0, 0, 0, 0, 0}) = 0.0;
  wrong.refresh_conj();
  std::vector<BatchItem> items;
  for (int i = 0; i < 20; ++i) {
    BatchItem it;
    Rng gr = rng.stream("c", i);
    it.circuit = random_u3_circuit(1, 2, gr);
    auto p = predict_distribution(gs, it.circuit, &ev);
    it.counts = {4096 * p[0], 4096 * p[1]};
    it.shots = 4096;
    items.push_back(std::move(it));
  }
  EXPECT_GT(reconstruction_report(wrong, items).median, 0.1);
}

TEST(MutualInformation, IdentityProcessVanishes) {
  ProcessTensorLPDO pt = init_process_lpdo(1, 2, 1, 1, 1, 0.0, 0);
  ChoiState ups = lpdo_to_dense(pt);
  MIMap map = mutual_information_map(ups, 1, 2);
  for (double v : map.entries) EXPECT_LT(v, 1e-9);
}

TEST(MutualInformation, AppendixACorrelatedProcess) {
  ChoiState ups = appendix_a_process();
  const double mi = mutual_information_pair(ups, 1, 2, {0, 1}, {0, 2});
  EXPECT_NEAR(mi, std::log(2.0), 1e-6);
  // symmetry under argument swap
  const double mi2 = mutual_information_pair(ups, 1, 2, {0, 2}, {0, 1});
  EXPECT_NEAR(mi, mi2, 1e-10);
}

TEST(Kak, DecompositionRebuildsInput) {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    ComplexTensor u = random_su4(rng);
    KakResult k = kak_decompose(u);
    ComplexTensor h({4, 4}, {"r", "c"});
    ComplexTensor xx = pauli("XX"), yy = pauli("YY"), zz = pauli("ZZ");
    for (std::size_t i = 0; i < 16; ++i) h[i] = k.a * xx[i] + k.b * yy[i] + k.c * zz[i];
    ComplexTensor can = expm_hermitian(h, cplx(0, 1));
    ComplexTensor rebuilt = matmul(k.k1, matmul(can, k.k2)).scaled(k.phase);
    for (std::size_t i = 0; i < 16; ++i)
      EXPECT_NEAR(std::abs(rebuilt[i] - u[i]), 0.0, 1e-10) << "target " << t;
    // locals factor into single-qubit unitaries
    auto [f1, f2] = kron_factor_2q(k.k1);
    EXPECT_TRUE(phase_equal(kron(f1, f2), k.k1, 1e-9));
  }
}

TEST(Kak, TemplateSolveIsExact) {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    ComplexTensor u = random_su4(rng);
    auto angles = solve_template_angles(u, 3);
    ComplexTensor rebuilt = su4_template_matrix(angles);
    EXPECT_TRUE(phase_equal(rebuilt, u, 1e-10)) << "target " << t;
  }
  // alpha_3 = 0: the 3-CNOT template decomposes any SU(4) exactly
  ComplexTensor u = random_su4(rng);
  auto angles = solve_template_angles(u, 5);
  ComplexTensor rebuilt = su4_template_matrix(angles);
  cplx tr = trace_of(matmul(dagger(u), rebuilt));
  cplx phase = tr / std::abs(tr);
  double alpha3 = 0;
  for (std::size_t i = 0; i < 16; ++i)
    alpha3 = std::max(alpha3, std::abs(rebuilt[i] - phase * u[i]));
  EXPECT_LT(alpha3, 1e-9);
}

TEST(Su4, NoiselessNaiveAnglesAreExact) {
  NoiseModel m = cnot_process();
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  Rng rng(13);
  for (int t = 0; t < 3; ++t) {
    ComplexTensor target = random_su4(rng);
    TemplateChannelNet net(gs, 3, {true, true, true, true});
    const ComplexTensor w = choi_of_unitary(target).matrix;
    auto angles = solve_template_angles(target, 7);
    const double err = 1.0 - net.weighted_overlap(angles, w, nullptr) / 16.0;
    EXPECT_LT(std::abs(err), 1e-9);
  }
}

TEST(Su4, NoiselessOptimiserReachesSmallError) {
  NoiseModel m = cnot_process();
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  Rng rng(17);
  Su4Options opts;
  opts.iters = 150;
  opts.random_starts = 1;
  for (int t = 0; t < 5; ++t) {
    ComplexTensor target = random_su4(rng);
    auto res = optimize_su4(gs, target, opts);
    EXPECT_LT(res.achieved, 1e-3) << "target " << t;
    EXPECT_LE(res.achieved, res.naive + 1e-12);
  }
}

TEST(Su4, CoherentNoiseOptimisedBeatsNaive) {
  NoiseModel m = cnot_process();
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  // pi/16 coherent pulse error on both qubits
  for (std::size_t q = 0; q < 2; ++q) {
    auto& p = gs.pulse[q];
    ComplexTensor noisy = rx(kPi / 2 + kPi / 16);
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) p.at({a, b, 0, 0}) = noisy[a * 2 + b];
  }
  gs.refresh_conj();
  Rng rng(19);
  Su4Options opts;
  opts.iters = 250;
  opts.random_starts = 1;
  int improved = 0;
  const int n_targets = 10;
  for (int t = 0; t < n_targets; ++t) {
    ComplexTensor target = random_su4(rng);
    auto res = optimize_su4(gs, target, opts);
    EXPECT_GT(res.naive, 1e-4);  // the noise actually hurts the naive angles
    if (res.achieved < res.naive) ++improved;
  }
  EXPECT_GE(improved, 9);
}

TEST(Su4, EpsilonMonotoneUnderDepolarising) {
  // channel-level check: a fixed random template, depolarising after each
  // CNOT; the noisy-vs-ideal distance grows with the CNOT count
  Rng rng(23);
  const double lam = 0.05;
  ComplexTensor dep({16, 16}, {"r", "c"});
  {
    ComplexTensor id = identity_tensor(4);
    ComplexTensor s_id = superop_of_unitary(id);
    // D(rho) = (1-lam) rho + lam I/4 Tr[rho]
    for (std::size_t i = 0; i < 256; ++i) dep[i] = (1 - lam) * s_id[i];
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b)
        dep[(a * 4 + a) * 16 + (b * 4 + b)] += lam / 4.0;
  }
  ComplexTensor cnot_s = superop_of_unitary(cnot_matrix());
  std::vector<double> eps(4, 0.0);
  for (int count = 0; count <= 3; ++count) {
    ComplexTensor ideal = superop_of_unitary(identity_tensor(4));
    ComplexTensor noisy = ideal;
    for (int c2 = 0; c2 < count; ++c2) {
      ComplexTensor local = superop_of_unitary(kron(rx(rng.uniform(0, kPi)), rz(0.3)));
      ideal = matmul(cnot_s, matmul(local, ideal));
      noisy = matmul(dep, matmul(cnot_s, matmul(local, noisy)));
    }
    ChoiState ci = superop_to_choi(ideal), cn = superop_to_choi(noisy);
    eps[count] = trace_distance(ci.matrix.scaled(0.25), cn.matrix.scaled(0.25), 1e-7);
  }
  EXPECT_LE(eps[0], eps[1] + 1e-12);
  EXPECT_LE(eps[1], eps[2] + 1e-12);
  EXPECT_LE(eps[2], eps[3] + 1e-12);
}

TEST(Rb, NoiselessSurvivalIsOne) {
  Rng rng(29);
  std::vector<ComplexTensor> sops, us;
  for (int g = 0; g < 3; ++g) {
    ComplexTensor u = random_su4(rng);
    us.push_back(u);
    sops.push_back(superop_of_unitary(u));
  }
  RbOptions opts;
  opts.n_sequences = 5;
  auto res = rb_curve_predict(sops, us, opts);
  for (double s : res.survival) EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_NEAR(res.rate_p, 1.0, 1e-9);
}

TEST(Rb, DepolarisingRateRecovered) {
  Rng rng(31);
  const double lam = 0.03;
  ComplexTensor dep({16, 16}, {"r", "c"});
  ComplexTensor s_id = superop_of_unitary(identity_tensor(4));
  for (std::size_t i = 0; i < 256; ++i) dep[i] = (1 - lam) * s_id[i];
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) dep[(a * 4 + a) * 16 + (b * 4 + b)] += lam / 4.0;
  std::vector<ComplexTensor> sops, us;
  for (int g = 0; g < 4; ++g) {
    ComplexTensor u = random_su4(rng);
    us.push_back(u);
    sops.push_back(matmul(dep, superop_of_unitary(u)));
  }
  RbOptions opts;
  opts.lengths = {1, 2, 4, 8, 16, 32, 64};
  opts.n_sequences = 8;
  auto res = rb_curve_predict(sops, us, opts);
  EXPECT_NEAR(res.rate_p, 1.0 - lam, 0.01);
}

TEST(Dd, NoiselessIdleIsOptimal) {
  NoiseModel m = noiseless_model(1, 4);
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  DDOptions opts;
  opts.iters = 40;
  opts.random_starts = 1;
  DDResult res = optimize_dd(gs, 4, opts);
  EXPECT_LT(res.idle, 1e-9);
  EXPECT_LT(res.achieved, 1e-9);
  EXPECT_LE(res.achieved, res.idle + 1e-12);
}

TEST(Dd, PureDephasingXy4Refocuses) {
  // mixed TLS + Jz-only coupling = correlated dephasing along Z
  NoiseModel m = build_exchange_bath(1, 5, JRanges::z_only(0.15, 0.45), 1.0, 41, true);
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  DDOptions opts;
  opts.iters = 120;
  opts.random_starts = 2;
  DDResult res = optimize_dd(gs, 5, opts);
  EXPECT_LT(res.xy4, 0.3 * res.idle);       // refocusing wins decisively
  EXPECT_LE(res.achieved, res.xy4 + 1e-9);  // optimiser at least ties XY4
}

TEST(Dd, HeisenbergBathOptimisedBeatsReferences) {
  NoiseModel m = build_exchange_bath(1, 5, JRanges::isotropic(0.25, 0.5), 1.0, 43);
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  DDOptions opts;
  opts.iters = 150;
  opts.random_starts = 3;
  DDResult res = optimize_dd(gs, 5, opts);
  EXPECT_LT(res.achieved, res.idle);
  EXPECT_LE(res.achieved, res.xy4 + 1e-9);
}

TEST(Dd, StateProtectionOrdering) {
  NoiseModel m = build_exchange_bath(1, 5, JRanges::isotropic(0.25, 0.5), 1.0, 43);
  GateSet gs = make_gateset(lpdo_from_model(m), {}, 0.0, 0);
  DDOptions opts;
  opts.iters = 150;
  opts.random_starts = 3;
  DDResult res = optimize_dd(gs, 5, opts);

  auto opt = dd_state_protection_eval(m, 5, res.angles, 30, 7);
  auto xy4 = dd_state_protection_eval(m, 5, xy4_angles(4), 30, 7);
  auto idle = dd_state_protection_eval(m, 5, {}, 30, 7);
  for (double d : opt) {
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0 + 1e-12);
  }
  EXPECT_LE(median_of(opt), median_of(xy4) + 1e-9);
  EXPECT_LE(median_of(xy4), median_of(idle) + 1e-9);

  // zero coupling: idle, XY4, and the sequence optimised for the clean
  // model all protect perfectly
  NoiseModel m0 = noiseless_model(1, 5);
  GateSet gs0 = make_gateset(lpdo_from_model(m0), {}, 0.0, 0);
  DDOptions opts0;
  opts0.iters = 30;
  opts0.random_starts = 0;
  DDResult res0 = optimize_dd(gs0, 5, opts0);
  for (const auto& seq :
       {dd_state_protection_eval(m0, 5, res0.angles, 10, 3),
        dd_state_protection_eval(m0, 5, xy4_angles(4), 10, 3),
        dd_state_protection_eval(m0, 5, {}, 10, 3)})
    for (double d : seq) EXPECT_LT(d, 1e-9);
}

TEST(LinearInversion, IdealAndDepolarisedGatesets) {
  ToyGateSet truth;
  truth.gate_superops = {superop_of_unitary(identity_tensor(2)),
                         superop_of_unitary(rx(kPi / 2)), superop_of_unitary(ry(kPi / 2)),
                         superop_of_unitary(rx(kPi)), superop_of_unitary(rz(kPi / 2))};
  truth.rho = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  truth.effect = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  auto res = linear_inversion_estimate(truth, {0, 1, 2, 3});
  EXPECT_LT(res.max_prediction_error, 1e-10);
  EXPECT_LT(res.condition_number, 1e8);

  // depolarised gates: still self-consistent
  const double lam = 0.1;
  ComplexTensor dep({4, 4}, {"r", "c"});
  ComplexTensor sid = superop_of_unitary(identity_tensor(2));
  for (std::size_t i = 0; i < 16; ++i) dep[i] = (1 - lam) * sid[i];
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) dep[(a * 2 + a) * 4 + (b * 2 + b)] += lam / 2.0;
  ToyGateSet noisy = truth;
  for (std::size_t g = 1; g < noisy.gate_superops.size(); ++g)
    noisy.gate_superops[g] = matmul(dep, noisy.gate_superops[g]);
  auto res2 = linear_inversion_estimate(noisy, {0, 1, 2, 3});
  EXPECT_LT(res2.max_prediction_error, 1e-10);
}

TEST(LinearInversion, GaugeTransformedTruthPredictsIdentically) {
  ToyGateSet truth;
  truth.gate_superops = {superop_of_unitary(identity_tensor(2)),
                         superop_of_unitary(rx(kPi / 2)), superop_of_unitary(ry(kPi / 2)),
                         superop_of_unitary(rx(kPi))};
  truth.rho = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  truth.effect = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  auto base = linear_inversion_estimate(truth, {0, 1, 2, 3});

  // random invertible gauge C: B -> C^-1 B C, rho -> C^-1 rho, E -> E C
  Rng rng(3);
  EMat c = EMat::Identity(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) c(i, j) += 0.2 * cplx(rng.gaussian(), rng.gaussian());
  EMat cinv = c.inverse();
  ToyGateSet gauged = truth;
  for (auto& g : gauged.gate_superops) g = from_eigen(cinv * to_eigen(g) * c);
  EVec rv(4), ev(4);
  for (int i = 0; i < 4; ++i) {
    rv(i) = truth.rho[i];
    ev(i) = truth.effect[i];
  }
  EVec rv2 = cinv * rv;
  EVec ev2 = c.transpose() * ev.conjugate();
  for (int i = 0; i < 4; ++i) {
    gauged.rho[i] = rv2(i);
    gauged.effect[i] = std::conj(ev2(i));
  }
  auto res = linear_inversion_estimate(gauged, {0, 1, 2, 3});
  EXPECT_LT(res.max_prediction_error, 1e-9);
  EXPECT_LT(std::abs(res.gates[1][5].real() - base.gates[1][5].real()), 1e-9);
}
