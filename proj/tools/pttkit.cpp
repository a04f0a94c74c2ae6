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

#include <CLI11.hpp>
#include <iostream>

#include "pttkit/analysis.hpp"

namespace pttkit {
namespace cli {

constexpr int kOk = 0, kValidationFailure = 1, kUsageError = 2;

struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& field)
      : std::runtime_error("config schema violation at field '" + field + "'") {}
};

nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  f >> j;
  return j;
}

template <typename T>
T field_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(key);
  }
}

std::size_t workers_from(std::size_t flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("PTTKIT_WORKERS")) {
    const long v = std::atol(env);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

//-------------------------------------------------------------------------
// config -> model / fit objects
//-------------------------------------------------------------------------

NoiseModel model_from_config(const nlohmann::json& cfg, std::uint64_t seed_override) {
  const std::size_t n = field_or<std::size_t>(cfg, "n_qubits", 1);
  const std::size_t k = field_or<std::size_t>(cfg, "n_steps", 2);
  const std::uint64_t seed =
      seed_override ? seed_override : field_or<std::uint64_t>(cfg, "seed", 1);
  NoiseModel m;
  const auto bath = cfg.contains("bath") ? cfg.at("bath") : nlohmann::json::object();
  const std::string kind = field_or<std::string>(bath, "kind", "exchange");
  if (kind == "none") {
    m = noiseless_model(n, k);
  } else if (kind == "exchange") {
    JRanges r;
    const auto def = std::vector<double>{0.2, 0.6};
    auto range = [&](const char* key, const std::vector<double>& fb) {
      auto v = field_or<std::vector<double>>(bath, key, fb);
      if (v.size() != 2) throw SchemaError(key);
      return std::array<double, 2>{v[0], v[1]};
    };
    const auto base = field_or<std::vector<double>>(bath, "j_range", def);
    if (base.size() != 2) throw SchemaError("j_range");
    r.jx = range("jx", base);
    r.jy = range("jy", base);
    r.jz = range("jz", base);
    if (field_or<bool>(bath, "jz_only", false)) {
      r.jx = {0, 0};
      r.jy = {0, 0};
    }
    m = build_exchange_bath(n, k, r, field_or<double>(bath, "dt", 1.0), seed,
                            field_or<bool>(bath, "env_mixed", false));
  } else {
    throw SchemaError("bath.kind");
  }
  m.seed = seed;

  const auto ctrl = cfg.contains("control") ? cfg.at("control") : nlohmann::json::object();
  const std::string profile = field_or<std::string>(ctrl, "profile", "ideal");
  if (profile == "ideal") {
    m.control = ControlProfile::ideal();
  } else if (profile == "coherent_offset") {
    m.control = ControlProfile::coherent_offset(field_or<double>(ctrl, "epsilon", kPi / 16));
  } else if (profile == "quasistatic_1f") {
    m.control = ControlProfile::quasistatic_1f(
        field_or<double>(ctrl, "alpha", 1.0), field_or<double>(ctrl, "sigma", 0.05 * kPi),
        field_or<double>(ctrl, "f_lo", 0.0), field_or<double>(ctrl, "f_hi", 0.5));
  } else if (profile == "spillage") {
    m.control = ControlProfile::spillage(field_or<double>(ctrl, "angle", kPi / 16));
  } else {
    throw SchemaError("control.profile");
  }
  return m;
}

GateSet gateset_from_config(const nlohmann::json& cfg, std::size_t n, std::size_t k) {
  const std::uint64_t seed = field_or<std::uint64_t>(cfg, "init_seed", 11);
  const std::size_t chi_nu = field_or<std::size_t>(cfg, "chi_nu", 2);
  const std::size_t chi_alpha = field_or<std::size_t>(cfg, "chi_alpha", 1);
  const std::size_t chi_mu = field_or<std::size_t>(cfg, "chi_mu", 2);
  const std::size_t chi_gamma = field_or<std::size_t>(cfg, "chi_gamma", 1);
  const std::size_t chi_delta =
      field_or<std::size_t>(cfg, "chi_delta", std::max<std::size_t>(2, chi_gamma));
  const std::string init = field_or<std::string>(cfg, "init", "physical");

  ProcessTensorLPDO pt;
  if (init == "physical") {
    pt = init_process_physical(n, k, chi_nu, field_or<double>(cfg, "init_j_lo", 0.05),
                               field_or<double>(cfg, "init_j_hi", 0.5), seed);
  } else if (init == "bell") {
    pt = init_process_lpdo(n, k, chi_nu, chi_alpha, chi_mu,
                           field_or<double>(cfg, "init_scale", 0.1), seed);
  } else {
    throw SchemaError("init");
  }
  GateSet gs = make_gateset(std::move(pt), {chi_gamma, chi_delta}, 0.0, seed + 1);
  const std::string cinit = field_or<std::string>(cfg, "control_init", "mixture");
  if (chi_gamma > 1) {
    if (cinit == "mixture")
      randomize_control_mixture(gs, field_or<double>(cfg, "control_spread", 0.15),
                                field_or<double>(cfg, "control_coupling", 0.05), seed + 2);
    else if (cinit == "dilation")
      randomize_control_dilation(gs, field_or<double>(cfg, "control_spread", 0.15), seed + 2);
    else if (cinit != "ideal")
      throw SchemaError("control_init");
  }
  return gs;
}

FitConfig fitconfig_from_config(const nlohmann::json& cfg) {
  FitConfig fc;
  fc.m_batch = field_or<std::size_t>(cfg, "m_batch", 1000);
  fc.m_causal = field_or<std::size_t>(cfg, "m_causal", 200);
  fc.kappa = field_or<double>(cfg, "kappa", 1.0);
  fc.adam.lr = field_or<double>(cfg, "lr", 1e-3);
  fc.adam.beta1 = field_or<double>(cfg, "beta1", 0.9);
  fc.adam.beta2 = field_or<double>(cfg, "beta2", 0.999);
  fc.adam.eps = field_or<double>(cfg, "eps", 1e-8);
  fc.max_iters = field_or<std::size_t>(cfg, "max_iters", 2000);
  fc.val_every = field_or<std::size_t>(cfg, "val_every", 25);
  fc.convergence_window = field_or<std::size_t>(cfg, "convergence_window", 10);
  fc.convergence_tol = field_or<double>(cfg, "convergence_tol", 1e-5);
  fc.seed = field_or<std::uint64_t>(cfg, "seed", 1);
  fc.learn_process = field_or<bool>(cfg, "learn_process", true);
  fc.learn_pulse = field_or<bool>(cfg, "learn_pulse", true);
  fc.learn_povm = field_or<bool>(cfg, "learn_povm", true);
  fc.m_tp_structures = field_or<std::size_t>(cfg, "m_tp_structures", 2);
  fc.lr_decay1_at = field_or<double>(cfg, "lr_decay1_at", 0.6);
  fc.lr_decay1 = field_or<double>(cfg, "lr_decay1", 0.1);
  fc.lr_decay2_at = field_or<double>(cfg, "lr_decay2_at", 0.8);
  fc.lr_decay2 = field_or<double>(cfg, "lr_decay2", 0.01);
  fc.polish_iters = field_or<std::size_t>(cfg, "polish_iters", 600);
  fc.polish_lr = field_or<double>(cfg, "polish_lr", 1e-3);
  return fc;
}

std::vector<BatchItem> split_items(const CircuitDataset& ds, const std::string& which) {
  std::vector<BatchItem> items;
  for (const auto& rec : ds.circuits)
    if (rec.split == which) items.push_back(BatchItem::from_record(rec));
  return items;
}

//-------------------------------------------------------------------------
// subcommands
//-------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::string& out,
                 std::uint64_t seed_override, bool verbose) {
  const auto cfg = load_json(config_path);
  NoiseModel m = model_from_config(cfg, seed_override);
  const std::size_t n_train = field_or<std::size_t>(cfg, "n_train", 100);
  const std::size_t n_val = field_or<std::size_t>(cfg, "n_validation", 20);
  const std::uint64_t shots = field_or<std::uint64_t>(cfg, "shots", 1024);
  const std::uint64_t vshots = field_or<std::uint64_t>(cfg, "validation_shots", 0);
  CircuitDataset ds = generate_dataset(m, n_train, n_val, shots, m.seed, vshots);
  save_dataset(ds, out);
  if (verbose)
    std::cout << "wrote " << ds.circuits.size() << " circuits (" << n_train << " train, "
              << n_val << " validation) to " << out << "\n";
  return kOk;
}

int cmd_fit(const std::string& data_path, const std::string& config_path,
            const std::string& out, const std::string& trace_path, std::uint64_t seed_override,
            std::size_t workers, bool verbose) {
  const auto cfg = config_path.empty() ? nlohmann::json::object() : load_json(config_path);
  CircuitDataset ds = load_dataset(data_path);
  GateSet gs = gateset_from_config(cfg, ds.n_qubits, ds.n_steps);
  FitConfig fc = fitconfig_from_config(cfg);
  if (seed_override) fc.seed = seed_override;
  fc.workers = workers_from(workers);
  FitResult res = fit(ds, gs, fc);
  save_gateset(gs, out);
  if (!trace_path.empty()) res.trace.write_csv(trace_path);
  if (verbose) {
    const double floor = data_entropy_per_shot(split_items(ds, "validation"));
    std::cout << "fit: " << res.iterations_run << " iterations, best validation CE "
              << res.best_val_ce << " (final " << res.final_val_ce << ", data entropy "
              << floor << ") model -> " << out << "\n";
  }
  return kOk;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out) {
  GateSet gs = load_gateset(model_path);
  CircuitDataset ds = load_dataset(data_path);
  ModelEvaluator ev(gs);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& rec : ds.circuits) {
    auto p = predict_distribution(gs, rec.circuit, &ev);
    double norm = 0;
    for (double x : p) norm += x;
    nlohmann::json row;
    row["split"] = rec.split;
    row["probabilities"] = nlohmann::json::object();
    for (std::size_t x = 0; x < p.size(); ++x)
      row["probabilities"][outcome_string(x, ds.n_qubits)] = p[x] / norm;
    j.push_back(std::move(row));
  }
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot open " + out);
  f << j.dump(2);
  return kOk;
}

int cmd_validate(const std::string& model_path, const std::string& data_path,
                 double max_median, bool verbose) {
  GateSet gs = load_gateset(model_path);
  CircuitDataset ds = load_dataset(data_path);
  auto val = split_items(ds, "validation");
  if (val.empty()) val = split_items(ds, "train");
  auto rep = reconstruction_report(gs, val);
  ModelEvaluator ev(gs);
  const double ce = validation_cross_entropy(gs, val, ev);
  const double floor = data_entropy_per_shot(val);
  std::cout << "median Hellinger distance " << rep.median << " (q1 " << rep.q1 << ", q3 "
            << rep.q3 << ") over " << rep.distances.size() << " circuits\n";
  std::cout << "validation cross-entropy " << ce << " nats/shot (data entropy " << floor
            << ", gap " << ce - floor << ")\n";
  if (verbose)
    for (std::size_t i = 0; i < rep.distances.size(); ++i)
      std::cout << "  circuit " << i << ": " << rep.distances[i] << "\n";
  return rep.median <= max_median ? kOk : kValidationFailure;
}

int cmd_analyze_mi(const std::string& model_path, const std::string& out, bool verbose) {
  GateSet gs = load_gateset(model_path);
  ChoiState dense = lpdo_to_dense(gs.process);
  MIMap map = mutual_information_map(dense, gs.n_qubits, gs.n_steps);
  const std::size_t slots = gs.n_qubits * gs.n_steps;

  nlohmann::json j;
  j["n_qubits"] = gs.n_qubits;
  j["n_steps"] = gs.n_steps;
  j["entries"] = nlohmann::json::array();
  for (std::size_t s1 = 0; s1 < slots; ++s1)
    for (std::size_t s2 = s1 + 1; s2 < slots; ++s2)
      j["entries"].push_back({{"qubit_a", s1 / gs.n_steps},
                              {"step_a", s1 % gs.n_steps + 1},
                              {"qubit_b", s2 / gs.n_steps},
                              {"step_b", s2 % gs.n_steps + 1},
                              {"mi_nats", map.entries[s1 * slots + s2]}});
  std::ofstream fj(out + ".json");
  fj << j.dump(2);
  std::ofstream fc(out + ".csv");
  fc << "qubit_a,step_a,qubit_b,step_b,mi_nats\n";
  for (const auto& e : j["entries"])
    fc << e["qubit_a"] << ',' << e["step_a"] << ',' << e["qubit_b"] << ',' << e["step_b"]
       << ',' << e["mi_nats"] << '\n';
  // plain-text matrix for external plotting
  std::ofstream ft(out + ".txt");
  for (std::size_t s1 = 0; s1 < slots; ++s1) {
    for (std::size_t s2 = 0; s2 < slots; ++s2)
      ft << map.entries[s1 * slots + s2] << (s2 + 1 < slots ? ' ' : '\n');
  }
  if (verbose) std::cout << "wrote " << out << ".{json,csv,txt}\n";
  return kOk;
}

int cmd_optimize_su4(const std::string& model_path, std::size_t n_targets, std::uint64_t seed,
                     bool cnot_counts, const std::string& out, bool verbose) {
  GateSet gs = load_gateset(model_path);
  if (gs.n_qubits != 2 || gs.n_steps < 3)
    throw std::runtime_error("optimize-su4 requires a 2-qubit process with >= 3 steps");
  Rng rng = Rng(seed).stream("su4_targets");
  Su4Options opts;
  opts.seed = seed;
  opts.evaluate_cnot_counts = cnot_counts;
  nlohmann::json j = nlohmann::json::array();
  std::size_t improved = 0;
  for (std::size_t t = 0; t < n_targets; ++t) {
    EMat m(4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c2 = 0; c2 < 4; ++c2) m(r, c2) = cplx(rng.gaussian(), rng.gaussian());
    Eigen::HouseholderQR<EMat> qr(m);
    ComplexTensor target = from_eigen(EMat(qr.householderQ()));
    auto res = optimize_su4(gs, target, opts);
    if (res.achieved < res.naive) ++improved;
    nlohmann::json row;
    row["achieved_error"] = res.achieved;
    row["naive_error"] = res.naive;
    row["angles"] = res.angles;
    if (cnot_counts) {
      row["delta_by_cnots"] = res.delta;
      row["best_count"] = res.best_count;
    }
    j.push_back(std::move(row));
  }
  std::ofstream f(out);
  f << j.dump(2);
  std::cout << "optimised " << n_targets << " targets; improved on naive for " << improved
            << "\n";
  if (verbose) std::cout << "wrote " << out << "\n";
  return kOk;
}

int cmd_optimize_dd(const std::string& model_path, std::size_t window, std::uint64_t seed,
                    const std::string& out, bool verbose) {
  GateSet gs = load_gateset(model_path);
  DDOptions opts;
  opts.seed = seed;
  DDResult res = optimize_dd(gs, window == 0 ? gs.n_steps : window, opts);
  nlohmann::json j;
  j["window"] = res.window;
  j["achieved_trace_distance"] = res.achieved;
  j["idle_trace_distance"] = res.idle;
  j["xy4_trace_distance"] = res.xy4;
  j["angles"] = res.angles;
  std::ofstream f(out);
  f << j.dump(2);
  std::cout << "window " << res.window << ": optimised " << res.achieved << ", XY4 "
            << res.xy4 << ", idle " << res.idle << "\n";
  if (verbose) std::cout << "wrote " << out << "\n";
  return kOk;
}

int cmd_gradcheck(std::size_t n, std::size_t k, std::size_t chi, std::size_t chi_gamma,
                  std::uint64_t seed) {
  ProcessTensorLPDO pt = init_process_lpdo(n, k, chi, 1, chi, 0.3, seed);
  GateSet gs = make_gateset(std::move(pt), {chi_gamma, 2}, 0.2, seed + 1);
  Rng rng(seed + 2);
  std::vector<BatchItem> items;
  ModelEvaluator ev(gs);
  for (int i = 0; i < 3; ++i) {
    BatchItem it;
    Rng gr = rng.stream("c", i);
    it.circuit = random_clifford_circuit(n, k, gr);
    auto p = predict_distribution(gs, it.circuit, &ev);
    it.counts.resize(p.size());
    for (std::size_t x = 0; x < p.size(); ++x) it.counts[x] = 8 * p[x] + (x % 2 ? 1 : 2);
    it.shots = 8 + it.counts.size() * 1.5;
    items.push_back(std::move(it));
  }
  ObjectiveSpec spec;
  for (const auto& it : items) spec.batch.push_back(&it);
  spec.kappa = 1.0;
  spec.process_constraints = sample_causality_constraints(n, k, 20, Rng(seed).stream("pc"));
  spec.tester_constraints = sample_tester_constraints(n, k, 20, Rng(seed).stream("tc"));
  spec.tp_circuits = {&items.front().circuit};
  auto rep = gradient_check(gs, spec, 1e-6);
  std::cout << "max relative error " << rep.max_rel_err << " over " << rep.params_checked
            << " parameters\n";
  return rep.max_rel_err < 1e-5 ? kOk : kValidationFailure;
}

int cmd_gst_toy(double depolarising, bool verbose) {
  ToyGateSet truth;
  truth.gate_superops = {superop_of_unitary(identity_tensor(2)),
                         superop_of_unitary(rx(kPi / 2)), superop_of_unitary(ry(kPi / 2)),
                         superop_of_unitary(rx(kPi)), superop_of_unitary(rz(kPi / 2))};
  truth.rho = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  truth.effect = ComplexTensor::matrix(2, 2, {1, 0, 0, 0});
  if (depolarising > 0) {
    ComplexTensor dep({4, 4}, {"r", "c"});
    ComplexTensor sid = superop_of_unitary(identity_tensor(2));
    for (std::size_t i = 0; i < 16; ++i) dep[i] = (1 - depolarising) * sid[i];
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b)
        dep[(a * 2 + a) * 4 + (b * 2 + b)] += depolarising / 2.0;
    for (std::size_t g = 1; g < truth.gate_superops.size(); ++g)
      truth.gate_superops[g] = matmul(dep, truth.gate_superops[g]);
  }
  auto res = linear_inversion_estimate(truth, {0, 1, 2, 3});
  std::cout << "Gram condition number " << res.condition_number
            << ", max prediction error " << res.max_prediction_error << "\n";
  if (verbose)
    std::cout << "recovered " << res.gates.size() << " gate superoperators (gauge-fixed)\n";
  return res.max_prediction_error < 1e-10 ? kOk : kValidationFailure;
}

}  // namespace cli
}  // namespace pttkit

int main(int argc, char** argv) {
  using namespace pttkit;
  using namespace pttkit::cli;

  CLI::App app{"process-tensor toolkit: simulate, fit, validate and exploit "
               "locally-purified models of non-Markovian quantum processes"};
  app.require_subcommand(1);

  std::string config, out = "out.json", data, model, trace;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  bool verbose = false;
  app.add_option("--workers", workers, "parallel circuit evaluation (PTTKIT_WORKERS fallback)");
  app.add_flag("--verbose", verbose, "more output");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic circuit dataset");
  sim->add_option("--config", config, "simulation config (JSON)")->required();
  sim->add_option("--out", out, "output dataset path")->required();
  sim->add_option("--seed", seed, "seed override");

  auto* fitc = app.add_subcommand("fit", "maximum-likelihood fit of a gate set");
  fitc->add_option("--data", data, "dataset path")->required();
  fitc->add_option("--config", config, "fit config (JSON)");
  fitc->add_option("--out", out, "model checkpoint path")->required();
  fitc->add_option("--trace", trace, "fit trace CSV path");
  fitc->add_option("--seed", seed, "seed override");

  auto* pred = app.add_subcommand("predict", "predicted distributions for a dataset");
  pred->add_option("--model", model, "model checkpoint")->required();
  pred->add_option("--data", data, "dataset path")->required();
  pred->add_option("--out", out, "output JSON path")->required();

  double max_median = std::numeric_limits<double>::infinity();
  auto* val = app.add_subcommand("validate", "reconstruction report against a dataset");
  val->add_option("--model", model, "model checkpoint")->required();
  val->add_option("--data", data, "dataset path")->required();
  val->add_option("--max-median", max_median, "exit 1 if the median distance exceeds this");

  auto* mi = app.add_subcommand("analyze-mi", "spatiotemporal mutual-information map");
  mi->add_option("--model", model, "model checkpoint")->required();
  mi->add_option("--out", out, "output basename (.json/.csv/.txt)")->required();

  std::size_t n_targets = 20;
  bool cnot_counts = false;
  auto* su4 = app.add_subcommand("optimize-su4", "noise-aware two-qubit gate decomposition");
  su4->add_option("--model", model, "model checkpoint (2 qubits, >= 3 steps)")->required();
  su4->add_option("--targets", n_targets, "number of random SU(4) targets");
  su4->add_option("--seed", seed, "target/optimiser seed");
  su4->add_flag("--cnot-counts", cnot_counts, "evaluate 0..3 CNOT variants");
  su4->add_option("--out", out, "output JSON path")->required();

  std::size_t window = 0;
  auto* dd = app.add_subcommand("optimize-dd", "optimised decoupling sequence");
  dd->add_option("--model", model, "model checkpoint (single qubit)")->required();
  dd->add_option("--window", window, "protect through step j (default: all steps)");
  dd->add_option("--seed", seed, "optimiser seed");
  dd->add_option("--out", out, "output JSON path")->required();

  std::size_t gc_n = 1, gc_k = 2, gc_chi = 2, gc_chi_gamma = 1;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_option("--n", gc_n, "qubits");
  gc->add_option("--k", gc_k, "steps");
  gc->add_option("--chi", gc_chi, "temporal bond dimension");
  gc->add_option("--chi-gamma", gc_chi_gamma, "control bond dimension");
  gc->add_option("--seed", seed, "instance seed");

  double depolarising = 0.0;
  auto* gst = app.add_subcommand("gst-toy", "linear-inversion gate-set recovery (k=1, n=1)");
  gst->add_option("--depolarising", depolarising, "depolarising strength on the gates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kUsageError;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config, out, seed, verbose);
    if (fitc->parsed()) return cmd_fit(data, config, out, trace, seed, workers, verbose);
    if (pred->parsed()) return cmd_predict(model, data, out);
    if (val->parsed()) return cmd_validate(model, data, max_median, verbose);
    if (mi->parsed()) return cmd_analyze_mi(model, out, verbose);
    if (su4->parsed())
      return cmd_optimize_su4(model, n_targets, seed ? seed : 1, cnot_counts, out, verbose);
    if (dd->parsed()) return cmd_optimize_dd(model, window, seed ? seed : 1, out, verbose);
    if (gc->parsed()) return cmd_gradcheck(gc_n, gc_k, gc_chi, gc_chi_gamma, seed ? seed : 5);
    if (gst->parsed()) return cmd_gst_toy(depolarising, verbose);
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kUsageError;
}
