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

#include <atomic>
#include <chrono>
#include <memory>
#include <set>
#include <thread>

#include "pttkit/lpdo.hpp"

namespace pttkit {

//=========================================================================
// Maximum-likelihood fitting of a GateSet to circuit count data.
//
// Objective (one minibatch):
//   sum_d sum_x -n_{d,x} ln phat_{d,x}  +  kappa (causality + TP penalty)
// with phat the per-circuit normalised predicted distribution, clamped
// below at 1e-12 inside the log.
//=========================================================================

inline constexpr double kProbClamp = 1e-12;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct FitConfig {
  std::size_t m_batch = 1000;
  std::size_t m_causal = 200;
  double kappa = 1.0;
  AdamConfig adam;
  std::size_t max_iters = 2000;
  std::size_t val_every = 25;
  std::size_t convergence_window = 10;  // validation evaluations
  double convergence_tol = 1e-5;        // per-shot nats
  std::uint64_t seed = 1;
  bool learn_process = true;
  bool learn_pulse = true;
  bool learn_povm = true;
  std::size_t m_tp_structures = 2;  // tester-structure representatives per iteration
  // staged learning-rate decay (fractions of max_iters)
  double lr_decay1_at = 0.6, lr_decay1 = 0.1;
  double lr_decay2_at = 0.8, lr_decay2 = 0.01;
  // penalty-only polish after the best snapshot is taken: a fresh Adam run
  // on the regularisers alone drives the residual constraint expectations
  // to the noise floor without disturbing the data fit
  std::size_t polish_iters = 600;
  double polish_lr = 1e-3;
  std::size_t workers = 1;

  void validate() const {
    if (m_batch < 1 || m_causal < 1 || max_iters < 1 || val_every < 1)
      throw std::invalid_argument("FitConfig: counts must be positive");
    if (kappa < 0 || adam.lr <= 0) throw std::invalid_argument("FitConfig: bad kappa/lr");
  }
};

struct FitTraceRow {
  std::size_t iteration;
  double objective;
  double cross_entropy;
  double causality_pen;
  double tp_pen;
  double val_cross_entropy;  // per shot; NaN between evaluations
  double seconds;
};

struct FitTrace {
  std::vector<FitTraceRow> rows;

  void write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("FitTrace: cannot open " + path);
    f << "iteration,objective,cross_entropy,causality_pen,tp_pen,val_cross_entropy,seconds\n";
    for (const auto& r : rows) {
      f << r.iteration << ',' << r.objective << ',' << r.cross_entropy << ','
        << r.causality_pen << ',' << r.tp_pen << ',';
      if (std::isnan(r.val_cross_entropy))
        f << "";
      else
        f << r.val_cross_entropy;
      f << ',' << r.seconds << '\n';
    }
  }
};

//-------------------------------------------------------------------------
// Objective assembly
//-------------------------------------------------------------------------

struct BatchItem {
  CircuitSpec circuit;
  std::vector<double> counts;  // dense over outcome indices (may be fractional)
  double shots = 0;

  static BatchItem from_record(const CircuitRecord& rec) {
    BatchItem it;
    it.circuit = rec.circuit;
    it.counts.assign(std::size_t(1) << rec.circuit.n_qubits, 0.0);
    for (const auto& [s, c] : rec.counts) it.counts[outcome_index(s)] = double(c);
    it.shots = double(rec.shots);
    return it;
  }
};

struct ObjectiveSpec {
  std::vector<const BatchItem*> batch;
  std::vector<PauliConstraint> process_constraints;
  std::vector<PauliConstraint> tester_constraints;
  std::vector<const CircuitSpec*> tp_circuits;
  double kappa = 1.0;
};

namespace estdetail {

// CE contribution and gradient seed for one circuit given predicted p.
inline double cross_entropy_term(const std::vector<double>& counts, double shots,
                                 const std::vector<cplx>& p_raw, std::vector<cplx>* seed) {
  (void)shots;
  double norm = 0;
  for (const auto& v : p_raw) norm += v.real();
  if (norm <= 0) norm = kProbClamp;
  double ce = 0, n_eff = 0;  // counts whose log is not clamped
  for (std::size_t x = 0; x < counts.size(); ++x) {
    if (counts[x] == 0) continue;
    const double ph = p_raw[x].real() / norm;
    if (ph > kProbClamp) n_eff += counts[x];
    ce -= counts[x] * std::log(std::max(ph, kProbClamp));
  }
  if (seed) {
    seed->assign(p_raw.size(), cplx(0, 0));
    for (std::size_t x = 0; x < counts.size(); ++x) {
      double s = n_eff / norm;  // d(-n ln(p/norm))/dp_y carries +n_eff/norm for every y
      if (counts[x] > 0 && p_raw[x].real() / norm > kProbClamp)
        s -= counts[x] / p_raw[x].real();
      (*seed)[x] = cplx(s, 0.0);
    }
  }
  return ce;
}

}  // namespace estdetail

struct ObjectiveBreakdown {
  double total = 0, cross_entropy = 0, causality = 0, tp = 0;
};

// Value (and optionally gradient) of the stochastic objective.
inline ObjectiveBreakdown objective(GateSet& gs, const ObjectiveSpec& spec, ModelEvaluator& ev,
                                    GradAccum* acc = nullptr) {
  if (spec.batch.empty()) throw std::invalid_argument("objective: empty batch");
  ObjectiveBreakdown out;
  BuiltNetwork b;
  std::vector<cplx> p, seed;
  for (const BatchItem* item : spec.batch) {
    ev.build_probability(item->circuit, b);
    p.resize(ev.out_numel(b));
    ev.forward(b, p.data());
    out.cross_entropy +=
        estdetail::cross_entropy_term(item->counts, item->shots, p, acc ? &seed : nullptr);
    if (acc) ev.backward(b, seed.data(), *acc);
  }
  if (spec.kappa > 0 && !spec.process_constraints.empty())
    out.causality = causality_penalty(gs, spec.process_constraints, ev, spec.kappa, acc);
  if (spec.kappa > 0 && !spec.tp_circuits.empty() && !spec.tester_constraints.empty())
    out.tp = tp_penalty(gs, spec.tp_circuits, spec.tester_constraints, ev, spec.kappa, acc);
  out.total = out.cross_entropy + spec.kappa * (out.causality + out.tp);
  return out;
}

// Flat real gradient aligned with GateSet::param_vector().
inline std::vector<double> flatten_gradient(const GateSet& gs, const GradAccum& acc) {
  std::vector<double> g;
  for (std::size_t i = 0; i < gs.leaf_count(); ++i) {
    if (!gs.leaf_is_learnable(i)) continue;
    for (const auto& v : acc.g[i]) {
      g.push_back(v.real());
      g.push_back(v.imag());
    }
  }
  return g;
}

//-------------------------------------------------------------------------
// Adam
//-------------------------------------------------------------------------

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state, const AdamConfig& cfg, double lr_scale = 1.0) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state mismatch");
  state.t += 1;
  const double b1t = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double b2t = 1.0 - std::pow(cfg.beta2, double(state.t));
  const double lr = cfg.lr * lr_scale;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / b1t;
    const double vhat = state.v[i] / b2t;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

//-------------------------------------------------------------------------
// Fit
//-------------------------------------------------------------------------

struct FitResult {
  FitTrace trace;
  double best_val_ce = std::numeric_limits<double>::quiet_NaN();   // per shot, pre-polish
  double final_val_ce = std::numeric_limits<double>::quiet_NaN();  // per shot, returned model
  std::size_t best_iteration = 0;
  std::size_t iterations_run = 0;
};

// Per-shot validation cross-entropy of the current parameters.
inline double validation_cross_entropy(GateSet& gs, const std::vector<BatchItem>& val,
                                       ModelEvaluator& ev) {
  double ce = 0, shots = 0;
  BuiltNetwork b;
  std::vector<cplx> p;
  for (const auto& item : val) {
    ev.build_probability(item.circuit, b);
    p.resize(ev.out_numel(b));
    ev.forward(b, p.data());
    ce += estdetail::cross_entropy_term(item.counts, item.shots, p, nullptr);
    shots += item.shots;
  }
  return shots > 0 ? ce / shots : 0.0;
}

// Per-shot empirical entropy of a split (the attainable CE floor).
inline double data_entropy_per_shot(const std::vector<BatchItem>& items) {
  double h = 0, shots = 0;
  for (const auto& item : items) {
    for (double c : item.counts)
      if (c > 0) h -= c * std::log(c / item.shots);
    shots += item.shots;
  }
  return shots > 0 ? h / shots : 0.0;
}

inline FitResult fit(const CircuitDataset& dataset, GateSet& gs, const FitConfig& cfg) {
  cfg.validate();
  gs.learn_process = cfg.learn_process;
  gs.learn_pulse = cfg.learn_pulse;
  gs.learn_povm = cfg.learn_povm;
  gs.refresh_conj();

  std::vector<BatchItem> train, val;
  for (const auto& rec : dataset.circuits) {
    if (rec.circuit.n_qubits != gs.n_qubits || rec.circuit.n_steps != gs.n_steps)
      throw std::invalid_argument("fit: dataset does not match gate set dims");
    (rec.split == "train" ? train : val).push_back(BatchItem::from_record(rec));
  }
  if (train.empty()) throw std::invalid_argument("fit: dataset has no train circuits");

  const std::size_t workers = std::max<std::size_t>(1, cfg.workers);
  std::vector<std::unique_ptr<ModelEvaluator>> evs;
  for (std::size_t w = 0; w < workers; ++w) evs.push_back(std::make_unique<ModelEvaluator>(gs));
  ModelEvaluator& ev0 = *evs[0];

  // prebuild probability networks; the compiled plans live in ev0's cache
  // and are shared read-only by all workers
  std::vector<BuiltNetwork> train_nets(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    ev0.build_probability(train[i].circuit, train_nets[i]);

  Rng root(cfg.seed);
  AdamState adam;
  std::vector<double> params = gs.param_vector();
  std::vector<double> best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_iter = 0;
  std::vector<double> val_history;

  GradAccum acc;
  acc.init(gs);
  std::vector<GradAccum> worker_acc(workers);
  for (auto& a : worker_acc) a.init(gs);

  FitResult result;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    // minibatch (without replacement)
    Rng brng = root.stream("batch", iter);
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t take = std::min(cfg.m_batch, train.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + brng.uniform_index(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(take);

    // fresh constraint sets each iteration
    auto process_cs =
        sample_causality_constraints(gs.n_qubits, gs.n_steps, cfg.m_causal,
                                     root.stream("causal", iter));
    auto tester_cs = sample_tester_constraints(gs.n_qubits, gs.n_steps, cfg.m_causal,
                                               root.stream("tp", iter));
    // one representative circuit per tester structure in the batch
    std::vector<const CircuitSpec*> tp_circuits;
    {
      std::set<std::string> seen;
      for (std::size_t i : idx) {
        if (tp_circuits.size() >= cfg.m_tp_structures) break;
        if (seen.insert(train_nets[i].key).second)
          tp_circuits.push_back(&train[i].circuit);
      }
    }

    double ce = 0;
    acc.clear();
    if (workers == 1) {
      // per-circuit subtotals keep the reduction order identical to the
      // multi-worker path (bitwise-equal results for any worker count)
      GradAccum& tmp = worker_acc[0];
      std::vector<cplx> p, seed;
      for (std::size_t i : idx) {
        auto& b = train_nets[i];
        p.resize(ev0.out_numel(b));
        ev0.forward(b, p.data());
        ce += estdetail::cross_entropy_term(train[i].counts, train[i].shots, p, &seed);
        tmp.clear();
        ev0.backward(b, seed.data(), tmp);
        for (std::size_t l = 0; l < acc.g.size(); ++l)
          for (std::size_t e = 0; e < acc.g[l].size(); ++e) acc.g[l][e] += tmp.g[l][e];
      }
    } else {
      // deterministic across worker counts: per-circuit contributions are
      // stored by batch position and reduced in order
      std::vector<double> ces(take, 0.0);
      std::vector<std::vector<double>> flat(take);
      std::atomic<std::size_t> next{0};
      auto run = [&](std::size_t w) {
        ModelEvaluator& e = *evs[w];
        GradAccum& a = worker_acc[w];
        std::vector<cplx> p, seed;
        for (;;) {
          const std::size_t pos = next.fetch_add(1);
          if (pos >= take) break;
          const std::size_t i = idx[pos];
          auto& b = train_nets[i];
          a.clear();
          p.resize(e.out_numel(b));
          e.forward(b, p.data());
          ces[pos] = estdetail::cross_entropy_term(train[i].counts, train[i].shots, p, &seed);
          e.backward(b, seed.data(), a);
          auto& dst = flat[pos];
          dst.clear();
          for (std::size_t l = 0; l < a.g.size(); ++l)
            for (const auto& v : a.g[l]) {
              dst.push_back(v.real());
              dst.push_back(v.imag());
            }
        }
      };
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
      for (auto& t : pool) t.join();
      for (std::size_t pos = 0; pos < take; ++pos) {
        ce += ces[pos];
        std::size_t at = 0;
        for (std::size_t l = 0; l < acc.g.size(); ++l)
          for (auto& v : acc.g[l]) {
            v += cplx(flat[pos][at], flat[pos][at + 1]);
            at += 2;
          }
      }
    }

    double cau = 0, tp = 0;
    if (cfg.kappa > 0) {
      cau = causality_penalty(gs, process_cs, ev0, cfg.kappa, &acc);
      tp = tp_penalty(gs, tp_circuits, tester_cs, ev0, cfg.kappa, &acc);
    }
    const double obj = ce + cfg.kappa * (cau + tp);

    // update
    auto grads = flatten_gradient(gs, acc);
    double lr_scale = 1.0;
    if (double(iter) >= cfg.lr_decay2_at * double(cfg.max_iters))
      lr_scale = cfg.lr_decay2;
    else if (double(iter) >= cfg.lr_decay1_at * double(cfg.max_iters))
      lr_scale = cfg.lr_decay1;
    adam_step(params, grads, adam, cfg.adam, lr_scale);
    gs.set_param_vector(params);

    FitTraceRow row;
    row.iteration = iter;
    row.objective = obj;
    row.cross_entropy = ce;
    row.causality_pen = cau;
    row.tp_pen = tp;
    row.val_cross_entropy = std::numeric_limits<double>::quiet_NaN();
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if ((iter + 1) % cfg.val_every == 0 && !val.empty()) {
      const double vce = validation_cross_entropy(gs, val, ev0);
      row.val_cross_entropy = vce;
      val_history.push_back(vce);
      // statistical ties resolve toward the later (more regularised) iterate
      if (vce < best_val + 1e-9) {
        best_val = std::min(best_val, vce);
        best_params = params;
        best_iter = iter;
      }
      // early stopping only once the refinement (decayed-lr) phase started
      if (double(iter) >= cfg.lr_decay1_at * double(cfg.max_iters) &&
          val_history.size() > cfg.convergence_window) {
        double prev_best = std::numeric_limits<double>::infinity();
        double recent_best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + cfg.convergence_window < val_history.size(); ++i)
          prev_best = std::min(prev_best, val_history[i]);
        for (std::size_t i = val_history.size() - cfg.convergence_window;
             i < val_history.size(); ++i)
          recent_best = std::min(recent_best, val_history[i]);
        if (prev_best - recent_best < cfg.convergence_tol) {
          result.trace.rows.push_back(row);
          ++iter;
          break;
        }
      }
    }
    result.trace.rows.push_back(row);
  }

  if (!val.empty()) {
    gs.set_param_vector(best_params);
    result.best_val_ce = best_val;
    result.best_iteration = best_iter;
  }
  result.iterations_run = iter;

  // penalty-only polish of the returned model
  if (cfg.kappa > 0 && cfg.polish_iters > 0) {
    std::vector<const CircuitSpec*> tp_circuits;
    {
      std::set<std::string> seen;
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (tp_circuits.size() >= cfg.m_tp_structures) break;
        if (seen.insert(train_nets[i].key).second) tp_circuits.push_back(&train[i].circuit);
      }
    }
    AdamState polish_adam;
    AdamConfig pcfg = cfg.adam;
    params = gs.param_vector();
    for (std::size_t it = 0; it < cfg.polish_iters; ++it) {
      // own staged decay so the residuals settle to a deep floor
      pcfg.lr = cfg.polish_lr;
      if (double(it) >= 0.85 * double(cfg.polish_iters))
        pcfg.lr = cfg.polish_lr * 0.01;
      else if (double(it) >= 0.6 * double(cfg.polish_iters))
        pcfg.lr = cfg.polish_lr * 0.1;
      auto process_cs = sample_causality_constraints(gs.n_qubits, gs.n_steps, cfg.m_causal,
                                                     root.stream("polish_c", it));
      auto tester_cs = sample_tester_constraints(gs.n_qubits, gs.n_steps, cfg.m_causal,
                                                 root.stream("polish_t", it));
      acc.clear();
      const double cau = causality_penalty(gs, process_cs, ev0, cfg.kappa, &acc);
      const double tp = tp_penalty(gs, tp_circuits, tester_cs, ev0, cfg.kappa, &acc);
      auto grads = flatten_gradient(gs, acc);
      adam_step(params, grads, polish_adam, pcfg);
      gs.set_param_vector(params);
      FitTraceRow row{};
      row.iteration = iter + it;
      row.objective = cfg.kappa * (cau + tp);
      row.cross_entropy = std::numeric_limits<double>::quiet_NaN();
      row.causality_pen = cau;
      row.tp_pen = tp;
      row.val_cross_entropy = std::numeric_limits<double>::quiet_NaN();
      row.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.trace.rows.push_back(row);
    }
  }
  if (!val.empty()) result.final_val_ce = validation_cross_entropy(gs, val, ev0);
  return result;
}

//-------------------------------------------------------------------------
// Gradient verification
//-------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0;
  double at_value = 0;
  std::size_t worst_index = 0;
  std::size_t params_checked = 0;
};

// Central finite differences against the analytic gradient, entrywise.
inline GradCheckReport gradient_check(GateSet& gs, const ObjectiveSpec& spec, double h = 1e-6,
                                      std::size_t max_params = std::size_t(-1)) {
  ModelEvaluator ev(gs);
  GradAccum acc;
  acc.init(gs);
  objective(gs, spec, ev, &acc);
  const auto grads = flatten_gradient(gs, acc);
  auto params = gs.param_vector();

  GradCheckReport rep;
  const std::size_t limit = std::min(max_params, params.size());
  for (std::size_t i = 0; i < limit; ++i) {
    const double orig = params[i];
    params[i] = orig + h;
    gs.set_param_vector(params);
    const double fp = objective(gs, spec, ev).total;
    params[i] = orig - h;
    gs.set_param_vector(params);
    const double fm = objective(gs, spec, ev).total;
    params[i] = orig;
    const double fd = (fp - fm) / (2 * h);
    if (std::abs(grads[i]) > 1e-8) {
      const double rel = std::abs(fd - grads[i]) / std::max(std::abs(grads[i]), std::abs(fd));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.at_value = grads[i];
        rep.worst_index = i;
      }
      ++rep.params_checked;
    }
  }
  gs.set_param_vector(params);
  return rep;
}

}  // namespace pttkit
