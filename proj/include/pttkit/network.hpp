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

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "pttkit/complex_tensor.hpp"

namespace pttkit {

//=========================================================================
// Wire networks.
//
// A network is a list of tensor nodes whose axes carry integer wire ids.
// A wire appearing on two axes is contracted; a wire appearing once is
// open.  Contraction is compiled to a reusable Plan (a binary contraction
// tree with precomputed strided loops), which also supports reverse-mode
// gradients with respect to leaf tensors: d(result)/d(leaf) for bilinear
// contractions, seeding from an adjoint of the result.
//
// Adjoint convention for complex entries: bar(X) = dL/dRe(X) + i dL/dIm(X)
// for a real objective L.  For C = contract(A, B) this propagates as
// bar(A) = contract(bar(C), conj(B)) over B's free axes, and a node built
// from conj(leaf) scatters conj(bar(node)) into the leaf gradient.
//=========================================================================

struct WireNode {
  const cplx* data = nullptr;            // resolved at execution time if null
  std::vector<std::size_t> dims;
  std::vector<int> wires;
  int leaf = -1;                         // parameter id; -1 for constants
  bool conj = false;                     // node holds conj(leaf); affects gradient scatter only
};

struct WireNetwork {
  std::vector<WireNode> nodes;
  std::vector<int> open;                 // declared output wire order
  int next_wire = 0;

  int fresh_wire() { return next_wire++; }

  std::size_t add_node(const ComplexTensor* t, std::vector<int> wires, int leaf = -1,
                       bool conj = false) {
    WireNode n;
    n.data = t ? t->data() : nullptr;
    if (t) n.dims = t->shape();
    n.wires = std::move(wires);
    n.leaf = leaf;
    n.conj = conj;
    nodes.push_back(std::move(n));
    return nodes.size() - 1;
  }

  std::size_t add_node_dims(const cplx* data, std::vector<std::size_t> dims,
                            std::vector<int> wires, int leaf = -1, bool conj = false) {
    WireNode n;
    n.data = data;
    n.dims = std::move(dims);
    n.wires = std::move(wires);
    n.leaf = leaf;
    n.conj = conj;
    nodes.push_back(std::move(n));
    return nodes.size() - 1;
  }
};

//-------------------------------------------------------------------------
// Compiled execution plan
//-------------------------------------------------------------------------

struct LoopAxis {
  std::size_t extent;
  std::ptrdiff_t sw, sx, sy;  // strides into written / first read / second read buffer
};

// W[iw] = sum over reduce axes of X[ix] * (conj_y ? conj(Y[iy]) : Y[iy])
struct LoopProgram {
  std::vector<LoopAxis> axes;  // write axes first, then reduce axes
  std::size_t n_write = 0;
  std::size_t w_numel = 1;
  bool conj_y = false;
};

struct PlanStep {
  int a, b, out;               // buffer slots
  LoopProgram fwd;             // W=out, X=a, Y=b
  LoopProgram bwd_a;           // W=adj[a], X=adj[out], Y=b (conj)
  LoopProgram bwd_b;           // W=adj[b], X=adj[out], Y=a (conj)
  bool grad_a = false, grad_b = false;
};

struct Plan {
  std::size_t n_nodes = 0;
  std::vector<PlanStep> steps;
  std::vector<std::size_t> slot_numel;      // node slots then intermediates
  std::vector<bool> slot_grad;              // subtree contains a gradient leaf
  int result_slot = -1;
  std::vector<int> result_wires;
  std::vector<std::size_t> result_dims;
  // Strides mapping declared open-wire order onto the result buffer.
  std::vector<std::size_t> out_dims;
  std::vector<std::ptrdiff_t> out_strides;
  std::size_t out_numel = 1;
};

struct Workspace {
  std::vector<std::vector<cplx>> val;
  std::vector<std::vector<cplx>> adj;
  std::vector<const cplx*> bufs;
  void fit(const Plan& p) {
    if (val.size() < p.slot_numel.size()) val.resize(p.slot_numel.size());
    if (adj.size() < p.slot_numel.size()) adj.resize(p.slot_numel.size());
    if (bufs.size() < p.slot_numel.size()) bufs.resize(p.slot_numel.size());
    for (std::size_t i = 0; i < p.slot_numel.size(); ++i) {
      if (val[i].size() < p.slot_numel[i]) val[i].resize(p.slot_numel[i]);
      if (adj[i].size() < p.slot_numel[i]) adj[i].resize(p.slot_numel[i]);
    }
  }
};

namespace detail {

inline void run_program(const LoopProgram& pr, cplx* W, const cplx* X, const cplx* Y) {
  const std::size_t n = pr.axes.size();
  const std::size_t nw = pr.n_write;
  std::array<std::size_t, 24> ctr{};
  if (n > 24) throw std::runtime_error("contraction rank too large");
  // Reduce axes are [nw, n); keep the innermost reduce axis as a tight loop.
  const bool has_reduce = nw < n;
  const LoopAxis* inner = has_reduce ? &pr.axes[n - 1] : nullptr;

  std::size_t iw = 0, ix = 0, iy = 0;
  for (;;) {
    // run reduce odometer for current write indices
    cplx acc(0.0, 0.0);
    if (!has_reduce) {
      acc = X[ix] * (pr.conj_y ? std::conj(Y[iy]) : Y[iy]);
    } else {
      std::size_t jx = ix, jy = iy;
      for (;;) {
        const cplx* xp = X + jx;
        const cplx* yp = Y + jy;
        if (pr.conj_y) {
          for (std::size_t t = 0; t < inner->extent; ++t) {
            acc += xp[0] * std::conj(yp[0]);
            xp += inner->sx;
            yp += inner->sy;
          }
        } else {
          for (std::size_t t = 0; t < inner->extent; ++t) {
            acc += xp[0] * yp[0];
            xp += inner->sx;
            yp += inner->sy;
          }
        }
        // advance outer reduce axes [nw, n-1)
        std::size_t a = n - 1;
        bool done = true;
        while (a-- > nw) {
          ++ctr[a];
          jx += pr.axes[a].sx;
          jy += pr.axes[a].sy;
          if (ctr[a] < pr.axes[a].extent) {
            done = false;
            break;
          }
          jx -= static_cast<std::ptrdiff_t>(pr.axes[a].extent) * pr.axes[a].sx;
          jy -= static_cast<std::ptrdiff_t>(pr.axes[a].extent) * pr.axes[a].sy;
          ctr[a] = 0;
        }
        if (done) break;
      }
    }
    W[iw] = acc;
    // advance write odometer
    if (nw == 0) break;
    std::size_t a = nw;
    bool done = true;
    while (a-- > 0) {
      ++ctr[a];
      iw += pr.axes[a].sw;
      ix += pr.axes[a].sx;
      iy += pr.axes[a].sy;
      if (ctr[a] < pr.axes[a].extent) {
        done = false;
        break;
      }
      iw -= static_cast<std::ptrdiff_t>(pr.axes[a].extent) * pr.axes[a].sw;
      ix -= static_cast<std::ptrdiff_t>(pr.axes[a].extent) * pr.axes[a].sx;
      iy -= static_cast<std::ptrdiff_t>(pr.axes[a].extent) * pr.axes[a].sy;
      ctr[a] = 0;
    }
    if (done) break;
  }
}

struct SlotInfo {
  std::vector<std::size_t> dims;
  std::vector<int> wires;
  bool grad = false;
  std::size_t numel() const { return ComplexTensor::numel_of(dims); }
};

inline std::vector<std::size_t> strides_of(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i];
  return s;
}

// Build the write/reduce programs for contracting slots a and b.
inline void make_step(const SlotInfo& A, const SlotInfo& B, SlotInfo& O, PlanStep& st) {
  std::vector<int> shared;
  for (int w : A.wires)
    for (int w2 : B.wires)
      if (w == w2) shared.push_back(w);

  auto sa = strides_of(A.dims), sb = strides_of(B.dims);
  auto find = [](const std::vector<int>& ws, int w) -> int {
    for (std::size_t i = 0; i < ws.size(); ++i)
      if (ws[i] == w) return static_cast<int>(i);
    return -1;
  };

  O.dims.clear();
  O.wires.clear();
  struct Axis {
    std::size_t extent;
    std::ptrdiff_t sa, sb, so;
  };
  std::vector<Axis> wr, rd;
  // output order: A free then B free
  for (std::size_t i = 0; i < A.wires.size(); ++i)
    if (find(shared, A.wires[i]) < 0) {
      O.wires.push_back(A.wires[i]);
      O.dims.push_back(A.dims[i]);
      wr.push_back({A.dims[i], static_cast<std::ptrdiff_t>(sa[i]), 0, 0});
    }
  for (std::size_t i = 0; i < B.wires.size(); ++i)
    if (find(shared, B.wires[i]) < 0) {
      O.wires.push_back(B.wires[i]);
      O.dims.push_back(B.dims[i]);
      wr.push_back({B.dims[i], 0, static_cast<std::ptrdiff_t>(sb[i]), 0});
    }
  auto so = strides_of(O.dims);
  for (std::size_t i = 0; i < wr.size(); ++i) wr[i].so = static_cast<std::ptrdiff_t>(so[i]);
  for (int w : shared) {
    const int ia = find(A.wires, w), ib = find(B.wires, w);
    if (A.dims[ia] != B.dims[ib]) throw std::invalid_argument("contract: axis-extent mismatch");
    rd.push_back({A.dims[ia], static_cast<std::ptrdiff_t>(sa[ia]),
                  static_cast<std::ptrdiff_t>(sb[ib]), 0});
  }

  // Written tensor's axes become write axes; the rest reduce.
  auto emit = [&](LoopProgram& pr, int written /*0=O,1=A,2=B*/) {
    pr.axes.clear();
    pr.n_write = 0;
    pr.conj_y = written != 0;
    auto push = [&](const Axis& ax, bool is_write) {
      LoopAxis la{};
      la.extent = ax.extent;
      if (written == 0) {  // forward: W=O, X=A, Y=B
        la.sw = ax.so, la.sx = ax.sa, la.sy = ax.sb;
      } else if (written == 1) {  // bwd A: W=adjA, X=adjO, Y=B
        la.sw = ax.sa, la.sx = ax.so, la.sy = ax.sb;
      } else {  // bwd B: W=adjB, X=adjO, Y=A
        la.sw = ax.sb, la.sx = ax.so, la.sy = ax.sa;
      }
      if (is_write)
        pr.axes.insert(pr.axes.begin() + pr.n_write++, la);
      else
        pr.axes.push_back(la);
    };
    for (const auto& ax : wr) {
      const std::ptrdiff_t sw = written == 0 ? ax.so : (written == 1 ? ax.sa : ax.sb);
      push(ax, sw != 0);
    }
    for (const auto& ax : rd) {
      const std::ptrdiff_t sw = written == 0 ? 0 : (written == 1 ? ax.sa : ax.sb);
      push(ax, written != 0 && sw != 0);
    }
    pr.w_numel = 1;
    for (std::size_t i = 0; i < pr.n_write; ++i) pr.w_numel *= pr.axes[i].extent;
  };

  emit(st.fwd, 0);
  emit(st.bwd_a, 1);
  emit(st.bwd_b, 2);
  O.grad = A.grad || B.grad;
  st.grad_a = A.grad;
  st.grad_b = B.grad;
}

inline double numel_after(const SlotInfo& A, const SlotInfo& B) {
  double n = 1;
  for (std::size_t i = 0; i < A.wires.size(); ++i) {
    bool shared = false;
    for (int w : B.wires) shared = shared || w == A.wires[i];
    if (!shared) n *= static_cast<double>(A.dims[i]);
  }
  for (std::size_t i = 0; i < B.wires.size(); ++i) {
    bool shared = false;
    for (int w : A.wires) shared = shared || w == B.wires[i];
    if (!shared) n *= static_cast<double>(B.dims[i]);
  }
  return n;
}

inline bool connected(const SlotInfo& A, const SlotInfo& B) {
  for (int w : A.wires)
    for (int w2 : B.wires)
      if (w == w2) return true;
  return false;
}

}  // namespace detail

//-------------------------------------------------------------------------
// Path selection: greedy (minimise intermediate size) with an exhaustive
// subset-DP search for networks of at most 8 tensors.
//-------------------------------------------------------------------------

using ContractionPath = std::vector<std::pair<int, int>>;  // indices into live list

inline ContractionPath greedy_path(std::vector<detail::SlotInfo> live) {
  ContractionPath path;
  std::vector<int> alive(live.size());
  for (std::size_t i = 0; i < live.size(); ++i) alive[i] = static_cast<int>(i);
  while (alive.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    double best_flops = std::numeric_limits<double>::infinity();
    std::pair<int, int> pick{-1, -1};
    bool found = false;
    for (std::size_t i = 0; i < alive.size(); ++i)
      for (std::size_t j = i + 1; j < alive.size(); ++j) {
        const auto& A = live[alive[i]];
        const auto& B = live[alive[j]];
        if (!detail::connected(A, B)) continue;
        const double sz = detail::numel_after(A, B);
        double fl = 1;
        for (std::size_t a = 0; a < A.dims.size(); ++a) fl *= static_cast<double>(A.dims[a]);
        for (std::size_t b = 0; b < B.dims.size(); ++b) {
          bool shared = false;
          for (int w : A.wires) shared = shared || w == B.wires[b];
          if (!shared) fl *= static_cast<double>(B.dims[b]);
        }
        if (sz < best || (sz == best && fl < best_flops)) {
          best = sz;
          best_flops = fl;
          pick = {static_cast<int>(i), static_cast<int>(j)};
          found = true;
        }
      }
    if (!found) {
      // disconnected parts: outer product of the two smallest
      std::size_t s0 = 0, s1 = 1;
      if (live[alive[s0]].numel() > live[alive[s1]].numel()) std::swap(s0, s1);
      for (std::size_t i = 2; i < alive.size(); ++i) {
        if (live[alive[i]].numel() < live[alive[s0]].numel()) {
          s1 = s0;
          s0 = i;
        } else if (live[alive[i]].numel() < live[alive[s1]].numel()) {
          s1 = i;
        }
      }
      pick = {static_cast<int>(std::min(s0, s1)), static_cast<int>(std::max(s0, s1))};
    }
    const int ia = alive[pick.first], ib = alive[pick.second];
    path.push_back({pick.first, pick.second});
    detail::SlotInfo out;
    PlanStep dummy;
    detail::make_step(live[ia], live[ib], out, dummy);
    live.push_back(out);
    alive.erase(alive.begin() + pick.second);
    alive.erase(alive.begin() + pick.first);
    alive.push_back(static_cast<int>(live.size()) - 1);
  }
  return path;
}

// Exhaustive optimal contraction tree by dynamic programming over subsets.
inline ContractionPath optimal_path(const std::vector<detail::SlotInfo>& base) {
  const std::size_t n = base.size();
  if (n > 8) return greedy_path(base);
  const std::size_t full = (std::size_t(1) << n) - 1;
  std::vector<double> cost(full + 1, std::numeric_limits<double>::infinity());
  std::vector<std::pair<std::size_t, std::size_t>> split(full + 1, {0, 0});
  std::vector<detail::SlotInfo> info(full + 1);
  for (std::size_t i = 0; i < n; ++i) {
    cost[std::size_t(1) << i] = 0;
    info[std::size_t(1) << i] = base[i];
  }
  for (std::size_t s = 1; s <= full; ++s) {
    if ((s & (s - 1)) == 0) continue;  // singleton
    for (std::size_t a = (s - 1) & s; a; a = (a - 1) & s) {
      const std::size_t b = s ^ a;
      if (a > b) continue;  // each split once
      if (!std::isfinite(cost[a]) || !std::isfinite(cost[b])) continue;
      detail::SlotInfo out;
      PlanStep dummy;
      detail::make_step(info[a], info[b], out, dummy);
      const double c = cost[a] + cost[b] + static_cast<double>(out.numel());
      if (c < cost[s]) {
        cost[s] = c;
        split[s] = {a, b};
        info[s] = out;
      }
    }
  }
  // Rebuild as a live-list path matching greedy_path semantics.
  ContractionPath path;
  std::vector<std::size_t> live;  // subset masks in live-list order
  for (std::size_t i = 0; i < n; ++i) live.push_back(std::size_t(1) << i);
  std::function<void(std::size_t)> emit = [&](std::size_t s) {
    if ((s & (s - 1)) == 0) return;
    emit(split[s].first);
    emit(split[s].second);
    int ia = -1, ib = -1;
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (live[i] == split[s].first) ia = static_cast<int>(i);
      if (live[i] == split[s].second) ib = static_cast<int>(i);
    }
    if (ia > ib) std::swap(ia, ib);
    path.push_back({ia, ib});
    live.erase(live.begin() + ib);
    live.erase(live.begin() + ia);
    live.push_back(s);
  };
  emit(full);
  return path;
}

//-------------------------------------------------------------------------
// Plan compilation and execution
//-------------------------------------------------------------------------

inline Plan compile_plan(const WireNetwork& net, bool exhaustive_if_small = true,
                         const std::vector<bool>* leaf_learnable = nullptr) {
  Plan plan;
  plan.n_nodes = net.nodes.size();
  std::vector<detail::SlotInfo> slots(net.nodes.size());
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    slots[i].dims = net.nodes[i].dims;
    slots[i].wires = net.nodes[i].wires;
    const int lf = net.nodes[i].leaf;
    slots[i].grad = lf >= 0 && (!leaf_learnable || (lf < static_cast<int>(leaf_learnable->size()) &&
                                                    (*leaf_learnable)[lf]));
  }

  ContractionPath path = (exhaustive_if_small && net.nodes.size() <= 8)
                             ? optimal_path(slots)
                             : greedy_path(slots);

  std::vector<int> live(net.nodes.size());
  for (std::size_t i = 0; i < net.nodes.size(); ++i) live[i] = static_cast<int>(i);
  plan.slot_numel.resize(net.nodes.size());
  plan.slot_grad.resize(net.nodes.size());
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    plan.slot_numel[i] = slots[i].numel();
    plan.slot_grad[i] = slots[i].grad;
  }

  for (const auto& [pi, pj] : path) {
    const int ia = live[pi], ib = live[pj];
    PlanStep st;
    st.a = ia;
    st.b = ib;
    detail::SlotInfo out;
    detail::make_step(slots[ia], slots[ib], out, st);
    slots.push_back(out);
    st.out = static_cast<int>(slots.size()) - 1;
    plan.slot_numel.push_back(out.numel());
    plan.slot_grad.push_back(out.grad);
    plan.steps.push_back(std::move(st));
    live.erase(live.begin() + pj);
    live.erase(live.begin() + pi);
    live.push_back(static_cast<int>(slots.size()) - 1);
  }
  plan.result_slot = net.nodes.empty() ? -1 : live[0];
  if (plan.result_slot >= 0) {
    plan.result_wires = slots[plan.result_slot].wires;
    plan.result_dims = slots[plan.result_slot].dims;
  }

  // Mapping from the declared open-wire order into the result buffer.
  plan.out_dims.clear();
  plan.out_strides.clear();
  plan.out_numel = 1;
  auto rs = detail::strides_of(plan.result_dims);
  for (int w : net.open) {
    int at = -1;
    for (std::size_t i = 0; i < plan.result_wires.size(); ++i)
      if (plan.result_wires[i] == w) at = static_cast<int>(i);
    if (at < 0) throw std::invalid_argument("contract: open wire missing from result");
    plan.out_dims.push_back(plan.result_dims[at]);
    plan.out_strides.push_back(static_cast<std::ptrdiff_t>(rs[at]));
    plan.out_numel *= plan.result_dims[at];
  }
  if (net.open.size() != plan.result_wires.size())
    throw std::invalid_argument("contract: dangling wires in result (not open, not contracted)");
  return plan;
}

// Forward evaluation.  node_data[i] supplies the buffer for node i (falls
// back to the pointer recorded in the network at compile time).
inline void plan_forward(const Plan& plan, const std::vector<const cplx*>& node_data,
                         Workspace& ws) {
  ws.fit(plan);
  for (std::size_t i = 0; i < plan.n_nodes; ++i) ws.bufs[i] = node_data[i];
  for (const auto& st : plan.steps) {
    detail::run_program(st.fwd, ws.val[st.out].data(), ws.bufs[st.a], ws.bufs[st.b]);
    ws.bufs[st.out] = ws.val[st.out].data();
  }
}

// Copy the result into `out` following the declared open order.
inline void plan_result(const Plan& plan, const std::vector<const cplx*>& node_data,
                        const Workspace& ws, cplx* out) {
  const cplx* res = plan.result_slot < static_cast<int>(plan.n_nodes)
                        ? node_data[plan.result_slot]
                        : ws.val[plan.result_slot].data();
  if (plan.out_dims.empty()) {
    out[0] = res[0];
    return;
  }
  std::vector<std::size_t> idx(plan.out_dims.size(), 0);
  for (std::size_t flat = 0;; ++flat) {
    std::ptrdiff_t off = 0;
    for (std::size_t a = 0; a < idx.size(); ++a)
      off += static_cast<std::ptrdiff_t>(idx[a]) * plan.out_strides[a];
    out[flat] = res[off];
    std::size_t a = idx.size();
    bool done = true;
    while (a-- > 0) {
      if (++idx[a] < plan.out_dims[a]) {
        done = false;
        break;
      }
      idx[a] = 0;
    }
    if (done) break;
  }
}

// Reverse pass.  `seed` is the adjoint of the result buffer in the
// *declared open order*; leaf adjoints are delivered through `sink`
// in each node's own axis order.
inline void plan_backward(
    const Plan& plan, const WireNetwork& net, const std::vector<const cplx*>& node_data,
    Workspace& ws, const cplx* seed,
    const std::function<void(int leaf, bool conj, const cplx* adj, std::size_t n)>& sink) {
  if (plan.result_slot < 0) return;
  for (std::size_t i = 0; i < plan.n_nodes; ++i) ws.bufs[i] = node_data[i];
  for (const auto& st : plan.steps) ws.bufs[st.out] = ws.val[st.out].data();
  const auto& bufs = ws.bufs;

  // scatter seed into result-slot adjoint
  auto& radj = ws.adj[plan.result_slot];
  std::fill(radj.begin(), radj.begin() + plan.slot_numel[plan.result_slot], cplx(0, 0));
  if (plan.out_dims.empty()) {
    radj[0] = seed[0];
  } else {
    std::vector<std::size_t> idx(plan.out_dims.size(), 0);
    for (std::size_t flat = 0;; ++flat) {
      std::ptrdiff_t off = 0;
      for (std::size_t a = 0; a < idx.size(); ++a)
        off += static_cast<std::ptrdiff_t>(idx[a]) * plan.out_strides[a];
      radj[off] = seed[flat];
      std::size_t a = idx.size();
      bool done = true;
      while (a-- > 0) {
        if (++idx[a] < plan.out_dims[a]) {
          done = false;
          break;
        }
        idx[a] = 0;
      }
      if (done) break;
    }
  }

  for (std::size_t s = plan.steps.size(); s-- > 0;) {
    const auto& st = plan.steps[s];
    if (!plan.slot_grad[st.out]) continue;
    const cplx* adj_out = ws.adj[st.out].data();
    if (st.grad_a) detail::run_program(st.bwd_a, ws.adj[st.a].data(), adj_out, bufs[st.b]);
    if (st.grad_b) detail::run_program(st.bwd_b, ws.adj[st.b].data(), adj_out, bufs[st.a]);
  }
  for (std::size_t i = 0; i < plan.n_nodes; ++i) {
    const auto& node = net.nodes[i];
    if (node.leaf < 0 || !plan.slot_grad[i]) continue;
    sink(node.leaf, node.conj, ws.adj[i].data(), plan.slot_numel[i]);
  }
}

//=========================================================================
// Public contraction interface
//=========================================================================

struct NetworkSpec {
  struct BoundAxis {
    std::size_t tensor;
    std::string axis;
  };
  std::vector<const ComplexTensor*> tensors;
  std::vector<std::pair<BoundAxis, BoundAxis>> pairs;
  std::vector<BoundAxis> open;  // ordered output axes
};

// Full Einstein summation of the network; output axes ordered as declared.
inline ComplexTensor contract(const NetworkSpec& spec) {
  WireNetwork net;
  std::vector<std::vector<int>> wires(spec.tensors.size());
  for (std::size_t t = 0; t < spec.tensors.size(); ++t)
    wires[t].assign(spec.tensors[t]->rank(), -1);

  auto bind = [&](const NetworkSpec::BoundAxis& ba) -> int& {
    if (ba.tensor >= spec.tensors.size())
      throw std::invalid_argument("contract: tensor index out of range");
    return wires[ba.tensor][spec.tensors[ba.tensor]->axis(ba.axis)];
  };

  for (const auto& [a, b] : spec.pairs) {
    int& wa = bind(a);
    int& wb = bind(b);
    if (wa != -1 || wb != -1) throw std::invalid_argument("contract: duplicate axis binding");
    const int w = net.fresh_wire();
    wa = w;
    wb = w;
    if (spec.tensors[a.tensor]->extent(spec.tensors[a.tensor]->axis(a.axis)) !=
        spec.tensors[b.tensor]->extent(spec.tensors[b.tensor]->axis(b.axis)))
      throw std::invalid_argument("contract: axis-extent mismatch");
  }
  std::vector<std::string> out_labels;
  for (const auto& oa : spec.open) {
    int& w = bind(oa);
    if (w != -1) throw std::invalid_argument("contract: duplicate axis binding");
    w = net.fresh_wire();
    net.open.push_back(w);
    out_labels.push_back(oa.axis);
  }
  for (std::size_t t = 0; t < spec.tensors.size(); ++t)
    for (std::size_t a = 0; a < wires[t].size(); ++a)
      if (wires[t][a] == -1)
        throw std::invalid_argument("contract: axis '" + spec.tensors[t]->axis_labels()[a] +
                                    "' of tensor " + std::to_string(t) + " is unbound");

  // Partial-trace any tensor that has both ends of a pair bound to itself.
  // (reserve keeps references stable; one entry per self-bound pair at most)
  std::vector<ComplexTensor> traced;
  traced.reserve(spec.pairs.size() + 1);
  std::vector<const cplx*> data;
  for (std::size_t t = 0; t < spec.tensors.size(); ++t) {
    const ComplexTensor* src = spec.tensors[t];
    std::vector<int> w = wires[t];
    bool again = true;
    while (again) {
      again = false;
      for (std::size_t i = 0; i < w.size() && !again; ++i)
        for (std::size_t j = i + 1; j < w.size() && !again; ++j)
          if (w[i] == w[j]) {
            ComplexTensor delta = identity_tensor(src->extent(i), "tr_a", "tr_b");
            NetworkSpec sub;
            sub.tensors = {src, &delta};
            sub.pairs = {{{0, src->axis_labels()[i]}, {1, "tr_a"}},
                         {{0, src->axis_labels()[j]}, {1, "tr_b"}}};
            for (std::size_t a = 0; a < w.size(); ++a)
              if (a != i && a != j) sub.open.push_back({0, src->axis_labels()[a]});
            traced.push_back(contract(sub));
            src = &traced.back();
            std::vector<int> w2;
            for (std::size_t a = 0; a < w.size(); ++a)
              if (a != i && a != j) w2.push_back(w[a]);
            w = std::move(w2);
            again = true;
          }
    }
    net.add_node(src, w);
    data.push_back(src->data());
  }
  Plan plan = compile_plan(net);
  Workspace ws;
  plan_forward(plan, data, ws);

  std::vector<std::size_t> out_shape = plan.out_dims;
  // de-duplicate output labels if needed
  for (std::size_t i = 0; i < out_labels.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (out_labels[i] == out_labels[j]) out_labels[i] += "'";
  ComplexTensor out(out_shape, out_labels);
  plan_result(plan, data, ws, out.data());
  return out;
}

// Convenience: contract two tensors over matching named axis pairs.
inline ComplexTensor tensordot(const ComplexTensor& a, const ComplexTensor& b,
                               const std::vector<std::pair<std::string, std::string>>& axes) {
  NetworkSpec spec;
  spec.tensors = {&a, &b};
  std::vector<bool> ad(a.rank(), false), bd(b.rank(), false);
  for (const auto& [la, lb] : axes) {
    spec.pairs.push_back({{0, la}, {1, lb}});
    ad[a.axis(la)] = true;
    bd[b.axis(lb)] = true;
  }
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (!ad[i]) spec.open.push_back({0, a.axis_labels()[i]});
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (!bd[i]) spec.open.push_back({1, b.axis_labels()[i]});
  return contract(spec);
}

}  // namespace pttkit
