#include "listerm/ranking.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <sstream>

namespace listerm {

namespace {

// Tarjan over locations; transitions define the edges.
std::vector<std::vector<int>> scc_decompose(const Its& its) {
  int n = static_cast<int>(its.locations.size());
  std::vector<std::vector<int>> adj(n);
  for (const auto& t : its.transitions) adj[t.src].push_back(t.dst);
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  std::vector<std::vector<int>> sccs;
  int next = 0;
  std::function<void(int)> strongconnect = [&](int v) {
    index[v] = low[v] = next++;
    stack.push_back(v);
    on_stack[v] = true;
    for (int w : adj[v]) {
      if (index[w] < 0) {
        strongconnect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<int> scc;
      for (;;) {
        int w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = static_cast<int>(sccs.size());
        scc.push_back(w);
        if (w == v) break;
      }
      std::sort(scc.begin(), scc.end());
      sccs.push_back(std::move(scc));
    }
  };
  for (int v = 0; v < n; ++v)
    if (index[v] < 0) strongconnect(v);
  std::sort(sccs.begin(), sccs.end());
  return sccs;
}

std::vector<int> intra_transitions(const Its& its, const std::vector<int>& scc) {
  std::set<int> locs(scc.begin(), scc.end());
  std::vector<int> out;
  for (const auto& t : its.transitions)
    if (locs.count(t.src) && locs.count(t.dst)) out.push_back(t.id);
  return out;
}

// f_src(x) - f_dst(x') as a term over the transition's vocabulary.
LinTerm rank_decrease_term(const Its& its, const Transition& t, const RankStep& step) {
  const auto& [csrc, dsrc] = step.funcs.at(t.src);
  const auto& [cdst, ddst] = step.funcs.at(t.dst);
  LinTerm f(dsrc - ddst);
  for (const auto& [v, c] : csrc) f += LinTerm::var(v, c);
  const ItsLocation& dst = its.locations[t.dst];
  for (std::size_t i = 0; i < dst.vars.size(); ++i) {
    auto it = cdst.find(dst.vars[i]);
    if (it != cdst.end()) f -= LinTerm::var(dst.primed[i], it->second);
  }
  return f;
}

LinTerm rank_src_term(const RankStep& step, int loc) {
  const auto& [c, d] = step.funcs.at(loc);
  LinTerm f(d);
  for (const auto& [v, k] : c) f += LinTerm::var(v, k);
  return f;
}

// Rows of a transition's polyhedron in ">= 0" form over its vocabulary.
struct PolyRow {
  std::map<SymVar, Rat> g;
  Rat h;
};

std::vector<PolyRow> polyhedron_rows(const Transition& t) {
  std::vector<PolyRow> rows;
  auto push = [&](const LinTerm& ge0) {
    PolyRow r;
    for (const auto& [v, c] : ge0.coeffs()) r.g[v] = c;
    r.h = ge0.constant();
    rows.push_back(std::move(r));
  };
  for (const auto& c : t.rel.constraints()) {
    if (c.rel() == Constraint::Rel::Le) {
      push(-c.term());
    } else {
      push(c.term());
      push(-c.term());
    }
  }
  return rows;
}

struct SccSolver {
  const Its& its;
  std::size_t pivot_limit;
  const std::vector<int>& scc;
  std::vector<int> remaining;  // transition ids

  // One synthesis round: returns the step on success.
  std::optional<RankStep> round() {
    lp::Problem lp;
    // coefficient variables per location
    std::map<int, std::map<SymVar, int>> cvar;
    std::map<int, int> dvar;
    for (int loc : scc) {
      for (SymVar v : its.locations[loc].vars) cvar[loc][v] = lp.add_var(false);
      dvar[loc] = lp.add_var(false);
    }
    std::map<int, int> eps;
    std::vector<std::pair<int, Rat>> objective;
    for (int tid : remaining) {
      const Transition& t = its.transitions[tid];
      std::vector<PolyRow> rows = polyhedron_rows(t);
      // vocabulary columns: src vars and dst primed vars
      const ItsLocation& src = its.locations[t.src];
      const ItsLocation& dst = its.locations[t.dst];
      std::map<SymVar, std::pair<bool, SymVar>> col;  // var -> (is_primed, base var)
      for (SymVar v : src.vars) col[v] = {false, v};
      for (std::size_t i = 0; i < dst.vars.size(); ++i)
        col[dst.primed[i]] = {true, dst.vars[i]};

      int e = lp.add_var(true);
      eps[tid] = e;
      lp.add_row({{e, 1}}, lp::Rel::Le, 1);
      objective.push_back({e, 1});

      for (int cond = 0; cond < 2; ++cond) {
        // cond 0: bound f_src >= 0 on the polyhedron
        // cond 1: decrease f_src - f_dst' - eps >= 0
        std::vector<int> lambda;
        for (std::size_t i = 0; i < rows.size(); ++i) lambda.push_back(lp.add_var(true));
        // per-column equality
        for (const auto& [var, info] : col) {
          std::vector<std::pair<int, Rat>> terms;
          for (std::size_t i = 0; i < rows.size(); ++i) {
            auto it = rows[i].g.find(var);
            if (it != rows[i].g.end()) terms.push_back({lambda[i], it->second});
          }
          // target coefficient
          if (!info.first) {
            terms.push_back({cvar[t.src][info.second], -1});
          } else if (cond == 1) {
            auto it = cvar[t.dst].find(info.second);
            if (it != cvar[t.dst].end()) terms.push_back({it->second, 1});
          }
          lp.add_row(terms, lp::Rel::Eq, 0);
        }
        // vocabulary outside the projection (defensive): treat as coefficient 0
        for (std::size_t i = 0; i < rows.size(); ++i) {
          for (const auto& [var, g] : rows[i].g) {
            if (!col.count(var)) {
              lp.add_row({{lambda[i], 1}}, lp::Rel::Eq, 0);
              break;
            }
          }
        }
        // constant row: sum lambda_i h_i <= d_src (- d_dst - eps)
        std::vector<std::pair<int, Rat>> crow;
        for (std::size_t i = 0; i < rows.size(); ++i)
          if (rows[i].h != 0) crow.push_back({lambda[i], rows[i].h});
        crow.push_back({dvar[t.src], -1});
        if (cond == 1) {
          crow.push_back({dvar[t.dst], 1});
          crow.push_back({e, 1});
        }
        lp.add_row(crow, lp::Rel::Le, 0);
      }
    }
    lp.set_objective(objective, /*maximize=*/true);
    lp::Result res = lp.solve(pivot_limit);
    if (res.status != lp::Status::Optimal || res.objective <= 0) return std::nullopt;

    // scale so every strictly ranked transition decreases by at least 1
    Rat min_eps;
    bool have = false;
    for (int tid : remaining) {
      Rat e = res.point[eps[tid]];
      if (e > 0 && (!have || e < min_eps)) {
        min_eps = e;
        have = true;
      }
    }
    if (!have) return std::nullopt;
    Rat scale = 1 / min_eps;
    Int den_lcm = 1;
    for (int loc : scc) {
      for (const auto& [v, idx] : cvar[loc])
        den_lcm = lcm(den_lcm, denominator(res.point[idx] * scale));
      den_lcm = lcm(den_lcm, denominator(res.point[dvar[loc]] * scale));
    }
    scale *= Rat(den_lcm);

    RankStep step;
    for (int loc : scc) {
      std::map<SymVar, Rat> coeffs;
      for (const auto& [v, idx] : cvar[loc]) {
        Rat c = res.point[idx] * scale;
        if (c != 0) coeffs[v] = c;
      }
      step.funcs[loc] = {coeffs, res.point[dvar[loc]] * scale};
    }
    // verify strictness through the constraint engine before removing
    for (int tid : remaining) {
      if (res.point[eps[tid]] <= 0) continue;
      const Transition& t = its.transitions[tid];
      LinTerm dec = rank_decrease_term(its, t, step);
      if (entails(t.rel, Constraint::ge(dec, LinTerm(1)))) step.removed.push_back(tid);
    }
    if (step.removed.empty()) return std::nullopt;
    return step;
  }
};

}  // namespace

TerminationResult prove_termination(const Its& its, std::size_t pivot_limit) {
  TerminationResult result;
  for (const auto& scc : scc_decompose(its)) {
    std::vector<int> trans = intra_transitions(its, scc);
    // unreachable relations cannot execute
    std::vector<int> live;
    for (int tid : trans)
      if (is_satisfiable(its.transitions[tid].rel) == SatResult::Sat) live.push_back(tid);
    if (live.empty()) continue;
    SccProof proof;
    proof.locations = scc;
    SccSolver solver{its, pivot_limit, scc, live};
    while (!solver.remaining.empty()) {
      auto step = solver.round();
      if (!step) {
        result.verdict = RankVerdict::Unknown;
        std::ostringstream os;
        os << "no linear ranking function for the strongly connected component {";
        for (std::size_t i = 0; i < scc.size(); ++i)
          os << (i ? ", " : "") << its.locations[scc[i]].name;
        os << "}";
        result.reason = os.str();
        return result;
      }
      std::set<int> removed(step->removed.begin(), step->removed.end());
      std::vector<int> next;
      for (int tid : solver.remaining)
        if (!removed.count(tid)) next.push_back(tid);
      solver.remaining = std::move(next);
      proof.steps.push_back(std::move(*step));
    }
    result.proof.sccs.push_back(std::move(proof));
  }
  result.verdict = RankVerdict::Terminating;
  return result;
}

bool check_certificate(const Its& its, const TerminationProof& proof, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::size_t proof_at = 0;
  for (const auto& scc : scc_decompose(its)) {
    std::vector<int> trans = intra_transitions(its, scc);
    std::vector<int> remaining;
    for (int tid : trans)
      if (is_satisfiable(its.transitions[tid].rel) == SatResult::Sat)
        remaining.push_back(tid);
    if (remaining.empty()) continue;
    if (proof_at >= proof.sccs.size()) return fail("missing proof for a component");
    const SccProof& sp = proof.sccs[proof_at++];
    if (sp.locations != scc) return fail("component mismatch in proof order");
    for (const auto& step : sp.steps) {
      for (int loc : scc)
        if (!step.funcs.count(loc)) return fail("step lacks a function for a location");
      std::set<int> removed(step.removed.begin(), step.removed.end());
      for (int tid : remaining) {
        const Transition& t = its.transitions[tid];
        LinTerm fsrc = rank_src_term(step, t.src);
        if (!entails(t.rel, Constraint::ge(fsrc, LinTerm(0))))
          return fail("bound f >= 0 fails on transition " + std::to_string(tid));
        LinTerm dec = rank_decrease_term(its, t, step);
        if (!entails(t.rel, Constraint::ge(dec, LinTerm(0))))
          return fail("non-increase fails on transition " + std::to_string(tid));
        if (removed.count(tid) &&
            !entails(t.rel, Constraint::ge(dec, LinTerm(1))))
          return fail("strict decrease fails on transition " + std::to_string(tid));
      }
      for (int tid : step.removed)
        if (!std::count(remaining.begin(), remaining.end(), tid))
          return fail("removed transition not in the remaining set");
      std::vector<int> next;
      for (int tid : remaining)
        if (!removed.count(tid)) next.push_back(tid);
      if (next.size() == remaining.size()) return fail("step removes nothing");
      remaining = std::move(next);
    }
    if (!remaining.empty()) return fail("removal order does not empty the component");
  }
  if (proof_at != proof.sccs.size()) return fail("extra proof components");
  return true;
}

std::string explain(const Its& its, const TerminationProof& proof, const VarPool& pool) {
  std::ostringstream os;
  if (proof.sccs.empty()) {
    os << "no cyclic components; every run leaves the transition system\n";
    return os.str();
  }
  for (const auto& sp : proof.sccs) {
    os << "component {";
    for (std::size_t i = 0; i < sp.locations.size(); ++i)
      os << (i ? ", " : "") << its.locations[sp.locations[i]].name;
    os << "}:\n";
    for (std::size_t k = 0; k < sp.steps.size(); ++k) {
      const RankStep& step = sp.steps[k];
      os << "  round " << k + 1 << ": rank";
      for (int loc : sp.locations) {
        const auto& [c, d] = step.funcs.at(loc);
        LinTerm f(d);
        for (const auto& [v, kk] : c) f += LinTerm::var(v, kk);
        os << " [" << its.locations[loc].name << "] " << f.str(pool);
      }
      os << "; strictly decreasing:";
      for (int tid : step.removed) os << " t" << tid;
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace listerm
