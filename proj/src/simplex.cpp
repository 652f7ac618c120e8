#include "listerm/simplex.hpp"

#include <cassert>
#include <cstddef>

namespace listerm::lp {

int Problem::add_var(bool nonneg) {
  nonneg_.push_back(nonneg);
  return static_cast<int>(nonneg_.size()) - 1;
}

void Problem::add_row(const std::vector<std::pair<int, Rat>>& terms, Rel rel,
                      const Rat& rhs) {
  rows_.push_back(Row{terms, rel, rhs});
}

void Problem::set_objective(const std::vector<std::pair<int, Rat>>& terms,
                            bool maximize) {
  objective_ = terms;
  maximize_ = maximize;
}

namespace {

// Dense standard-form tableau: minimize c.x, A x = b, x >= 0, b >= 0.
struct Tableau {
  std::size_t m, n;                 // rows, columns
  std::vector<std::vector<Rat>> a;  // m x n
  std::vector<Rat> b;               // m
  std::vector<int> basis;           // m, column index basic in each row

  void pivot(std::size_t r, std::size_t c) {
    Rat p = a[r][c];
    for (std::size_t j = 0; j < n; ++j) a[r][j] /= p;
    b[r] /= p;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == r) continue;
      Rat f = a[i][c];
      if (f == 0) continue;
      for (std::size_t j = 0; j < n; ++j) a[i][j] -= f * a[r][j];
      b[i] -= f * b[r];
    }
    basis[r] = static_cast<int>(c);
  }
};

enum class RunStatus { Optimal, Unbounded, Limit };

// Simplex iterations with Bland's rule on explicit reduced costs.
RunStatus run_simplex(Tableau& t, const std::vector<Rat>& cost, std::size_t& pivots,
                      std::size_t pivot_limit) {
  for (;;) {
    // reduced costs: c_j - c_B . A_j
    std::vector<Rat> cb(t.m);
    for (std::size_t i = 0; i < t.m; ++i) cb[i] = cost[t.basis[i]];
    int enter = -1;
    for (std::size_t j = 0; j < t.n; ++j) {
      Rat rc = cost[j];
      for (std::size_t i = 0; i < t.m; ++i) {
        if (cb[i] != 0) rc -= cb[i] * t.a[i][j];
      }
      if (rc < 0) {
        enter = static_cast<int>(j);  // Bland: first negative
        break;
      }
    }
    if (enter < 0) return RunStatus::Optimal;
    // ratio test; Bland tie-break on smallest basis column
    int leave = -1;
    Rat best_ratio;
    for (std::size_t i = 0; i < t.m; ++i) {
      if (t.a[i][enter] <= 0) continue;
      Rat ratio = t.b[i] / t.a[i][enter];
      if (leave < 0 || ratio < best_ratio ||
          (ratio == best_ratio && t.basis[i] < t.basis[leave])) {
        leave = static_cast<int>(i);
        best_ratio = ratio;
      }
    }
    if (leave < 0) return RunStatus::Unbounded;
    t.pivot(static_cast<std::size_t>(leave), static_cast<std::size_t>(enter));
    if (++pivots > pivot_limit) return RunStatus::Limit;
  }
}

}  // namespace

Result Problem::solve(std::size_t pivot_limit) const {
  // column layout: per user var, one column (nonneg) or two (free: x+ - x-),
  // then slack columns, then artificials.
  std::vector<int> pos_col(nonneg_.size()), neg_col(nonneg_.size(), -1);
  std::size_t ncols = 0;
  for (std::size_t v = 0; v < nonneg_.size(); ++v) {
    pos_col[v] = static_cast<int>(ncols++);
    if (!nonneg_[v]) neg_col[v] = static_cast<int>(ncols++);
  }
  std::size_t struct_cols = ncols;
  std::size_t nslack = 0;
  for (const auto& r : rows_)
    if (r.rel != Rel::Eq) ++nslack;
  std::size_t m = rows_.size();
  std::size_t n = struct_cols + nslack + m;  // artificial per row

  Tableau t;
  t.m = m;
  t.n = n;
  t.a.assign(m, std::vector<Rat>(n, Rat(0)));
  t.b.assign(m, Rat(0));
  t.basis.assign(m, 0);

  std::size_t slack_at = struct_cols;
  for (std::size_t i = 0; i < m; ++i) {
    const Row& r = rows_[i];
    bool flip = r.rhs < 0;
    Rat sgn = flip ? -1 : 1;
    for (const auto& [v, c] : r.terms) {
      t.a[i][pos_col[v]] += sgn * c;
      if (neg_col[v] >= 0) t.a[i][neg_col[v]] -= sgn * c;
    }
    t.b[i] = sgn * r.rhs;
    Rel rel = r.rel;
    if (flip) rel = rel == Rel::Le ? Rel::Ge : (rel == Rel::Ge ? Rel::Le : Rel::Eq);
    if (rel != Rel::Eq) {
      t.a[i][slack_at] = rel == Rel::Le ? 1 : -1;
      ++slack_at;
    }
  }
  // artificial columns
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t art = struct_cols + nslack + i;
    t.a[i][art] = 1;
    t.basis[i] = static_cast<int>(art);
  }

  std::size_t pivots = 0;

  // phase 1: minimize sum of artificials
  std::vector<Rat> c1(n, Rat(0));
  for (std::size_t i = 0; i < m; ++i) c1[struct_cols + nslack + i] = 1;
  RunStatus s1 = run_simplex(t, c1, pivots, pivot_limit);
  if (s1 == RunStatus::Limit) return {Status::IterationLimit, Rat(0), {}};
  assert(s1 == RunStatus::Optimal && "phase 1 cannot be unbounded");
  Rat phase1 = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (t.basis[i] >= static_cast<int>(struct_cols + nslack)) phase1 += t.b[i];
  if (phase1 != 0) return {Status::Infeasible, Rat(0), {}};

  // drive remaining artificials out of the basis where possible
  for (std::size_t i = 0; i < m; ++i) {
    if (t.basis[i] < static_cast<int>(struct_cols + nslack)) continue;
    int col = -1;
    for (std::size_t j = 0; j < struct_cols + nslack; ++j) {
      if (t.a[i][j] != 0) {
        col = static_cast<int>(j);
        break;
      }
    }
    if (col >= 0) t.pivot(i, static_cast<std::size_t>(col));
    // else: redundant zero row; harmless to keep with artificial at 0
  }

  // phase 2
  std::vector<Rat> c2(n, Rat(0));
  for (const auto& [v, c] : objective_) {
    Rat k = maximize_ ? -c : c;
    c2[pos_col[v]] += k;
    if (neg_col[v] >= 0) c2[neg_col[v]] -= k;
  }
  // forbid artificials from re-entering; a still-basic artificial sits on an
  // all-zero redundant row and keeps its identity entry
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t art = struct_cols + nslack + i;
    int basic_row = -1;
    for (std::size_t r = 0; r < m; ++r) {
      if (t.basis[r] == static_cast<int>(art)) basic_row = static_cast<int>(r);
      t.a[r][art] = 0;
    }
    if (basic_row >= 0) t.a[basic_row][art] = 1;
  }
  RunStatus s2 = run_simplex(t, c2, pivots, pivot_limit);
  if (s2 == RunStatus::Limit) return {Status::IterationLimit, Rat(0), {}};
  if (s2 == RunStatus::Unbounded) return {Status::Unbounded, Rat(0), {}};

  std::vector<Rat> full(n, Rat(0));
  for (std::size_t i = 0; i < m; ++i) full[t.basis[i]] = t.b[i];
  Result res;
  res.status = Status::Optimal;
  res.point.resize(nonneg_.size());
  for (std::size_t v = 0; v < nonneg_.size(); ++v) {
    res.point[v] = full[pos_col[v]];
    if (neg_col[v] >= 0) res.point[v] -= full[neg_col[v]];
  }
  Rat obj = 0;
  for (const auto& [v, c] : objective_) obj += c * res.point[v];
  res.objective = obj;
  return res;
}

}  // namespace listerm::lp
