#pragma once

// Exact rational LP solver: dense two-phase simplex with Bland's rule.
// Small instances only (ranking-function synthesis, bound queries).

#include "listerm/constraints.hpp"

#include <vector>

namespace listerm::lp {

enum class Status { Optimal, Unbounded, Infeasible, IterationLimit };

struct Result {
  Status status = Status::Infeasible;
  Rat objective;            // valid when Optimal
  std::vector<Rat> point;   // assignment per added variable, valid when Optimal
};

enum class Rel { Le, Eq, Ge };

// Variables are free by default; pass nonneg=true for x >= 0. Free variables
// are split into differences of nonnegatives internally.
class Problem {
 public:
  int add_var(bool nonneg = false);
  void add_row(const std::vector<std::pair<int, Rat>>& terms, Rel rel, const Rat& rhs);
  // minimize by default; maximize negates internally
  void set_objective(const std::vector<std::pair<int, Rat>>& terms, bool maximize = false);

  Result solve(std::size_t pivot_limit = 20000) const;

 private:
  struct Row {
    std::vector<std::pair<int, Rat>> terms;
    Rel rel;
    Rat rhs;
  };
  std::vector<bool> nonneg_;
  std::vector<Row> rows_;
  std::vector<std::pair<int, Rat>> objective_;
  bool maximize_ = false;
};

}  // namespace listerm::lp
