#pragma once

// Linear integer constraint engine: terms, normalized constraints, and a
// knowledge base with satisfiability / entailment / variable elimination
// backed by Fourier-Motzkin elimination over exact rationals with integer
// bound tightening. Unsat and entailment answers are sound; sat/unknown may
// over-approximate.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace listerm {

using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

Int rat_floor(const Rat& r);
Int rat_ceil(const Rat& r);

struct SymVar {
  std::uint32_t id = 0;
  friend auto operator<=>(const SymVar&, const SymVar&) = default;
};

// Supplies globally unique symbolic variables. Display hints are cosmetic
// and never affect semantics.
class VarPool {
 public:
  SymVar fresh(std::string hint);
  const std::string& hint(SymVar v) const;
  std::uint32_t size() const { return static_cast<std::uint32_t>(hints_.size()); }
  // Printable name: hint if globally unique among hints, else hint$id.
  std::string name(SymVar v) const;

 private:
  std::vector<std::string> hints_;
  std::map<std::string, int> hint_count_;
};

// Sum of rational-coefficient monomials plus a constant. No zero
// coefficients are stored.
class LinTerm {
 public:
  LinTerm() = default;
  /* implicit */ LinTerm(std::int64_t c) : constant_(c) {}
  /* implicit */ LinTerm(const Rat& c) : constant_(c) {}
  /* implicit */ LinTerm(SymVar v) { coeffs_[v] = 1; }

  static LinTerm var(SymVar v, Rat coeff = 1);

  const std::map<SymVar, Rat>& coeffs() const { return coeffs_; }
  const Rat& constant() const { return constant_; }

  bool is_constant() const { return coeffs_.empty(); }
  bool is_single_var() const;  // coefficient 1, constant 0
  std::optional<SymVar> single_var() const;
  Rat coeff(SymVar v) const;
  bool mentions(SymVar v) const { return coeffs_.count(v) != 0; }

  LinTerm& operator+=(const LinTerm& o);
  LinTerm& operator-=(const LinTerm& o);
  LinTerm& operator*=(const Rat& k);
  friend LinTerm operator+(LinTerm a, const LinTerm& b) { return a += b; }
  friend LinTerm operator-(LinTerm a, const LinTerm& b) { return a -= b; }
  friend LinTerm operator*(LinTerm a, const Rat& k) { return a *= k; }
  friend LinTerm operator-(LinTerm a) { return a *= -1; }
  int cmp(const LinTerm& o) const;
  friend bool operator==(const LinTerm& a, const LinTerm& b) { return a.cmp(b) == 0; }
  friend bool operator<(const LinTerm& a, const LinTerm& b) { return a.cmp(b) < 0; }

  // Simultaneous substitution of variables by terms; variables absent from
  // the map are kept.
  LinTerm substitute(const std::map<SymVar, LinTerm>& map) const;
  Rat eval(const std::map<SymVar, Int>& assignment) const;
  void collect_vars(std::set<SymVar>& out) const;

  std::string str(const VarPool& pool) const;

 private:
  std::map<SymVar, Rat> coeffs_;
  Rat constant_;
};

// Normalized linear constraint: term <= 0 or term = 0 with gcd-reduced
// integer coefficients. Strict t < 0 over the integers is stored as
// t + 1 <= 0. Construction detects ground truth/falsity and, for
// equalities, divisibility conflicts (e.g. 2x = 1).
class Constraint {
 public:
  enum class Rel { Le, Eq };

  static Constraint le(const LinTerm& lhs, const LinTerm& rhs);  // lhs <= rhs
  static Constraint lt(const LinTerm& lhs, const LinTerm& rhs);  // lhs <  rhs
  static Constraint ge(const LinTerm& lhs, const LinTerm& rhs) { return le(rhs, lhs); }
  static Constraint gt(const LinTerm& lhs, const LinTerm& rhs) { return lt(rhs, lhs); }
  static Constraint eq(const LinTerm& lhs, const LinTerm& rhs);

  Rel rel() const { return rel_; }
  const LinTerm& term() const { return term_; }

  bool trivially_true() const;
  bool trivially_false() const;
  bool mentions(SymVar v) const { return term_.mentions(v); }
  void collect_vars(std::set<SymVar>& out) const { term_.collect_vars(out); }

  Constraint substitute(const std::map<SymVar, LinTerm>& map) const;
  bool eval(const std::map<SymVar, Int>& assignment) const;

  std::string str(const VarPool& pool) const;

  int cmp(const Constraint& o) const {
    if (rel_ != o.rel_) return rel_ < o.rel_ ? -1 : 1;
    return term_.cmp(o.term_);
  }
  friend bool operator==(const Constraint& a, const Constraint& b) { return a.cmp(b) == 0; }
  friend bool operator<(const Constraint& a, const Constraint& b) { return a.cmp(b) < 0; }

 private:
  Constraint(Rel rel, LinTerm term) : rel_(rel), term_(std::move(term)) {}
  void normalize();

  Rel rel_ = Rel::Le;
  LinTerm term_;  // constraint is term_ <= 0 or term_ = 0
};

// Conjunctive set of constraints over symbolic variables.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  void add(const Constraint& c);
  void add_all(const KnowledgeBase& o);
  const std::set<Constraint>& constraints() const { return cs_; }
  std::size_t size() const { return cs_.size(); }
  bool contains(const Constraint& c) const { return cs_.count(c) != 0; }

  KnowledgeBase substitute(const std::map<SymVar, LinTerm>& map) const;
  std::set<SymVar> vars() const;
  bool eval(const std::map<SymVar, Int>& assignment) const;

  std::string str(const VarPool& pool) const;
  // SMT-LIB2 dump (declare-const per variable, one assert of a conjunction);
  // consumed by tests for external cross-checking.
  std::string to_smt2(const VarPool& pool) const;

  friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
    return a.cs_ == b.cs_;
  }

 private:
  std::set<Constraint> cs_;
};

struct FmBudget {
  std::size_t max_vars = 64;
  std::size_t max_constraints = 4096;
};

enum class SatResult { Sat, Unsat };

// Sound unsat: reports Unsat only when kb has no integer model. Budget
// overruns degrade to Sat.
SatResult is_satisfiable(const KnowledgeBase& kb, const FmBudget& budget = {});

// Proved only if every integer model of kb satisfies c (via refutation of
// kb and the negation of c). Budget overruns degrade to not-proved.
bool entails(const KnowledgeBase& kb, const Constraint& c, const FmBudget& budget = {});

// Over-approximate projection of kb onto the variables other than v. On
// budget overrun all constraints mentioning v are dropped.
KnowledgeBase eliminate(const KnowledgeBase& kb, SymVar v, const FmBudget& budget = {});
KnowledgeBase eliminate_all(KnowledgeBase kb, const std::set<SymVar>& vs,
                            const FmBudget& budget = {});

// Largest integer c with kb |= t >= c, searched within |c| <= limit.
std::optional<Int> entailed_lower_bound(const KnowledgeBase& kb, const LinTerm& t,
                                        const Int& limit = 1024);
std::optional<Int> entailed_upper_bound(const KnowledgeBase& kb, const LinTerm& t,
                                        const Int& limit = 1024);
// Entailed constant value of t, if any.
std::optional<Int> entailed_value(const KnowledgeBase& kb, const LinTerm& t,
                                  const Int& limit = 1024);
bool entails_equal(const KnowledgeBase& kb, const LinTerm& a, const LinTerm& b);

}  // namespace listerm
