#include "listerm/constraints.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace listerm {

Int rat_floor(const Rat& r) {
  Int n = numerator(r), d = denominator(r);  // d > 0 in canonical form
  Int q = n / d;
  if (n % d != 0 && n < 0) --q;
  return q;
}

Int rat_ceil(const Rat& r) { return -rat_floor(-r); }

SymVar VarPool::fresh(std::string hint) {
  if (hint.empty()) hint = "t";
  hint_count_[hint]++;
  hints_.push_back(std::move(hint));
  return SymVar{static_cast<std::uint32_t>(hints_.size() - 1)};
}

const std::string& VarPool::hint(SymVar v) const {
  static const std::string unknown = "?";
  if (v.id >= hints_.size()) return unknown;
  return hints_[v.id];
}

std::string VarPool::name(SymVar v) const {
  const std::string& h = hint(v);
  auto it = hint_count_.find(h);
  if (it != hint_count_.end() && it->second == 1) return h;
  return h + "$" + std::to_string(v.id);
}

LinTerm LinTerm::var(SymVar v, Rat coeff) {
  LinTerm t;
  if (coeff != 0) t.coeffs_[v] = std::move(coeff);
  return t;
}

bool LinTerm::is_single_var() const {
  return constant_ == 0 && coeffs_.size() == 1 && coeffs_.begin()->second == 1;
}

std::optional<SymVar> LinTerm::single_var() const {
  if (is_single_var()) return coeffs_.begin()->first;
  return std::nullopt;
}

Rat LinTerm::coeff(SymVar v) const {
  auto it = coeffs_.find(v);
  return it == coeffs_.end() ? Rat(0) : it->second;
}

LinTerm& LinTerm::operator+=(const LinTerm& o) {
  for (const auto& [v, c] : o.coeffs_) {
    Rat& mine = coeffs_[v];
    mine += c;
    if (mine == 0) coeffs_.erase(v);
  }
  constant_ += o.constant_;
  return *this;
}

LinTerm& LinTerm::operator-=(const LinTerm& o) {
  for (const auto& [v, c] : o.coeffs_) {
    Rat& mine = coeffs_[v];
    mine -= c;
    if (mine == 0) coeffs_.erase(v);
  }
  constant_ -= o.constant_;
  return *this;
}

LinTerm& LinTerm::operator*=(const Rat& k) {
  if (k == 0) {
    coeffs_.clear();
    constant_ = 0;
    return *this;
  }
  for (auto& [v, c] : coeffs_) c *= k;
  constant_ *= k;
  return *this;
}

int LinTerm::cmp(const LinTerm& o) const {
  if (constant_ != o.constant_) return constant_ < o.constant_ ? -1 : 1;
  auto a = coeffs_.begin(), b = o.coeffs_.begin();
  for (; a != coeffs_.end() && b != o.coeffs_.end(); ++a, ++b) {
    if (a->first != b->first) return a->first < b->first ? -1 : 1;
    if (a->second != b->second) return a->second < b->second ? -1 : 1;
  }
  if (a != coeffs_.end()) return 1;
  if (b != o.coeffs_.end()) return -1;
  return 0;
}

LinTerm LinTerm::substitute(const std::map<SymVar, LinTerm>& map) const {
  LinTerm out(constant_);
  for (const auto& [v, c] : coeffs_) {
    auto it = map.find(v);
    if (it == map.end()) {
      out += LinTerm::var(v, c);
    } else {
      LinTerm img = it->second;
      img *= c;
      out += img;
    }
  }
  return out;
}

Rat LinTerm::eval(const std::map<SymVar, Int>& assignment) const {
  Rat acc = constant_;
  for (const auto& [v, c] : coeffs_) {
    auto it = assignment.find(v);
    assert(it != assignment.end() && "eval with incomplete assignment");
    acc += c * Rat(it->second);
  }
  return acc;
}

void LinTerm::collect_vars(std::set<SymVar>& out) const {
  for (const auto& [v, c] : coeffs_) out.insert(v);
}

std::string LinTerm::str(const VarPool& pool) const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [v, c] : coeffs_) {
    if (first) {
      if (c == -1)
        os << "-";
      else if (c != 1)
        os << c << "*";
      first = false;
    } else {
      os << (c < 0 ? " - " : " + ");
      Rat a = abs(c);
      if (a != 1) os << a << "*";
    }
    os << pool.name(v);
  }
  if (first) {
    os << constant_;
  } else if (constant_ != 0) {
    os << (constant_ < 0 ? " - " : " + ") << abs(constant_);
  }
  return os.str();
}

namespace {

// Scale to integer coefficients and divide by their gcd; returns the scaled
// term. For inequalities the caller floors the constant afterwards.
void integer_scale(LinTerm& t) {
  Int lcm_den = 1;
  for (const auto& [v, c] : t.coeffs()) lcm_den = lcm(lcm_den, denominator(c));
  lcm_den = lcm(lcm_den, denominator(t.constant()));
  Int g = 0;
  for (const auto& [v, c] : t.coeffs()) g = gcd(g, Int(numerator(c * Rat(lcm_den))));
  if (g == 0) {
    // constant-only term
    if (t.constant() != 0) t = LinTerm(Rat(t.constant() * Rat(lcm_den)));
    return;
  }
  Rat factor = Rat(lcm_den) / Rat(g);
  t *= factor;
}

}  // namespace

Constraint Constraint::le(const LinTerm& lhs, const LinTerm& rhs) {
  Constraint c(Rel::Le, lhs - rhs);
  c.normalize();
  return c;
}

Constraint Constraint::lt(const LinTerm& lhs, const LinTerm& rhs) {
  // over integers lhs < rhs is lhs - rhs + 1 <= 0 once coefficients are
  // integral; normalize() floors after scaling, which subsumes the +1 when
  // scaling introduced a fractional constant.
  Constraint c(Rel::Le, lhs - rhs);
  c.normalize();
  if (c.term_.is_constant()) {
    // ground: lhs - rhs < 0
    return (lhs - rhs).constant() < 0 ? le(LinTerm(0), LinTerm(0))
                                      : le(LinTerm(1), LinTerm(0));
  }
  Constraint strict(Rel::Le, c.term_ + LinTerm(1));
  strict.normalize();
  return strict;
}

Constraint Constraint::eq(const LinTerm& lhs, const LinTerm& rhs) {
  Constraint c(Rel::Eq, lhs - rhs);
  c.normalize();
  return c;
}

void Constraint::normalize() {
  if (term_.is_constant()) {
    bool ok = rel_ == Rel::Eq ? term_.constant() == 0 : term_.constant() <= 0;
    term_ = LinTerm(ok ? 0 : 1);
    if (rel_ == Rel::Eq && !ok) rel_ = Rel::Le;  // canonical falsum: 1 <= 0
    if (rel_ == Rel::Eq) term_ = LinTerm(0);
    return;
  }
  integer_scale(term_);
  // coefficients now integral with gcd 1; tighten the constant
  Rat c = term_.constant();
  if (rel_ == Rel::Le) {
    // sum + c <= 0  <=>  sum <= -c  <=>  sum <= floor(-c)
    Int floored = rat_floor(-c);
    term_ -= LinTerm(c);
    term_ += LinTerm(Rat(-floored));
  } else {
    if (denominator(c) != 1) {
      // gcd-reduced integer combination can never equal a fraction
      rel_ = Rel::Le;
      term_ = LinTerm(1);  // falsum
      return;
    }
    // canonical sign for equalities: leading coefficient positive
    if (!term_.coeffs().empty() && term_.coeffs().begin()->second < 0) term_ *= -1;
  }
}

bool Constraint::trivially_true() const {
  if (!term_.is_constant()) return false;
  return rel_ == Rel::Eq ? term_.constant() == 0 : term_.constant() <= 0;
}

bool Constraint::trivially_false() const {
  if (!term_.is_constant()) return false;
  return rel_ == Rel::Eq ? term_.constant() != 0 : term_.constant() > 0;
}

Constraint Constraint::substitute(const std::map<SymVar, LinTerm>& map) const {
  LinTerm t = term_.substitute(map);
  return rel_ == Rel::Eq ? eq(t, LinTerm(0)) : le(t, LinTerm(0));
}

bool Constraint::eval(const std::map<SymVar, Int>& assignment) const {
  Rat v = term_.eval(assignment);
  return rel_ == Rel::Eq ? v == 0 : v <= 0;
}

std::string Constraint::str(const VarPool& pool) const {
  // Render as "lhs <= rhs" / "lhs = rhs" with the constant moved right.
  LinTerm lhs = term_ - LinTerm(term_.constant());
  std::ostringstream os;
  os << lhs.str(pool) << (rel_ == Rel::Eq ? " = " : " <= ") << -term_.constant();
  return os.str();
}

void KnowledgeBase::add(const Constraint& c) {
  if (c.trivially_true()) return;
  cs_.insert(c);
}

void KnowledgeBase::add_all(const KnowledgeBase& o) {
  for (const auto& c : o.cs_) add(c);
}

KnowledgeBase KnowledgeBase::substitute(const std::map<SymVar, LinTerm>& map) const {
  KnowledgeBase out;
  for (const auto& c : cs_) out.add(c.substitute(map));
  return out;
}

std::set<SymVar> KnowledgeBase::vars() const {
  std::set<SymVar> out;
  for (const auto& c : cs_) c.collect_vars(out);
  return out;
}

bool KnowledgeBase::eval(const std::map<SymVar, Int>& assignment) const {
  for (const auto& c : cs_)
    if (!c.eval(assignment)) return false;
  return true;
}

std::string KnowledgeBase::str(const VarPool& pool) const {
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (const auto& c : cs_) {
    if (!first) os << ", ";
    first = false;
    os << c.str(pool);
  }
  os << "}";
  return os.str();
}

std::string KnowledgeBase::to_smt2(const VarPool& pool) const {
  std::ostringstream os;
  os << "(set-logic QF_LIA)\n";
  for (SymVar v : vars()) os << "(declare-const " << pool.name(v) << " Int)\n";
  os << "(assert (and";
  if (cs_.empty()) os << " true";
  for (const auto& c : cs_) {
    LinTerm t = c.term();
    std::ostringstream ts;
    ts << "(+";
    for (const auto& [v, k] : t.coeffs()) {
      assert(denominator(k) == 1);
      Int n = numerator(k);
      if (n == 1)
        ts << " " << pool.name(v);
      else if (n < 0)
        ts << " (* (- " << -n << ") " << pool.name(v) << ")";
      else
        ts << " (* " << n << " " << pool.name(v) << ")";
    }
    Int cst = numerator(t.constant());
    if (cst < 0)
      ts << " (- " << -cst << ")";
    else
      ts << " " << cst;
    ts << ")";
    os << " (" << (c.rel() == Constraint::Rel::Eq ? "=" : "<=") << " " << ts.str()
       << " 0)";
  }
  os << "))\n(check-sat)\n";
  return os.str();
}

namespace {

// Working form for the FM engine: constraints kept normalized; equalities
// removed by exact substitution; remaining variables eliminated pairwise
// with integer tightening at every step.
struct FmState {
  std::vector<Constraint> cs;
  bool overflow = false;

  bool add(const Constraint& c) {
    if (c.trivially_true()) return true;
    if (c.trivially_false()) return false;
    cs.push_back(c);
    return true;
  }
};

std::set<SymVar> fm_vars(const std::vector<Constraint>& cs) {
  std::set<SymVar> vs;
  for (const auto& c : cs) c.collect_vars(vs);
  return vs;
}

// Substitute away one equality constraint, if any mentions v-like variables.
// Returns false on detected unsat.
bool fm_substitute_equalities(FmState& st, const FmBudget& budget) {
  for (;;) {
    int idx = -1;
    for (std::size_t i = 0; i < st.cs.size(); ++i) {
      if (st.cs[i].rel() == Constraint::Rel::Eq && !st.cs[i].term().is_constant()) {
        idx = static_cast<int>(i);
        break;
      }
    }
    if (idx < 0) return true;
    Constraint eqc = st.cs[idx];
    st.cs.erase(st.cs.begin() + idx);
    // pick the variable with the smallest |coefficient| for mild growth
    const auto& coeffs = eqc.term().coeffs();
    auto best = coeffs.begin();
    for (auto it = coeffs.begin(); it != coeffs.end(); ++it)
      if (abs(it->second) < abs(best->second)) best = it;
    SymVar v = best->first;
    Rat a = best->second;
    LinTerm rest = eqc.term() - LinTerm::var(v, a);
    LinTerm solved = rest * (Rat(-1) / a);  // v = solved
    std::map<SymVar, LinTerm> m{{v, solved}};
    std::vector<Constraint> next;
    next.reserve(st.cs.size());
    for (const auto& c : st.cs) {
      Constraint s = c.substitute(m);
      if (s.trivially_false()) return false;
      if (!s.trivially_true()) next.push_back(s);
    }
    st.cs = std::move(next);
    if (st.cs.size() > budget.max_constraints) {
      st.overflow = true;
      return true;
    }
  }
}

// One FM elimination step for variable v with integer tightening. Returns
// false on detected unsat.
bool fm_eliminate_var(FmState& st, SymVar v, const FmBudget& budget) {
  std::vector<Constraint> lower, upper, rest;
  for (const auto& c : st.cs) {
    Rat a = c.term().coeff(v);
    if (a == 0) {
      rest.push_back(c);
    } else if (a > 0) {
      upper.push_back(c);  // a*v + r <= 0  =>  v <= -r/a
    } else {
      lower.push_back(c);  // a*v + r <= 0, a<0  =>  v >= r/(-a)
    }
  }
  std::vector<Constraint> next = std::move(rest);
  for (const auto& lo : lower) {
    for (const auto& up : upper) {
      Rat al = -lo.term().coeff(v);  // positive
      Rat au = up.term().coeff(v);   // positive
      // lo: -al*v + rl <= 0 ; up: au*v + ru <= 0
      // combine: au*rl + al*ru <= 0
      LinTerm rl = lo.term() - LinTerm::var(v, -al);
      LinTerm ru = up.term() - LinTerm::var(v, au);
      Constraint c = Constraint::le(rl * au + ru * al, LinTerm(0));
      if (c.trivially_false()) return false;
      if (!c.trivially_true()) next.push_back(c);
      if (next.size() > budget.max_constraints) {
        st.overflow = true;
        st.cs = std::move(next);
        return true;
      }
    }
  }
  st.cs = std::move(next);
  return true;
}

// Core refutation loop: returns Unsat only when the system has no integer
// solution; overflow degrades toward Sat.
SatResult fm_refute(FmState st, const FmBudget& budget) {
  if (!fm_substitute_equalities(st, budget)) return SatResult::Unsat;
  if (st.overflow) return SatResult::Sat;
  std::set<SymVar> vs = fm_vars(st.cs);
  if (vs.size() > budget.max_vars) return SatResult::Sat;
  while (!vs.empty()) {
    // heuristic: eliminate the variable minimizing lower*upper combinations
    SymVar best{};
    std::size_t best_cost = SIZE_MAX;
    for (SymVar v : vs) {
      std::size_t lo = 0, up = 0;
      for (const auto& c : st.cs) {
        Rat a = c.term().coeff(v);
        if (a > 0)
          ++up;
        else if (a < 0)
          ++lo;
      }
      std::size_t cost = lo * up;
      if (cost < best_cost) {
        best_cost = cost;
        best = v;
      }
    }
    if (!fm_eliminate_var(st, best, budget)) return SatResult::Unsat;
    if (st.overflow) return SatResult::Sat;
    for (const auto& c : st.cs)
      if (c.trivially_false()) return SatResult::Unsat;
    vs = fm_vars(st.cs);
  }
  for (const auto& c : st.cs)
    if (c.trivially_false()) return SatResult::Unsat;
  return SatResult::Sat;
}

}  // namespace

SatResult is_satisfiable(const KnowledgeBase& kb, const FmBudget& budget) {
  FmState st;
  for (const auto& c : kb.constraints())
    if (!st.add(c)) return SatResult::Unsat;
  return fm_refute(std::move(st), budget);
}

bool entails(const KnowledgeBase& kb, const Constraint& c, const FmBudget& budget) {
  if (c.trivially_true()) return true;
  if (kb.contains(c)) return true;
  if (c.rel() == Constraint::Rel::Le) {
    // kb && t > 0 unsat, i.e. kb && -t + 1 <= 0 unsat
    FmState st;
    for (const auto& k : kb.constraints())
      if (!st.add(k)) return true;  // kb itself unsat: entails everything
    Constraint neg = Constraint::le(-c.term() + LinTerm(1), LinTerm(0));
    if (!st.add(neg)) return true;
    return fm_refute(std::move(st), budget) == SatResult::Unsat;
  }
  // equality: refute both t >= 1 and t <= -1 alongside kb
  for (int side = 0; side < 2; ++side) {
    FmState st;
    bool kb_unsat = false;
    for (const auto& k : kb.constraints())
      if (!st.add(k)) {
        kb_unsat = true;
        break;
      }
    if (kb_unsat) return true;
    LinTerm t = side == 0 ? c.term() : -c.term();
    Constraint neg = Constraint::le(-t + LinTerm(1), LinTerm(0));  // t >= 1
    if (st.add(neg) && fm_refute(std::move(st), budget) != SatResult::Unsat)
      return false;
  }
  return true;
}

KnowledgeBase eliminate(const KnowledgeBase& kb, SymVar v, const FmBudget& budget) {
  // exact route: use an equality defining v when present
  for (const auto& c : kb.constraints()) {
    if (c.rel() != Constraint::Rel::Eq) continue;
    Rat a = c.term().coeff(v);
    if (a == 0) continue;
    LinTerm rest = c.term() - LinTerm::var(v, a);
    LinTerm solved = rest * (Rat(-1) / a);
    std::map<SymVar, LinTerm> m{{v, solved}};
    KnowledgeBase out;
    for (const auto& k : kb.constraints()) {
      if (k == c) continue;
      out.add(k.substitute(m));
    }
    return out;
  }
  FmState st;
  for (const auto& c : kb.constraints()) {
    if (c.mentions(v)) {
      st.cs.push_back(c);
    }
  }
  KnowledgeBase out;
  for (const auto& c : kb.constraints())
    if (!c.mentions(v)) out.add(c);
  if (!fm_eliminate_var(st, v, budget)) {
    // combination was unsat: projection of an unsat set; keep falsum
    out.add(Constraint::le(LinTerm(1), LinTerm(0)));
    return out;
  }
  if (st.overflow) return out;  // drop everything mentioning v
  for (const auto& c : st.cs) out.add(c);
  return out;
}

KnowledgeBase eliminate_all(KnowledgeBase kb, const std::set<SymVar>& vs,
                            const FmBudget& budget) {
  // cheapest-first by occurrence count
  std::set<SymVar> remaining = vs;
  while (!remaining.empty()) {
    SymVar best{};
    std::size_t best_occ = SIZE_MAX;
    for (SymVar v : remaining) {
      std::size_t occ = 0;
      for (const auto& c : kb.constraints())
        if (c.mentions(v)) ++occ;
      if (occ < best_occ) {
        best_occ = occ;
        best = v;
      }
    }
    kb = eliminate(kb, best, budget);
    remaining.erase(best);
  }
  return kb;
}

namespace {

std::optional<Int> bound_search(const KnowledgeBase& kb, const LinTerm& t,
                                const Int& limit, bool lower) {
  // kb |= t >= c (lower) / t <= c (upper); binary search over [-limit, limit]
  auto holds = [&](const Int& c) {
    Constraint probe = lower ? Constraint::ge(t, LinTerm(Rat(c)))
                             : Constraint::le(t, LinTerm(Rat(c)));
    return entails(kb, probe);
  };
  if (lower) {
    if (!holds(-limit)) return std::nullopt;
    Int lo = -limit, hi = limit;  // best bound in [lo, hi]
    if (holds(hi)) return hi;
    while (lo < hi) {
      Int mid = lo + (hi - lo + 1) / 2;
      if (holds(mid))
        lo = mid;
      else
        hi = mid - 1;
    }
    return lo;
  }
  if (!holds(limit)) return std::nullopt;
  Int lo = -limit, hi = limit;
  if (holds(lo)) return lo;
  while (lo < hi) {
    Int mid = lo + (hi - lo) / 2;
    if (holds(mid))
      hi = mid;
    else
      lo = mid + 1;
  }
  return hi;
}

}  // namespace

std::optional<Int> entailed_lower_bound(const KnowledgeBase& kb, const LinTerm& t,
                                        const Int& limit) {
  return bound_search(kb, t, limit, /*lower=*/true);
}

std::optional<Int> entailed_upper_bound(const KnowledgeBase& kb, const LinTerm& t,
                                        const Int& limit) {
  return bound_search(kb, t, limit, /*lower=*/false);
}

std::optional<Int> entailed_value(const KnowledgeBase& kb, const LinTerm& t,
                                  const Int& limit) {
  auto lo = entailed_lower_bound(kb, t, limit);
  if (!lo) return std::nullopt;
  if (entails(kb, Constraint::le(t, LinTerm(Rat(*lo))))) return lo;
  return std::nullopt;
}

bool entails_equal(const KnowledgeBase& kb, const LinTerm& a, const LinTerm& b) {
  return entails(kb, Constraint::eq(a, b));
}

}  // namespace listerm
