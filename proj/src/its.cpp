#include "listerm/its.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <sstream>

namespace listerm {

namespace {

std::vector<SymVar> state_vocabulary(const AbstractState& s) {
  std::set<SymVar> vars;
  for (const auto& [n, v] : s.locals) vars.insert(v);
  for (const auto& a : s.allocs) {
    vars.insert(a.lo);
    vars.insert(a.hi);
  }
  for (const auto& pt : s.points_to) {
    vars.insert(pt.addr);
    if (value_is_var(pt.value)) vars.insert(std::get<SymVar>(pt.value));
  }
  for (const auto& li : s.lists) {
    vars.insert(li.head);
    vars.insert(li.len);
    for (const auto& f : li.fields) {
      if (value_is_var(f.first)) vars.insert(std::get<SymVar>(f.first));
      if (value_is_var(f.last)) vars.insert(std::get<SymVar>(f.last));
    }
  }
  return {vars.begin(), vars.end()};
}

}  // namespace

Its extract_its(const Seg& seg, VarPool& pool) {
  Its its;
  ItsLocation start;
  start.id = 0;
  start.name = "start";
  its.locations.push_back(start);

  std::map<int, int> node_to_loc;
  for (const auto& n : seg.nodes) {
    if (!n.alive || !n.gen_target || n.state.err) continue;
    ItsLocation loc;
    loc.id = static_cast<int>(its.locations.size());
    loc.name = n.state.pos.block + "_" + std::to_string(n.id);
    loc.seg_node = n.id;
    loc.vars = state_vocabulary(n.state);
    for (SymVar v : loc.vars) loc.primed.push_back(pool.fresh(pool.hint(v) + "'"));
    node_to_loc[n.id] = loc.id;
    its.locations.push_back(std::move(loc));
  }

  for (const auto& n : seg.nodes) {
    if (!n.alive || n.gen_to < 0) continue;
    assert(node_to_loc.count(n.gen_to));
    const ItsLocation& dst = its.locations[node_to_loc.at(n.gen_to)];
    // source location: this node if it is itself a location, else the nearest
    // generalized ancestor, else start
    int src_loc = 0;
    if (node_to_loc.count(n.id)) {
      src_loc = node_to_loc.at(n.id);
    } else {
      for (int at = n.parent; at >= 0; at = seg.nodes[at].parent) {
        if (node_to_loc.count(at)) {
          src_loc = node_to_loc.at(at);
          break;
        }
      }
    }
    const ItsLocation& src = its.locations[src_loc];

    KnowledgeBase rel = n.state.kb;
    for (std::size_t i = 0; i < dst.vars.size(); ++i) {
      auto it = n.gen_sigma.find(dst.vars[i]);
      if (it == n.gen_sigma.end()) continue;  // havocked
      rel.add(Constraint::eq(LinTerm(dst.primed[i]), it->second));
    }
    std::set<SymVar> keep(src.vars.begin(), src.vars.end());
    for (SymVar v : dst.primed) keep.insert(v);
    std::set<SymVar> drop;
    for (SymVar v : rel.vars())
      if (!keep.count(v)) drop.insert(v);
    rel = eliminate_all(std::move(rel), drop);

    Transition t;
    t.id = static_cast<int>(its.transitions.size());
    t.src = src.id;
    t.dst = dst.id;
    t.rel = rel;
    // extract explicit updates: equalities defining one primed variable over
    // source variables
    std::set<SymVar> primed_set(dst.primed.begin(), dst.primed.end());
    for (const auto& c : rel.constraints()) {
      if (c.rel() != Constraint::Rel::Eq) continue;
      SymVar pv{};
      int primed_count = 0;
      for (const auto& [v, k] : c.term().coeffs()) {
        if (primed_set.count(v)) {
          pv = v;
          ++primed_count;
        }
      }
      if (primed_count != 1) continue;
      Rat a = c.term().coeff(pv);
      if (a != 1 && a != -1) continue;
      if (t.update.count(pv)) continue;
      LinTerm rest = c.term() - LinTerm::var(pv, a);
      t.update.emplace(pv, rest * (Rat(-1) / a));
    }
    its.transitions.push_back(std::move(t));
  }
  return its;
}

namespace {

std::string term_str(const LinTerm& t, const VarPool& pool) { return t.str(pool); }

}  // namespace

std::string export_its(const Its& its, const VarPool& pool) {
  std::ostringstream os;
  os << "its\n";
  for (const auto& loc : its.locations) {
    os << "loc " << loc.name << "(";
    for (std::size_t i = 0; i < loc.vars.size(); ++i) {
      if (i) os << ", ";
      os << pool.name(loc.vars[i]);
    }
    os << ")\n";
  }
  for (const auto& t : its.transitions) {
    const ItsLocation& src = its.locations[t.src];
    const ItsLocation& dst = its.locations[t.dst];
    os << "trans " << src.name << "(";
    for (std::size_t i = 0; i < src.vars.size(); ++i) {
      if (i) os << ", ";
      os << pool.name(src.vars[i]);
    }
    os << ") -> " << dst.name << "(";
    std::set<Constraint> update_eqs;
    for (std::size_t i = 0; i < dst.primed.size(); ++i) {
      if (i) os << ", ";
      auto it = t.update.find(dst.primed[i]);
      if (it == t.update.end()) {
        os << "?";
      } else {
        os << term_str(it->second, pool);
        update_eqs.insert(Constraint::eq(LinTerm(dst.primed[i]), it->second));
      }
    }
    os << ") ::";
    bool first = true;
    for (const auto& c : t.rel.constraints()) {
      if (update_eqs.count(c)) continue;
      os << (first ? " " : ", ") << c.str(pool);
      first = false;
    }
    os << "\n";
  }
  return os.str();
}

namespace {

// Minimal recursive-descent parser for the native format.
struct ItsParser {
  const std::string& text;
  VarPool& pool;
  std::size_t pos = 0;
  int lineno = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("its parse error (line " + std::to_string(lineno) +
                             "): " + msg);
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'' ||
           c == '$';
  }

  struct LocInfo {
    int id;
    std::map<std::string, SymVar> by_name;
  };

  Its run() {
    Its its;
    std::istringstream is(text);
    std::string line;
    std::map<std::string, LocInfo> locs;
    while (std::getline(is, line)) {
      ++lineno;
      std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      if (trimmed == "its") continue;
      if (trimmed.rfind("loc ", 0) == 0) {
        parse_loc(its, locs, trimmed.substr(4));
      } else if (trimmed.rfind("trans ", 0) == 0) {
        parse_trans(its, locs, trimmed.substr(6));
      } else {
        fail("expected 'loc' or 'trans'");
      }
    }
    return its;
  }

  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  void parse_loc(Its& its, std::map<std::string, LocInfo>& locs, const std::string& s) {
    std::size_t par = s.find('(');
    if (par == std::string::npos || s.back() != ')') fail("malformed loc");
    std::string name = trim(s.substr(0, par));
    ItsLocation loc;
    loc.id = static_cast<int>(its.locations.size());
    loc.name = name;
    LocInfo info{loc.id, {}};
    std::string args = s.substr(par + 1, s.size() - par - 2);
    for (const std::string& a : split_commas(args)) {
      SymVar v = pool.fresh(a);
      loc.vars.push_back(v);
      loc.primed.push_back(pool.fresh(a + "'"));
      info.by_name[a] = v;
    }
    if (locs.count(name)) fail("duplicate location " + name);
    locs[name] = info;
    its.locations.push_back(std::move(loc));
  }

  static std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char aChar : s) {
      if (aChar == ',') {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += aChar;
      }
    }
    std::string last = trim(cur);
    if (!last.empty()) out.push_back(last);
    return out;
  }

  LinTerm parse_expr(const std::string& s, const ItsLocation& src,
                     const std::map<std::string, SymVar>& src_by_name,
                     const ItsLocation* dst) {
    // sum of [sign] [coef *] ident | [sign] int
    LinTerm out;
    std::size_t i = 0;
    int sign = 1;
    bool expect_term = true;
    auto skip_ws = [&] {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    };
    skip_ws();
    while (i < s.size()) {
      if (s[i] == '+') {
        sign = 1;
        ++i;
        expect_term = true;
        skip_ws();
        continue;
      }
      if (s[i] == '-') {
        sign = -1;
        ++i;
        expect_term = true;
        skip_ws();
        continue;
      }
      if (!expect_term) fail("malformed expression '" + s + "'");
      Rat coef = sign;
      if (std::isdigit(static_cast<unsigned char>(s[i]))) {
        std::size_t j = i;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        coef = sign * Rat(Int(s.substr(i, j - i)));
        i = j;
        skip_ws();
        if (i < s.size() && s[i] == '*') {
          ++i;
          skip_ws();
        } else {
          out += LinTerm(coef);
          sign = 1;
          expect_term = false;
          skip_ws();
          continue;
        }
      }
      if (i >= s.size() || !ident_char(s[i])) fail("expected identifier in '" + s + "'");
      std::size_t j = i;
      while (j < s.size() && ident_char(s[j])) ++j;
      std::string name = s.substr(i, j - i);
      i = j;
      SymVar v{};
      bool found = false;
      if (!name.empty() && name.back() == '\'' && dst) {
        std::string base = name.substr(0, name.size() - 1);
        for (std::size_t k = 0; k < dst->vars.size(); ++k) {
          if (pool.hint(dst->vars[k]) == base) {
            v = dst->primed[k];
            found = true;
            break;
          }
        }
      }
      if (!found) {
        auto it = src_by_name.find(name);
        if (it != src_by_name.end()) {
          v = it->second;
          found = true;
        }
      }
      if (!found) fail("unknown variable '" + name + "'");
      out += LinTerm::var(v, coef);
      (void)src;
      sign = 1;
      expect_term = false;
      skip_ws();
    }
    return out;
  }

  void parse_trans(Its& its, std::map<std::string, LocInfo>& locs, const std::string& s) {
    std::size_t arrow = s.find("->");
    if (arrow == std::string::npos) fail("malformed trans: missing ->");
    std::size_t guard_sep = s.find("::", arrow);
    std::string src_part = trim(s.substr(0, arrow));
    std::string dst_part = trim(guard_sep == std::string::npos
                                    ? s.substr(arrow + 2)
                                    : s.substr(arrow + 2, guard_sep - arrow - 2));
    std::string guard_part =
        guard_sep == std::string::npos ? "" : trim(s.substr(guard_sep + 2));

    auto parse_head = [&](const std::string& part, std::string& name,
                          std::vector<std::string>& args) {
      std::size_t par = part.find('(');
      if (par == std::string::npos || part.back() != ')') fail("malformed trans head");
      name = trim(part.substr(0, par));
      args = split_commas(part.substr(par + 1, part.size() - par - 2));
    };
    std::string src_name, dst_name;
    std::vector<std::string> src_args, dst_args;
    parse_head(src_part, src_name, src_args);
    parse_head(dst_part, dst_name, dst_args);
    if (!locs.count(src_name) || !locs.count(dst_name)) fail("unknown location");
    const LocInfo& src_info = locs.at(src_name);
    const LocInfo& dst_info = locs.at(dst_name);
    ItsLocation& src = its.locations[src_info.id];
    ItsLocation& dst = its.locations[dst_info.id];
    if (src_args.size() != src.vars.size()) fail("src arity mismatch");
    if (dst_args.size() != dst.vars.size()) fail("dst arity mismatch");
    // src arg names must match the location's variables positionally
    for (std::size_t i = 0; i < src_args.size(); ++i)
      if (src_args[i] != pool.hint(src.vars[i])) fail("src vars must match location");

    Transition t;
    t.id = static_cast<int>(its.transitions.size());
    t.src = src.id;
    t.dst = dst.id;
    for (std::size_t i = 0; i < dst_args.size(); ++i) {
      if (dst_args[i] == "?") continue;
      LinTerm e = parse_expr(dst_args[i], src, src_info.by_name, nullptr);
      t.update.emplace(dst.primed[i], e);
      t.rel.add(Constraint::eq(LinTerm(dst.primed[i]), e));
    }
    if (!guard_part.empty()) {
      for (const std::string& c : split_commas(guard_part)) {
        std::size_t op_pos;
        std::string op;
        if ((op_pos = c.find("<=")) != std::string::npos)
          op = "<=";
        else if ((op_pos = c.find(">=")) != std::string::npos)
          op = ">=";
        else if ((op_pos = c.find('=')) != std::string::npos)
          op = "=";
        else if ((op_pos = c.find('<')) != std::string::npos)
          op = "<";
        else if ((op_pos = c.find('>')) != std::string::npos)
          op = ">";
        else
          fail("constraint without relation: '" + c + "'");
        LinTerm lhs = parse_expr(trim(c.substr(0, op_pos)), src, src_info.by_name, &dst);
        LinTerm rhs =
            parse_expr(trim(c.substr(op_pos + op.size())), src, src_info.by_name, &dst);
        if (op == "<=")
          t.rel.add(Constraint::le(lhs, rhs));
        else if (op == ">=")
          t.rel.add(Constraint::ge(lhs, rhs));
        else if (op == "<")
          t.rel.add(Constraint::lt(lhs, rhs));
        else if (op == ">")
          t.rel.add(Constraint::gt(lhs, rhs));
        else
          t.rel.add(Constraint::eq(lhs, rhs));
      }
    }
    its.transitions.push_back(std::move(t));
  }
};

}  // namespace

Its parse_its(const std::string& text, VarPool& pool) {
  ItsParser p{text, pool};
  return p.run();
}

bool structurally_equal(const Its& a, const Its& b) {
  if (a.locations.size() != b.locations.size()) return false;
  if (a.transitions.size() != b.transitions.size()) return false;
  std::map<SymVar, LinTerm> b_to_a;
  for (std::size_t i = 0; i < a.locations.size(); ++i) {
    if (a.locations[i].name != b.locations[i].name) return false;
    if (a.locations[i].vars.size() != b.locations[i].vars.size()) return false;
    for (std::size_t j = 0; j < a.locations[i].vars.size(); ++j) {
      b_to_a.emplace(b.locations[i].vars[j], LinTerm(a.locations[i].vars[j]));
      b_to_a.emplace(b.locations[i].primed[j], LinTerm(a.locations[i].primed[j]));
    }
  }
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    const Transition& ta = a.transitions[i];
    const Transition& tb = b.transitions[i];
    if (ta.src != tb.src || ta.dst != tb.dst) return false;
    KnowledgeBase mapped = tb.rel.substitute(b_to_a);
    if (!(mapped == ta.rel)) return false;
    if (ta.update.size() != tb.update.size()) return false;
    for (const auto& [pv, e] : tb.update) {
      auto img = b_to_a.find(pv);
      if (img == b_to_a.end()) return false;
      auto pa = img->second.single_var();
      if (!pa) return false;
      auto it = ta.update.find(*pa);
      if (it == ta.update.end()) return false;
      if (!(it->second == e.substitute(b_to_a))) return false;
    }
  }
  return true;
}

}  // namespace listerm
