#include "listerm/state.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <sstream>

namespace listerm {

LinTerm value_term(const Value& v) {
  if (std::holds_alternative<SymVar>(v)) return LinTerm(std::get<SymVar>(v));
  return LinTerm(std::get<std::int64_t>(v));
}

bool value_is_var(const Value& v) { return std::holds_alternative<SymVar>(v); }

std::string value_str(const Value& v, const VarPool& pool) {
  if (value_is_var(v)) return pool.name(std::get<SymVar>(v));
  return std::to_string(std::get<std::int64_t>(v));
}

std::optional<SymVar> AbstractState::local(const std::string& name) const {
  auto it = locals.find(name);
  if (it == locals.end()) return std::nullopt;
  return it->second;
}

void AbstractState::set_local(const std::string& name, SymVar v) {
  locals[name] = v;
}

void AbstractState::sort_components() {
  std::sort(allocs.begin(), allocs.end());
  std::sort(points_to.begin(), points_to.end(),
            [](const PointsTo& a, const PointsTo& b) { return a.addr < b.addr; });
  std::sort(lists.begin(), lists.end(),
            [](const ListInvariant& a, const ListInvariant& b) { return a.head < b.head; });
}

std::string AbstractState::str(const VarPool& pool) const {
  if (err) return "ERR";
  std::ostringstream os;
  os << "(" << pos.str() << ", {";
  bool first = true;
  for (const auto& [name, v] : locals) {
    if (!first) os << ", ";
    first = false;
    os << name << " = " << pool.name(v);
  }
  os << "}, {";
  first = true;
  for (const auto& a : allocs) {
    if (!first) os << ", ";
    first = false;
    os << "[" << pool.name(a.lo) << ", " << pool.name(a.hi) << "]";
  }
  os << "}, {";
  first = true;
  for (const auto& pt : points_to) {
    if (!first) os << ", ";
    first = false;
    os << pool.name(pt.addr) << " ->" << pt.ty.str() << " " << value_str(pt.value, pool);
  }
  os << "}, {";
  first = true;
  for (const auto& li : lists) {
    if (!first) os << ", ";
    first = false;
    os << pool.name(li.head) << " ->" << li.elem_ty << "[" << pool.name(li.len) << "] [";
    for (std::size_t i = 0; i < li.fields.size(); ++i) {
      if (i) os << ", ";
      os << "(" << li.fields[i].off << ": " << li.fields[i].ty.str() << ": "
         << value_str(li.fields[i].first, pool) << ".."
         << value_str(li.fields[i].last, pool) << ")";
    }
    os << "]";
  }
  os << "}, " << kb.str(pool) << ")";
  return os.str();
}

std::optional<std::string> audit_state(const AbstractState& s, const ir::Program& p,
                                       const VarPool& pool) {
  if (s.err) return std::nullopt;
  std::set<SymVar> seen;
  for (const auto& [name, v] : s.locals) {
    if (!seen.insert(v).second)
      return "locals not injective at " + name + " = " + pool.name(v);
  }
  for (const auto& a : s.allocs) {
    if (!entails(s.kb, Constraint::le(LinTerm(a.lo), LinTerm(a.hi))))
      return "allocation [" + pool.name(a.lo) + ", " + pool.name(a.hi) +
             "] lacks entailed lo <= hi";
  }
  for (const auto& li : s.lists) {
    if (!p.struct_types().count(li.elem_ty)) return "list invariant with unknown type";
    const auto& fields = p.struct_fields(li.elem_ty);
    const auto& layout = p.layout(li.elem_ty);
    if (li.fields.size() != fields.size() || li.fields.empty())
      return "list invariant field count mismatch";
    std::size_t rec_count = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (li.fields[i].ty != fields[i] || li.fields[i].off != layout.offsets[i])
        return "list invariant layout mismatch";
      ir::Type rec_ty = ir::Type::ptr_to(ir::Type::struct_ty(li.elem_ty));
      if (fields[i] == rec_ty && i == li.rec_index) ++rec_count;
    }
    if (rec_count != 1) return "list invariant recursive field mismatch";
    if (!entails(s.kb, Constraint::ge(LinTerm(li.len), LinTerm(1))))
      return "list invariant length lower bound not entailed";
  }
  return std::nullopt;
}

LinTerm apply_instantiation(const Instantiation& inst, const LinTerm& t) {
  return t.substitute(inst);
}

namespace {

// Matching context for is_instance: sigma maps general-side variables to
// terms over specific-side variables; specific components are consumed at
// most once.
struct Matcher {
  const AbstractState& g;
  const AbstractState& s;
  const ir::Program& p;
  Instantiation sigma;
  std::vector<bool> s_alloc_used, s_pt_used, s_li_used;
  std::vector<bool> g_alloc_done, g_pt_done, g_li_done;

  Matcher(const AbstractState& g, const AbstractState& s, const ir::Program& p)
      : g(g), s(s), p(p) {
    s_alloc_used.assign(s.allocs.size(), false);
    s_pt_used.assign(s.points_to.size(), false);
    s_li_used.assign(s.lists.size(), false);
    g_alloc_done.assign(g.allocs.size(), false);
    g_pt_done.assign(g.points_to.size(), false);
    g_li_done.assign(g.lists.size(), false);
  }

  bool resolved(SymVar v) const { return sigma.count(v) != 0; }

  std::optional<LinTerm> image(const LinTerm& t) const {
    for (const auto& [v, c] : t.coeffs())
      if (!resolved(v)) return std::nullopt;
    return t.substitute(sigma);
  }

  // Assign or check sigma for a general-side value against a specific-side
  // term. Literal general values require entailed equality.
  bool bind_value(const Value& gv, const LinTerm& s_term, bool& progress) {
    if (!value_is_var(gv))
      return entails_equal(s.kb, LinTerm(std::get<std::int64_t>(gv)), s_term);
    SymVar v = std::get<SymVar>(gv);
    if (resolved(v)) return entails_equal(s.kb, sigma.at(v), s_term);
    sigma.emplace(v, s_term);
    progress = true;
    return true;
  }

  // Derive images for unresolved variables from entailed kb equalities where
  // exactly one variable of the equality is unresolved.
  void propagate_equalities(bool& progress) {
    for (const auto& c : g.kb.constraints()) {
      if (c.rel() != Constraint::Rel::Eq) continue;
      SymVar unresolved{};
      int count = 0;
      for (const auto& [v, k] : c.term().coeffs()) {
        if (!resolved(v)) {
          unresolved = v;
          if (++count > 1) break;
        }
      }
      if (count != 1) continue;
      Rat a = c.term().coeff(unresolved);
      LinTerm rest = c.term() - LinTerm::var(unresolved, a);
      LinTerm solved = rest * (Rat(-1) / a);  // unresolved = solved
      auto img = image(solved);
      if (!img) continue;
      sigma.emplace(unresolved, *img);
      progress = true;
    }
  }

  std::optional<std::size_t> find_s_alloc(const LinTerm& lo_img) const {
    for (std::size_t i = 0; i < s.allocs.size(); ++i) {
      if (s_alloc_used[i]) continue;
      if (entails_equal(s.kb, LinTerm(s.allocs[i].lo), lo_img)) return i;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> find_s_pt(const LinTerm& addr_img) const {
    for (std::size_t i = 0; i < s.points_to.size(); ++i) {
      if (s_pt_used[i]) continue;
      if (entails_equal(s.kb, LinTerm(s.points_to[i].addr), addr_img)) return i;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> find_s_li(const LinTerm& head_img) const {
    for (std::size_t i = 0; i < s.lists.size(); ++i) {
      if (s_li_used[i]) continue;
      if (entails_equal(s.kb, LinTerm(s.lists[i].head), head_img)) return i;
    }
    return std::nullopt;
  }

  bool match_alloc(std::size_t gi, bool& progress) {
    auto lo_img = image(LinTerm(g.allocs[gi].lo));
    if (!lo_img) return true;  // not yet resolvable
    auto si = find_s_alloc(*lo_img);
    if (!si) return false;
    s_alloc_used[*si] = true;
    g_alloc_done[gi] = true;
    progress = true;
    return bind_value(Value{g.allocs[gi].hi}, LinTerm(s.allocs[*si].hi), progress);
  }

  bool match_pt(std::size_t gi, bool& progress) {
    auto addr_img = image(LinTerm(g.points_to[gi].addr));
    if (!addr_img) return true;
    auto si = find_s_pt(*addr_img);
    if (!si) return false;
    const PointsTo& spt = s.points_to[*si];
    if (!(spt.ty == g.points_to[gi].ty)) return false;
    s_pt_used[*si] = true;
    g_pt_done[gi] = true;
    progress = true;
    return bind_value(g.points_to[gi].value, value_term(spt.value), progress);
  }

  // One chain node on the specific side: allocation of element size with a
  // points-to entry per field.
  struct ChainNode {
    std::size_t alloc_idx;
    std::vector<std::size_t> pt_idx;  // per field
  };

  std::optional<ChainNode> match_node(const LinTerm& at, const ListInvariant& gli) {
    auto ai = find_s_alloc(at);
    if (!ai) return std::nullopt;
    const Allocation& a = s.allocs[*ai];
    std::int64_t sz = p.layout(gli.elem_ty).size;
    if (!entails_equal(s.kb, LinTerm(a.hi), LinTerm(a.lo) + LinTerm(sz - 1)))
      return std::nullopt;
    ChainNode node;
    node.alloc_idx = *ai;
    for (const auto& f : gli.fields) {
      auto pi = find_s_pt(LinTerm(a.lo) + LinTerm(f.off));
      if (!pi) return std::nullopt;
      if (!(s.points_to[*pi].ty == f.ty)) return std::nullopt;
      node.pt_idx.push_back(*pi);
    }
    return node;
  }

  bool match_li(std::size_t gi, bool& progress) {
    const ListInvariant& gli = g.lists[gi];
    auto head_img = image(LinTerm(gli.head));
    if (!head_img) return true;
    // Walk the specific side from the head image: explicit nodes, then
    // either null (full chain) or a tail invariant.
    std::vector<ChainNode> nodes;
    LinTerm at = *head_img;
    std::optional<std::size_t> tail_li;
    std::set<std::size_t> visited;
    for (;;) {
      auto li_idx = find_s_li(at);
      if (li_idx) {
        const ListInvariant& sli = s.lists[*li_idx];
        if (sli.elem_ty != gli.elem_ty || sli.rec_index != gli.rec_index ||
            sli.fields.size() != gli.fields.size())
          return false;
        for (std::size_t i = 0; i < sli.fields.size(); ++i) {
          if (sli.fields[i].off != gli.fields[i].off ||
              !(sli.fields[i].ty == gli.fields[i].ty))
            return false;
        }
        tail_li = li_idx;
        break;
      }
      if (nodes.size() >= s.allocs.size()) {
        // no further nodes can exist; chain must have ended at null
        if (!entails_equal(s.kb, at, LinTerm(0))) return false;
        break;
      }
      if (entails_equal(s.kb, at, LinTerm(0))) break;
      auto node = match_node(at, gli);
      if (!node) return false;
      if (!visited.insert(node->alloc_idx).second) return false;  // cycle
      nodes.push_back(*node);
      at = value_term(s.points_to[node->pt_idx[gli.rec_index]].value);
    }
    if (nodes.empty() && !tail_li) return false;  // length would be 0

    // length image: node count plus tail length
    LinTerm len_img(static_cast<std::int64_t>(nodes.size()));
    if (tail_li) len_img += LinTerm(s.lists[*tail_li].len);
    if (!bind_value(Value{gli.len}, len_img, progress)) return false;

    // first values: first node's cells, or tail invariant firsts
    for (std::size_t i = 0; i < gli.fields.size(); ++i) {
      LinTerm first_img =
          nodes.empty() ? value_term(s.lists[*tail_li].fields[i].first)
                        : value_term(s.points_to[nodes.front().pt_idx[i]].value);
      if (!bind_value(gli.fields[i].first, first_img, progress)) return false;
    }
    // last values: tail invariant lasts, or last node's cells
    for (std::size_t i = 0; i < gli.fields.size(); ++i) {
      LinTerm last_img =
          tail_li ? value_term(s.lists[*tail_li].fields[i].last)
                  : value_term(s.points_to[nodes.back().pt_idx[i]].value);
      if (!bind_value(gli.fields[i].last, last_img, progress)) return false;
    }
    // consume
    for (const auto& n : nodes) {
      s_alloc_used[n.alloc_idx] = true;
      for (std::size_t pi : n.pt_idx) s_pt_used[pi] = true;
    }
    if (tail_li) s_li_used[*tail_li] = true;
    g_li_done[gi] = true;
    progress = true;
    return true;
  }

  bool run() {
    bool progress = true;
    while (progress) {
      progress = false;
      propagate_equalities(progress);
      for (std::size_t i = 0; i < g.allocs.size(); ++i)
        if (!g_alloc_done[i] && !match_alloc(i, progress)) return false;
      for (std::size_t i = 0; i < g.lists.size(); ++i)
        if (!g_li_done[i] && !match_li(i, progress)) return false;
      for (std::size_t i = 0; i < g.points_to.size(); ++i)
        if (!g_pt_done[i] && !match_pt(i, progress)) return false;
    }
    // total coverage both ways
    for (bool b : g_alloc_done)
      if (!b) return false;
    for (bool b : g_pt_done)
      if (!b) return false;
    for (bool b : g_li_done)
      if (!b) return false;
    for (bool b : s_alloc_used)
      if (!b) return false;
    for (bool b : s_pt_used)
      if (!b) return false;
    for (bool b : s_li_used)
      if (!b) return false;
    return true;
  }
};

}  // namespace

std::optional<Instantiation> is_instance(const AbstractState& general,
                                         const AbstractState& specific,
                                         const ir::Program& p) {
  if (general.err || specific.err) return std::nullopt;
  if (general.pos != specific.pos) return std::nullopt;
  if (general.locals.size() != specific.locals.size()) return std::nullopt;
  Matcher m(general, specific, p);
  for (const auto& [name, gv] : general.locals) {
    auto sv = specific.local(name);
    if (!sv) return std::nullopt;
    m.sigma.emplace(gv, LinTerm(*sv));
  }
  if (!m.run()) return std::nullopt;

  // kb entailment: substitute resolved variables; project out any leftovers
  // (existential memory-only variables), then require entailment per
  // constraint.
  KnowledgeBase mapped = general.kb.substitute(m.sigma);
  std::set<SymVar> leftover;
  for (SymVar v : mapped.vars())
    if (!specific.kb.vars().count(v)) {
      // a variable is leftover when it is a general-side variable with no
      // image; anything already over specific-side vocabulary stays
      bool is_g_var = general.kb.vars().count(v) && !m.sigma.count(v);
      if (is_g_var) leftover.insert(v);
    }
  if (!leftover.empty()) mapped = eliminate_all(std::move(mapped), leftover);
  for (const auto& c : mapped.constraints()) {
    if (!entails(specific.kb, c)) return std::nullopt;
  }
  return m.sigma;
}

}  // namespace listerm
