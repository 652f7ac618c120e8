#include "listerm/merge.hpp"

#include <algorithm>
#include <cassert>
#include <set>

namespace listerm {

DetectResult detect_list(const AbstractState& s, const ir::Program& p,
                         const LinTerm& root, const std::string& elem_ty) {
  DetectResult res;
  if (entails_equal(s.kb, root, LinTerm(0))) {
    res.outcome = DetectOutcome::NullRoot;
    return res;
  }
  if (!p.struct_types().count(elem_ty)) return res;
  const auto& layout = p.layout(elem_ty);
  const auto& fields = p.struct_types().at(elem_ty);
  ir::Type rec_ty = ir::Type::ptr_to(ir::Type::struct_ty(elem_ty));
  std::size_t rec_index = fields.size();
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i] == rec_ty) {
      if (rec_index != fields.size()) return res;  // more than one recursive field
      rec_index = i;
    }
  if (rec_index == fields.size()) return res;

  DetectedList out;
  out.elem_ty = elem_ty;
  LinTerm at = root;
  std::set<std::size_t> visited;
  for (;;) {
    // existing invariant head?
    bool matched_tail = false;
    for (std::size_t li = 0; li < s.lists.size(); ++li) {
      if (entails_equal(s.kb, LinTerm(s.lists[li].head), at)) {
        if (s.lists[li].elem_ty != elem_ty) return res;
        out.tail_list = li;
        matched_tail = true;
        break;
      }
    }
    if (matched_tail) break;
    if (entails_equal(s.kb, at, LinTerm(0))) break;  // chain ends at null
    if (out.nodes.size() >= s.allocs.size()) return res;
    // explicit node: allocation of element size with full field coverage
    std::optional<std::size_t> alloc;
    for (std::size_t ai = 0; ai < s.allocs.size(); ++ai) {
      if (entails_equal(s.kb, LinTerm(s.allocs[ai].lo), at)) {
        alloc = ai;
        break;
      }
    }
    if (!alloc) return res;
    if (!visited.insert(*alloc).second) return res;  // cycle or sharing
    const Allocation& a = s.allocs[*alloc];
    if (!entails_equal(s.kb, LinTerm(a.hi), LinTerm(a.lo) + LinTerm(layout.size - 1)))
      return res;
    DetectedNode node;
    node.alloc_index = *alloc;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      std::optional<std::size_t> pt;
      for (std::size_t pi = 0; pi < s.points_to.size(); ++pi) {
        if (s.points_to[pi].ty == fields[f] &&
            entails_equal(s.kb, LinTerm(s.points_to[pi].addr),
                          LinTerm(a.lo) + LinTerm(layout.offsets[f]))) {
          pt = pi;
          break;
        }
      }
      if (!pt) return res;
      node.pt_index.push_back(*pt);
    }
    out.nodes.push_back(node);
    at = value_term(s.points_to[node.pt_index[rec_index]].value);
  }
  if (out.nodes.empty() && !out.tail_list) return res;
  out.total_len = LinTerm(static_cast<std::int64_t>(out.nodes.size()));
  if (out.tail_list) out.total_len += LinTerm(s.lists[*out.tail_list].len);
  res.outcome = DetectOutcome::List;
  res.list = std::move(out);
  return res;
}

namespace {

struct Region {
  std::set<std::size_t> allocs, pts, lis;

  void absorb(const AbstractState& s, const DetectedList& d) {
    (void)s;
    for (const auto& n : d.nodes) {
      allocs.insert(n.alloc_index);
      for (std::size_t pi : n.pt_index) pts.insert(pi);
    }
    if (d.tail_list) lis.insert(*d.tail_list);
  }
  bool disjoint(const Region& o) const {
    for (auto a : allocs)
      if (o.allocs.count(a)) return false;
    for (auto a : pts)
      if (o.pts.count(a)) return false;
    for (auto a : lis)
      if (o.lis.count(a)) return false;
    return true;
  }
  bool subset_of(const Region& o) const {
    for (auto a : allocs)
      if (!o.allocs.count(a)) return false;
    for (auto a : pts)
      if (!o.pts.count(a)) return false;
    for (auto a : lis)
      if (!o.lis.count(a)) return false;
    return true;
  }
  std::size_t size() const { return allocs.size() + pts.size() + lis.size(); }
};

struct Merger {
  const ir::Program& p;
  const AbstractState& l;
  const AbstractState& r;
  VarPool& pool;
  const MergeOptions& opts;

  struct Entry {
    SymVar var;
    LinTerm left, right;
  };
  std::vector<Entry> registry;

  struct AllocPair {
    std::size_t li, ri;
    SymVar lo, hi;
  };
  struct PtPair {
    std::size_t li, ri;
    SymVar addr;
    Value value;
  };
  std::vector<AllocPair> alloc_pairs;
  std::vector<PtPair> pt_pairs;
  std::set<std::size_t> l_alloc_paired, r_alloc_paired, l_pt_paired, r_pt_paired;

  Region consumed_l, consumed_r;
  std::vector<ListInvariant> merged_lists;

  std::optional<SymVar> find_existing(const LinTerm& left, const LinTerm& right) const {
    for (const auto& e : registry) {
      if (entails_equal(l.kb, e.left, left) && entails_equal(r.kb, e.right, right))
        return e.var;
    }
    return std::nullopt;
  }

  SymVar find_or_make(const LinTerm& left, const LinTerm& right, const std::string& hint) {
    if (auto v = find_existing(left, right)) return *v;
    SymVar v = pool.fresh(hint);
    registry.push_back(Entry{v, left, right});
    return v;
  }

  // Pair allocations and points-to entries whose addresses are the images of
  // one merged variable; value correspondences extend the registry, so
  // iterate to a fixpoint.
  void structural_matching() {
    bool progress = true;
    while (progress) {
      progress = false;
      for (std::size_t e = 0; e < registry.size(); ++e) {
        LinTerm left = registry[e].left, right = registry[e].right;
        SymVar var = registry[e].var;
        // allocation partners
        std::optional<std::size_t> la, ra;
        for (std::size_t i = 0; i < l.allocs.size(); ++i)
          if (!l_alloc_paired.count(i) &&
              entails_equal(l.kb, LinTerm(l.allocs[i].lo), left)) {
            la = i;
            break;
          }
        for (std::size_t i = 0; i < r.allocs.size(); ++i)
          if (!r_alloc_paired.count(i) &&
              entails_equal(r.kb, LinTerm(r.allocs[i].lo), right)) {
            ra = i;
            break;
          }
        if (la && ra) {
          SymVar hi = find_or_make(LinTerm(l.allocs[*la].hi), LinTerm(r.allocs[*ra].hi),
                                   pool.hint(var) + "_end");
          alloc_pairs.push_back(AllocPair{*la, *ra, var, hi});
          l_alloc_paired.insert(*la);
          r_alloc_paired.insert(*ra);
          progress = true;
        }
        // points-to partners
        std::optional<std::size_t> lp, rp;
        for (std::size_t i = 0; i < l.points_to.size(); ++i)
          if (!l_pt_paired.count(i) &&
              entails_equal(l.kb, LinTerm(l.points_to[i].addr), left)) {
            lp = i;
            break;
          }
        for (std::size_t i = 0; i < r.points_to.size(); ++i)
          if (!r_pt_paired.count(i) &&
              entails_equal(r.kb, LinTerm(r.points_to[i].addr), right)) {
            rp = i;
            break;
          }
        if (lp && rp && l.points_to[*lp].ty == r.points_to[*rp].ty) {
          const Value& lv = l.points_to[*lp].value;
          const Value& rv = r.points_to[*rp].value;
          Value merged_value;
          if (!value_is_var(lv) && !value_is_var(rv) &&
              std::get<std::int64_t>(lv) == std::get<std::int64_t>(rv)) {
            merged_value = lv;
          } else {
            merged_value = Value{
                find_or_make(value_term(lv), value_term(rv), "x_v")};
          }
          pt_pairs.push_back(PtPair{*lp, *rp, var, merged_value});
          l_pt_paired.insert(*lp);
          r_pt_paired.insert(*rp);
          progress = true;
        }
      }
    }
  }

  Value lift_value(const Value& lv, const Value& rv, const std::string& hint) {
    if (!value_is_var(lv) && !value_is_var(rv) &&
        std::get<std::int64_t>(lv) == std::get<std::int64_t>(rv))
      return lv;
    return Value{find_or_make(value_term(lv), value_term(rv), hint)};
  }

  Value detected_first(const AbstractState& s, const DetectedList& d, std::size_t f) {
    if (!d.nodes.empty()) return s.points_to[d.nodes.front().pt_index[f]].value;
    return s.lists[*d.tail_list].fields[f].first;
  }
  Value detected_last(const AbstractState& s, const DetectedList& d, std::size_t f) {
    if (d.tail_list) return s.lists[*d.tail_list].fields[f].last;
    return s.points_to[d.nodes.back().pt_index[f]].value;
  }

  // Returns a refusal diagnostic, or nullopt on success.
  std::optional<std::string> infer_lists(std::size_t anchor_count) {
    struct Candidate {
      std::size_t entry;
      DetectedList ldet, rdet;
      Region lreg, rreg;
    };
    struct Incompat {
      std::size_t entry;
      bool left_is_list;
      Region region;  // of the listy side
    };
    std::vector<Candidate> cands;
    std::vector<Incompat> incompat;
    std::vector<std::string> tys;
    for (const auto& [name, fields] : p.struct_types()) tys.push_back(name);
    for (std::size_t e = 0; e < anchor_count; ++e) {
      bool l_null = false, r_null = false;
      std::optional<DetectedList> ld, rd;
      for (const auto& ty : tys) {
        DetectResult lr = detect_list(l, p, registry[e].left, ty);
        DetectResult rr = detect_list(r, p, registry[e].right, ty);
        l_null = l_null || lr.outcome == DetectOutcome::NullRoot;
        r_null = r_null || rr.outcome == DetectOutcome::NullRoot;
        if (lr.outcome == DetectOutcome::List && !ld) ld = lr.list;
        if (rr.outcome == DetectOutcome::List && !rd) rd = rr.list;
        if (lr.outcome == DetectOutcome::List && rr.outcome == DetectOutcome::List &&
            lr.list.elem_ty == rr.list.elem_ty) {
          Candidate c;
          c.entry = e;
          c.ldet = lr.list;
          c.rdet = rr.list;
          c.lreg.absorb(l, c.ldet);
          c.rreg.absorb(r, c.rdet);
          cands.push_back(std::move(c));
          break;
        }
      }
      if (!cands.empty() && cands.back().entry == e) continue;
      if (ld && !rd) {
        Region reg;
        reg.absorb(l, *ld);
        incompat.push_back(Incompat{e, true, reg});
        (void)r_null;
      } else if (rd && !ld) {
        Region reg;
        reg.absorb(r, *rd);
        incompat.push_back(Incompat{e, false, reg});
        (void)l_null;
      }
    }
    // smallest combined region first; suffix lists precede the chains that
    // contain them
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.lreg.size() + a.rreg.size() <
                              b.lreg.size() + b.rreg.size();
                     });
    for (const auto& c : cands) {
      if (!c.lreg.disjoint(consumed_l) || !c.rreg.disjoint(consumed_r)) continue;
      const auto& layout = p.layout(c.ldet.elem_ty);
      const auto& ftys = p.struct_types().at(c.ldet.elem_ty);
      ir::Type rec_ty = ir::Type::ptr_to(ir::Type::struct_ty(c.ldet.elem_ty));
      ListInvariant inv;
      inv.head = registry[c.entry].var;
      inv.elem_ty = c.ldet.elem_ty;
      inv.len = find_or_make(c.ldet.total_len, c.rdet.total_len, "x_l");
      for (std::size_t f = 0; f < ftys.size(); ++f) {
        InvariantField fld;
        fld.off = layout.offsets[f];
        fld.ty = ftys[f];
        if (ftys[f] == rec_ty) inv.rec_index = f;
        fld.first = lift_value(detected_first(l, c.ldet, f), detected_first(r, c.rdet, f),
                               "x_f" + std::to_string(fld.off));
        fld.last = lift_value(detected_last(l, c.ldet, f), detected_last(r, c.rdet, f),
                              "x_g" + std::to_string(fld.off));
        inv.fields.push_back(fld);
      }
      merged_lists.push_back(inv);
      for (auto i : c.lreg.allocs) consumed_l.allocs.insert(i);
      for (auto i : c.lreg.pts) consumed_l.pts.insert(i);
      for (auto i : c.lreg.lis) consumed_l.lis.insert(i);
      for (auto i : c.rreg.allocs) consumed_r.allocs.insert(i);
      for (auto i : c.rreg.pts) consumed_r.pts.insert(i);
      for (auto i : c.rreg.lis) consumed_r.lis.insert(i);
    }
    for (const auto& inc : incompat) {
      const Region& consumed = inc.left_is_list ? consumed_l : consumed_r;
      if (inc.region.subset_of(consumed)) continue;  // covered by a lifted list
      std::string diag = "list at anchor " + pool.name(registry[inc.entry].var) +
                         " exists only in the " + (inc.left_is_list ? "left" : "right") +
                         " state and is not covered; merging would drop it";
      if (!opts.force_drop) return diag;
    }
    return std::nullopt;
  }

  // Entailed constant bounds used for candidate generation; small search box.
  static constexpr std::int64_t kBoundBox = 64;

  void add_bound_candidates(std::set<Constraint>& cands) {
    // per-variable constant lower bounds
    for (const auto& e : registry) {
      auto ll = entailed_lower_bound(l.kb, e.left, kBoundBox);
      if (!ll) continue;
      auto rl = entailed_lower_bound(r.kb, e.right, kBoundBox);
      if (!rl) continue;
      Int c = ll < rl ? *ll : *rl;
      cands.insert(Constraint::ge(LinTerm(e.var), LinTerm(Rat(c))));
    }
    // pairwise difference bounds and pinned differences
    for (std::size_t i = 0; i < registry.size(); ++i) {
      for (std::size_t j = i + 1; j < registry.size(); ++j) {
        LinTerm dl = registry[i].left - registry[j].left;
        LinTerm dr = registry[i].right - registry[j].right;
        auto l1 = entailed_lower_bound(l.kb, dl, kBoundBox);
        std::optional<Int> r1;
        if (l1) r1 = entailed_lower_bound(r.kb, dr, kBoundBox);
        auto l2 = entailed_lower_bound(l.kb, -dl, kBoundBox);
        std::optional<Int> r2;
        if (l2) r2 = entailed_lower_bound(r.kb, -dr, kBoundBox);
        LinTerm dm = LinTerm(registry[i].var) - LinTerm(registry[j].var);
        std::optional<Int> lo, hi;
        if (l1 && r1) lo = *l1 < *r1 ? *l1 : *r1;
        if (l2 && r2) hi = *l2 < *r2 ? -*l2 : -*r2;  // upper = -lower(-d)
        if (lo && hi && *lo == *hi) {
          cands.insert(Constraint::eq(dm, LinTerm(Rat(*lo))));
        } else {
          if (lo) cands.insert(Constraint::ge(dm, LinTerm(Rat(*lo))));
          if (hi) cands.insert(Constraint::le(dm, LinTerm(Rat(*hi))));
        }
      }
    }
  }

  void add_rewrite_candidates(std::set<Constraint>& cands, const AbstractState& side,
                              bool left_side) {
    std::map<SymVar, LinTerm> rev;
    for (const auto& e : registry) {
      const LinTerm& img = left_side ? e.left : e.right;
      if (auto v = img.single_var()) {
        if (!rev.count(*v)) rev.emplace(*v, LinTerm(e.var));
      }
    }
    for (const auto& c : side.kb.constraints()) {
      bool ok = true;
      for (const auto& [v, k] : c.term().coeffs())
        if (!rev.count(v)) {
          ok = false;
          break;
        }
      if (ok) cands.insert(c.substitute(rev));
    }
  }

  KnowledgeBase lift_kb() {
    std::set<Constraint> cands;
    if (opts.widen) {
      // stabilizing pool: only the left (previous generalized) state's
      // constraints, plus constant lower bounds for list lengths
      add_rewrite_candidates(cands, l, true);
      for (const auto& inv : merged_lists) {
        const Entry* e = nullptr;
        for (const auto& en : registry)
          if (en.var == inv.len) e = &en;
        if (!e) continue;
        auto ll = entailed_lower_bound(l.kb, e->left, kBoundBox);
        std::optional<Int> rl;
        if (ll) rl = entailed_lower_bound(r.kb, e->right, kBoundBox);
        if (ll && rl)
          cands.insert(
              Constraint::ge(LinTerm(inv.len), LinTerm(Rat(*ll < *rl ? *ll : *rl))));
      }
    } else {
      add_bound_candidates(cands);
      add_rewrite_candidates(cands, l, true);
      add_rewrite_candidates(cands, r, false);
    }
    Instantiation mu_l, mu_r;
    for (const auto& e : registry) {
      mu_l.emplace(e.var, e.left);
      mu_r.emplace(e.var, e.right);
    }
    KnowledgeBase out;
    for (const auto& c : cands) {
      Constraint cl = c.substitute(mu_l);
      Constraint cr = c.substitute(mu_r);
      if (entails(l.kb, cl) && entails(r.kb, cr)) out.add(c);
    }
    return out;
  }

  MergeResult run() {
    MergeResult res;
    if (l.err || r.err || l.pos != r.pos || l.locals.size() != r.locals.size()) {
      res.refused = true;
      res.diagnostic = "position or local-variable domain mismatch";
      return res;
    }
    for (const auto& [name, v] : l.locals)
      if (!r.locals.count(name)) {
        res.refused = true;
        res.diagnostic = "local-variable domain mismatch at " + name;
        return res;
      }

    // anchors: one fresh merged variable per program variable
    AbstractState m;
    m.pos = l.pos;
    for (const auto& [name, lv] : l.locals) {
      SymVar x = pool.fresh("x_" + name);
      m.set_local(name, x);
      registry.push_back(Entry{x, LinTerm(lv), LinTerm(*r.local(name))});
    }
    std::size_t anchor_count = registry.size();

    // identity correspondences for variables shared by both sides' components
    {
      std::set<SymVar> lvars, rvars;
      auto collect = [](const AbstractState& s, std::set<SymVar>& out) {
        for (const auto& a : s.allocs) {
          out.insert(a.lo);
          out.insert(a.hi);
        }
        for (const auto& pt : s.points_to) {
          out.insert(pt.addr);
          if (value_is_var(pt.value)) out.insert(std::get<SymVar>(pt.value));
        }
        for (const auto& li : s.lists) {
          out.insert(li.head);
          out.insert(li.len);
          for (const auto& f : li.fields) {
            if (value_is_var(f.first)) out.insert(std::get<SymVar>(f.first));
            if (value_is_var(f.last)) out.insert(std::get<SymVar>(f.last));
          }
        }
      };
      collect(l, lvars);
      collect(r, rvars);
      for (SymVar v : lvars) {
        if (!rvars.count(v)) continue;
        if (!find_existing(LinTerm(v), LinTerm(v)))
          registry.push_back(Entry{pool.fresh("x_" + pool.hint(v)), LinTerm(v), LinTerm(v)});
      }
    }

    structural_matching();
    if (auto diag = infer_lists(anchor_count)) {
      res.refused = true;
      res.diagnostic = *diag;
      return res;
    }
    if (opts.force_drop) {
      // a dropped region may leave diagnostics; nothing further to do here
    }
    structural_matching();  // list first/last registrations may pair more

    // component lifting outside consumed regions
    for (const auto& ap : alloc_pairs) {
      if (consumed_l.allocs.count(ap.li) || consumed_r.allocs.count(ap.ri)) continue;
      m.allocs.push_back(Allocation{ap.lo, ap.hi});
    }
    for (const auto& pp : pt_pairs) {
      if (consumed_l.pts.count(pp.li) || consumed_r.pts.count(pp.ri)) continue;
      m.points_to.push_back(PointsTo{pp.addr, l.points_to[pp.li].ty, pp.value});
    }
    m.lists = merged_lists;
    m.kb = lift_kb();
    m.sort_components();

    res.merged = std::move(m);
    for (const auto& e : registry) {
      res.mu_left.emplace(e.var, e.left);
      res.mu_right.emplace(e.var, e.right);
    }
    return res;
  }
};

}  // namespace

MergeResult merge_states(const ir::Program& p, const AbstractState& left,
                         const AbstractState& right, VarPool& pool,
                         const MergeOptions& opts) {
  Merger m{p, left, right, pool, opts};
  return m.run();
}

}  // namespace listerm
