#include "listerm/seg.hpp"

#include "json.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace listerm {

std::vector<int> Seg::live_at(const Position& pos) const {
  std::vector<int> out;
  for (const auto& n : nodes)
    if (n.alive && !n.state.err && n.state.pos == pos) out.push_back(n.id);
  return out;
}

std::set<std::string> loop_headers(const ir::Program& p) {
  std::set<std::string> headers;
  std::set<std::string> on_stack, done;
  // iterative DFS over block successors
  struct Frame {
    std::string label;
    std::vector<std::string> succ;
    std::size_t next = 0;
  };
  auto successors = [&](const std::string& label) {
    std::vector<std::string> out;
    const ir::Instruction& term = p.block(label).insts.back();
    if (!term.target.empty()) out.push_back(term.target);
    if (!term.target2.empty()) out.push_back(term.target2);
    return out;
  };
  std::vector<Frame> stack;
  stack.push_back({p.entry_label(), successors(p.entry_label()), 0});
  on_stack.insert(p.entry_label());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next >= f.succ.size()) {
      on_stack.erase(f.label);
      done.insert(f.label);
      stack.pop_back();
      continue;
    }
    std::string next = f.succ[f.next++];
    if (on_stack.count(next)) {
      headers.insert(next);
    } else if (!done.count(next)) {
      stack.push_back({next, successors(next), 0});
      on_stack.insert(next);
    }
  }
  return headers;
}

namespace {

struct Driver {
  const ir::Program& p;
  VarPool& pool;
  const SegLimits& limits;
  Seg seg;
  std::set<std::string> headers;
  std::map<Position, int> visits;
  std::map<Position, int> merge_count;
  std::vector<int> stack;

  int add_node(AbstractState state, int parent, EdgeKind kind) {
    SegNode n;
    n.id = static_cast<int>(seg.nodes.size());
    n.state = std::move(state);
    n.parent = parent;
    n.in_kind = kind;
    if (parent >= 0) {
      seg.nodes[parent].children.push_back({n.id, kind});
      if (seg.nodes[parent].state.pos == n.state.pos) n.skip_header_logic = true;
    }
    if (!n.state.err && n.state.pos.index == 0 && headers.count(n.state.pos.block))
      visits[n.state.pos]++;
    seg.nodes.push_back(n);
    seg.stats.nodes++;
    return n.id;
  }

  bool equal_domains(const AbstractState& a, const AbstractState& b) const {
    if (a.locals.size() != b.locals.size()) return false;
    for (const auto& [name, v] : a.locals)
      if (!b.locals.count(name)) return false;
    return true;
  }

  bool is_ancestor(int anc, int node) const {
    for (int at = seg.nodes[node].parent; at >= 0; at = seg.nodes[at].parent)
      if (at == anc) return true;
    return false;
  }

  void discard_subtree(int root) {
    std::vector<int> work;
    for (const auto& [c, k] : seg.nodes[root].children) work.push_back(c);
    while (!work.empty()) {
      int id = work.back();
      work.pop_back();
      if (!seg.nodes[id].alive) continue;
      seg.nodes[id].alive = false;
      for (const auto& [c, k] : seg.nodes[id].children) work.push_back(c);
    }
    seg.nodes[root].children.clear();
  }

  // candidates a generalize edge may safely target: merged nodes never die;
  // an ancestor dies only together with the closing node
  std::vector<int> instance_candidates(int cur) {
    std::vector<int> out;
    const Position& pos = seg.nodes[cur].state.pos;
    for (int id : seg.live_at(pos)) {
      if (id == cur) continue;
      const SegNode& n = seg.nodes[id];
      if (n.gen_to >= 0) continue;  // already closed elsewhere
      if (!n.merged_node && !is_ancestor(id, cur)) continue;
      out.push_back(id);
    }
    std::sort(out.begin(), out.end(), std::greater<int>());
    return out;
  }

  std::vector<int> merge_partners(int cur) {
    std::vector<int> out;
    const Position& pos = seg.nodes[cur].state.pos;
    // nearest same-position ancestors first
    for (int at = seg.nodes[cur].parent; at >= 0; at = seg.nodes[at].parent) {
      const SegNode& n = seg.nodes[at];
      if (n.alive && !n.state.err && n.state.pos == pos && n.gen_to < 0 &&
          equal_domains(n.state, seg.nodes[cur].state))
        out.push_back(at);
    }
    std::set<int> seen(out.begin(), out.end());
    std::vector<int> others;
    for (int id : seg.live_at(pos)) {
      if (id == cur || seen.count(id)) continue;
      const SegNode& n = seg.nodes[id];
      if (n.gen_to >= 0) continue;
      if (!equal_domains(n.state, seg.nodes[cur].state)) continue;
      others.push_back(id);
    }
    std::sort(others.begin(), others.end(), std::greater<int>());
    out.insert(out.end(), others.begin(), others.end());
    return out;
  }

  static Instantiation compose(const Instantiation& outer, const Instantiation& inner) {
    // outer: A -> B terms; inner: B -> C terms; result: A -> C terms
    Instantiation out;
    for (const auto& [v, t] : outer) out.emplace(v, t.substitute(inner));
    return out;
  }

  // Returns true when the node was closed by a generalize edge or merge.
  bool header_logic(int cur) {
    const AbstractState& st = seg.nodes[cur].state;
    for (int cand : instance_candidates(cur)) {
      if (auto sigma = is_instance(seg.nodes[cand].state, st, p)) {
        seg.nodes[cur].gen_to = cand;
        seg.nodes[cur].gen_sigma = std::move(*sigma);
        seg.nodes[cand].gen_target = true;
        seg.stats.instance_closures++;
        return true;
      }
    }
    if (visits[st.pos] < 2) return false;
    for (int partner : merge_partners(cur)) {
      int count = merge_count[st.pos];
      MergeOptions mo;
      mo.widen = count + 1 >= limits.widen_after;
      mo.force_drop = count + 1 >= 2 * limits.widen_after;
      MergeResult res =
          merge_states(p, seg.nodes[partner].state, seg.nodes[cur].state, pool, mo);
      if (res.refused) {
        seg.stats.merge_refusals++;
        continue;
      }
      merge_count[st.pos]++;
      seg.stats.merges++;
      if (mo.widen) seg.stats.widenings++;
      MergeEvent ev;
      ev.pos = st.pos;
      ev.left = seg.nodes[partner].state;
      ev.right = seg.nodes[cur].state;
      ev.merged = res.merged;
      ev.widened = mo.widen;
      // an existing node may already be as general as the merge result; close
      // onto it instead of growing the graph
      for (int cand : seg.live_at(st.pos)) {
        if (cand == cur) continue;
        if (seg.nodes[cand].gen_to >= 0) continue;
        if (!seg.nodes[cand].merged_node && !is_ancestor(cand, cur)) continue;
        if (auto iso = is_instance(seg.nodes[cand].state, res.merged, p)) {
          seg.nodes[cur].gen_to = cand;
          seg.nodes[cur].gen_sigma = compose(*iso, res.mu_right);
          seg.nodes[cand].gen_target = true;
          seg.stats.instance_closures++;
          seg.merge_events.push_back(std::move(ev));
          return true;
        }
      }
      int mid = add_node(res.merged, -1, EdgeKind::Generalize);
      seg.nodes[mid].merged_node = true;
      seg.nodes[mid].skip_header_logic = true;
      seg.nodes[partner].gen_to = mid;
      seg.nodes[partner].gen_sigma = res.mu_left;
      seg.nodes[mid].gen_target = true;
      discard_subtree(partner);  // the current node dies with it
      ev.merged_node = mid;
      seg.merge_events.push_back(std::move(ev));
      stack.push_back(mid);
      return true;
    }
    return false;
  }

  AnalysisOutcome run() {
    StepOptions sopts;
    sopts.malloc_may_fail = limits.malloc_may_fail;
    int root = add_node(initial_state(p), -1, EdgeKind::Eval);
    stack.push_back(root);
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      SegNode& node = seg.nodes[cur];
      if (!node.alive || node.state.err) continue;
      if (seg.stats.nodes > limits.node_cap)
        return {OutcomeKind::Budget, std::move(seg),
                "node budget exceeded (" + std::to_string(limits.node_cap) + ")"};
      if (!node.skip_header_logic && node.state.pos.index == 0 &&
          headers.count(node.state.pos.block)) {
        if (header_logic(cur)) continue;
      }
      StepResult res = step(p, seg.nodes[cur].state, pool, sopts);
      if (res.error) {
        int err_id = add_node(AbstractState::make_err(), cur, EdgeKind::Eval);
        seg.err_node = err_id;
        seg.err_diagnostic = res.diagnostic + " at " + seg.nodes[cur].state.pos.str();
        return {OutcomeKind::Err, std::move(seg), seg.err_diagnostic};
      }
      if (res.successors.empty()) {
        seg.nodes[cur].terminal = true;
        continue;
      }
      std::vector<int> ids;
      for (auto& [st, kind] : res.successors)
        ids.push_back(add_node(std::move(st), cur, kind));
      for (auto it = ids.rbegin(); it != ids.rend(); ++it) stack.push_back(*it);
    }
    return {OutcomeKind::Complete, std::move(seg), ""};
  }
};

}  // namespace

AnalysisOutcome build_seg(const ir::Program& p, VarPool& pool, const SegLimits& limits) {
  Driver d{p, pool, limits, {}, loop_headers(p), {}, {}, {}};
  return d.run();
}

std::string export_dot(const Seg& seg, const VarPool& pool) {
  std::ostringstream os;
  os << "digraph seg {\n  node [shape=box, fontsize=9];\n";
  for (const auto& n : seg.nodes) {
    if (!n.alive) continue;
    std::string label = n.state.err ? "ERR" : n.state.pos.str();
    os << "  n" << n.id << " [label=\"" << n.id << " " << label;
    if (n.merged_node) os << " (generalized)";
    os << "\"];\n";
  }
  for (const auto& n : seg.nodes) {
    if (!n.alive) continue;
    for (const auto& [c, kind] : n.children) {
      if (!seg.nodes[c].alive) continue;
      os << "  n" << n.id << " -> n" << c << " [style="
         << (kind == EdgeKind::Refine ? "dashed" : "solid") << "];\n";
    }
    if (n.gen_to >= 0)
      os << "  n" << n.id << " -> n" << n.gen_to
         << " [style=bold, color=blue, label=\"gen\"];\n";
  }
  os << "}\n";
  (void)pool;
  return os.str();
}

std::string export_json(const Seg& seg, const VarPool& pool) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : seg.nodes) {
    if (!n.alive) continue;
    nlohmann::json jn;
    jn["id"] = n.id;
    jn["err"] = n.state.err;
    if (!n.state.err) {
      jn["pos"] = {{"block", n.state.pos.block}, {"index", n.state.pos.index}};
      nlohmann::json locals = nlohmann::json::object();
      for (const auto& [name, v] : n.state.locals) locals[name] = pool.name(v);
      jn["locals"] = locals;
      jn["allocs"] = nlohmann::json::array();
      for (const auto& a : n.state.allocs)
        jn["allocs"].push_back({pool.name(a.lo), pool.name(a.hi)});
      jn["points_to"] = nlohmann::json::array();
      for (const auto& pt : n.state.points_to)
        jn["points_to"].push_back({{"addr", pool.name(pt.addr)},
                                   {"type", pt.ty.str()},
                                   {"value", value_str(pt.value, pool)}});
      jn["lists"] = nlohmann::json::array();
      for (const auto& li : n.state.lists) {
        nlohmann::json jl;
        jl["head"] = pool.name(li.head);
        jl["type"] = li.elem_ty;
        jl["len"] = pool.name(li.len);
        jl["rec_index"] = li.rec_index;
        jl["fields"] = nlohmann::json::array();
        for (const auto& f : li.fields)
          jl["fields"].push_back({{"off", f.off},
                                  {"type", f.ty.str()},
                                  {"first", value_str(f.first, pool)},
                                  {"last", value_str(f.last, pool)}});
        jn["lists"].push_back(jl);
      }
      nlohmann::json kb = nlohmann::json::array();
      for (const auto& c : n.state.kb.constraints()) kb.push_back(c.str(pool));
      jn["kb"] = kb;
      jn["merged"] = n.merged_node;
      jn["terminal"] = n.terminal;
    }
    j["nodes"].push_back(jn);
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& n : seg.nodes) {
    if (!n.alive) continue;
    for (const auto& [c, kind] : n.children) {
      if (!seg.nodes[c].alive) continue;
      j["edges"].push_back({{"from", n.id},
                            {"to", c},
                            {"kind", kind == EdgeKind::Refine ? "refine" : "eval"}});
    }
    if (n.gen_to >= 0)
      j["edges"].push_back({{"from", n.id}, {"to", n.gen_to}, {"kind", "generalize"}});
  }
  j["stats"] = {{"nodes", seg.stats.nodes},
                {"merges", seg.stats.merges},
                {"widenings", seg.stats.widenings},
                {"instance_closures", seg.stats.instance_closures},
                {"merge_refusals", seg.stats.merge_refusals}};
  return j.dump(2);
}

}  // namespace listerm
