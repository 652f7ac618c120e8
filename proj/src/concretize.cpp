#include "listerm/concretize.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <set>
#include <sstream>

namespace listerm {

std::string ConcreteState::key() const {
  std::ostringstream os;
  for (const auto& [k, v] : env) os << k << "=" << v << ";";
  os << "|";
  for (const auto& [b, s] : blocks) os << b << "+" << s << ";";
  os << "|";
  for (const auto& [a, sv] : cells) os << a << ":" << sv.first << ":" << sv.second << ";";
  return os.str();
}

ConcreteState canonicalize(const ConcreteState& s) {
  auto find_block = [&](std::int64_t v) -> int {
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
      if (v >= s.blocks[i].first && v < s.blocks[i].first + s.blocks[i].second)
        return static_cast<int>(i);
    }
    return -1;
  };
  std::vector<int> order;
  std::vector<bool> seen(s.blocks.size(), false);
  std::deque<int> queue;
  auto enqueue = [&](std::int64_t v) {
    int b = find_block(v);
    if (b >= 0 && !seen[b]) {
      seen[b] = true;
      queue.push_back(b);
    }
  };
  for (const auto& [name, v] : s.env) enqueue(v);
  while (!queue.empty()) {
    int b = queue.front();
    queue.pop_front();
    order.push_back(b);
    std::int64_t lo = s.blocks[b].first, hi = lo + s.blocks[b].second;
    for (auto it = s.cells.lower_bound(lo); it != s.cells.end() && it->first < hi; ++it)
      enqueue(it->second.second);
  }
  for (std::size_t i = 0; i < s.blocks.size(); ++i)
    if (!seen[i]) order.push_back(static_cast<int>(i));

  std::vector<std::int64_t> new_base(s.blocks.size());
  std::int64_t at = 1000;
  for (int b : order) {
    new_base[b] = at;
    at += s.blocks[b].second;
  }
  auto remap = [&](std::int64_t v) {
    int b = find_block(v);
    return b < 0 ? v : new_base[b] + (v - s.blocks[b].first);
  };
  ConcreteState out;
  for (const auto& [name, v] : s.env) out.env[name] = remap(v);
  for (std::size_t i = 0; i < s.blocks.size(); ++i)
    out.blocks.push_back({new_base[i], s.blocks[i].second});
  std::sort(out.blocks.begin(), out.blocks.end());
  for (const auto& [a, sv] : s.cells)
    out.cells[remap(a)] = {sv.first, remap(sv.second)};
  return out;
}

namespace {

// One memory block of the enumeration plan with symbolically-tied cells.
struct PlanCell {
  std::int64_t off;
  std::int64_t size;
  std::vector<Value> bindings;            // all must equal the cell's value
  std::optional<std::int64_t> forced;     // chained node address
  bool free_slot = false;                 // anonymous middle value
};

struct PlanBlock {
  std::int64_t base = 0;
  std::int64_t size = 0;
  std::optional<SymVar> lo, hi;  // allocation bound variables, when present
  std::vector<PlanCell> cells;
};

// Integer-compiled constraint for fast ground checks.
struct FlatConstraint {
  std::vector<std::pair<std::size_t, std::int64_t>> coeffs;  // var index, coeff
  std::int64_t constant;
  bool is_eq;
};

}  // namespace

std::vector<ConcreteState> concretize(const AbstractState& s, const ir::Program& p,
                                      const OracleBounds& b) {
  std::vector<ConcreteState> out;
  if (s.err) return out;
  if (s.allocs.size() > b.max_allocs) return out;

  // state variable vocabulary
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
  for (SymVar v : s.kb.vars()) vars.insert(v);

  // allocation sizes must be pinned by the kb
  std::vector<std::int64_t> alloc_size;
  for (const auto& a : s.allocs) {
    auto d = entailed_value(s.kb, LinTerm(a.hi) - LinTerm(a.lo));
    if (!d || *d < 0) return out;
    alloc_size.push_back(static_cast<std::int64_t>(*d) + 1);
  }

  std::set<std::string> keys;

  // length combinations
  std::vector<std::int64_t> lens(s.lists.size(), 1);
  for (;;) {
    // --- build the plan for this length combination ---
    std::vector<PlanBlock> blocks;
    std::map<SymVar, Int> base_assign;  // placement + length pins
    bool combo_ok = true;
    for (std::size_t i = 0; i < s.allocs.size(); ++i) {
      PlanBlock pb;
      pb.size = alloc_size[i];
      pb.lo = s.allocs[i].lo;
      pb.hi = s.allocs[i].hi;
      blocks.push_back(pb);
    }
    struct NodeRef {
      std::size_t block_idx;
    };
    for (std::size_t li = 0; li < s.lists.size(); ++li) {
      const ListInvariant& inv = s.lists[li];
      if (base_assign.count(inv.len)) {
        combo_ok = false;  // shared length variables across invariants unsupported
        break;
      }
      base_assign[inv.len] = lens[li];
      const auto& layout = p.layout(inv.elem_ty);
      std::vector<std::size_t> node_blocks;
      for (std::int64_t n = 0; n < lens[li]; ++n) {
        PlanBlock pb;
        pb.size = layout.size;
        for (std::size_t f = 0; f < inv.fields.size(); ++f) {
          PlanCell c;
          c.off = inv.fields[f].off;
          c.size = ir::size_of(p, inv.fields[f].ty);
          bool first = n == 0;
          bool last = n == lens[li] - 1;
          if (first) c.bindings.push_back(inv.fields[f].first);
          if (last) c.bindings.push_back(inv.fields[f].last);
          if (!first && !last && f != inv.rec_index) c.free_slot = true;
          pb.cells.push_back(c);
        }
        node_blocks.push_back(blocks.size());
        blocks.push_back(pb);
      }
      // place later; chaining recorded after placement
      (void)node_blocks;
    }
    if (!combo_ok) {
      // advance odometer
      std::size_t d = 0;
      for (; d < lens.size(); ++d) {
        if (++lens[d] <= b.max_len) break;
        lens[d] = 1;
      }
      if (d == lens.size() || lens.empty()) break;
      continue;
    }

    // placement
    std::int64_t at = 1000;
    for (auto& pb : blocks) {
      pb.base = at;
      at += pb.size;
    }
    bool plan_ok = true;
    for (std::size_t i = 0; i < s.allocs.size() && plan_ok; ++i) {
      auto put = [&](SymVar v, Int val) {
        auto it = base_assign.find(v);
        if (it != base_assign.end() && it->second != val) plan_ok = false;
        base_assign[v] = val;
      };
      put(s.allocs[i].lo, blocks[i].base);
      put(s.allocs[i].hi, blocks[i].base + blocks[i].size - 1);
    }
    // list heads + chaining
    {
      std::size_t blk = s.allocs.size();
      for (std::size_t li = 0; li < s.lists.size() && plan_ok; ++li) {
        const ListInvariant& inv = s.lists[li];
        auto it = base_assign.find(inv.head);
        if (it != base_assign.end() && it->second != Int(blocks[blk].base))
          plan_ok = false;
        base_assign[inv.head] = blocks[blk].base;
        for (std::int64_t n = 0; n < lens[li]; ++n) {
          if (n + 1 < lens[li])
            blocks[blk + n].cells[inv.rec_index].forced = blocks[blk + n + 1].base;
        }
        blk += lens[li];
      }
    }
    if (!plan_ok) {
      std::size_t d = 0;
      for (; d < lens.size(); ++d) {
        if (++lens[d] <= b.max_len) break;
        lens[d] = 1;
      }
      if (d == lens.size() || lens.empty()) break;
      continue;
    }

    // --- propagation: cell bindings and kb equalities pin variables ---
    std::map<SymVar, Int> assign = base_assign;
    bool contradiction = false;
    bool changed = true;
    auto bind_cell_vars = [&]() {
      for (auto& pb : blocks) {
        for (auto& c : pb.cells) {
          std::optional<Int> known;
          if (c.forced) known = *c.forced;
          for (const auto& v : c.bindings) {
            if (!value_is_var(v))
              known = known ? known : Int(std::get<std::int64_t>(v));
            else {
              auto it = assign.find(std::get<SymVar>(v));
              if (it != assign.end()) known = known ? known : it->second;
            }
          }
          if (!known) continue;
          if (c.forced && *c.forced != *known) contradiction = true;
          for (const auto& v : c.bindings) {
            if (!value_is_var(v)) {
              if (Int(std::get<std::int64_t>(v)) != *known) contradiction = true;
            } else {
              SymVar sv = std::get<SymVar>(v);
              auto it = assign.find(sv);
              if (it == assign.end()) {
                assign[sv] = *known;
                changed = true;
              } else if (it->second != *known) {
                contradiction = true;
              }
            }
          }
        }
      }
    };
    while (changed && !contradiction) {
      changed = false;
      bind_cell_vars();
      for (const auto& c : s.kb.constraints()) {
        if (c.rel() != Constraint::Rel::Eq) continue;
        SymVar unknown{};
        int count = 0;
        for (const auto& [v, k] : c.term().coeffs()) {
          if (!assign.count(v)) {
            unknown = v;
            ++count;
          }
        }
        if (count == 0) {
          Rat val = c.term().eval(assign);
          if (val != 0) contradiction = true;
        } else if (count == 1) {
          Rat a = c.term().coeff(unknown);
          Rat rest = -(c.term() - LinTerm::var(unknown, a)).eval(assign);
          Rat solved = rest / a;
          if (denominator(solved) != 1) {
            contradiction = true;
          } else {
            assign[unknown] = numerator(solved);
            changed = true;
          }
        }
      }
    }
    if (contradiction) {
      std::size_t d = 0;
      for (; d < lens.size(); ++d) {
        if (++lens[d] <= b.max_len) break;
        lens[d] = 1;
      }
      if (d == lens.size() || lens.empty()) break;
      continue;
    }

    // --- enumeration dimensions: unassigned variables + free cells ---
    std::vector<SymVar> free_vars;
    for (SymVar v : vars)
      if (!assign.count(v)) free_vars.push_back(v);
    std::vector<std::pair<std::size_t, std::size_t>> free_cells;  // block, cell
    for (std::size_t bi = 0; bi < blocks.size(); ++bi)
      for (std::size_t ci = 0; ci < blocks[bi].cells.size(); ++ci) {
        PlanCell& c = blocks[bi].cells[ci];
        bool tied = c.forced.has_value();
        for (const auto& v : c.bindings) {
          if (!value_is_var(v)) tied = true;
          // var bindings resolve through the assignment during evaluation
        }
        if (!c.bindings.empty() || tied) continue;
        if (c.free_slot) free_cells.push_back({bi, ci});
      }

    // compile constraints over a dense index
    std::map<SymVar, std::size_t> var_index;
    std::vector<Int> values;
    for (const auto& [v, val] : assign) {
      var_index[v] = values.size();
      values.push_back(val);
    }
    std::size_t first_free = values.size();
    for (SymVar v : free_vars) {
      var_index[v] = values.size();
      values.push_back(b.val_lo);
    }
    std::vector<FlatConstraint> flat;
    bool compiled = true;
    for (const auto& c : s.kb.constraints()) {
      FlatConstraint fc;
      fc.is_eq = c.rel() == Constraint::Rel::Eq;
      for (const auto& [v, k] : c.term().coeffs()) {
        if (denominator(k) != 1 || !var_index.count(v)) {
          compiled = false;
          break;
        }
        fc.coeffs.push_back({var_index[v], static_cast<std::int64_t>(numerator(k))});
      }
      if (!compiled) break;
      fc.constant = static_cast<std::int64_t>(numerator(c.term().constant()));
      flat.push_back(fc);
    }
    if (!compiled) {
      std::size_t d = 0;
      for (; d < lens.size(); ++d) {
        if (++lens[d] <= b.max_len) break;
        lens[d] = 1;
      }
      if (d == lens.size() || lens.empty()) break;
      continue;
    }

    std::vector<std::int64_t> cell_values(free_cells.size(), b.val_lo);
    std::size_t emitted_guard = 0;
    for (;;) {
      if (++emitted_guard > b.max_states) break;
      // evaluate candidate
      bool ok = true;
      for (const auto& fc : flat) {
        std::int64_t acc = fc.constant;
        for (const auto& [idx, k] : fc.coeffs)
          acc += k * static_cast<std::int64_t>(values[idx]);
        if (fc.is_eq ? acc != 0 : acc > 0) {
          ok = false;
          break;
        }
      }
      if (ok) {
        ConcreteState cs;
        // blocks
        for (const auto& pb : blocks) cs.blocks.push_back({pb.base, pb.size});
        // plan cells
        auto add_cell = [&](std::int64_t addr, std::int64_t size, std::int64_t val) {
          auto it = cs.cells.find(addr);
          if (it != cs.cells.end()) {
            if (it->second != std::make_pair(size, val)) ok = false;
            return;
          }
          // overlap with neighbors
          auto nxt = cs.cells.lower_bound(addr);
          if (nxt != cs.cells.end() && nxt->first < addr + size) {
            ok = false;
            return;
          }
          if (nxt != cs.cells.begin()) {
            auto prv = std::prev(nxt);
            if (prv->first + prv->second.first > addr) {
              ok = false;
              return;
            }
          }
          cs.cells[addr] = {size, val};
        };
        for (std::size_t bi = 0; bi < blocks.size() && ok; ++bi) {
          for (std::size_t ci = 0; ci < blocks[bi].cells.size() && ok; ++ci) {
            const PlanCell& c = blocks[bi].cells[ci];
            std::optional<std::int64_t> val;
            if (c.forced) val = *c.forced;
            for (const auto& v : c.bindings) {
              std::int64_t bv =
                  value_is_var(v)
                      ? static_cast<std::int64_t>(values[var_index.at(std::get<SymVar>(v))])
                      : std::get<std::int64_t>(v);
              if (val && *val != bv) ok = false;
              val = bv;
            }
            if (!val) {
              auto it = std::find(free_cells.begin(), free_cells.end(),
                                  std::make_pair(bi, ci));
              if (it != free_cells.end())
                val = cell_values[it - free_cells.begin()];
            }
            if (val) add_cell(blocks[bi].base + c.off, c.size, *val);
          }
        }
        // points-to entries
        for (const auto& pt : s.points_to) {
          if (!ok) break;
          std::int64_t a = static_cast<std::int64_t>(values[var_index.at(pt.addr)]);
          std::int64_t size = ir::size_of(p, pt.ty);
          bool inside = false;
          for (const auto& pb : blocks)
            if (a >= pb.base && a + size <= pb.base + pb.size) inside = true;
          if (!inside) {
            ok = false;
            break;
          }
          std::int64_t val =
              value_is_var(pt.value)
                  ? static_cast<std::int64_t>(values[var_index.at(std::get<SymVar>(pt.value))])
                  : std::get<std::int64_t>(pt.value);
          add_cell(a, size, val);
        }
        if (ok) {
          for (const auto& [name, v] : s.locals)
            cs.env[name] = static_cast<std::int64_t>(values[var_index.at(v)]);
          ConcreteState canon = canonicalize(cs);
          if (keys.insert(canon.key()).second) out.push_back(std::move(canon));
        }
      }
      // odometer over free vars then free cells
      std::size_t d = 0;
      bool done = true;
      for (; d < free_vars.size(); ++d) {
        if (values[first_free + d] < b.val_hi) {
          ++values[first_free + d];
          done = false;
          break;
        }
        values[first_free + d] = b.val_lo;
      }
      if (done) {
        for (d = 0; d < cell_values.size(); ++d) {
          if (cell_values[d] < b.val_hi) {
            ++cell_values[d];
            done = false;
            break;
          }
          cell_values[d] = b.val_lo;
        }
      }
      if (done) break;
    }

    // next length combination
    std::size_t d = 0;
    for (; d < lens.size(); ++d) {
      if (++lens[d] <= b.max_len) break;
      lens[d] = 1;
    }
    if (d == lens.size() || lens.empty()) break;
  }

  std::sort(out.begin(), out.end(),
            [](const ConcreteState& a, const ConcreteState& c) { return a.key() < c.key(); });
  return out;
}

}  // namespace listerm
