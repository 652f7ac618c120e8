#include "listerm/symexec.hpp"

#include <cassert>

namespace listerm {

namespace {

using ir::Instruction;
using ir::Opcode;
using ir::Operand;

struct Ctx {
  const ir::Program& p;
  const AbstractState& s;
  VarPool& pool;
  const StepOptions& opts;
};

const Instruction& current_inst(const ir::Program& p, const AbstractState& s) {
  const ir::Block& b = p.block(s.pos.block);
  assert(s.pos.index < b.insts.size());
  return b.insts[s.pos.index];
}

Position advanced(const ir::Program& p, const Position& pos) {
  (void)p;
  return Position{pos.block, pos.index + 1};
}

// Term of an operand under the state's locals; nullopt for a use of an
// unassigned register.
std::optional<LinTerm> operand_term(const AbstractState& s, const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::IntLit: return LinTerm(o.value);
    case Operand::Kind::Null: return LinTerm(0);
    case Operand::Kind::Reg: {
      auto v = s.local(o.reg);
      if (!v) return std::nullopt;
      return LinTerm(*v);
    }
  }
  return std::nullopt;
}

// Operand as a stored value: literals stay literals, registers their
// symbolic variable.
std::optional<Value> operand_value(const AbstractState& s, const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::IntLit: return Value{o.value};
    case Operand::Kind::Null: return Value{std::int64_t{0}};
    case Operand::Kind::Reg: {
      auto v = s.local(o.reg);
      if (!v) return std::nullopt;
      return Value{*v};
    }
  }
  return std::nullopt;
}

// Assign a result register: fresh symbolic variable plus a defining
// equality when a term is given (keeps locals injective).
SymVar define_local(AbstractState& s, VarPool& pool, const std::string& reg,
                    const std::optional<LinTerm>& term) {
  SymVar v = pool.fresh("v_" + reg);
  s.set_local(reg, v);
  if (term) s.kb.add(Constraint::eq(LinTerm(v), *term));
  return v;
}

void push_if_sat(StepResult& r, AbstractState st, EdgeKind kind) {
  if (is_satisfiable(st.kb) == SatResult::Unsat) return;
  st.sort_components();
  r.successors.push_back({std::move(st), kind});
}

StepResult refine_pair(const AbstractState& s, const Constraint& c,
                       const Constraint& neg) {
  StepResult r;
  AbstractState a = s;
  a.kb.add(c);
  AbstractState b = s;
  b.kb.add(neg);
  push_if_sat(r, std::move(a), EdgeKind::Refine);
  push_if_sat(r, std::move(b), EdgeKind::Refine);
  return r;
}

StepResult err(std::string diag) {
  StepResult r;
  r.error = true;
  r.diagnostic = std::move(diag);
  return r;
}

// Decide t REL 0; returns 1/0 when entailed either way, otherwise nullopt
// with the refinement constraint pair to split on.
struct Decision {
  std::optional<int> value;
  Constraint split{Constraint::le(LinTerm(0), LinTerm(0))};
  Constraint split_neg{Constraint::le(LinTerm(0), LinTerm(0))};
};

Decision decide_le(const KnowledgeBase& kb, const LinTerm& a, const LinTerm& bt) {
  Decision d;
  Constraint c = Constraint::le(a, bt);
  if (entails(kb, c)) {
    d.value = 1;
    return d;
  }
  Constraint neg = Constraint::gt(a, bt);
  if (entails(kb, neg)) {
    d.value = 0;
    return d;
  }
  d.split = c;
  d.split_neg = neg;
  return d;
}

Decision decide_eq(const KnowledgeBase& kb, const LinTerm& a, const LinTerm& bt) {
  Decision d;
  Constraint c = Constraint::eq(a, bt);
  if (entails(kb, c)) {
    d.value = 1;
    return d;
  }
  // not-equal holds when kb plus the equality is unsatisfiable
  KnowledgeBase with = kb;
  with.add(c);
  if (is_satisfiable(with) == SatResult::Unsat) {
    d.value = 0;
    return d;
  }
  // two-stage split: sign first, then pin the lower side
  Constraint le = Constraint::le(a, bt);
  if (!entails(kb, le) && !entails(kb, Constraint::gt(a, bt))) {
    d.split = le;
    d.split_neg = Constraint::gt(a, bt);
  } else {
    d.split = Constraint::ge(a, bt);
    d.split_neg = Constraint::lt(a, bt);
  }
  return d;
}

StepResult exec_icmp(Ctx& c, const Instruction& inst) {
  auto a = operand_term(c.s, inst.args[0]);
  auto b = operand_term(c.s, inst.args[1]);
  if (!a || !b) return err("icmp on unassigned register");
  using ir::IcmpPred;
  bool flip_result = false;
  Decision d;
  switch (inst.pred) {
    case IcmpPred::Eq: d = decide_eq(c.s.kb, *a, *b); break;
    case IcmpPred::Ne:
      d = decide_eq(c.s.kb, *a, *b);
      flip_result = true;
      break;
    case IcmpPred::Ult:
    case IcmpPred::Slt: d = decide_le(c.s.kb, *a + LinTerm(1), *b); break;
    case IcmpPred::Ule:
    case IcmpPred::Sle: d = decide_le(c.s.kb, *a, *b); break;
    case IcmpPred::Ugt:
    case IcmpPred::Sgt: d = decide_le(c.s.kb, *b + LinTerm(1), *a); break;
    case IcmpPred::Uge:
    case IcmpPred::Sge: d = decide_le(c.s.kb, *b, *a); break;
  }
  if (d.value) {
    int bit = flip_result ? 1 - *d.value : *d.value;
    AbstractState n = c.s;
    n.pos = advanced(c.p, c.s.pos);
    define_local(n, c.pool, inst.result, LinTerm(bit));
    StepResult r;
    push_if_sat(r, std::move(n), EdgeKind::Eval);
    return r;
  }
  return refine_pair(c.s, d.split, d.split_neg);
}

StepResult exec_br(Ctx& c, const Instruction& inst) {
  StepResult r;
  if (inst.args.empty()) {
    AbstractState n = c.s;
    n.pos = Position{inst.target, 0};
    push_if_sat(r, std::move(n), EdgeKind::Eval);
    return r;
  }
  auto v = operand_term(c.s, inst.args[0]);
  if (!v) return err("br on unassigned register");
  if (entails(c.s.kb, Constraint::eq(*v, LinTerm(1)))) {
    AbstractState n = c.s;
    n.pos = Position{inst.target, 0};
    push_if_sat(r, std::move(n), EdgeKind::Eval);
    return r;
  }
  if (entails(c.s.kb, Constraint::eq(*v, LinTerm(0)))) {
    AbstractState n = c.s;
    n.pos = Position{inst.target2, 0};
    push_if_sat(r, std::move(n), EdgeKind::Eval);
    return r;
  }
  return refine_pair(c.s, Constraint::ge(*v, LinTerm(1)), Constraint::le(*v, LinTerm(0)));
}

StepResult exec_arith(Ctx& c, const Instruction& inst) {
  auto a = operand_term(c.s, inst.args[0]);
  auto b = operand_term(c.s, inst.args[1]);
  if (!a || !b) return err("arithmetic on unassigned register");
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  std::optional<LinTerm> res;
  if (inst.op == Opcode::Add) {
    res = *a + *b;
  } else if (inst.op == Opcode::Sub) {
    res = *a - *b;
  } else {
    // mul by a constant stays linear; a product of two symbolic terms is
    // abstracted to an unconstrained fresh variable
    if (a->is_constant())
      res = *b * a->constant();
    else if (b->is_constant())
      res = *a * b->constant();
  }
  define_local(n, c.pool, inst.result, res);
  StepResult r;
  push_if_sat(r, std::move(n), EdgeKind::Eval);
  return r;
}

StepResult exec_alloca(Ctx& c, const Instruction& inst) {
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  std::int64_t size = ir::size_of(c.p, inst.ty);
  SymVar lo = c.pool.fresh("v_" + inst.result);
  SymVar hi = c.pool.fresh("v_" + inst.result + "_end");
  n.set_local(inst.result, lo);
  n.kb.add(Constraint::ge(LinTerm(lo), LinTerm(1)));
  n.kb.add(Constraint::eq(LinTerm(hi), LinTerm(lo) + LinTerm(size - 1)));
  n.allocs.push_back(Allocation{lo, hi});
  if (!inst.ty.is_struct()) {
    SymVar init = c.pool.fresh("u_" + inst.result);
    n.points_to.push_back(PointsTo{lo, inst.ty, Value{init}});
  }
  StepResult r;
  push_if_sat(r, std::move(n), EdgeKind::Eval);
  return r;
}

AbstractState malloc_success(Ctx& c, const Instruction& inst, const LinTerm& size) {
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  SymVar lo = c.pool.fresh("v_" + inst.result);
  SymVar hi = c.pool.fresh("v_" + inst.result + "_end");
  n.set_local(inst.result, lo);
  n.kb.add(Constraint::ge(LinTerm(lo), LinTerm(1)));
  n.kb.add(Constraint::eq(LinTerm(hi), LinTerm(lo) + size - LinTerm(1)));
  n.kb.add(Constraint::ge(size, LinTerm(1)));
  n.allocs.push_back(Allocation{lo, hi});
  return n;
}

StepResult exec_call(Ctx& c, const Instruction& inst) {
  StepResult r;
  if (inst.callee == ir::Intrinsic::Malloc) {
    auto size = operand_term(c.s, inst.args[0]);
    if (!size) return err("malloc with unassigned size register");
    bool pos_known = entails(c.s.kb, Constraint::ge(*size, LinTerm(1)));
    bool nonpos_known = entails(c.s.kb, Constraint::le(*size, LinTerm(0)));
    if (pos_known) {
      push_if_sat(r, malloc_success(c, inst, *size), EdgeKind::Eval);
    } else if (nonpos_known) {
      // no usable allocation; result stays nonnull but any access is unsafe
      AbstractState n = c.s;
      n.pos = advanced(c.p, c.s.pos);
      SymVar v = c.pool.fresh("v_" + inst.result);
      n.set_local(inst.result, v);
      n.kb.add(Constraint::ge(LinTerm(v), LinTerm(1)));
      push_if_sat(r, std::move(n), EdgeKind::Eval);
    } else {
      // refine on the sign of the requested size
      AbstractState pos_branch = malloc_success(c, inst, *size);
      AbstractState neg = c.s;
      neg.pos = advanced(c.p, c.s.pos);
      SymVar v = c.pool.fresh("v_" + inst.result);
      neg.set_local(inst.result, v);
      neg.kb.add(Constraint::ge(LinTerm(v), LinTerm(1)));
      neg.kb.add(Constraint::le(*size, LinTerm(0)));
      push_if_sat(r, std::move(pos_branch), EdgeKind::Refine);
      push_if_sat(r, std::move(neg), EdgeKind::Refine);
      return r;
    }
    if (c.opts.malloc_may_fail && !r.successors.empty()) {
      // null-return branch: no allocation, result pinned to 0
      for (auto& [st, kind] : r.successors) kind = EdgeKind::Refine;
      AbstractState fail = c.s;
      fail.pos = advanced(c.p, c.s.pos);
      SymVar v = c.pool.fresh("v_" + inst.result);
      fail.set_local(inst.result, v);
      fail.kb.add(Constraint::eq(LinTerm(v), LinTerm(0)));
      push_if_sat(r, std::move(fail), EdgeKind::Refine);
    }
    return r;
  }
  // nondet intrinsics
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  SymVar v = c.pool.fresh("v_" + inst.result);
  n.set_local(inst.result, v);
  if (inst.callee == ir::Intrinsic::NondetU32)
    n.kb.add(Constraint::ge(LinTerm(v), LinTerm(0)));
  push_if_sat(r, std::move(n), EdgeKind::Eval);
  return r;
}

// Removes every points-to entry whose byte range overlaps [addr, addr+size)
// and cannot be proved disjoint from it.
void remove_overlapping(AbstractState& n, const ir::Program& p, const LinTerm& addr,
                        std::int64_t size) {
  std::vector<PointsTo> kept;
  for (const auto& pt : n.points_to) {
    std::int64_t psz = ir::size_of(p, pt.ty);
    LinTerm a(pt.addr);
    bool disjoint =
        entails(n.kb, Constraint::le(a + LinTerm(psz), addr)) ||
        entails(n.kb, Constraint::le(addr + LinTerm(size), a));
    if (disjoint) kept.push_back(pt);
  }
  n.points_to = std::move(kept);
}

StepResult exec_store(Ctx& c, const Instruction& inst) {
  auto val = operand_value(c.s, inst.args[0]);
  auto addr_op = inst.args[1];
  auto addr = operand_term(c.s, addr_op);
  if (!val || !addr) return err("store with unassigned register");
  std::int64_t size = ir::size_of(c.p, inst.ty);
  DerefResult d = check_deref(c.s, c.p, *addr, size);
  if (d.cls == DerefClass::Unsafe)
    return err("cannot prove store of " + std::to_string(size) + " bytes safe at " +
               inst.str());
  if (d.cls == DerefClass::NeedsUnfold) {
    auto [one, more] = unfold_head(c.s, d.index, c.p, c.pool);
    StepResult r;
    push_if_sat(r, std::move(more), EdgeKind::Refine);
    push_if_sat(r, std::move(one), EdgeKind::Refine);
    return r;
  }
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  remove_overlapping(n, c.p, *addr, size);
  SymVar addr_var;
  if (auto single = addr->single_var()) {
    addr_var = *single;
  } else {
    addr_var = c.pool.fresh("a");
    n.kb.add(Constraint::eq(LinTerm(addr_var), *addr));
  }
  n.points_to.push_back(PointsTo{addr_var, inst.ty, *val});
  StepResult r;
  push_if_sat(r, std::move(n), EdgeKind::Eval);
  return r;
}

StepResult exec_load(Ctx& c, const Instruction& inst) {
  auto addr = operand_term(c.s, inst.args[0]);
  if (!addr) return err("load from unassigned register");
  std::int64_t size = ir::size_of(c.p, inst.ty);
  DerefResult d = check_deref(c.s, c.p, *addr, size);
  if (d.cls == DerefClass::Unsafe)
    return err("cannot prove load of " + std::to_string(size) + " bytes safe at " +
               inst.str());
  if (d.cls == DerefClass::NeedsUnfold) {
    auto [one, more] = unfold_head(c.s, d.index, c.p, c.pool);
    StepResult r;
    push_if_sat(r, std::move(more), EdgeKind::Refine);
    push_if_sat(r, std::move(one), EdgeKind::Refine);
    return r;
  }
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  // exact match: entailed-equal address and same type binds the stored value;
  // a mismatched or partially overlapping entry reads as havoc
  std::optional<LinTerm> bound;
  for (const auto& pt : c.s.points_to) {
    if (pt.ty == inst.ty && entails_equal(c.s.kb, LinTerm(pt.addr), *addr)) {
      bound = value_term(pt.value);
      break;
    }
  }
  define_local(n, c.pool, inst.result, bound);
  StepResult r;
  push_if_sat(r, std::move(n), EdgeKind::Eval);
  return r;
}

StepResult exec_gep(Ctx& c, const Instruction& inst) {
  auto base = operand_term(c.s, inst.args[0]);
  if (!base) return err("getelementptr on unassigned register");
  LinTerm res;
  if (inst.gep_byte_form) {
    auto idx = operand_term(c.s, inst.args[1]);
    if (!idx) return err("getelementptr on unassigned register");
    res = *base + *idx;
  } else {
    std::int64_t off = ir::field_offset(c.p, inst.ty.struct_name(), inst.field_index);
    res = *base + LinTerm(off);
  }
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  define_local(n, c.pool, inst.result, res);
  StepResult r;
  push_if_sat(r, std::move(n), EdgeKind::Eval);
  return r;
}

StepResult exec_cast(Ctx& c, const Instruction& inst) {
  auto v = operand_term(c.s, inst.args[0]);
  if (!v) return err("cast of unassigned register");
  AbstractState n = c.s;
  n.pos = advanced(c.p, c.s.pos);
  define_local(n, c.pool, inst.result, v);
  StepResult r;
  push_if_sat(r, std::move(n), EdgeKind::Eval);
  return r;
}

}  // namespace

AbstractState initial_state(const ir::Program& p) {
  AbstractState s;
  s.pos = Position{p.entry_label(), 0};
  return s;
}

DerefResult check_deref(const AbstractState& s, const ir::Program& p,
                        const LinTerm& addr, std::int64_t size) {
  assert(size >= 1);
  LinTerm last = addr + LinTerm(size - 1);
  for (std::size_t i = 0; i < s.allocs.size(); ++i) {
    const Allocation& a = s.allocs[i];
    if (entails(s.kb, Constraint::le(LinTerm(a.lo), addr)) &&
        entails(s.kb, Constraint::le(last, LinTerm(a.hi))))
      return DerefResult{DerefClass::SafeIn, i};
  }
  for (std::size_t i = 0; i < s.lists.size(); ++i) {
    const ListInvariant& li = s.lists[i];
    std::int64_t elem_size = p.layout(li.elem_ty).size;
    LinTerm head(li.head);
    if (entails(s.kb, Constraint::le(head, addr)) &&
        entails(s.kb, Constraint::le(last, head + LinTerm(elem_size - 1))))
      return DerefResult{DerefClass::NeedsUnfold, i};
  }
  return DerefResult{DerefClass::Unsafe, 0};
}

std::pair<AbstractState, AbstractState> unfold_head(const AbstractState& s,
                                                    std::size_t list_index,
                                                    const ir::Program& p, VarPool& pool) {
  assert(list_index < s.lists.size());
  ListInvariant li = s.lists[list_index];
  std::int64_t elem_size = p.layout(li.elem_ty).size;

  auto materialize = [&](AbstractState& n) {
    n.lists.erase(n.lists.begin() + static_cast<std::ptrdiff_t>(list_index));
    SymVar end = pool.fresh(pool.hint(li.head) + "_end");
    n.kb.add(Constraint::eq(LinTerm(end), LinTerm(li.head) + LinTerm(elem_size - 1)));
    n.kb.add(Constraint::ge(LinTerm(li.head), LinTerm(1)));
    n.allocs.push_back(Allocation{li.head, end});
    for (const auto& f : li.fields) {
      SymVar addr;
      if (f.off == 0) {
        addr = li.head;
      } else {
        addr = pool.fresh(pool.hint(li.head) + "_f" + std::to_string(f.off));
        n.kb.add(Constraint::eq(LinTerm(addr), LinTerm(li.head) + LinTerm(f.off)));
      }
      n.points_to.push_back(PointsTo{addr, f.ty, f.first});
    }
  };

  // (a) the invariant covers exactly one node: first and last coincide
  AbstractState one = s;
  materialize(one);
  one.kb.add(Constraint::eq(LinTerm(li.len), LinTerm(1)));
  for (const auto& f : li.fields)
    one.kb.add(Constraint::eq(value_term(f.first), value_term(f.last)));
  one.sort_components();

  // (b) two or more nodes: remainder invariant at the first recursive value
  AbstractState more = s;
  materialize(more);
  more.kb.add(Constraint::ge(LinTerm(li.len), LinTerm(2)));
  const Value& next = li.fields[li.rec_index].first;
  SymVar rem_head;
  if (value_is_var(next)) {
    rem_head = std::get<SymVar>(next);
  } else {
    rem_head = pool.fresh("h");
    more.kb.add(Constraint::eq(LinTerm(rem_head), value_term(next)));
  }
  more.kb.add(Constraint::ge(LinTerm(rem_head), LinTerm(1)));
  SymVar rem_len = pool.fresh(pool.hint(li.len) + "_r");
  more.kb.add(Constraint::eq(LinTerm(rem_len), LinTerm(li.len) - LinTerm(1)));
  ListInvariant rem;
  rem.head = rem_head;
  rem.elem_ty = li.elem_ty;
  rem.len = rem_len;
  rem.rec_index = li.rec_index;
  for (std::size_t i = 0; i < li.fields.size(); ++i) {
    InvariantField f = li.fields[i];
    SymVar u = pool.fresh("u" + std::to_string(f.off));
    f.first = Value{u};
    rem.fields.push_back(f);
  }
  more.lists.push_back(rem);
  more.sort_components();

  return {std::move(one), std::move(more)};
}

StepResult step(const ir::Program& p, const AbstractState& s, VarPool& pool,
                const StepOptions& opts) {
  assert(!s.err && "cannot step ERR");
  Ctx c{p, s, pool, opts};
  const Instruction& inst = current_inst(p, s);
  switch (inst.op) {
    case Opcode::Load: return exec_load(c, inst);
    case Opcode::Store: return exec_store(c, inst);
    case Opcode::Icmp: return exec_icmp(c, inst);
    case Opcode::Br: return exec_br(c, inst);
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul: return exec_arith(c, inst);
    case Opcode::Alloca: return exec_alloca(c, inst);
    case Opcode::Bitcast:
    case Opcode::Zext:
    case Opcode::Sext: return exec_cast(c, inst);
    case Opcode::Gep: return exec_gep(c, inst);
    case Opcode::Call: return exec_call(c, inst);
    case Opcode::Ret: return StepResult{};  // terminal, no successors
  }
  return err("unhandled opcode");
}

}  // namespace listerm
