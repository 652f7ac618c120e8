#pragma once

// Abstract states: program position, injective local-variable map, allocated
// intervals, typed points-to facts, list invariants of symbolic length, and a
// knowledge base. ERR is the distinguished error state. Also the instance
// check used to close cycles in the symbolic execution graph.

#include "listerm/constraints.hpp"
#include "listerm/ir.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace listerm {

struct Position {
  std::string block;
  std::size_t index = 0;
  friend auto operator<=>(const Position&, const Position&) = default;
  std::string str() const { return "(" + block + ", " + std::to_string(index) + ")"; }
};

// A symbolic value: a variable or an integer literal.
using Value = std::variant<SymVar, std::int64_t>;

LinTerm value_term(const Value& v);
bool value_is_var(const Value& v);
std::string value_str(const Value& v, const VarPool& pool);

// Interval of allocated addresses [lo, hi]; kb entails lo <= hi. Distinct
// allocations are implicitly pairwise disjoint.
struct Allocation {
  SymVar lo;
  SymVar hi;
  friend auto operator<=>(const Allocation&, const Allocation&) = default;
};

struct PointsTo {
  SymVar addr;
  ir::Type ty;
  Value value;
};

struct InvariantField {
  std::int64_t off = 0;
  ir::Type ty;
  Value first;
  Value last;
};

// Unshared singly linked list segment of symbolic length >= 1: head address,
// element struct type, per-field first/last values, exactly one recursive
// field (rec_index) of type elem*; the region is disjoint from all
// allocations and other invariants.
struct ListInvariant {
  SymVar head;
  std::string elem_ty;
  SymVar len;
  std::vector<InvariantField> fields;
  std::size_t rec_index = 0;
};

struct AbstractState {
  bool err = false;
  Position pos;
  std::map<std::string, SymVar> locals;  // injective
  std::vector<Allocation> allocs;
  std::vector<PointsTo> points_to;
  std::vector<ListInvariant> lists;
  KnowledgeBase kb;

  static AbstractState make_err() {
    AbstractState s;
    s.err = true;
    return s;
  }

  std::optional<SymVar> local(const std::string& name) const;
  void set_local(const std::string& name, SymVar v);
  // canonical component order: allocations by lo id, points-to by addr id,
  // lists by head id
  void sort_components();

  std::string str(const VarPool& pool) const;
};

// Structural well-formedness audit: injective locals, layout-consistent list
// invariants, kb-entailed lo <= hi per allocation. Returns a diagnostic for
// the first violation, if any.
std::optional<std::string> audit_state(const AbstractState& s, const ir::Program& p,
                                       const VarPool& pool);

// Mapping from one state's variables to terms over another's.
using Instantiation = std::map<SymVar, LinTerm>;

LinTerm apply_instantiation(const Instantiation& inst, const LinTerm& t);

// Instance check: yes only if a mapping from general's variables to
// specific's terms exists under which specific is represented by general:
// locals agree, every component of general is covered by specific's
// components (a list invariant may be covered by an invariant of
// entailed-equal structure or by an explicit node chain, optionally ending in
// a tail invariant), coverage consumes every specific component exactly once,
// and specific's kb entails the instantiated kb of general. Returns the
// mapping on success.
std::optional<Instantiation> is_instance(const AbstractState& general,
                                         const AbstractState& specific,
                                         const ir::Program& p);

}  // namespace listerm
