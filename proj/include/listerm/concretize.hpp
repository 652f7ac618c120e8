#pragma once

// Desk-scale concretization oracle: enumerates the concrete states (program
// variable assignment plus finite typed memory) represented by an abstract
// state within small bounds. Closed world: heaps contain exactly the state's
// components with list invariants expanded. Allocation addresses are not
// enumerated; blocks are packed deterministically and every state is
// canonicalized by a pointer-graph traversal so states from different
// abstract sources compare by structure.

#include "listerm/state.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace listerm {

struct OracleBounds {
  std::int64_t val_lo = -4;
  std::int64_t val_hi = 8;
  std::int64_t max_len = 4;
  std::size_t max_allocs = 8;       // beyond-list allocation cap
  std::size_t max_states = 2000000; // enumeration guard
};

struct ConcreteState {
  std::map<std::string, std::int64_t> env;
  std::vector<std::pair<std::int64_t, std::int64_t>> blocks;  // (base, size)
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> cells;  // addr -> (size, value)

  std::string key() const;  // canonical serialization
  friend bool operator==(const ConcreteState& a, const ConcreteState& b) {
    return a.env == b.env && a.blocks == b.blocks && a.cells == b.cells;
  }
  friend bool operator<(const ConcreteState& a, const ConcreteState& b) {
    return a.key() < b.key();
  }
};

// Relocates blocks to packed canonical addresses by traversing the pointer
// graph from program variables in lexicographic order, then block cells in
// address order. Values landing inside a block are rewritten as pointers.
ConcreteState canonicalize(const ConcreteState& s);

// Deterministic enumeration, canonicalized, sorted, deduplicated. ERR
// concretizes to nothing.
std::vector<ConcreteState> concretize(const AbstractState& s, const ir::Program& p,
                                      const OracleBounds& b = {});

}  // namespace listerm
