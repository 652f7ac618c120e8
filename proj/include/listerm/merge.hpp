#pragma once

// Generalization of two abstract states at the same position: fresh merged
// variables anchored at the program variables, structural correspondence for
// memory-only variables, component lifting, list detection and invariant
// inference, and candidate-based knowledge-base lifting (a constraint is kept
// only when both sides entail its instantiation).

#include "listerm/state.hpp"

#include <optional>
#include <string>
#include <vector>

namespace listerm {

enum class DetectOutcome { List, NullRoot, NoList };

struct DetectedNode {
  std::size_t alloc_index = 0;
  std::vector<std::size_t> pt_index;  // one per field, layout order
};

struct DetectedList {
  std::string elem_ty;
  std::vector<DetectedNode> nodes;
  std::optional<std::size_t> tail_list;  // index into state.lists
  LinTerm total_len;                     // node count plus tail length
};

struct DetectResult {
  DetectOutcome outcome = DetectOutcome::NoList;
  DetectedList list;
};

// Follows points-to entries from the root: each node must be a full
// allocation of the element type with every field present; the recursive
// field is followed until literal null, an existing invariant head, or
// failure. Cycles and shared nodes fail.
DetectResult detect_list(const AbstractState& s, const ir::Program& p,
                         const LinTerm& root, const std::string& elem_ty);

struct MergeOptions {
  bool widen = false;       // keep only constraints re-derivable from the left state
  bool force_drop = false;  // drop incompatible list regions instead of refusing
};

struct MergeResult {
  bool refused = false;
  std::string diagnostic;
  AbstractState merged;
  Instantiation mu_left;   // merged variable -> term over the left state
  Instantiation mu_right;  // merged variable -> term over the right state
};

// Preconditions: same position and equal local-variable domains (else
// refused). Also refuses when one side has a detected list at an anchor, the
// other side has none there, and that region is not covered by a
// both-sides-list anchor (merging would drop it and doom later proofs);
// force_drop overrides with a diagnostic.
MergeResult merge_states(const ir::Program& p, const AbstractState& left,
                         const AbstractState& right, VarPool& pool,
                         const MergeOptions& opts = {});

}  // namespace listerm
