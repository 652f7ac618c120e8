#pragma once

// One-step symbolic execution: an inference rule per instruction,
// memory-safety obligations on every dereference, comparison refinement when
// the knowledge base cannot decide, and list-invariant unfolding when an
// access lands in an invariant's head node.

#include "listerm/state.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace listerm {

enum class EdgeKind { Eval, Refine, Generalize };

struct StepResult {
  bool error = false;
  std::string diagnostic;  // when error: the failed obligation
  std::vector<std::pair<AbstractState, EdgeKind>> successors;  // exploration order
};

struct StepOptions {
  bool malloc_may_fail = false;
};

// Dispatches on the instruction at s.pos. Unsatisfiable successors are
// pruned. error reports an unprovable memory-safety obligation (the driver
// turns it into the ERR node).
StepResult step(const ir::Program& p, const AbstractState& s, VarPool& pool,
                const StepOptions& opts = {});

AbstractState initial_state(const ir::Program& p);

enum class DerefClass { SafeIn, NeedsUnfold, Unsafe };

struct DerefResult {
  DerefClass cls = DerefClass::Unsafe;
  std::size_t index = 0;  // allocation index (SafeIn) or list index (NeedsUnfold)
};

// safe_in(a) iff kb entails a.lo <= addr and addr + size - 1 <= a.hi for some
// allocation; needs_unfold(li) iff the accessed range provably lies in the
// head element of a list invariant; unsafe otherwise.
DerefResult check_deref(const AbstractState& s, const ir::Program& p,
                        const LinTerm& addr, std::int64_t size);

// Case split on the invariant's length: first the length-1 branch (invariant
// replaced by its single node, first = last forced), then the length >= 2
// branch (head node materialized, remainder invariant at the old first
// recursive value with fresh first values and decremented length). Either
// branch may come back with an unsatisfiable kb; callers prune.
std::pair<AbstractState, AbstractState> unfold_head(const AbstractState& s,
                                                    std::size_t list_index,
                                                    const ir::Program& p, VarPool& pool);

}  // namespace listerm
