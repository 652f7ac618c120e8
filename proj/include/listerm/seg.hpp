#pragma once

// Symbolic-execution-graph driver: depth-first worklist, loop-header
// bookkeeping, instance-check-first cycle closing, merging with widening
// after repeated merges at one position, subsumed-subtree discarding, and
// DOT/JSON export.

#include "listerm/merge.hpp"
#include "listerm/symexec.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace listerm {

struct SegNode {
  int id = 0;
  AbstractState state;
  bool alive = true;
  bool terminal = false;
  bool merged_node = false;      // created by a merge (generalized state)
  bool gen_target = false;       // some generalize edge lands here
  bool skip_header_logic = false;
  int parent = -1;
  EdgeKind in_kind = EdgeKind::Eval;
  std::vector<std::pair<int, EdgeKind>> children;
  int gen_to = -1;               // generalize edge target, when closed
  Instantiation gen_sigma;       // target's variables -> terms over this state
};

struct MergeEvent {
  Position pos;
  AbstractState left, right, merged;
  int merged_node = -1;  // -1 when the merge closed onto an existing node
  bool widened = false;
};

struct SegStats {
  int nodes = 0;
  int merges = 0;
  int widenings = 0;
  int instance_closures = 0;
  int merge_refusals = 0;
};

struct Seg {
  std::vector<SegNode> nodes;
  std::vector<MergeEvent> merge_events;
  SegStats stats;
  int err_node = -1;
  std::string err_diagnostic;

  std::vector<int> live_at(const Position& pos) const;
};

struct SegLimits {
  int node_cap = 10000;
  int widen_after = 3;
  bool malloc_may_fail = false;
};

enum class OutcomeKind { Complete, Err, Budget };

struct AnalysisOutcome {
  OutcomeKind kind = OutcomeKind::Complete;
  Seg seg;
  std::string diagnostic;
};

// Blocks that are targets of back edges in the block-level control flow
// graph; merging and instance checks happen at their first instruction.
std::set<std::string> loop_headers(const ir::Program& p);

AnalysisOutcome build_seg(const ir::Program& p, VarPool& pool, const SegLimits& limits = {});

std::string export_dot(const Seg& seg, const VarPool& pool);
std::string export_json(const Seg& seg, const VarPool& pool);

}  // namespace listerm
