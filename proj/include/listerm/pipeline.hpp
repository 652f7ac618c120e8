#pragma once

// End-to-end analysis: parse, build the symbolic execution graph, derive the
// safety verdict, extract the integer transition system, prove termination,
// and cross-check the certificate before claiming anything.

#include "listerm/concretize.hpp"
#include "listerm/its.hpp"
#include "listerm/ranking.hpp"

#include <optional>
#include <string>

namespace listerm {

struct RunConfig {
  std::string input_path;
  std::optional<std::string> emit_dot;
  std::optional<std::string> emit_its;
  std::optional<std::string> emit_seg_json;
  bool malloc_may_fail = false;
  int widen_after = 3;
  int node_cap = 10000;
  bool explain = false;
  std::optional<std::string> oracle_bounds;  // test mode, e.g. "values=-4..8,len=4"
};

enum class FinalVerdict { Terminating, Unknown, MemoryUnsafe, UsageError };

struct Report {
  FinalVerdict verdict = FinalVerdict::Unknown;
  std::string diagnostic;
  int nodes = 0;
  int merges = 0;
  int widenings = 0;
  int transitions = 0;
  double wall_ms = 0;
  std::string certificate;  // human-readable, when requested

  int exit_code() const;
  std::string str() const;
};

// Full pipeline on an already-parsed program; pool receives all variables.
Report analyze(const ir::Program& p, const RunConfig& cfg, VarPool& pool);

// CLI entry: reads the file, catches parse/IO errors into UsageError.
Report run(const RunConfig& cfg);

std::optional<OracleBounds> parse_oracle_bounds(const std::string& spec);

}  // namespace listerm
