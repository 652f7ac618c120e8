#pragma once

// Termination proving for integer transition systems: per SCC, affine
// ranking functions are synthesized by a Farkas-style encoding solved with
// the exact rational simplex, and strictly decreasing transitions are removed
// until the SCC empties (lexicographic combination). Certificates are
// re-checkable through the constraint engine alone.

#include "listerm/its.hpp"
#include "listerm/simplex.hpp"

#include <map>
#include <string>
#include <vector>

namespace listerm {

struct RankStep {
  // per location id: affine function over the location's variables
  std::map<int, std::pair<std::map<SymVar, Rat>, Rat>> funcs;
  std::vector<int> removed;  // transition ids proved strictly decreasing
};

struct SccProof {
  std::vector<int> locations;  // sorted location ids
  std::vector<RankStep> steps;
};

struct TerminationProof {
  std::vector<SccProof> sccs;
};

enum class RankVerdict { Terminating, Unknown };

struct TerminationResult {
  RankVerdict verdict = RankVerdict::Unknown;
  std::string reason;
  TerminationProof proof;
};

TerminationResult prove_termination(const Its& its, std::size_t pivot_limit = 200000);

// Independent re-verification: bounded-from-below and non-increase on every
// transition alive at each step, strict decrease (>= 1) on the removed ones,
// and the removal order must empty every nontrivial SCC. Uses entailment
// checks only.
bool check_certificate(const Its& its, const TerminationProof& proof,
                       std::string* why = nullptr);

std::string explain(const Its& its, const TerminationProof& proof, const VarPool& pool);

}  // namespace listerm
