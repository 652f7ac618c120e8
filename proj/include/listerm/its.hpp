#pragma once

// Integer transition system extracted from the cycles of a complete symbolic
// execution graph: one location per generalized node plus a virtual start;
// one transition per generalize edge, its relation the final knowledge base
// of the closing path projected onto the source location's variables and the
// primed variables of the target.

#include "listerm/seg.hpp"

#include <map>
#include <string>
#include <vector>

namespace listerm {

struct ItsLocation {
  int id = 0;
  std::string name;
  int seg_node = -1;  // -1 for the virtual start
  std::vector<SymVar> vars;
  std::vector<SymVar> primed;  // parallel to vars
};

struct Transition {
  int id = 0;
  int src = 0;
  int dst = 0;
  KnowledgeBase rel;                 // over src vars and primed dst vars
  std::map<SymVar, LinTerm> update;  // primed var -> term over src vars
};

struct Its {
  std::vector<ItsLocation> locations;  // index 0 is the start location
  std::vector<Transition> transitions;
  int start = 0;
};

Its extract_its(const Seg& seg, VarPool& pool);

// Native text format (see docs/its-format.md); stable ordering.
std::string export_its(const Its& its, const VarPool& pool);
Its parse_its(const std::string& text, VarPool& pool);

// Equality up to variable identity: locations and transitions are compared
// positionally with variables mapped by their index.
bool structurally_equal(const Its& a, const Its& b);

}  // namespace listerm
