#include "listerm/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

namespace listerm {

int Report::exit_code() const {
  switch (verdict) {
    case FinalVerdict::Terminating: return 0;
    case FinalVerdict::Unknown: return 1;
    case FinalVerdict::MemoryUnsafe: return 2;
    case FinalVerdict::UsageError: return 3;
  }
  return 3;
}

std::string Report::str() const {
  std::ostringstream os;
  switch (verdict) {
    case FinalVerdict::Terminating: os << "TERMINATING"; break;
    case FinalVerdict::Unknown: os << "UNKNOWN"; break;
    case FinalVerdict::MemoryUnsafe: os << "MEMORY_UNSAFE"; break;
    case FinalVerdict::UsageError: os << "ERROR"; break;
  }
  if (!diagnostic.empty()) os << ": " << diagnostic;
  os << "\n";
  if (verdict != FinalVerdict::UsageError) {
    os << "nodes: " << nodes << "\nmerges: " << merges << "\nwidenings: " << widenings
       << "\ntransitions: " << transitions << "\nwall_ms: " << wall_ms << "\n";
  }
  if (!certificate.empty()) os << certificate;
  return os.str();
}

std::optional<OracleBounds> parse_oracle_bounds(const std::string& spec) {
  OracleBounds b;
  std::istringstream is(spec);
  std::string item;
  while (std::getline(is, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) return std::nullopt;
    std::string key = item.substr(0, eq);
    std::string val = item.substr(eq + 1);
    try {
      if (key == "values") {
        auto dots = val.find("..");
        if (dots == std::string::npos) return std::nullopt;
        b.val_lo = std::stoll(val.substr(0, dots));
        b.val_hi = std::stoll(val.substr(dots + 2));
      } else if (key == "len") {
        b.max_len = std::stoll(val);
      } else if (key == "allocs") {
        b.max_allocs = static_cast<std::size_t>(std::stoll(val));
      } else {
        return std::nullopt;
      }
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  if (b.val_lo > b.val_hi || b.max_len < 1) return std::nullopt;
  return b;
}

namespace {

void run_oracle_audit(const ir::Program& p, const Seg& seg, const VarPool& pool,
                      const OracleBounds& bounds, std::ostream& os) {
  int audited = 0, failures = 0;
  for (const auto& n : seg.nodes) {
    if (!n.alive || n.state.err) continue;
    ++audited;
    if (auto why = audit_state(n.state, p, pool)) {
      ++failures;
      os << "audit failure at node " << n.id << ": " << *why << "\n";
    }
  }
  os << "oracle audit: " << audited << " states audited, " << failures
     << " well-formedness failures\n";
  int checked = 0, violations = 0;
  for (const auto& ev : seg.merge_events) {
    ++checked;
    auto general = concretize(ev.merged, p, bounds);
    std::set<std::string> keys;
    for (const auto& c : general) keys.insert(c.key());
    for (const AbstractState* side : {&ev.left, &ev.right}) {
      for (const auto& c : concretize(*side, p, bounds)) {
        if (!keys.count(c.key())) {
          ++violations;
          break;
        }
      }
    }
  }
  os << "oracle audit: " << checked << " merges checked by inclusion, " << violations
     << " violations\n";
}

}  // namespace

Report analyze(const ir::Program& p, const RunConfig& cfg, VarPool& pool) {
  auto t0 = std::chrono::steady_clock::now();
  Report rep;
  SegLimits limits;
  limits.node_cap = cfg.node_cap;
  limits.widen_after = cfg.widen_after;
  limits.malloc_may_fail = cfg.malloc_may_fail;
  AnalysisOutcome outcome = build_seg(p, pool, limits);
  const Seg& seg = outcome.seg;
  rep.nodes = seg.stats.nodes;
  rep.merges = seg.stats.merges;
  rep.widenings = seg.stats.widenings;

  if (cfg.emit_dot) {
    std::ofstream f(*cfg.emit_dot);
    f << export_dot(seg, pool);
  }
  if (cfg.emit_seg_json) {
    std::ofstream f(*cfg.emit_seg_json);
    f << export_json(seg, pool);
  }

  if (outcome.kind == OutcomeKind::Err) {
    rep.verdict = FinalVerdict::MemoryUnsafe;
    rep.diagnostic = outcome.diagnostic;
  } else if (outcome.kind == OutcomeKind::Budget) {
    rep.verdict = FinalVerdict::Unknown;
    rep.diagnostic = outcome.diagnostic;
  } else {
    Its its = extract_its(seg, pool);
    rep.transitions = static_cast<int>(its.transitions.size());
    if (cfg.emit_its) {
      std::ofstream f(*cfg.emit_its);
      f << export_its(its, pool);
    }
    TerminationResult tr = prove_termination(its);
    if (tr.verdict == RankVerdict::Terminating) {
      std::string why;
      if (check_certificate(its, tr.proof, &why)) {
        rep.verdict = FinalVerdict::Terminating;
        if (cfg.explain) rep.certificate = explain(its, tr.proof, pool);
      } else {
        rep.verdict = FinalVerdict::Unknown;
        rep.diagnostic = "certificate re-check failed: " + why;
      }
    } else {
      rep.verdict = FinalVerdict::Unknown;
      rep.diagnostic = tr.reason;
    }
  }

  if (cfg.oracle_bounds) {
    auto bounds = parse_oracle_bounds(*cfg.oracle_bounds);
    if (bounds) run_oracle_audit(p, seg, pool, *bounds, std::cerr);
  }
  auto t1 = std::chrono::steady_clock::now();
  rep.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return rep;
}

Report run(const RunConfig& cfg) {
  Report rep;
  std::ifstream f(cfg.input_path);
  if (!f) {
    rep.verdict = FinalVerdict::UsageError;
    rep.diagnostic = "cannot open " + cfg.input_path;
    return rep;
  }
  std::stringstream buf;
  buf << f.rdbuf();
  if (cfg.widen_after < 1 || cfg.node_cap < 1) {
    rep.verdict = FinalVerdict::UsageError;
    rep.diagnostic = "numeric flags must be positive";
    return rep;
  }
  if (cfg.oracle_bounds && !parse_oracle_bounds(*cfg.oracle_bounds)) {
    rep.verdict = FinalVerdict::UsageError;
    rep.diagnostic = "malformed oracle bounds spec";
    return rep;
  }
  try {
    ir::Program p = ir::parse_program(buf.str());
    VarPool pool;
    return analyze(p, cfg, pool);
  } catch (const ir::ParseError& e) {
    rep.verdict = FinalVerdict::UsageError;
    rep.diagnostic = cfg.input_path + ":" + std::to_string(e.line) + ":" +
                     std::to_string(e.col) + ": " + e.what();
    return rep;
  }
}

}  // namespace listerm
