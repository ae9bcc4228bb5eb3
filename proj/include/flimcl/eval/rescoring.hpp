#pragma once

#include <map>
#include <string>
#include <vector>

#include "flimcl/curation/refine.hpp"
#include "flimcl/dataset.hpp"

namespace flimcl::eval {

enum class RelabelPolicy {
  Oracle,       // restore the true label
  NoisyOracle,  // restore with probability `reliability`, else keep the observed label
};

inline RelabelPolicy parse_relabel_policy(const std::string& s) {
  if (s == "oracle") return RelabelPolicy::Oracle;
  if (s == "noisy-oracle") return RelabelPolicy::NoisyOracle;
  throw ConfigError("unknown relabel policy '" + s + "' (expected oracle or noisy-oracle)");
}

struct RescoringOptions {
  RelabelPolicy policy = RelabelPolicy::Oracle;
  double reliability = 0.6;
  std::uint64_t seed = 0;
};

struct GroupRescore {
  std::string group;
  int margins = 0;
  int points = 0;
  int corrupted_margins = 0;   // per the corruption log, in the analysis scheme
  int relabeled_margins = 0;   // margins whose label actually changed
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
};

struct RescoringReport {
  std::vector<GroupRescore> groups;  // issue, control, indeterminate
  std::vector<std::string> warnings;

  const GroupRescore& group(const std::string& name) const {
    for (const auto& g : groups)
      if (g.group == name) return g;
    throw InputError("no rescoring group '" + name + "'");
  }
};

/// Simulated blinded re-evaluation: the corruption log plays the
/// pathologist. Predictions stay fixed; only the reference labels change.
inline RescoringReport rescoring_study(const curation::SchemeAnalysis& a, const CorruptionLog& log,
                                       const RescoringOptions& opt) {
  if (!(opt.reliability >= 0 && opt.reliability <= 1)) throw ParameterError("reliability must lie in [0,1]");
  std::map<int, Label> truth;  // margin id -> true label in the analysis scheme
  for (const auto& e : log.entries) truth[e.margin_id] = a.scheme.apply(e.true_label);

  RescoringReport out;
  for (auto status : {curation::MarginStatus::Issue, curation::MarginStatus::Control,
                      curation::MarginStatus::Indeterminate}) {
    GroupRescore g;
    g.group = curation::status_name(status);
    std::size_t hit_before = 0, hit_after = 0;
    for (std::size_t m = 0; m < a.margins.ids.size(); ++m) {
      if (a.margin_flags.status[m] != status) continue;
      const int id = a.margins.ids[m];
      const auto& pts = a.margins.members[m];
      const Label observed = a.labels[pts.front()];
      Label revised = observed;
      const auto it = truth.find(id);
      if (it != truth.end() && it->second != observed) {
        g.corrupted_margins++;
        bool restore = opt.policy == RelabelPolicy::Oracle;
        if (opt.policy == RelabelPolicy::NoisyOracle) {
          Rng rng(derive_seed(opt.seed, 0x72656c, id));
          restore = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < opt.reliability;
        }
        if (restore) revised = it->second;
      }
      if (revised != observed) g.relabeled_margins++;
      g.margins++;
      for (auto k : pts) {
        g.points++;
        hit_before += a.predictions[k] == observed;
        hit_after += a.predictions[k] == revised;
      }
    }
    if (g.points > 0) {
      g.accuracy_before = static_cast<double>(hit_before) / g.points;
      g.accuracy_after = static_cast<double>(hit_after) / g.points;
    } else {
      out.warnings.push_back("no margins with status '" + g.group + "'");
    }
    out.groups.push_back(g);
  }
  return out;
}

/// How well margin statuses line up with the corruption log. A margin counts
/// as corrupted only if its true and corrupted labels differ in the analysis
/// scheme; flips inside a merged class are invisible there.
struct FlagAudit {
  int margins = 0;
  int corrupted = 0;
  int issue = 0;
  int issue_corrupted = 0;
  int indeterminate = 0;
  int indeterminate_corrupted = 0;
  int control = 0;
  int control_corrupted = 0;

  double base_rate() const { return margins ? static_cast<double>(corrupted) / margins : 0.0; }
  double issue_rate() const { return issue ? static_cast<double>(issue_corrupted) / issue : std::nan(""); }
  /// P(corrupted | issue) over the base rate; NaN when either is undefined.
  double enrichment() const {
    return corrupted && issue ? issue_rate() / base_rate() : std::nan("");
  }
  /// Share of corrupted margins that are not classed as control.
  double recall() const {
    return corrupted ? static_cast<double>(issue_corrupted + indeterminate_corrupted) / corrupted : std::nan("");
  }
};

inline FlagAudit flag_audit(const curation::SchemeAnalysis& a, const CorruptionLog& log) {
  std::map<int, bool> visible;
  for (const auto& e : log.entries)
    visible[e.margin_id] = visible[e.margin_id] || a.scheme.apply(e.true_label) != a.scheme.apply(e.corrupted_label);
  FlagAudit f;
  for (std::size_t m = 0; m < a.margins.ids.size(); ++m) {
    const auto it = visible.find(a.margins.ids[m]);
    const bool bad = it != visible.end() && it->second;
    f.margins++;
    f.corrupted += bad;
    switch (a.margin_flags.status[m]) {
      case curation::MarginStatus::Issue:
        f.issue++;
        f.issue_corrupted += bad;
        break;
      case curation::MarginStatus::Indeterminate:
        f.indeterminate++;
        f.indeterminate_corrupted += bad;
        break;
      case curation::MarginStatus::Control:
        f.control++;
        f.control_corrupted += bad;
        break;
    }
  }
  return f;
}

}  // namespace flimcl::eval
