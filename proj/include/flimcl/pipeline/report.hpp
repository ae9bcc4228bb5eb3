#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "flimcl/pipeline/stages.hpp"

namespace flimcl::pipeline {

namespace detail {

inline std::string pct(const json& v) {
  if (!v.is_number()) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v.get<double>());
  return buf;
}

inline std::string num(const json& v, int digits = 3) {
  if (!v.is_number()) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

}  // namespace detail

/// Human-readable summary plus a CSV bundle built from whatever artifacts
/// exist in the output directory.
inline void stage_report(const Context& ctx) {
  using detail::num;
  using detail::pad;
  using detail::pct;
  auto present = [&](const char* name) { return io::fs::exists(ctx.path(name)); };
  const bool has_baseline = present(files::kBaseline);
  const bool has_metrics = present(files::kMetrics);
  const bool has_curation = present(files::kCuration);
  const bool has_refinement = present(files::kRefinement);
  const bool has_attribution = present(files::kAttribution);
  if (!has_baseline && !has_metrics && !has_curation && !has_refinement && !has_attribution)
    throw UsageError("report: no artifacts in " + ctx.out.string() + "; run earlier stages first");

  const auto prov = ctx.provenance("report");
  std::ostringstream s;
  s << "flimcl report\n" << prov.csv_line().substr(2) << "\n";

  if (has_baseline) {
    ctx.require(files::kBaseline, "train", "report");
    const auto b = io::read_json(ctx.path(files::kBaseline));
    s << "\n== Baseline selection (leave-one-patient-out)\n";
    s << pad("model", 10) << pad("accuracy", 10) << pad("mean AUC", 10) << "score\n";
    for (const auto& c : b.at("candidates"))
      s << pad(c.at("kind").get<std::string>(), 10) << pad(pct(c.at("accuracy")), 10)
        << pad(num(c.at("mean_auc")), 10) << num(c.at("selection_score")) << "\n";
    s << "selected: " << b.at("selected").get<std::string>() << "\n";
  }

  if (has_metrics) {
    ctx.require(files::kMetrics, "train", "report");
    const auto m = io::read_json(ctx.path(files::kMetrics));
    s << "\n== Baseline metrics (" << m.at("model").get<std::string>() << ")\n";
    s << "pooled accuracy " << pct(m.at("pooled_accuracy")) << ", mean AUC " << num(m.at("mean_auc")) << "\n";
    const auto names = m.at("class_names").get<std::vector<std::string>>();
    for (std::size_t c = 0; c < names.size(); ++c)
      s << "  " << pad(names[c], 16) << "recall " << pad(pct(m.at("recall")[c]), 8) << "AUC "
        << num(m.at("auc")[c]) << "\n";
  }

  if (has_curation) {
    ctx.require(files::kCuration, "curate", "report");
    const auto c = io::read_json(ctx.path(files::kCuration));
    const auto& sc = c.at("scheme");
    s << "\n== Confident learning on the starting scheme\n";
    s << "low-confidence points " << pct(sc.at("lc_fraction")) << "; margins: issue "
      << sc.at("margin_status").at("issue").get<int>() << ", indeterminate "
      << sc.at("margin_status").at("indeterminate").get<int>() << ", control "
      << sc.at("margin_status").at("control").get<int>() << " (issue > " << num(c.at("issue_threshold"), 2)
      << ", control < " << num(c.at("control_threshold"), 2) << " LC fraction)\n";
    const auto names = sc.at("class_names").get<std::vector<std::string>>();
    for (std::size_t k = 0; k < names.size(); ++k)
      s << "  " << pad(names[k], 16) << "tau " << pad(num(sc.at("thresholds")[k]), 8) << "mean CS "
        << num(sc.at("mean_cs")[k]) << "\n";
  }

  if (has_refinement) {
    ctx.require(files::kRefinement, "refine", "report");
    const auto r = io::read_json(ctx.path(files::kRefinement));
    std::vector<std::string> hist;
    for (const auto& h : r.at("scheme_history")) hist.push_back(std::to_string(h.get<int>()));
    s << "\n== Class refinement (" << r.at("mode").get<std::string>() << ")\n";
    s << "scheme history: " << detail::join(hist, " -> ") << "\n";
    s << pad("classes", 9) << pad("accuracy", 10) << pad("LC points", 11) << pad("mean AUC", 10)
      << pad("issue/indet/control", 21) << "status\n";
    io::CsvWriter hcsv({"step", "classes", "accuracy", "lc_fraction", "mean_auc", "issue", "indeterminate",
                        "control", "accepted"});
    std::size_t i = 0;
    for (const auto& st : r.at("steps")) {
      const auto& ms = st.at("margin_status");
      const std::string counts = std::to_string(ms.at("issue").get<int>()) + "/" +
                                 std::to_string(ms.at("indeterminate").get<int>()) + "/" +
                                 std::to_string(ms.at("control").get<int>());
      s << pad(std::to_string(st.at("classes").get<int>()), 9) << pad(pct(st.at("accuracy")), 10)
        << pad(pct(st.at("lc_fraction")), 11) << pad(num(st.at("mean_auc")), 10) << pad(counts, 21)
        << (st.at("accepted").get<bool>() ? "accepted" : "rejected") << "\n";
      hcsv.add_row({std::to_string(i++), std::to_string(st.at("classes").get<int>()),
                    io::fmt(st.at("accuracy").get<double>()), io::fmt(st.at("lc_fraction").get<double>()),
                    st.at("mean_auc").is_number() ? io::fmt(st.at("mean_auc").get<double>()) : "nan",
                    std::to_string(ms.at("issue").get<int>()), std::to_string(ms.at("indeterminate").get<int>()),
                    std::to_string(ms.at("control").get<int>()), st.at("accepted").get<bool>() ? "1" : "0"});
    }
    hcsv.write(ctx.path(files::kHistory), prov);

    const auto& fin = r.at("steps").at(r.at("final_step").get<std::size_t>());
    const auto names = fin.at("class_names").get<std::vector<std::string>>();
    s << "final classes: " << detail::join(names, ", ") << "\n";
    for (std::size_t k = 0; k < names.size(); ++k)
      s << "  " << pad(names[k], 16) << "recall " << pad(pct(fin.at("recall")[k]), 8) << "mean CS "
        << num(fin.at("mean_cs")[k]) << "\n";

    if (r.contains("pruning")) {
      const auto& p = r.at("pruning");
      s << "\n== Pruning low-confidence training points (" << p.at("flag_source").get<std::string>()
        << " flags; test data never filtered)\n";
      s << "removed " << pct(p.at("removed_fraction")) << " of training rows; accuracy "
        << pct(p.at("accuracy_before")) << " -> " << pct(p.at("accuracy_after")) << " ("
        << num(json(100.0 * p.at("gain").get<double>()), 2) << " pp)\n";
      s << "reference only: accuracy on test points not flagged LC "
        << pct(p.at("accuracy_excluding_lc_test_points")) << "\n";
    }

    const auto& audit = fin.at("flag_audit");
    s << "\n== Label-issue audit against the corruption log (final scheme)\n";
    s << "corrupted margins " << audit.at("corrupted").get<int>() << "/" << audit.at("margins").get<int>()
      << "; issue " << audit.at("issue_corrupted").get<int>() << "/" << audit.at("issue").get<int>()
      << " corrupted; enrichment " << num(audit.at("enrichment"), 2) << "x; recall (issue + indeterminate) "
      << num(audit.at("recall"), 2) << "\n";

    const auto& rs = r.at("rescoring");
    s << "\n== Simulated re-scoring (" << rs.at("policy").get<std::string>() << ")\n";
    for (const auto& g : rs.at("groups"))
      s << "  " << pad(g.at("group").get<std::string>(), 15) << pad(std::to_string(g.at("margins").get<int>()) +
                                                                          " margins",
                                                                      13)
        << pad(std::to_string(g.at("relabeled_margins").get<int>()) + " relabeled", 14) << "accuracy "
        << pct(g.at("accuracy_before")) << " -> " << pct(g.at("accuracy_after")) << "\n";
    for (const auto& w : rs.at("warnings")) s << "  warning: " << w.get<std::string>() << "\n";

    io::CsvWriter mcsv({"margin_id", "patient_id", "label", "points", "lc_fraction", "mcs", "status"});
    for (const auto& m : r.at("final_margins"))
      mcsv.add_row({std::to_string(m.at("margin_id").get<int>()), std::to_string(m.at("patient_id").get<int>()),
                    names.at(m.at("label").get<std::size_t>()), std::to_string(m.at("points").get<int>()),
                    io::fmt(m.at("lc_fraction").get<double>()), io::fmt(m.at("mcs").get<double>()),
                    m.at("status").get<std::string>()});
    mcsv.write(ctx.path(files::kMarginStatus), prov);
  }

  s << "\n== Feature attribution\n";
  if (has_attribution) {
    ctx.require(files::kAttribution, "attrib", "report");
    const auto csv = io::read_csv(ctx.path(files::kAttribution));
    const auto cc = csv.column("class"), fc = csv.column("feature"), rc = csv.column("rank");
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> top;
    for (const auto& row : csv.rows) {
      if (!top.count(row[cc])) order.push_back(row[cc]);
      if (std::stoi(row[rc]) <= 5) top[row[cc]].push_back(row[fc]);
    }
    for (const auto& c : order) s << "  " << pad(c, 16) << detail::join(top[c], ", ") << "\n";
  } else {
    s << "  not available: stage 'attrib' has not produced " << files::kAttribution << "\n";
  }
  io::write_text(ctx.path(files::kSummary), s.str());
  *ctx.log << s.str();
}

inline void run_stage(const std::string& stage, const Context& ctx) {
  if (stage == "synth")
    stage_synth(ctx);
  else if (stage == "features")
    stage_features(ctx);
  else if (stage == "train")
    stage_train(ctx);
  else if (stage == "curate")
    stage_curate(ctx);
  else if (stage == "refine")
    stage_refine(ctx);
  else if (stage == "attrib")
    stage_attrib(ctx);
  else if (stage == "report")
    stage_report(ctx);
  else
    throw UsageError("unknown stage '" + stage + "'");
}

/// Runs the given stages in order.
inline void run_pipeline(const Context& ctx, const std::vector<std::string>& stages) {
  io::fs::create_directories(ctx.out);
  for (const auto& s : stages) run_stage(s, ctx);
}

}  // namespace flimcl::pipeline
