#pragma once

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "flimcl/dataset.hpp"
#include "flimcl/io/files.hpp"
#include "flimcl/waveform.hpp"

namespace flimcl::io {

// ---------------------------------------------------------------------------
// Manifest

inline json manifest_to_json(const DatasetManifest& m) {
  json patients = json::array();
  for (const auto& p : m.patients) {
    json margins = json::array();
    for (auto mi : p.margins) {
      const auto& mg = m.margins[mi];
      json points = json::array();
      for (auto pi : mg.points) {
        const auto& pt = m.points[pi];
        points.push_back({{"point_id", pt.point_id},
                          {"label", pt.label},
                          {"true_label", pt.true_label},
                          {"confounders", pt.confounders}});
      }
      margins.push_back({{"margin_id", mg.margin_id},
                         {"label", mg.label},
                         {"true_label", mg.true_label},
                         {"points", points}});
    }
    patients.push_back({{"patient_id", p.patient_id}, {"margins", margins}});
  }
  json corruption = json::array();
  for (const auto& e : m.corruption.entries)
    corruption.push_back({{"margin_id", e.margin_id},
                          {"true_label", e.true_label},
                          {"corrupted_label", e.corrupted_label}});
  return {{"format", "flimcl-manifest"},
          {"version", 1},
          {"class_names", m.class_names},
          {"patients", patients},
          {"corruption", corruption}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  if (j.value("format", "") != "flimcl-manifest") throw InputError("not a flimcl manifest");
  DatasetManifest m;
  try {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& jp : j.at("patients")) {
      PatientRecord p{jp.at("patient_id").get<int>(), {}};
      for (const auto& jm : jp.at("margins")) {
        MarginRecord mg{jm.at("margin_id").get<int>(), p.patient_id, jm.at("label").get<Label>(),
                        jm.at("true_label").get<Label>(), {}};
        for (const auto& jt : jm.at("points")) {
          PointRecord pt{jt.at("point_id").get<int>(), p.patient_id, mg.margin_id, jt.at("label").get<Label>(),
                         jt.at("true_label").get<Label>(),
                         jt.value("confounders", std::vector<std::string>{})};
          mg.points.push_back(m.points.size());
          m.points.push_back(std::move(pt));
        }
        p.margins.push_back(m.margins.size());
        m.margins.push_back(std::move(mg));
      }
      m.patients.push_back(std::move(p));
    }
    for (const auto& e : j.at("corruption"))
      m.corruption.entries.push_back(
          {e.at("margin_id").get<int>(), e.at("true_label").get<Label>(), e.at("corrupted_label").get<Label>()});
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Waveforms: magic line, JSON header line, then little-endian doubles laid
// out point-major, band-minor, sample-contiguous.

inline constexpr const char* kWaveformMagic = "FLIMCL-WAVEFORMS 1";

using PointWaveforms = std::array<Waveform, kBandCount>;

inline void write_waveforms(const fs::path& path, const std::vector<int>& point_ids,
                            const std::vector<PointWaveforms>& waveforms, const Provenance& prov) {
  if (point_ids.size() != waveforms.size()) throw InputError("waveform/point id count mismatch");
  const std::size_t n = waveforms.empty() ? 0 : waveforms.front()[0].size();
  const double dt = waveforms.empty() ? 0.4 : waveforms.front()[0].dt;
  json bands = json::array();
  for (int b = 0; b < kBandCount; ++b) bands.push_back(band_name(static_cast<Band>(b)));
  json header = {{"dt", dt}, {"samples", n}, {"bands", bands}, {"point_ids", point_ids},
                 {"provenance", prov.to_json()}};
  std::string out = std::string(kWaveformMagic) + "\n" + header.dump() + "\n";
  const std::size_t body = waveforms.size() * kBandCount * n * sizeof(double);
  const std::size_t offset = out.size();
  out.resize(offset + body);
  char* dst = out.data() + offset;
  for (const auto& pw : waveforms)
    for (const auto& w : pw) {
      if (w.size() != n || w.dt != dt) throw InputError("waveforms differ in length or sample period");
      std::memcpy(dst, w.samples.data(), n * sizeof(double));
      dst += n * sizeof(double);
    }
  write_text(path, out);
}

struct WaveformFile {
  std::vector<int> point_ids;
  std::vector<PointWaveforms> waveforms;
  json header;
};

inline WaveformFile read_waveforms(const fs::path& path) {
  const std::string raw = read_text(path);
  const auto first = raw.find('\n');
  if (first == std::string::npos || raw.compare(0, first, kWaveformMagic) != 0)
    throw InputError(path.string() + ": not a flimcl waveform file");
  const auto second = raw.find('\n', first + 1);
  if (second == std::string::npos) throw InputError(path.string() + ": truncated header");
  WaveformFile f;
  f.header = json::parse(raw.substr(first + 1, second - first - 1));
  f.point_ids = f.header.at("point_ids").get<std::vector<int>>();
  const auto n = f.header.at("samples").get<std::size_t>();
  const double dt = f.header.at("dt").get<double>();
  const std::size_t body = f.point_ids.size() * kBandCount * n * sizeof(double);
  if (raw.size() - second - 1 != body) throw InputError(path.string() + ": payload size mismatch");
  const char* src = raw.data() + second + 1;
  f.waveforms.resize(f.point_ids.size());
  for (auto& pw : f.waveforms)
    for (int b = 0; b < kBandCount; ++b) {
      auto& w = pw[static_cast<std::size_t>(b)];
      w.band = static_cast<Band>(b);
      w.dt = dt;
      w.samples.resize(n);
      std::memcpy(w.samples.data(), src, n * sizeof(double));
      src += n * sizeof(double);
    }
  return f;
}

// ---------------------------------------------------------------------------
// Feature table: identity columns then one column per feature.

inline void write_features(const fs::path& path, const PointTable& t, const std::vector<std::string>& names,
                           const Provenance& prov) {
  if (static_cast<std::size_t>(t.features.cols()) != names.size()) throw InputError("feature name count mismatch");
  std::vector<std::string> header{"patient_id", "margin_id", "point_id", "label"};
  header.insert(header.end(), names.begin(), names.end());
  CsvWriter csv(header);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::vector<std::string> row{std::to_string(t.patient[i]), std::to_string(t.margin[i]),
                                 std::to_string(t.point_id[i]), std::to_string(t.labels[i])};
    for (Eigen::Index k = 0; k < t.features.cols(); ++k) row.push_back(fmt(t.features(static_cast<Eigen::Index>(i), k)));
    csv.add_row(row);
  }
  csv.write(path, prov);
}

struct FeatureFile {
  PointTable table;
  std::vector<std::string> names;
};

inline FeatureFile read_features(const fs::path& path, int num_classes) {
  const auto csv = read_csv(path);
  const std::vector<std::string> id_cols{"patient_id", "margin_id", "point_id", "label"};
  for (std::size_t i = 0; i < id_cols.size(); ++i)
    if (csv.header.size() <= i || csv.header[i] != id_cols[i])
      throw InputError(path.string() + ": expected identity column '" + id_cols[i] + "'");
  FeatureFile f;
  f.names.assign(csv.header.begin() + 4, csv.header.end());
  auto& t = f.table;
  t.num_classes = num_classes;
  t.features.resize(static_cast<Eigen::Index>(csv.rows.size()), static_cast<Eigen::Index>(f.names.size()));
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& r = csv.rows[i];
    t.patient.push_back(std::stoi(r[0]));
    t.margin.push_back(std::stoi(r[1]));
    t.point_id.push_back(std::stoi(r[2]));
    t.labels.push_back(std::stoi(r[3]));
    for (std::size_t k = 0; k < f.names.size(); ++k)
      t.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = parse_double(r[4 + k]);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Posterior matrices keyed by point id.

inline void write_posteriors(const fs::path& path, const std::vector<int>& point_ids, const Matrix& p,
                             const std::vector<std::string>& class_names, const Provenance& prov) {
  std::vector<std::string> header{"point_id"};
  for (const auto& c : class_names) header.push_back("p_" + c);
  CsvWriter csv(header);
  for (std::size_t i = 0; i < point_ids.size(); ++i) {
    std::vector<std::string> row{std::to_string(point_ids[i])};
    for (Eigen::Index c = 0; c < p.cols(); ++c) row.push_back(fmt(p(static_cast<Eigen::Index>(i), c)));
    csv.add_row(row);
  }
  csv.write(path, prov);
}

inline Matrix read_posteriors(const fs::path& path, const std::vector<int>& expected_ids) {
  const auto csv = read_csv(path);
  if (csv.rows.size() != expected_ids.size()) throw InputError(path.string() + ": row count mismatch");
  Matrix p(static_cast<Eigen::Index>(csv.rows.size()), static_cast<Eigen::Index>(csv.header.size() - 1));
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    if (std::stoi(csv.rows[i][0]) != expected_ids[i]) throw InputError(path.string() + ": point order mismatch");
    for (std::size_t c = 1; c < csv.header.size(); ++c)
      p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c - 1)) = parse_double(csv.rows[i][c]);
  }
  return p;
}

/// Integer matrix with labeled rows and columns (confusion, confident joint).
inline void write_count_matrix(const fs::path& path, const Eigen::MatrixXi& m, const std::vector<std::string>& names,
                               const std::string& corner, const Provenance& prov) {
  std::vector<std::string> header{corner};
  header.insert(header.end(), names.begin(), names.end());
  CsvWriter csv(header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row{names[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(std::to_string(m(i, j)));
    csv.add_row(row);
  }
  csv.write(path, prov);
}

}  // namespace flimcl::io
