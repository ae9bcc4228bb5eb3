#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flimcl/common.hpp"

namespace flimcl::io {

using nlohmann::json;
namespace fs = std::filesystem;

/// Stamped into every artifact so outputs trace back to (config, seed).
struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string stage;

  std::string csv_line() const {
    return "# flimcl config=" + config_hash + " seed=" + std::to_string(seed) + " stage=" + stage;
  }
  json to_json() const { return {{"config", config_hash}, {"seed", seed}, {"stage", stage}}; }
};

/// Round-trip-safe text for a double (17 significant digits); a fixed
/// format keeps reruns byte-identical.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InputError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw InputError("not a number: '" + s + "'");
  return v;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// JSON artifacts carry a top-level "provenance" object.
inline void write_json(const fs::path& path, json doc, const Provenance& prov) {
  doc["provenance"] = prov.to_json();
  write_text(path, doc.dump(2) + "\n");
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Comma-separated table with a provenance comment as the first line.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { add_row(header); }

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw InputError("CSV row width differs from the header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n\"") != std::string::npos)
        throw InputError("CSV cell contains a separator: '" + cells[i] + "'");
      body_ << (i ? "," : "") << cells[i];
    }
    body_ << "\n";
  }

  void write(const fs::path& path, const Provenance& prov) const {
    write_text(path, prov.csv_line() + "\n" + body_.str());
  }

 private:
  std::size_t columns_;
  std::ostringstream body_;
};

struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw InputError("CSV has no column '" + name + "'");
  }
};

inline CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line);
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size())
        throw InputError(path.string() + ": row width differs from the header");
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw InputError(path.string() + ": CSV has no header");
  return t;
}

}  // namespace flimcl::io
