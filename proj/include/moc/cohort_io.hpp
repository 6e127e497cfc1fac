#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/survival.hpp"
#include "moc/synth.hpp"

namespace moc {

namespace io_detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_raw(std::istream& is, T* v) {
  is.read(reinterpret_cast<char*>(v), sizeof(T));
  return static_cast<bool>(is);
}

}  // namespace io_detail

inline constexpr std::uint32_t kBagVersion = 1;

// Patch-bag container: magic "MOCB", u32 version, u32 n_i, u32 d_p, then
// n_i * d_p little-endian 32-bit floats in row-major order.
inline void write_bag(const std::filesystem::path& path, const NumArray& bag) {
  require(bag.rank() == 2, ErrorCategory::argument, "bag must be rank 2");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCategory::io, "cannot write bag file " + path.string());
  os.write("MOCB", 4);
  io_detail::write_raw(os, kBagVersion);
  io_detail::write_raw(os, static_cast<std::uint32_t>(bag.rows()));
  io_detail::write_raw(os, static_cast<std::uint32_t>(bag.cols()));
  for (std::size_t i = 0; i < bag.size(); ++i) {
    io_detail::write_raw(os, static_cast<float>(bag[i]));
  }
  require(os.good(), ErrorCategory::io, "write failed for bag file " + path.string());
}

inline NumArray read_bag(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCategory::io, "cannot open bag file " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "MOCB", 4) == 0, ErrorCategory::format,
          "bad magic in bag file " + path.string());
  std::uint32_t version = 0, rows = 0, cols = 0;
  require(io_detail::read_raw(is, &version) && version == kBagVersion, ErrorCategory::format,
          "unsupported bag version in " + path.string());
  require(io_detail::read_raw(is, &rows) && io_detail::read_raw(is, &cols) && rows > 0 && cols > 0,
          ErrorCategory::format, "bad dimensions in bag file " + path.string());
  NumArray bag({rows, cols});
  for (std::size_t i = 0; i < bag.size(); ++i) {
    float v = 0.0f;
    require(io_detail::read_raw(is, &v), ErrorCategory::format,
            "truncated bag file " + path.string());
    bag[i] = static_cast<double>(v);
  }
  return bag;
}

// Gene vector: one float per line.
inline void write_gene(const std::filesystem::path& path, const NumArray& gene) {
  std::ofstream os(path);
  require(os.good(), ErrorCategory::io, "cannot write gene file " + path.string());
  for (std::size_t i = 0; i < gene.size(); ++i) {
    os << io_detail::format_double(gene[i]) << '\n';
  }
  require(os.good(), ErrorCategory::io, "write failed for gene file " + path.string());
}

inline NumArray read_gene(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCategory::io, "cannot open gene file " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v = 0.0;
    require(io_detail::parse_double(line, &v), ErrorCategory::format,
            "gene file " + path.string() + " line " + std::to_string(lineno) +
                ": not a number: '" + line + "'");
    values.push_back(v);
  }
  require(!values.empty(), ErrorCategory::format, "gene file " + path.string() + " is empty");
  const std::size_t n = values.size();
  return NumArray::from({n}, std::move(values));
}

// Manifest: header `id,time,event,gene_path,bag_path`; event is 0/1 with
// 1 meaning the death was observed. Paths are resolved relative to the
// manifest's directory.
inline Cohort load_cohort(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  require(is.good(), ErrorCategory::io, "cannot open manifest " + manifest_path.string());
  const std::filesystem::path base = manifest_path.parent_path();

  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCategory::format,
          "manifest " + manifest_path.string() + " is empty");
  {
    auto header = io_detail::split_csv_line(line);
    require(header == std::vector<std::string>{"id", "time", "event", "gene_path", "bag_path"},
            ErrorCategory::format,
            "manifest " + manifest_path.string() +
                ": expected header 'id,time,event,gene_path,bag_path'");
  }

  Cohort cohort;
  std::vector<std::string> problems;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = io_detail::split_csv_line(line);
    const std::string where = "row " + std::to_string(row);
    if (fields.size() != 5) {
      problems.push_back(where + ": expected 5 fields, got " + std::to_string(fields.size()));
      continue;
    }
    const std::string& id = fields[0];
    double time = 0.0;
    if (id.empty()) {
      problems.push_back(where + ": empty id");
      continue;
    }
    if (!io_detail::parse_double(fields[1], &time)) {
      problems.push_back(where + " (id=" + id + "): bad time '" + fields[1] + "'");
      continue;
    }
    if (!(time > 0.0)) {
      problems.push_back(where + " (id=" + id + "): time must be > 0");
      continue;
    }
    if (fields[2] != "0" && fields[2] != "1") {
      problems.push_back(where + " (id=" + id + "): event must be 0 or 1, got '" + fields[2] + "'");
      continue;
    }
    if (cohort.features.count(id)) {
      problems.push_back(where + " (id=" + id + "): duplicate id");
      continue;
    }
    FeatureSet fs;
    try {
      fs.gene = read_gene(base / fields[3]);
      fs.bag = read_bag(base / fields[4]);
    } catch (const Error& e) {
      problems.push_back(where + " (id=" + id + "): " + e.what());
      continue;
    }
    cohort.records.push_back({id, time, fields[2] == "1"});
    cohort.features.emplace(id, std::move(fs));
  }
  if (!problems.empty()) {
    std::string msg = "manifest " + manifest_path.string() + " failed to load:";
    for (const std::string& p : problems) msg += "\n  " + p;
    fail(ErrorCategory::data, msg);
  }
  require(!cohort.records.empty(), ErrorCategory::data,
          "manifest " + manifest_path.string() + " has no rows");
  cohort.validate();
  return cohort;
}

// Writes manifest + per-subject feature files (and the latent sidecar when
// present) under `dir`; returns the manifest path.
inline std::filesystem::path write_cohort(const std::filesystem::path& dir,
                                          const SynthCohort& synth) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "genes", ec);
  fs::create_directories(dir / "bags", ec);
  require(!ec, ErrorCategory::io, "cannot create output directory " + dir.string());

  const fs::path manifest_path = dir / "manifest.csv";
  std::ofstream manifest(manifest_path);
  require(manifest.good(), ErrorCategory::io, "cannot write " + manifest_path.string());
  manifest << "id,time,event,gene_path,bag_path\n";
  for (const SurvivalRecord& r : synth.cohort.records) {
    const std::string gene_rel = "genes/" + r.id + ".txt";
    const std::string bag_rel = "bags/" + r.id + ".bin";
    const FeatureSet& fsr = synth.cohort.feature(r.id);
    write_gene(dir / gene_rel, fsr.gene);
    write_bag(dir / bag_rel, fsr.bag);
    manifest << r.id << ',' << io_detail::format_double(r.time) << ',' << (r.event ? 1 : 0) << ','
             << gene_rel << ',' << bag_rel << '\n';
  }
  require(manifest.good(), ErrorCategory::io, "write failed for " + manifest_path.string());

  if (!synth.latent.empty()) {
    std::ofstream sidecar(dir / "latent.csv");
    require(sidecar.good(), ErrorCategory::io, "cannot write latent sidecar");
    sidecar << "id,latent_u\n";
    for (std::size_t i = 0; i < synth.cohort.records.size(); ++i) {
      sidecar << synth.cohort.records[i].id << ','
              << io_detail::format_double(synth.latent[i]) << '\n';
    }
  }
  return manifest_path;
}

inline std::map<std::string, double> load_latent(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCategory::io, "cannot open latent sidecar " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCategory::format,
          "latent sidecar is empty");
  std::map<std::string, double> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = io_detail::split_csv_line(line);
    double u = 0.0;
    require(fields.size() == 2 && io_detail::parse_double(fields[1], &u), ErrorCategory::format,
            "latent sidecar row " + std::to_string(row) + " malformed");
    out[fields[0]] = u;
  }
  return out;
}

}  // namespace moc
