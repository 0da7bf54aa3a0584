#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drycurve/linalg.hpp"

namespace drycurve {

inline constexpr std::size_t kFeatureCount = 7;

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "drying_time",    "est_filter_temp", "oven_chamber_position", "mean_in_temp",
    "mean_dp",        "cur_temp",        "initial_mass"};

inline constexpr const char* kCsvHeader =
    "experiment_id,drying_time,est_filter_temp,oven_chamber_position,"
    "mean_in_temp,mean_dp,cur_temp,initial_mass,mc";

enum class SampleClass { ICD, ECD };

// Masses from the two-phase gravimetric procedure, in grams.
struct MassRecord {
  double m_initial = 0.0;  // wet mass before DP1
  double m_after = 0.0;    // mass after DP1
  double m_solid = 0.0;    // mass after DP2 (fully dried)
};

// Moisture content before drying, percent of dry solid mass.
inline double compute_mc_initial(const MassRecord& m) {
  if (m.m_solid <= 0.0) throw std::domain_error("compute_mc_initial: m_solid must be positive");
  if (m.m_initial < m.m_solid)
    throw std::domain_error("compute_mc_initial: m_initial below m_solid");
  return (m.m_initial - m.m_solid) / m.m_solid * 100.0;
}

// Moisture content after DP1, percent of dry solid mass.
inline double compute_mc(const MassRecord& m) {
  if (m.m_solid <= 0.0) throw std::domain_error("compute_mc: m_solid must be positive");
  if (m.m_after < m.m_solid) throw std::domain_error("compute_mc: m_after below m_solid");
  return (m.m_after - m.m_solid) / m.m_solid * 100.0;
}

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double drying_time() const { return values[0]; }
  double est_filter_temp() const { return values[1]; }
  double oven_chamber_position() const { return values[2]; }
  double mean_in_temp() const { return values[3]; }
  double mean_dp() const { return values[4]; }
  double cur_temp() const { return values[5]; }
  double initial_mass() const { return values[6]; }
};

struct Sample {
  std::string experiment_id;
  FeatureVector features;
  double mc = 0.0;  // measured moisture content, percent
  SampleClass cls = SampleClass::ECD;
};

struct Dataset {
  std::vector<Sample> samples;
  bool normalized = false;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Parse failure with file position attached; line 1 is the header.
class ParseError : public std::runtime_error {
public:
  ParseError(std::string msg, std::size_t line, std::string column)
      : std::runtime_error("line " + std::to_string(line) + ", column '" + column + "': " + msg),
        line_(line),
        column_(std::move(column)) {}

  std::size_t line() const { return line_; }
  const std::string& column() const { return column_; }

private:
  std::size_t line_;
  std::string column_;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline double parse_cell(std::string_view cell, std::size_t line, const char* column) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, v, std::chars_format::general);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v))
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", line, column);
  return v;
}

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, ptr);
}

}  // namespace detail

// Reads the canonical CSV schema. Sample class is derived from drying_time:
// zero minutes means ICD.
inline Dataset load_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file, header expected: " + source, 1, "");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (!line.empty() && static_cast<unsigned char>(line[0]) == 0xEF && line.size() >= 3)
    line.erase(0, 3);  // UTF-8 BOM

  const auto expected = detail::split_fields(kCsvHeader);
  const auto header = detail::split_fields(line);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size() || header[i] != expected[i]) {
      const std::string got = i < header.size() ? std::string(header[i]) : std::string("<missing>");
      throw ParseError("expected column '" + std::string(expected[i]) + "', found '" + got + "'", 1,
                       std::string(expected[i]));
    }
  }
  if (header.size() != expected.size())
    throw ParseError("unexpected extra column '" + std::string(header[expected.size()]) + "'", 1,
                     std::string(header[expected.size()]));

  Dataset d;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != expected.size())
      throw ParseError("expected " + std::to_string(expected.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno, "");
    Sample s;
    s.experiment_id = std::string(fields[0]);
    for (std::size_t j = 0; j < kFeatureCount; ++j)
      s.features[j] = detail::parse_cell(fields[1 + j], lineno, kFeatureNames[j]);
    s.mc = detail::parse_cell(fields[1 + kFeatureCount], lineno, "mc");
    if (s.features.drying_time() < 0.0)
      throw ParseError("negative drying time", lineno, "drying_time");
    s.cls = s.features.drying_time() == 0.0 ? SampleClass::ICD : SampleClass::ECD;
    d.samples.push_back(std::move(s));
  }
  return d;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return load_csv(in, path);
}

// Shortest round-trip formatting, so save -> load reproduces values bit-exactly.
inline void save_csv(const Dataset& d, std::ostream& out) {
  std::string buf(kCsvHeader);
  buf.push_back('\n');
  for (const auto& s : d.samples) {
    buf += s.experiment_id;
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      buf.push_back(',');
      detail::append_double(buf, s.features[j]);
    }
    buf.push_back(',');
    detail::append_double(buf, s.mc);
    buf.push_back('\n');
  }
  out << buf;
}

inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  save_csv(d, out);
}

// Train-set min/max per feature and for the MC target. Degenerate features
// (max == min) are mapped to 0 on application.
struct NormalizationSpec {
  std::array<double, kFeatureCount> feature_min{};
  std::array<double, kFeatureCount> feature_max{};
  double mc_min = 0.0;
  double mc_max = 0.0;

  bool feature_degenerate(std::size_t j) const { return feature_max[j] == feature_min[j]; }
  bool mc_degenerate() const { return mc_max == mc_min; }

  double normalize_feature(std::size_t j, double x) const {
    if (feature_degenerate(j)) return 0.0;
    return (x - feature_min[j]) / (feature_max[j] - feature_min[j]) * 100.0;
  }
  double denormalize_feature(std::size_t j, double z) const {
    if (feature_degenerate(j)) return feature_min[j];
    return z / 100.0 * (feature_max[j] - feature_min[j]) + feature_min[j];
  }
  double normalize_mc(double x) const {
    if (mc_degenerate()) return 0.0;
    return (x - mc_min) / (mc_max - mc_min) * 100.0;
  }
  double denormalize_mc(double z) const {
    if (mc_degenerate()) return mc_min;
    return z / 100.0 * (mc_max - mc_min) + mc_min;
  }
};

inline NormalizationSpec fit_normalizer(const Dataset& train) {
  if (train.empty()) throw std::invalid_argument("fit_normalizer: empty training set");
  if (train.normalized) throw std::invalid_argument("fit_normalizer: dataset already normalized");
  NormalizationSpec spec;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    spec.feature_min[j] = spec.feature_max[j] = train.samples[0].features[j];
  }
  spec.mc_min = spec.mc_max = train.samples[0].mc;
  for (const auto& s : train.samples) {
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      spec.feature_min[j] = std::min(spec.feature_min[j], s.features[j]);
      spec.feature_max[j] = std::max(spec.feature_max[j], s.features[j]);
    }
    spec.mc_min = std::min(spec.mc_min, s.mc);
    spec.mc_max = std::max(spec.mc_max, s.mc);
  }
  return spec;
}

using WarnFn = std::function<void(const std::string&)>;

inline void default_warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

// Min-max scaling to [0,100] with training-set bounds; values outside the train
// range legitimately land outside [0,100]. Degenerate features map to 0 with a
// warning. The MC target is scaled the same way.
inline Dataset apply_normalizer(const NormalizationSpec& spec, const Dataset& d,
                                const WarnFn& warn = default_warn) {
  if (d.normalized) throw std::invalid_argument("apply_normalizer: dataset already normalized");
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    if (spec.feature_degenerate(j) && warn)
      warn(std::string("constant feature '") + kFeatureNames[j] + "' maps to 0");
  }
  if (spec.mc_degenerate() && warn) warn("constant mc target maps to 0");
  Dataset out;
  out.normalized = true;
  out.samples.reserve(d.size());
  for (const auto& s : d.samples) {
    Sample n = s;
    for (std::size_t j = 0; j < kFeatureCount; ++j)
      n.features[j] = spec.normalize_feature(j, s.features[j]);
    n.mc = spec.normalize_mc(s.mc);
    out.samples.push_back(std::move(n));
  }
  return out;
}

// Partition into (ICD, ECD) preserving sample order within each part.
inline std::pair<Dataset, Dataset> split_icd_ecd(const Dataset& d) {
  Dataset icd, ecd;
  icd.normalized = ecd.normalized = d.normalized;
  for (const auto& s : d.samples) {
    (s.cls == SampleClass::ICD ? icd : ecd).samples.push_back(s);
  }
  return {std::move(icd), std::move(ecd)};
}

inline Matrix feature_matrix(const Dataset& d) {
  Matrix x(d.size(), kFeatureCount);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < kFeatureCount; ++j) x(i, j) = d.samples[i].features[j];
  return x;
}

inline std::vector<double> targets(const Dataset& d) {
  std::vector<double> y(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) y[i] = d.samples[i].mc;
  return y;
}

}  // namespace drycurve
