#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "msgp/covariance.hpp"
#include "msgp/fields.hpp"
#include "msgp/fit.hpp"

namespace msgp::io {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "msgp 1.0.0";

/// 17-significant-digit float formatting (round-trip safe) for CSV output.
std::string fmt17(double v);

/// ISO-8601 UTC timestamp; honors SOURCE_DATE_EPOCH for reproducible runs.
std::string timestamp();

/// FNV-1a 64-bit hash of the canonical (sorted-key) JSON dump, as hex.
std::string config_hash(const json& config);

// ---- generic files ----------------------------------------------------------

/// Writes via a temporary file and rename, so partial outputs never survive.
void write_text(const std::string& path, const std::string& content);
json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

// ---- field files ------------------------------------------------------------

/// Compact binary grid: magic "MSGRD001", origin/extent doubles, shape,
/// scale tag, seed, then values in x-fastest order (little-endian doubles).
void write_grid_binary(const std::string& path, const FieldRealization& f);
FieldRealization read_grid_binary(const std::string& path);

/// Plot-ready CSV: x,y,value.
void write_grid_csv(const std::string& path, const FieldRealization& f);

// ---- datasets ---------------------------------------------------------------

json dataset_to_json(const MultiscaleDataset& d, const json& meta = json::object());
MultiscaleDataset dataset_from_json(const json& j);

// ---- parameters & fit reports -------------------------------------------------

json params_to_json(const BivariateMaternParams& p);
BivariateMaternParams params_from_json(const json& j);

/// Accepts either a bare parameter object or a fit report with a "params" key.
BivariateMaternParams params_from_file(const std::string& path);

json fit_report_to_json(const FitResult& r, const json& options_echo);

// ---- variograms ---------------------------------------------------------------

struct VariogramCurve {
  std::string kind;    // fine | coarse | cross | crosspseudo
  std::string source;  // empirical | model
  VariogramBins bins;
};

/// CSV with columns kind,source,lag,value,count (value empty when count==0
/// for empirical bins).
void write_variogram_csv(const std::string& path, const std::vector<VariogramCurve>& curves);

// ---- run manifests -------------------------------------------------------------

struct Manifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  json stages = json::object();
};

void write_manifest(const std::string& path, const Manifest& m);

} // namespace msgp::io
