#pragma once

// JSON (de)serialization of parameter blocks, hashing and CSV helpers.

#include "sdo/pwr_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sdo {

inline constexpr const char* kVersion = "0.1.0";

nlohmann::json to_json(const ModelParams& p);
/// Reads the keys present in `j` over the defaults; unknown keys are errors.
ModelParams model_params_from_json(const nlohmann::json& j, const ModelParams& base = {});

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string params_hash(const ModelParams& p);

/// "%.17g": enough digits to round-trip a double.
std::string fmt_double(double v);

/// Writes one comment line "# key=value ..." used as a provenance header.
void write_provenance(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& fields);

/// Splits a CSV line on commas (no quoting is used by this project's files).
std::vector<std::string> split_csv(const std::string& line);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace sdo
