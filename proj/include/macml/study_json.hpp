#pragma once

// JSON form of StudyConfig and the run manifest written next to study tables.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "macml/experiments.hpp"

namespace macml {

inline constexpr const char* kVersion = "0.1.0";

// Starts from default_config(kind, scale) and applies the given keys. Unknown
// keys and every invalid value are reported together in one InvalidArgument.
StudyConfig parse_study_config(const std::string& json_text);

// Every field, so that parsing the output reproduces the config.
std::string study_config_json(const StudyConfig& cfg, int indent = 2);

std::uint64_t fnv1a64(std::string_view bytes);

// FNV-1a of the compact config JSON without the thread count (which does not
// affect results), as 16 hex digits.
std::string config_hash(const StudyConfig& cfg);

// Manifest: version, seed, hash, resolved config, and the given numbers
// (timings, counts) and strings (output paths).
std::string manifest_json(const StudyConfig& cfg, const std::map<std::string, double>& numbers,
                          const std::map<std::string, std::string>& strings);

}  // namespace macml
