#pragma once

#include <json.hpp>
#include <span>
#include <string>

#include "weedid/evalkit/metrics.hpp"

namespace weedid::trust {

/// SHA-256 of the canonical (sorted-key) JSON dump.
std::string fingerprint(const nlohmann::json& artifact);

/// SHA-256 over the raw little-endian bytes of the rows and labels.
std::string data_fingerprint(const eval::ProbRows& rows, std::span<const int> labels = {});

/// Reads a calibration artifact file and checks its "kind" field.
nlohmann::json load_artifact(const std::string& path, const std::string& expected_kind);
void save_artifact(const std::string& path, const nlohmann::json& artifact);

}  // namespace weedid::trust
