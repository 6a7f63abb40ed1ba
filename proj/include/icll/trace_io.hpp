#pragma once

#include <filesystem>
#include <vector>

#include "icll/metrics.hpp"

namespace icll {

/// JSONL, one {"id": int, "probs": [[19 floats], ...]} object per line.
void write_traces(const std::vector<PredictionTrace>& traces, const std::filesystem::path& path);
std::vector<PredictionTrace> read_traces(const std::filesystem::path& path);

nlohmann::json trace_to_json(const PredictionTrace& trace);
PredictionTrace trace_from_json(const nlohmann::json& j);

}  // namespace icll
