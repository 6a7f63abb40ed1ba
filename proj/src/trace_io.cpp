#include "icll/trace_io.hpp"

#include <cmath>
#include <fstream>

#include "icll/dataset.hpp"

namespace icll {

nlohmann::json trace_to_json(const PredictionTrace& trace) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : trace.probs) rows.push_back(row);
  return {{"id", trace.instance_id}, {"probs", std::move(rows)}};
}

PredictionTrace trace_from_json(const nlohmann::json& j) {
  PredictionTrace t;
  t.instance_id = j.at("id").get<std::int64_t>();
  for (const auto& row : j.at("probs")) {
    if (!row.is_array() || row.size() != kVocabSize)
      throw std::invalid_argument("trace row must hold " + std::to_string(kVocabSize) + " probabilities");
    Distribution d{};
    double total = 0.0;
    for (std::size_t x = 0; x < kVocabSize; ++x) {
      d[x] = row[x].get<double>();
      if (!(d[x] >= 0.0)) throw std::invalid_argument("trace row has a negative or non-numeric entry");
      total += d[x];
    }
    if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("trace row does not sum to 1");
    t.probs.push_back(d);
  }
  return t;
}

void write_traces(const std::vector<PredictionTrace>& traces, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<PredictionTrace> read_traces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open trace file " + path.string());
  std::vector<PredictionTrace> out;
  std::string line;
  std::size_t offset = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      out.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ": malformed JSON at byte offset " +
                        std::to_string(start + (e.byte > 0 ? e.byte - 1 : 0)) + " (line " + std::to_string(line_no) + ")");
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ": invalid trace on line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace icll
