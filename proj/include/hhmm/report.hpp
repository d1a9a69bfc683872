#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hhmm/baselines.hpp"

namespace hhmm {

struct SequenceMetrics {
    std::string sequence;
    Evaluation evaluation;
};

// JSON summary written by every CLI run. Everything except "timing" (wall
// clock and worker count) is a deterministic function of the inputs, config
// and seed.
struct RunReport {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<SequenceMetrics> per_sequence;
    std::string model_file;
    nlohmann::json details = nlohmann::json::object();
    std::optional<nlohmann::json> error;
    double elapsed_seconds = 0.0;
    int num_threads = 1;
};

nlohmann::json evaluation_to_json(const Evaluation& e);
nlohmann::json report_to_json(const RunReport& report);
void write_report(const std::filesystem::path& path, const RunReport& report);

}  // namespace hhmm
