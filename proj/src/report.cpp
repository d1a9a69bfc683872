#include "hhmm/report.hpp"

#include <cmath>
#include <fstream>

namespace hhmm {

using nlohmann::json;

namespace {

json ratio(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

json summary_json(const MetricSummary& s) {
    return {{"mean", ratio(s.mean)}, {"std", ratio(s.std)}, {"count", s.count}};
}

}  // namespace

json evaluation_to_json(const Evaluation& e) {
    return {{"tp", e.counts.tp},
            {"fp", e.counts.fp},
            {"tn", e.counts.tn},
            {"fn", e.counts.fn},
            {"accuracy", e.accuracy},
            {"specificity", ratio(e.specificity)},
            {"sensitivity", ratio(e.sensitivity)},
            {"specificity_defined", e.specificity_defined},
            {"sensitivity_defined", e.sensitivity_defined}};
}

json report_to_json(const RunReport& report) {
    json out;
    out["command"] = report.command;
    out["config"] = report.config;
    out["seed"] = report.seed;
    out["model_file"] = report.model_file;
    json rows = json::array();
    std::vector<Evaluation> evals;
    ConfusionCounts pooled;
    for (const auto& m : report.per_sequence) {
        json row = evaluation_to_json(m.evaluation);
        row["sequence"] = m.sequence;
        rows.push_back(std::move(row));
        evals.push_back(m.evaluation);
        pooled.tp += m.evaluation.counts.tp;
        pooled.fp += m.evaluation.counts.fp;
        pooled.tn += m.evaluation.counts.tn;
        pooled.fn += m.evaluation.counts.fn;
    }
    out["per_sequence"] = std::move(rows);
    if (!evals.empty()) {
        const auto s = summarize(evals);
        out["aggregate"] = {{"accuracy", summary_json(s.accuracy)},
                            {"specificity", summary_json(s.specificity)},
                            {"sensitivity", summary_json(s.sensitivity)},
                            {"pooled", evaluation_to_json(evaluate_counts(pooled))}};
    } else {
        out["aggregate"] = nullptr;
    }
    out["details"] = report.details;
    if (report.error) out["error"] = *report.error;
    out["timing"] = {{"elapsed_seconds", report.elapsed_seconds}, {"threads", report.num_threads}};
    return out;
}

void write_report(const std::filesystem::path& path, const RunReport& report) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << report_to_json(report).dump(2) << '\n';
}

}  // namespace hhmm
