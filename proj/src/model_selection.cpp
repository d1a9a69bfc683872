#include "hhmm/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace hhmm {

int count_parameters(int num_states, int num_continuous, std::span<const int> cardinalities,
                     CovarianceType covariance, std::span<const ClampEntry> clamp) {
    if (num_states < 1) throw std::invalid_argument("count_parameters: num_states must be >= 1");
    const int I = num_states;
    const int G = num_continuous;
    const int cov_params = covariance == CovarianceType::full ? G * (G + 1) / 2 : G;
    int k = (I - 1) + I * (I - 1) + I * (G + cov_params);
    std::map<std::pair<int, int>, int> clamped;
    for (const auto& c : clamp) ++clamped[{c.state, c.feature}];
    for (int i = 0; i < I; ++i) {
        for (std::size_t j = 0; j < cardinalities.size(); ++j) {
            const int free_entries = cardinalities[j] - 1;
            const auto it = clamped.find({i, static_cast<int>(j)});
            const int pinned = it == clamped.end() ? 0 : it->second;
            k += std::max(0, free_entries - pinned);
        }
    }
    return k;
}

double bic(double log_likelihood, int num_parameters, double num_observations) {
    if (!(num_observations >= 1.0)) throw std::invalid_argument("bic: need at least one observation");
    return -2.0 * log_likelihood + num_parameters * std::log(num_observations);
}

double aic(double log_likelihood, int num_parameters) {
    return 2.0 * num_parameters - 2.0 * log_likelihood;
}

Index count_observed_cells(std::span<const ObservationSequence> sequences) {
    Index n = 0;
    for (const auto& seq : sequences) n += seq.continuous_mask.count() + seq.discrete_mask.count();
    return n;
}

SelectionResult sweep_states(std::span<const ObservationSequence> sequences,
                             std::span<const int> state_counts, const Constraints& constraints,
                             const FitConfig& config) {
    if (state_counts.empty()) throw std::invalid_argument("sweep_states: empty state range");
    std::vector<int> counts(state_counts.begin(), state_counts.end());
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    const double n = static_cast<double>(count_observed_cells(sequences));
    const int G = sequences.empty() ? 0 : sequences.front().num_continuous();
    const std::vector<int> cards = sequences.empty() ? std::vector<int>{} : sequences.front().cardinalities;

    SelectionResult out;
    for (int I : counts) {
        Constraints local;
        for (const auto& c : constraints.fixed_entries)
            if (c.state < I) local.fixed_entries.push_back(c);
        for (int s : constraints.sleep_states)
            if (s < I) local.sleep_states.push_back(s);
        SelectionRow row;
        row.num_states = I;
        row.num_parameters = count_parameters(I, G, cards, config.covariance, local.fixed_entries);
        try {
            const FitResult res = fit(sequences, I, local, config);
            row.log_likelihood = res.log_likelihood_trace.back();
            row.bic = bic(row.log_likelihood, row.num_parameters, n);
            row.aic = aic(row.log_likelihood, row.num_parameters);
            row.restart_traces = res.restart_traces;
        } catch (const NumericalError& e) {
            row.error = e.what();
        } catch (const DataError& e) {
            row.error = e.what();
        }
        out.rows.push_back(std::move(row));
    }
    const SelectionRow* best = nullptr;
    for (const auto& row : out.rows) {
        if (row.error) continue;
        if (!best || row.bic < best->bic) best = &row;
    }
    if (!best) throw NumericalError("sweep_states: every fit failed");
    out.chosen = best->num_states;
    return out;
}

}  // namespace hhmm
