#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hhmm/learning.hpp"

namespace hhmm {

// Free parameters of an HHMM: (I-1) initial + I(I-1) transition + per-state
// Gaussian (G means, G(G+1)/2 or G covariance entries) + per-state
// sum_j (C_j - 1) discrete entries, minus the entries pinned by the clamp.
int count_parameters(int num_states, int num_continuous, std::span<const int> cardinalities,
                     CovarianceType covariance, std::span<const ClampEntry> clamp = {});

// Lower is better for both.
double bic(double log_likelihood, int num_parameters, double num_observations);
double aic(double log_likelihood, int num_parameters);

// Observed scalar cells (continuous and discrete) across all sequences.
Index count_observed_cells(std::span<const ObservationSequence> sequences);

struct SelectionRow {
    int num_states = 0;
    double log_likelihood = 0.0;
    int num_parameters = 0;
    double bic = 0.0;
    double aic = 0.0;
    std::optional<std::string> error;  // set when the fit for this I failed
    std::vector<std::vector<double>> restart_traces;
};

struct SelectionResult {
    std::vector<SelectionRow> rows;  // ascending by num_states
    int chosen = 0;                  // minimum BIC, ties toward smaller I
};

// Fits every I in state_counts with the same config (same seed). Clamp
// entries and sleep states that reference states >= I are dropped for that I.
SelectionResult sweep_states(std::span<const ObservationSequence> sequences,
                             std::span<const int> state_counts, const Constraints& constraints,
                             const FitConfig& config);

}  // namespace hhmm
