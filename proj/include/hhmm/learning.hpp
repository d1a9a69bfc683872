#pragma once
// Baum-Welch EM over many heterogeneous sequences. Missing continuous cells
// are completed inside the M-step from the current parameters (state mean
// when the slot is fully missing, conditional Gaussian mean otherwise, with
// the conditional covariance added to the scatter). Missing discrete cells
// are marginalized. Clamped discrete entries never move.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hhmm/core.hpp"
#include "hhmm/inference.hpp"

namespace hhmm {

enum class InitStrategy { kmeans, random };
enum class CovarianceType { full, diagonal };

struct FitConfig {
    int max_iterations = 200;
    double tolerance = 1e-6;  // relative log-likelihood improvement
    InitStrategy init = InitStrategy::kmeans;
    int restarts = 5;
    std::uint64_t seed = 0;
    CovarianceType covariance = CovarianceType::full;
    int num_threads = 1;      // E-step workers; results do not depend on it

    void validate() const;
};

struct FitResult {
    ModelParameters params;
    std::vector<double> log_likelihood_trace;  // one entry per E-step
    int restart_index = 0;
    bool converged = false;
    std::vector<std::string> restart_errors;   // empty string for restarts that succeeded
    std::vector<std::vector<double>> restart_traces;  // per restart, empty where it failed
};

// Uniform pi and trans. Gaussian means come from k-means centroids (sorted
// ascending by the first continuous feature) over complete continuous rows,
// falling back to mean-imputed partial rows when fewer than I distinct
// complete rows exist. Discrete tables start uniform, then clamped.
ModelParameters initialize(std::span<const ObservationSequence> sequences, int num_states,
                           const FitConfig& config, const Constraints& constraints);

struct EStepResult {
    std::vector<Posteriors> posteriors;
    double log_likelihood = 0.0;
};

EStepResult e_step(const ModelParameters& params, std::span<const ObservationSequence> sequences,
                   int num_threads = 1);

ModelParameters m_step(const ModelParameters& current,
                       std::span<const ObservationSequence> sequences,
                       std::span<const Posteriors> posteriors, const Constraints& constraints,
                       const FitConfig& config);

// A single EM run from the given starting point.
FitResult fit_from(const ModelParameters& initial, std::span<const ObservationSequence> sequences,
                   const Constraints& constraints, const FitConfig& config);

// `config.restarts` runs from independent initializations; the best final
// log-likelihood wins, ties toward the lower restart index.
FitResult fit(std::span<const ObservationSequence> sequences, int num_states,
              const Constraints& constraints, const FitConfig& config);

// Posterior-weighted reconstruction of the continuous matrix: observed cells
// unchanged, missing cells a gamma-mixture of per-state completions.
Matrix impute_missing(const ModelParameters& params, const ObservationSequence& seq,
                      const Posteriors& posteriors);

// Per-state completion of one slot's continuous row.
struct RowCompletion {
    Vector values;       // observed cells copied, missing cells filled
    Matrix missing_cov;  // G x G, conditional covariance on the missing block, zero elsewhere
};

RowCompletion complete_row(const GaussianEmission& emission, const ObservationSequence& seq,
                           Index t);

}  // namespace hhmm
