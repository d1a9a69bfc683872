#pragma once
// Emission likelihoods under missing data, scaled forward-backward, Viterbi,
// and the Gaussian partition / marginal / conditional machinery used both
// for marginalizing missing dimensions and for completing them in the M-step.

#include <span>
#include <vector>

#include "hhmm/core.hpp"

namespace hhmm {

// A Gaussian split into a missing block (1) and an observed block (2).
struct GaussianPartition {
    std::vector<int> observed_idx;
    std::vector<int> missing_idx;
    Vector mean_missing;     // mu_1
    Vector mean_observed;    // mu_2
    Matrix cov_mm;           // Sigma_11
    Matrix cov_mo;           // Sigma_12
    Matrix cov_om;           // Sigma_21
    Matrix cov_oo;           // Sigma_22
    Matrix precision_mm;     // Lambda_11
    Matrix precision_mo;     // Lambda_12
};

struct GaussianMoments {
    Vector mean;
    Matrix cov;
};

// observed_idx must be strictly increasing and within bounds; the missing
// block is its complement in increasing order.
GaussianPartition partition_gaussian(const Vector& mean, const Matrix& cov,
                                     std::span<const int> observed_idx);

// p(x_2) = N(mu_2, Sigma_22).
GaussianMoments gaussian_marginal(const Vector& mean, const Matrix& cov,
                                  std::span<const int> observed_idx);

// p(x_1 | x_2) via the Schur complement:
//   mu_1|2 = mu_1 + Sigma_12 Sigma_22^-1 (x_2 - mu_2)
//   Sigma_1|2 = Sigma_11 - Sigma_12 Sigma_22^-1 Sigma_21
GaussianMoments gaussian_conditional(const Vector& mean, const Matrix& cov,
                                     std::span<const int> observed_idx,
                                     const Vector& observed_values);

// Same conditional through the precision blocks:
//   Sigma_1|2 = Lambda_11^-1,  mu_1|2 = mu_1 - Lambda_11^-1 Lambda_12 (x_2 - mu_2)
GaussianMoments gaussian_conditional_precision(const Vector& mean, const Matrix& cov,
                                               std::span<const int> observed_idx,
                                               const Vector& observed_values);

// Cholesky factorization; on failure retries once with the covariance floor
// added to the diagonal, then throws NumericalError.
Eigen::LLT<Matrix> robust_cholesky(const Matrix& cov);

double gaussian_log_density(const Vector& x, const Vector& mean, const Matrix& cov);

// log p(observed part of slot t | s_t = i) for every state i.
Vector emission_log_likelihood(const ModelParameters& params, const ObservationSequence& seq,
                               Index t);

// T x I matrix of emission log-likelihoods. Marginal factorizations are
// cached per missingness pattern.
Matrix emission_log_likelihoods(const ModelParameters& params, const ObservationSequence& seq);

struct Posteriors {
    Matrix gamma;             // T x I
    std::vector<Matrix> xi;   // T-1 slices of I x I
    double log_likelihood = 0.0;
};

Posteriors forward_backward(const ModelParameters& params, const ObservationSequence& seq);
// Same recursion over precomputed emission log-likelihoods.
Posteriors forward_backward(const ModelParameters& params, const Matrix& log_emissions);

// Forward pass only.
double forward_log_likelihood(const ModelParameters& params, const Matrix& log_emissions);

struct ViterbiResult {
    std::vector<int> path;
    double log_probability = 0.0;
};

// Ties resolve toward the smallest state index.
ViterbiResult viterbi(const ModelParameters& params, const ObservationSequence& seq);
ViterbiResult viterbi(const ModelParameters& params, const Matrix& log_emissions);

// log p(path, observed) for an explicit path.
double score_path(const ModelParameters& params, const ObservationSequence& seq,
                  std::span<const int> path);

// Sum over sequences of the forward-pass log-likelihood.
double sequence_log_likelihood(const ModelParameters& params,
                               std::span<const ObservationSequence> sequences);

}  // namespace hhmm
