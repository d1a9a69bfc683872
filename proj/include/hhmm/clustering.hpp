#pragma once
// Plain k-means (k-means++ seeding, Lloyd iterations) and a full-covariance
// Gaussian mixture fit by EM. Rows of `points` are observations.

#include <cstdint>
#include <vector>

#include "hhmm/core.hpp"

namespace hhmm {

struct KMeansOptions {
    int max_iterations = 300;
    double tolerance = 1e-6;  // max centroid shift that counts as converged
};

struct KMeansResult {
    Matrix centroids;               // k x D
    std::vector<int> assignment;    // one cluster per point
    double inertia = 0.0;
    int iterations = 0;
};

// Throws DataError when fewer than k distinct points exist.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

// Index of the nearest centroid, lower index on ties.
int nearest_centroid(const Matrix& centroids, const Eigen::RowVectorXd& point);

struct GaussianMixture {
    Vector weights;                 // length k
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct GmmOptions {
    int max_iterations = 300;
    double tolerance = 1e-6;        // on mean per-point log-likelihood change
    double regularization = 1e-6;   // added to every covariance diagonal
};

// EM initialized from k-means; throws NumericalError when a component's
// weight vanishes.
GaussianMixture fit_gmm(const Matrix& points, int k, std::uint64_t seed,
                        const GmmOptions& options = {});

// N x k posterior responsibilities.
Matrix gmm_responsibilities(const GaussianMixture& gmm, const Matrix& points);

}  // namespace hhmm
