#include "hhmm/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "hhmm/inference.hpp"

namespace hhmm {

namespace {

Index count_distinct_rows(const Matrix& points, Index cap) {
    std::set<std::vector<double>> seen;
    for (Index r = 0; r < points.rows() && static_cast<Index>(seen.size()) < cap; ++r) {
        std::vector<double> row(static_cast<std::size_t>(points.cols()));
        for (Index c = 0; c < points.cols(); ++c) row[c] = points(r, c);
        seen.insert(std::move(row));
    }
    return static_cast<Index>(seen.size());
}

Matrix seed_plus_plus(const Matrix& points, int k, std::mt19937_64& rng) {
    const Index n = points.rows();
    Matrix centroids(k, points.cols());
    std::uniform_int_distribution<Index> pick(0, n - 1);
    centroids.row(0) = points.row(pick(rng));
    Vector dist2(n);
    for (Index r = 0; r < n; ++r) dist2(r) = (points.row(r) - centroids.row(0)).squaredNorm();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = dist2.sum();
        Index chosen = 0;
        if (total > 0.0) {
            const double u = unit(rng) * total;
            double acc = 0.0;
            chosen = n - 1;
            for (Index r = 0; r < n; ++r) {
                acc += dist2(r);
                if (u < acc && dist2(r) > 0.0) {
                    chosen = r;
                    break;
                }
            }
            while (dist2(chosen) <= 0.0 && chosen > 0) --chosen;
        }
        centroids.row(c) = points.row(chosen);
        for (Index r = 0; r < n; ++r)
            dist2(r) = std::min(dist2(r), (points.row(r) - centroids.row(c)).squaredNorm());
    }
    return centroids;
}

}  // namespace

int nearest_centroid(const Matrix& centroids, const Eigen::RowVectorXd& point) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (count_distinct_rows(points, k) < k) {
        throw DataError("kmeans: fewer than " + std::to_string(k) + " distinct points");
    }
    const Index n = points.rows();
    std::mt19937_64 rng(seed);
    KMeansResult res;
    res.centroids = seed_plus_plus(points, k, rng);
    res.assignment.assign(static_cast<std::size_t>(n), 0);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        res.iterations = iter + 1;
        for (Index r = 0; r < n; ++r) res.assignment[r] = nearest_centroid(res.centroids, points.row(r));

        Matrix sums = Matrix::Zero(k, points.cols());
        std::vector<Index> counts(static_cast<std::size_t>(k), 0);
        for (Index r = 0; r < n; ++r) {
            sums.row(res.assignment[r]) += points.row(r);
            ++counts[res.assignment[r]];
        }
        Matrix next = res.centroids;
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                next.row(c) = sums.row(c) / static_cast<double>(counts[c]);
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            Index far = 0;
            double far_d = -1.0;
            for (Index r = 0; r < n; ++r) {
                const double d = (points.row(r) - res.centroids.row(res.assignment[r])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = r;
                }
            }
            next.row(c) = points.row(far);
        }
        const double shift = (next - res.centroids).rowwise().norm().maxCoeff();
        res.centroids = std::move(next);
        if (shift < options.tolerance) break;
    }
    res.inertia = 0.0;
    for (Index r = 0; r < n; ++r) {
        res.assignment[r] = nearest_centroid(res.centroids, points.row(r));
        res.inertia += (points.row(r) - res.centroids.row(res.assignment[r])).squaredNorm();
    }
    return res;
}

Matrix gmm_responsibilities(const GaussianMixture& gmm, const Matrix& points) {
    const Index n = points.rows();
    const Index k = gmm.weights.size();
    Matrix logr(n, k);
    for (Index c = 0; c < k; ++c) {
        const auto llt = robust_cholesky(gmm.covs[c]);
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double norm = -0.5 * (static_cast<double>(points.cols()) * std::log(2.0 * std::numbers::pi) + logdet);
        const Matrix diff = (points.rowwise() - gmm.means[c].transpose()).transpose();
        const Matrix z = llt.matrixL().solve(diff);
        logr.col(c) = (norm - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
        logr.col(c).array() += std::log(gmm.weights(c));
    }
    for (Index r = 0; r < n; ++r) {
        const double m = logr.row(r).maxCoeff();
        logr.row(r) = (logr.row(r).array() - m).exp();
        logr.row(r) /= logr.row(r).sum();
    }
    return logr;
}

GaussianMixture fit_gmm(const Matrix& points, int k, std::uint64_t seed, const GmmOptions& options) {
    const Index n = points.rows();
    const Index D = points.cols();
    const auto km = kmeans(points, k, seed);
    GaussianMixture gmm;
    gmm.weights = Vector::Zero(k);
    gmm.means.assign(static_cast<std::size_t>(k), Vector::Zero(D));
    gmm.covs.assign(static_cast<std::size_t>(k), Matrix::Identity(D, D));
    Matrix resp = Matrix::Zero(n, k);
    for (Index r = 0; r < n; ++r) resp(r, km.assignment[r]) = 1.0;

    double prev = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        // M-step
        for (int c = 0; c < k; ++c) {
            const double nk = resp.col(c).sum();
            if (nk < 1e-10) {
                throw NumericalError("GMM component " + std::to_string(c) + " collapsed");
            }
            gmm.weights(c) = nk / static_cast<double>(n);
            gmm.means[c] = (points.transpose() * resp.col(c)) / nk;
            const Matrix centered = points.rowwise() - gmm.means[c].transpose();
            Matrix cov = (centered.transpose() * resp.col(c).asDiagonal() * centered) / nk;
            cov.diagonal().array() += options.regularization;
            gmm.covs[c] = 0.5 * (cov + cov.transpose());
        }
        // E-step with log-likelihood
        Matrix logp(n, k);
        for (int c = 0; c < k; ++c) {
            const auto llt = robust_cholesky(gmm.covs[c]);
            const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
            const double norm = -0.5 * (static_cast<double>(D) * std::log(2.0 * std::numbers::pi) + logdet);
            const Matrix diff = (points.rowwise() - gmm.means[c].transpose()).transpose();
            const Matrix z = llt.matrixL().solve(diff);
            logp.col(c) = (norm - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
            logp.col(c).array() += std::log(gmm.weights(c));
        }
        double ll = 0.0;
        for (Index r = 0; r < n; ++r) {
            const double m = logp.row(r).maxCoeff();
            const Eigen::RowVectorXd e = (logp.row(r).array() - m).exp();
            const double s = e.sum();
            ll += m + std::log(s);
            resp.row(r) = e / s;
        }
        gmm.log_likelihood = ll;
        gmm.iterations = iter + 1;
        if (std::abs(ll - prev) / static_cast<double>(n) < options.tolerance) {
            gmm.converged = true;
            break;
        }
        prev = ll;
    }
    return gmm;
}

}  // namespace hhmm
