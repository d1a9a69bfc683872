#include "hhmm/inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace hhmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

void check_indices(std::span<const int> idx, Index dim) {
    int prev = -1;
    for (int k : idx) {
        if (k < 0 || k >= dim) throw std::invalid_argument("observed index out of bounds");
        if (k <= prev) throw std::invalid_argument("observed indices must be strictly increasing");
        prev = k;
    }
}

Vector gather(const Vector& v, std::span<const int> idx) {
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) out(a) = v(idx[a]);
    return out;
}

Matrix gather(const Matrix& m, std::span<const int> rows, std::span<const int> cols) {
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) out(a, b) = m(rows[a], cols[b]);
    return out;
}

double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Marginal density over one observed subset, factorized once per state.
struct MarginalFactor {
    std::vector<int> idx;
    Eigen::LLT<Matrix> llt;
    double log_norm = 0.0;  // -0.5 (k log 2pi + log det)
};

MarginalFactor make_factor(const GaussianEmission& e, std::vector<int> idx) {
    MarginalFactor f;
    f.idx = std::move(idx);
    const Matrix sub = gather(e.cov, f.idx, f.idx);
    f.llt = robust_cholesky(sub);
    const double k = static_cast<double>(f.idx.size());
    f.log_norm = -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det_from_llt(f.llt));
    return f;
}

double factor_log_density(const MarginalFactor& f, const GaussianEmission& e,
                          const ObservationSequence& seq, Index t) {
    const Index k = static_cast<Index>(f.idx.size());
    Vector diff(k);
    for (Index a = 0; a < k; ++a) diff(a) = seq.continuous(t, f.idx[a]) - e.mean(f.idx[a]);
    const Vector z = f.llt.matrixL().solve(diff);
    return f.log_norm - 0.5 * z.squaredNorm();
}

std::uint64_t pattern_key(const ObservationSequence& seq, Index t) {
    std::uint64_t key = 0;
    for (Index g = 0; g < seq.continuous_mask.cols(); ++g)
        if (seq.continuous_mask(t, g)) key |= std::uint64_t{1} << g;
    return key;
}

std::vector<int> observed_dims(const ObservationSequence& seq, Index t) {
    std::vector<int> idx;
    for (Index g = 0; g < seq.continuous_mask.cols(); ++g)
        if (seq.continuous_mask(t, g)) idx.push_back(static_cast<int>(g));
    return idx;
}

template <typename Out>
void add_discrete_terms(const ModelParameters& params, const ObservationSequence& seq, Index t,
                        Out&& out) {
    for (Index j = 0; j < seq.discrete.cols(); ++j) {
        if (!seq.discrete_mask(t, j)) continue;
        const int v = seq.discrete(t, j);
        for (int i = 0; i < params.num_states; ++i) out(i) += safe_log(params.discretes[i][j](v));
    }
}

void check_inputs(const ModelParameters& params, const ObservationSequence& seq) {
    check_compatible(params, seq);
    if (seq.length() < 1) throw std::invalid_argument("sequence has no slots");
    if (seq.continuous_mask.cols() > 63) {
        throw std::invalid_argument("at most 63 continuous features are supported");
    }
}

void check_emissions(const ModelParameters& params, const Matrix& log_emissions) {
    if (log_emissions.cols() != params.num_states || log_emissions.rows() < 1) {
        throw std::invalid_argument("emission matrix must be T x num_states with T >= 1");
    }
}

}  // namespace

GaussianPartition partition_gaussian(const Vector& mean, const Matrix& cov,
                                     std::span<const int> observed_idx) {
    const Index G = mean.size();
    if (cov.rows() != G || cov.cols() != G) throw std::invalid_argument("mean/cov size mismatch");
    check_indices(observed_idx, G);
    GaussianPartition p;
    p.observed_idx.assign(observed_idx.begin(), observed_idx.end());
    std::vector<bool> seen(static_cast<std::size_t>(G), false);
    for (int k : observed_idx) seen[k] = true;
    for (Index g = 0; g < G; ++g)
        if (!seen[g]) p.missing_idx.push_back(static_cast<int>(g));
    p.mean_missing = gather(mean, p.missing_idx);
    p.mean_observed = gather(mean, p.observed_idx);
    p.cov_mm = gather(cov, p.missing_idx, p.missing_idx);
    p.cov_mo = gather(cov, p.missing_idx, p.observed_idx);
    p.cov_om = gather(cov, p.observed_idx, p.missing_idx);
    p.cov_oo = gather(cov, p.observed_idx, p.observed_idx);
    const Matrix precision = robust_cholesky(cov).solve(Matrix::Identity(G, G));
    p.precision_mm = gather(precision, p.missing_idx, p.missing_idx);
    p.precision_mo = gather(precision, p.missing_idx, p.observed_idx);
    return p;
}

GaussianMoments gaussian_marginal(const Vector& mean, const Matrix& cov,
                                  std::span<const int> observed_idx) {
    if (observed_idx.empty()) throw std::invalid_argument("gaussian_marginal: empty index set");
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw std::invalid_argument("mean/cov size mismatch");
    }
    check_indices(observed_idx, mean.size());
    return {gather(mean, observed_idx), gather(cov, observed_idx, observed_idx)};
}

GaussianMoments gaussian_conditional(const Vector& mean, const Matrix& cov,
                                     std::span<const int> observed_idx,
                                     const Vector& observed_values) {
    if (observed_idx.empty()) throw std::invalid_argument("gaussian_conditional: nothing observed");
    if (static_cast<Index>(observed_idx.size()) >= mean.size()) {
        throw std::invalid_argument("gaussian_conditional: nothing missing");
    }
    if (observed_values.size() != static_cast<Index>(observed_idx.size())) {
        throw std::invalid_argument("gaussian_conditional: value count differs from index count");
    }
    check_indices(observed_idx, mean.size());
    std::vector<int> missing;
    {
        std::vector<bool> seen(static_cast<std::size_t>(mean.size()), false);
        for (int k : observed_idx) seen[k] = true;
        for (Index g = 0; g < mean.size(); ++g)
            if (!seen[g]) missing.push_back(static_cast<int>(g));
    }
    const Matrix cov_oo = gather(cov, observed_idx, observed_idx);
    const Matrix cov_mo = gather(cov, missing, observed_idx);
    const auto llt = robust_cholesky(cov_oo);
    const Vector diff = observed_values - gather(mean, observed_idx);
    GaussianMoments out;
    out.mean = gather(mean, missing) + cov_mo * llt.solve(diff);
    out.cov = gather(cov, missing, missing) - cov_mo * llt.solve(cov_mo.transpose());
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

GaussianMoments gaussian_conditional_precision(const Vector& mean, const Matrix& cov,
                                               std::span<const int> observed_idx,
                                               const Vector& observed_values) {
    if (observed_idx.empty()) throw std::invalid_argument("gaussian_conditional: nothing observed");
    if (static_cast<Index>(observed_idx.size()) >= mean.size()) {
        throw std::invalid_argument("gaussian_conditional: nothing missing");
    }
    const auto part = partition_gaussian(mean, cov, observed_idx);
    const auto llt = robust_cholesky(part.precision_mm);
    GaussianMoments out;
    out.cov = llt.solve(Matrix::Identity(part.precision_mm.rows(), part.precision_mm.cols()));
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    out.mean = part.mean_missing -
               llt.solve(part.precision_mo * (observed_values - part.mean_observed));
    return out;
}

Eigen::LLT<Matrix> robust_cholesky(const Matrix& cov) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) return llt;
    Matrix shifted = cov;
    shifted.diagonal().array() += kCovarianceFloor;
    llt.compute(shifted);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("covariance block is singular even after adding the floor");
    }
    return llt;
}

double gaussian_log_density(const Vector& x, const Vector& mean, const Matrix& cov) {
    const auto llt = robust_cholesky(cov);
    const Vector z = llt.matrixL().solve(x - mean);
    const double k = static_cast<double>(x.size());
    return -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det_from_llt(llt) + z.squaredNorm());
}

Vector emission_log_likelihood(const ModelParameters& params, const ObservationSequence& seq,
                               Index t) {
    check_inputs(params, seq);
    if (t < 0 || t >= seq.length()) throw std::out_of_range("slot index out of range");
    Vector out = Vector::Zero(params.num_states);
    const std::vector<int> idx = observed_dims(seq, t);
    if (!idx.empty()) {
        for (int i = 0; i < params.num_states; ++i) {
            const auto f = make_factor(params.gaussians[i], idx);
            out(i) += factor_log_density(f, params.gaussians[i], seq, t);
        }
    }
    add_discrete_terms(params, seq, t, out);
    return out;
}

Matrix emission_log_likelihoods(const ModelParameters& params, const ObservationSequence& seq) {
    check_inputs(params, seq);
    const Index T = seq.length();
    const int I = params.num_states;
    Matrix out = Matrix::Zero(T, I);
    std::unordered_map<std::uint64_t, std::vector<MarginalFactor>> cache;
    for (Index t = 0; t < T; ++t) {
        const std::uint64_t key = pattern_key(seq, t);
        if (key != 0) {
            auto it = cache.find(key);
            if (it == cache.end()) {
                std::vector<MarginalFactor> factors;
                factors.reserve(I);
                const auto idx = observed_dims(seq, t);
                for (int i = 0; i < I; ++i) factors.push_back(make_factor(params.gaussians[i], idx));
                it = cache.emplace(key, std::move(factors)).first;
            }
            for (int i = 0; i < I; ++i)
                out(t, i) = factor_log_density(it->second[i], params.gaussians[i], seq, t);
        }
        add_discrete_terms(params, seq, t, out.row(t));
    }
    return out;
}

namespace {

// Shifted emission probabilities exp(logB - max) per row, plus the shifts.
void shifted_emissions(const Matrix& log_emissions, Matrix& probs, Vector& shifts) {
    const Index T = log_emissions.rows();
    probs.resize(T, log_emissions.cols());
    shifts.resize(T);
    for (Index t = 0; t < T; ++t) {
        const double m = log_emissions.row(t).maxCoeff();
        if (!std::isfinite(m)) {
            throw UnderflowError(t, "all emission likelihoods vanish at slot " + std::to_string(t));
        }
        shifts(t) = m;
        probs.row(t) = (log_emissions.row(t).array() - m).exp();
    }
}

// Normalized forward variables; returns the log-likelihood.
double forward_pass(const ModelParameters& params, const Matrix& probs, const Vector& shifts,
                    Matrix& alpha, Vector& scale) {
    const Index T = probs.rows();
    const Index I = probs.cols();
    alpha.resize(T, I);
    scale.resize(T);
    double ll = 0.0;
    for (Index t = 0; t < T; ++t) {
        if (t == 0) {
            alpha.row(0) = params.pi.transpose().cwiseProduct(probs.row(0));
        } else {
            alpha.row(t) = (alpha.row(t - 1) * params.trans).cwiseProduct(probs.row(t));
        }
        const double c = alpha.row(t).sum();
        if (!(c > 0.0) || !std::isfinite(c)) {
            throw UnderflowError(t, "forward probabilities vanish at slot " + std::to_string(t));
        }
        alpha.row(t) /= c;
        scale(t) = c;
        ll += std::log(c) + shifts(t);
    }
    return ll;
}

}  // namespace

Posteriors forward_backward(const ModelParameters& params, const ObservationSequence& seq) {
    return forward_backward(params, emission_log_likelihoods(params, seq));
}

Posteriors forward_backward(const ModelParameters& params, const Matrix& log_emissions) {
    check_emissions(params, log_emissions);
    const Index T = log_emissions.rows();
    const Index I = params.num_states;
    Matrix probs;
    Vector shifts;
    shifted_emissions(log_emissions, probs, shifts);
    Matrix alpha;
    Vector scale;
    Posteriors post;
    post.log_likelihood = forward_pass(params, probs, shifts, alpha, scale);

    Matrix beta(T, I);
    beta.row(T - 1).setOnes();
    for (Index t = T - 2; t >= 0; --t) {
        const Eigen::RowVectorXd weighted = probs.row(t + 1).cwiseProduct(beta.row(t + 1));
        beta.row(t) = (params.trans * weighted.transpose()).transpose() / scale(t + 1);
    }

    post.gamma = alpha.cwiseProduct(beta);
    for (Index t = 0; t < T; ++t) post.gamma.row(t) /= post.gamma.row(t).sum();

    post.xi.resize(static_cast<std::size_t>(std::max<Index>(T - 1, 0)));
    for (Index t = 0; t + 1 < T; ++t) {
        const Eigen::RowVectorXd weighted = probs.row(t + 1).cwiseProduct(beta.row(t + 1));
        Matrix x = (alpha.row(t).transpose() * weighted).cwiseProduct(params.trans);
        x /= x.sum();
        post.xi[t] = std::move(x);
    }
    return post;
}

double forward_log_likelihood(const ModelParameters& params, const Matrix& log_emissions) {
    check_emissions(params, log_emissions);
    Matrix probs;
    Vector shifts;
    shifted_emissions(log_emissions, probs, shifts);
    Matrix alpha;
    Vector scale;
    return forward_pass(params, probs, shifts, alpha, scale);
}

ViterbiResult viterbi(const ModelParameters& params, const ObservationSequence& seq) {
    return viterbi(params, emission_log_likelihoods(params, seq));
}

ViterbiResult viterbi(const ModelParameters& params, const Matrix& log_emissions) {
    check_emissions(params, log_emissions);
    const Index T = log_emissions.rows();
    const int I = params.num_states;
    Matrix log_trans(I, I);
    for (int i = 0; i < I; ++i)
        for (int j = 0; j < I; ++j) log_trans(i, j) = safe_log(params.trans(i, j));

    Matrix delta(T, I);
    Eigen::MatrixXi back(T, I);
    for (int i = 0; i < I; ++i) delta(0, i) = safe_log(params.pi(i)) + log_emissions(0, i);
    for (Index t = 1; t < T; ++t) {
        for (int j = 0; j < I; ++j) {
            double best = kNegInf;
            int arg = 0;
            for (int i = 0; i < I; ++i) {
                const double v = delta(t - 1, i) + log_trans(i, j);
                if (v > best) {
                    best = v;
                    arg = i;
                }
            }
            back(t, j) = arg;
            delta(t, j) = best + log_emissions(t, j);
        }
    }
    ViterbiResult out;
    double best = kNegInf;
    int arg = 0;
    for (int i = 0; i < I; ++i) {
        if (delta(T - 1, i) > best) {
            best = delta(T - 1, i);
            arg = i;
        }
    }
    if (!std::isfinite(best)) {
        throw UnderflowError(T - 1, "no state path has positive probability");
    }
    out.log_probability = best;
    out.path.resize(static_cast<std::size_t>(T));
    out.path[T - 1] = arg;
    for (Index t = T - 1; t > 0; --t) out.path[t - 1] = back(t, out.path[t]);
    return out;
}

double score_path(const ModelParameters& params, const ObservationSequence& seq,
                  std::span<const int> path) {
    if (static_cast<Index>(path.size()) != seq.length()) {
        throw std::invalid_argument("path length differs from sequence length");
    }
    const Matrix logb = emission_log_likelihoods(params, seq);
    double s = 0.0;
    for (Index t = 0; t < seq.length(); ++t) {
        const int st = path[t];
        if (st < 0 || st >= params.num_states) throw std::invalid_argument("state out of range");
        s += (t == 0 ? safe_log(params.pi(st)) : safe_log(params.trans(path[t - 1], st))) +
             logb(t, st);
    }
    return s;
}

double sequence_log_likelihood(const ModelParameters& params,
                               std::span<const ObservationSequence> sequences) {
    double total = 0.0;
    for (const auto& seq : sequences)
        total += forward_log_likelihood(params, emission_log_likelihoods(params, seq));
    return total;
}

}  // namespace hhmm
