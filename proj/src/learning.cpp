#include "hhmm/learning.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "hhmm/clustering.hpp"
#include "hhmm/sampling.hpp"

namespace hhmm {

namespace {

constexpr double kCollapseMass = 1e-10;

void check_sequences(std::span<const ObservationSequence> sequences) {
    if (sequences.empty()) throw std::invalid_argument("no training sequences");
    const auto& first = sequences.front();
    for (const auto& seq : sequences) {
        check_sequence(seq);
        if (seq.num_continuous() != first.num_continuous() ||
            seq.cardinalities != first.cardinalities) {
            throw DataError("sequences do not share a feature schema");
        }
    }
}

void check_constraints(const Constraints& constraints, int num_states,
                       std::span<const int> cardinalities) {
    for (const auto& c : constraints.fixed_entries) {
        if (c.state < 0 || c.state >= num_states || c.feature < 0 ||
            c.feature >= static_cast<int>(cardinalities.size()) || c.category < 0 ||
            c.category >= cardinalities[c.feature] || !(c.probability >= 0.0) ||
            c.probability > 1.0) {
            throw std::invalid_argument("clamp entry (state " + std::to_string(c.state) +
                                        ", feature " + std::to_string(c.feature) + ", category " +
                                        std::to_string(c.category) + ") is invalid");
        }
    }
    for (int s : constraints.sleep_states) {
        if (s < 0 || s >= num_states) {
            throw std::invalid_argument("sleep state " + std::to_string(s) + " out of range");
        }
    }
}

std::uint64_t pattern_key(const ObservationSequence& seq, Index t) {
    std::uint64_t key = 0;
    for (Index g = 0; g < seq.continuous_mask.cols(); ++g)
        if (seq.continuous_mask(t, g)) key |= std::uint64_t{1} << g;
    return key;
}

// Regression of the missing block on the observed block for one state.
struct CompletionPlan {
    std::vector<int> observed;
    std::vector<int> missing;
    Matrix gain;          // Sigma_MO Sigma_OO^-1
    Matrix missing_cov;   // Sigma_MM - gain Sigma_OM
};

CompletionPlan make_plan(const GaussianEmission& e, std::uint64_t key) {
    CompletionPlan plan;
    const Index G = e.mean.size();
    for (Index g = 0; g < G; ++g) {
        if (key & (std::uint64_t{1} << g)) plan.observed.push_back(static_cast<int>(g));
        else plan.missing.push_back(static_cast<int>(g));
    }
    const Index m = static_cast<Index>(plan.missing.size());
    const Index o = static_cast<Index>(plan.observed.size());
    Matrix cov_mm(m, m), cov_mo(m, o), cov_oo(o, o);
    for (Index a = 0; a < m; ++a) {
        for (Index b = 0; b < m; ++b) cov_mm(a, b) = e.cov(plan.missing[a], plan.missing[b]);
        for (Index b = 0; b < o; ++b) cov_mo(a, b) = e.cov(plan.missing[a], plan.observed[b]);
    }
    for (Index a = 0; a < o; ++a)
        for (Index b = 0; b < o; ++b) cov_oo(a, b) = e.cov(plan.observed[a], plan.observed[b]);
    if (m == 0) {
        plan.gain = Matrix::Zero(0, o);
        plan.missing_cov = Matrix::Zero(0, 0);
    } else if (o == 0) {
        plan.gain = Matrix::Zero(m, 0);
        plan.missing_cov = cov_mm;
    } else {
        const auto llt = robust_cholesky(cov_oo);
        plan.gain = llt.solve(cov_mo.transpose()).transpose();
        plan.missing_cov = cov_mm - plan.gain * cov_mo.transpose();
        plan.missing_cov = 0.5 * (plan.missing_cov + plan.missing_cov.transpose());
    }
    return plan;
}

void complete_with_plan(const CompletionPlan& plan, const GaussianEmission& e,
                        const ObservationSequence& seq, Index t, Vector& values) {
    const Index G = e.mean.size();
    values.resize(G);
    for (int g : plan.observed) values(g) = seq.continuous(t, g);
    if (plan.missing.empty()) return;
    Vector diff(static_cast<Index>(plan.observed.size()));
    for (std::size_t b = 0; b < plan.observed.size(); ++b)
        diff(b) = seq.continuous(t, plan.observed[b]) - e.mean(plan.observed[b]);
    const Vector filled = plan.gain * diff;
    for (std::size_t a = 0; a < plan.missing.size(); ++a)
        values(plan.missing[a]) = e.mean(plan.missing[a]) + filled(a);
}

Vector random_table(int cardinality, std::mt19937_64& rng) {
    std::gamma_distribution<double> draw(1.0, 1.0);
    Vector d(cardinality);
    for (int c = 0; c < cardinality; ++c) d(c) = draw(rng) + 1e-3;
    return d / d.sum();
}

}  // namespace

void FitConfig::validate() const {
    if (!(tolerance > 0.0)) throw std::invalid_argument("FitConfig: tolerance must be > 0");
    if (restarts < 1) throw std::invalid_argument("FitConfig: restarts must be >= 1");
    if (max_iterations < 1) throw std::invalid_argument("FitConfig: max_iterations must be >= 1");
    if (num_threads < 1) throw std::invalid_argument("FitConfig: num_threads must be >= 1");
}

RowCompletion complete_row(const GaussianEmission& emission, const ObservationSequence& seq,
                           Index t) {
    const CompletionPlan plan = make_plan(emission, pattern_key(seq, t));
    RowCompletion out;
    complete_with_plan(plan, emission, seq, t, out.values);
    const Index G = emission.mean.size();
    out.missing_cov = Matrix::Zero(G, G);
    for (std::size_t a = 0; a < plan.missing.size(); ++a)
        for (std::size_t b = 0; b < plan.missing.size(); ++b)
            out.missing_cov(plan.missing[a], plan.missing[b]) = plan.missing_cov(a, b);
    return out;
}

ModelParameters initialize(std::span<const ObservationSequence> sequences, int num_states,
                           const FitConfig& config, const Constraints& constraints) {
    config.validate();
    check_sequences(sequences);
    if (num_states < 1) throw std::invalid_argument("num_states must be >= 1");
    const int G = sequences.front().num_continuous();
    const std::vector<int> cards = sequences.front().cardinalities;
    check_constraints(constraints, num_states, cards);

    ModelParameters params = make_uniform_model(num_states, G, cards);
    std::mt19937_64 rng(derive_seed(config.seed, 0x1217));
    const bool random_tables = config.init == InitStrategy::random || G == 0;

    if (G > 0) {
        // Features with at least one observation anywhere.
        std::vector<int> used;
        Vector sum = Vector::Zero(G), sumsq = Vector::Zero(G);
        Eigen::VectorXd count = Eigen::VectorXd::Zero(G);
        for (const auto& seq : sequences) {
            for (Index t = 0; t < seq.length(); ++t) {
                for (int g = 0; g < G; ++g) {
                    if (!seq.continuous_mask(t, g)) continue;
                    sum(g) += seq.continuous(t, g);
                    sumsq(g) += seq.continuous(t, g) * seq.continuous(t, g);
                    count(g) += 1.0;
                }
            }
        }
        for (int g = 0; g < G; ++g)
            if (count(g) > 0.0) used.push_back(g);
        const Index F = static_cast<Index>(used.size());
        if (F == 0) throw DataError("no continuous observations to initialize from");
        Vector global_mean(F), global_var(F);
        for (Index a = 0; a < F; ++a) {
            const int g = used[a];
            global_mean(a) = sum(g) / count(g);
            global_var(a) = std::max(sumsq(g) / count(g) - global_mean(a) * global_mean(a), 0.0);
        }

        auto collect = [&](bool complete_only) {
            std::vector<Eigen::RowVectorXd> rows;
            for (const auto& seq : sequences) {
                for (Index t = 0; t < seq.length(); ++t) {
                    Eigen::RowVectorXd row(F);
                    Index seen = 0;
                    for (Index a = 0; a < F; ++a) {
                        if (seq.continuous_mask(t, used[a])) {
                            row(a) = seq.continuous(t, used[a]);
                            ++seen;
                        } else {
                            row(a) = global_mean(a);
                        }
                    }
                    if (seen == 0 || (complete_only && seen < F)) continue;
                    rows.push_back(std::move(row));
                }
            }
            Matrix m(static_cast<Index>(rows.size()), F);
            for (std::size_t r = 0; r < rows.size(); ++r) m.row(static_cast<Index>(r)) = rows[r];
            return m;
        };
        auto distinct = [&](const Matrix& m) {
            std::set<std::vector<double>> seen;
            for (Index r = 0; r < m.rows() && static_cast<int>(seen.size()) < num_states; ++r)
                seen.insert(std::vector<double>(m.row(r).begin(), m.row(r).end()));
            return static_cast<int>(seen.size());
        };
        Matrix rows = collect(true);
        if (distinct(rows) < num_states) rows = collect(false);
        if (distinct(rows) < num_states) {
            throw DataError("cannot initialize " + std::to_string(num_states) +
                            " states: not enough distinct observed continuous rows");
        }

        Matrix means(num_states, F);
        std::vector<Matrix> covs(static_cast<std::size_t>(num_states),
                                 Matrix(global_var.asDiagonal()));
        if (config.init == InitStrategy::kmeans) {
            Vector scale = global_var.cwiseSqrt();
            for (Index a = 0; a < F; ++a)
                if (!(scale(a) > 0.0)) scale(a) = 1.0;
            const Matrix standardized =
                (rows.rowwise() - global_mean.transpose()).array().rowwise() /
                scale.transpose().array();
            const auto km = kmeans(standardized, num_states, config.seed);
            std::vector<Index> counts(static_cast<std::size_t>(num_states), 0);
            Matrix centroid = Matrix::Zero(num_states, F);
            for (Index r = 0; r < rows.rows(); ++r) {
                centroid.row(km.assignment[r]) += rows.row(r);
                ++counts[km.assignment[r]];
            }
            for (int c = 0; c < num_states; ++c) {
                centroid.row(c) = counts[c] > 0
                                      ? Eigen::RowVectorXd(centroid.row(c) / static_cast<double>(counts[c]))
                                      : Eigen::RowVectorXd((km.centroids.row(c).array() *
                                                            scale.transpose().array()).matrix() +
                                                           global_mean.transpose());
            }
            std::vector<int> order(static_cast<std::size_t>(num_states));
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                for (Index f = 0; f < F; ++f) {
                    if (centroid(a, f) != centroid(b, f)) return centroid(a, f) < centroid(b, f);
                }
                return false;
            });
            for (int s = 0; s < num_states; ++s) {
                const int c = order[s];
                means.row(s) = centroid.row(c);
                if (counts[c] > F) {
                    Matrix scatter = Matrix::Zero(F, F);
                    for (Index r = 0; r < rows.rows(); ++r) {
                        if (km.assignment[r] != c) continue;
                        const Eigen::RowVectorXd d = rows.row(r) - centroid.row(c);
                        scatter += d.transpose() * d;
                    }
                    covs[s] = scatter / static_cast<double>(counts[c]);
                }
            }
        } else {
            std::vector<Index> picked;
            std::set<std::vector<double>> seen;
            std::uniform_int_distribution<Index> pick(0, rows.rows() - 1);
            while (static_cast<int>(picked.size()) < num_states) {
                const Index r = pick(rng);
                if (seen.insert(std::vector<double>(rows.row(r).begin(), rows.row(r).end())).second)
                    picked.push_back(r);
            }
            for (int s = 0; s < num_states; ++s) means.row(s) = rows.row(picked[s]);
        }

        for (int s = 0; s < num_states; ++s) {
            auto& e = params.gaussians[s];
            e.mean = Vector::Zero(G);
            e.cov = Matrix::Identity(G, G);
            for (Index a = 0; a < F; ++a) {
                e.mean(used[a]) = means(s, a);
                for (Index b = 0; b < F; ++b) e.cov(used[a], used[b]) = covs[s](a, b);
            }
            if (config.covariance == CovarianceType::diagonal) {
                e.cov = Matrix(e.cov.diagonal().asDiagonal());
            }
            e.cov = floor_covariance(e.cov);
        }
    }

    if (random_tables) {
        for (int s = 0; s < num_states; ++s)
            for (std::size_t j = 0; j < cards.size(); ++j)
                params.discretes[s][j] = random_table(cards[j], rng);
    }
    params.clamp = constraints.fixed_entries;
    apply_clamp(params.discretes, params.clamp);
    return params;
}

EStepResult e_step(const ModelParameters& params, std::span<const ObservationSequence> sequences,
                   int num_threads) {
    const std::size_t n = sequences.size();
    EStepResult out;
    out.posteriors.resize(n);
    std::vector<std::exception_ptr> errors(n);
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t s = first; s < n; s += stride) {
            try {
                out.posteriors[s] = forward_backward(params, sequences[s]);
            } catch (...) {
                errors[s] = std::current_exception();
            }
        }
    };
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(num_threads, 1)), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    // Fixed summation order keeps totals independent of the worker count.
    for (const auto& p : out.posteriors) out.log_likelihood += p.log_likelihood;
    return out;
}

ModelParameters m_step(const ModelParameters& current,
                       std::span<const ObservationSequence> sequences,
                       std::span<const Posteriors> posteriors, const Constraints& constraints,
                       const FitConfig& config) {
    if (posteriors.size() != sequences.size()) {
        throw std::invalid_argument("m_step: one posterior per sequence is required");
    }
    const int I = current.num_states;
    const int G = current.num_continuous();
    const std::vector<int> cards = current.cardinalities();
    const int J = static_cast<int>(cards.size());

    Vector pi_acc = Vector::Zero(I);
    Matrix trans_acc = Matrix::Zero(I, I);
    Vector weight = Vector::Zero(I);
    std::vector<Vector> sum_dev(static_cast<std::size_t>(I), Vector::Zero(G));
    std::vector<Matrix> sum_outer(static_cast<std::size_t>(I), Matrix::Zero(G, G));
    std::vector<std::vector<Vector>> counts(static_cast<std::size_t>(I));
    for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j) counts[i].push_back(Vector::Zero(cards[j]));

    for (std::size_t n = 0; n < sequences.size(); ++n) {
        const auto& seq = sequences[n];
        const auto& post = posteriors[n];
        check_compatible(current, seq);
        if (post.gamma.rows() != seq.length() || post.gamma.cols() != I) {
            throw std::invalid_argument("m_step: posterior shape does not match sequence");
        }
        pi_acc += post.gamma.row(0).transpose();
        for (const auto& x : post.xi) trans_acc += x;

        std::unordered_map<std::uint64_t, std::vector<CompletionPlan>> plans;
        Vector values;
        for (Index t = 0; t < seq.length(); ++t) {
            weight += post.gamma.row(t).transpose();
            if (G > 0) {
                const std::uint64_t key = pattern_key(seq, t);
                auto it = plans.find(key);
                if (it == plans.end()) {
                    std::vector<CompletionPlan> per_state;
                    per_state.reserve(I);
                    for (int i = 0; i < I; ++i) per_state.push_back(make_plan(current.gaussians[i], key));
                    it = plans.emplace(key, std::move(per_state)).first;
                }
                for (int i = 0; i < I; ++i) {
                    const double w = post.gamma(t, i);
                    if (w == 0.0) continue;
                    const auto& plan = it->second[i];
                    complete_with_plan(plan, current.gaussians[i], seq, t, values);
                    const Vector dev = values - current.gaussians[i].mean;
                    sum_dev[i] += w * dev;
                    sum_outer[i].noalias() += w * dev * dev.transpose();
                    for (std::size_t a = 0; a < plan.missing.size(); ++a)
                        for (std::size_t b = 0; b < plan.missing.size(); ++b)
                            sum_outer[i](plan.missing[a], plan.missing[b]) += w * plan.missing_cov(a, b);
                }
            }
            for (int j = 0; j < J; ++j) {
                if (!seq.discrete_mask(t, j)) continue;
                const int v = seq.discrete(t, j);
                for (int i = 0; i < I; ++i) counts[i][j](v) += post.gamma(t, i);
            }
        }
    }

    for (int i = 0; i < I; ++i) {
        if (!(weight(i) >= kCollapseMass)) {
            throw StateCollapseError(i, "state " + std::to_string(i) +
                                            " collapsed (posterior mass below 1e-10)");
        }
    }

    ModelParameters next = current;
    next.pi = pi_acc / pi_acc.sum();
    for (int i = 0; i < I; ++i) {
        const double row = trans_acc.row(i).sum();
        if (row > 0.0) next.trans.row(i) = trans_acc.row(i) / row;
    }
    for (int i = 0; i < I && G > 0; ++i) {
        const Vector shift = sum_dev[i] / weight(i);
        auto& e = next.gaussians[i];
        e.mean = current.gaussians[i].mean + shift;
        Matrix cov = sum_outer[i] / weight(i) - shift * shift.transpose();
        if (config.covariance == CovarianceType::diagonal) cov = Matrix(cov.diagonal().asDiagonal());
        e.cov = floor_covariance(cov);
    }
    for (int i = 0; i < I; ++i) {
        for (int j = 0; j < J; ++j) {
            const double total = counts[i][j].sum();
            if (total > 0.0) next.discretes[i][j] = counts[i][j] / total;
        }
    }
    next.clamp = constraints.fixed_entries;
    apply_clamp(next.discretes, next.clamp);
    return next;
}

FitResult fit_from(const ModelParameters& initial, std::span<const ObservationSequence> sequences,
                   const Constraints& constraints, const FitConfig& config) {
    config.validate();
    check_sequences(sequences);
    check_constraints(constraints, initial.num_states, initial.cardinalities());
    FitResult result;
    result.params = initial;
    result.params.clamp = constraints.fixed_entries;
    apply_clamp(result.params.discretes, result.params.clamp);
    require_valid(result.params);

    for (int iter = 0; iter < config.max_iterations; ++iter) {
        const EStepResult es = e_step(result.params, sequences, config.num_threads);
        const double ll = es.log_likelihood;
        if (!std::isfinite(ll)) throw NumericalError("log-likelihood is not finite");
        result.log_likelihood_trace.push_back(ll);
        const auto& trace = result.log_likelihood_trace;
        if (trace.size() >= 2) {
            const double prev = trace[trace.size() - 2];
            const double denom = prev != 0.0 ? std::abs(prev) : 1.0;
            if ((ll - prev) / denom < config.tolerance) {
                result.converged = true;
                break;
            }
        }
        if (iter + 1 == config.max_iterations) break;
        result.params = m_step(result.params, sequences, es.posteriors, constraints, config);
    }
    return result;
}

FitResult fit(std::span<const ObservationSequence> sequences, int num_states,
              const Constraints& constraints, const FitConfig& config) {
    config.validate();
    FitResult best;
    bool have_best = false;
    std::vector<std::string> errors(static_cast<std::size_t>(config.restarts));
    std::vector<std::vector<double>> traces(static_cast<std::size_t>(config.restarts));
    for (int r = 0; r < config.restarts; ++r) {
        FitConfig run = config;
        run.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
        try {
            const ModelParameters init = initialize(sequences, num_states, run, constraints);
            FitResult res = fit_from(init, sequences, constraints, run);
            res.restart_index = r;
            traces[r] = res.log_likelihood_trace;
            if (!have_best ||
                res.log_likelihood_trace.back() > best.log_likelihood_trace.back()) {
                best = std::move(res);
                have_best = true;
            }
        } catch (const NumericalError& e) {
            errors[r] = e.what();
        }
    }
    if (!have_best) {
        std::string msg = "all " + std::to_string(config.restarts) + " restarts failed:";
        for (int r = 0; r < config.restarts; ++r) msg += " [" + std::to_string(r) + "] " + errors[r];
        throw NumericalError(msg);
    }
    best.restart_errors = std::move(errors);
    best.restart_traces = std::move(traces);
    return best;
}

Matrix impute_missing(const ModelParameters& params, const ObservationSequence& seq,
                      const Posteriors& posteriors) {
    check_compatible(params, seq);
    const int I = params.num_states;
    const int G = params.num_continuous();
    if (posteriors.gamma.rows() != seq.length() || posteriors.gamma.cols() != I) {
        throw std::invalid_argument("impute_missing: posterior shape does not match sequence");
    }
    Matrix out = seq.continuous;
    std::unordered_map<std::uint64_t, std::vector<CompletionPlan>> plans;
    Vector values;
    for (Index t = 0; t < seq.length(); ++t) {
        if (seq.continuous_mask.row(t).all()) continue;
        const std::uint64_t key = pattern_key(seq, t);
        auto it = plans.find(key);
        if (it == plans.end()) {
            std::vector<CompletionPlan> per_state;
            for (int i = 0; i < I; ++i) per_state.push_back(make_plan(params.gaussians[i], key));
            it = plans.emplace(key, std::move(per_state)).first;
        }
        Vector mixed = Vector::Zero(G);
        for (int i = 0; i < I; ++i) {
            complete_with_plan(it->second[i], params.gaussians[i], seq, t, values);
            mixed += posteriors.gamma(t, i) * values;
        }
        for (int g = 0; g < G; ++g)
            if (!seq.continuous_mask(t, g)) out(t, g) = mixed(g);
    }
    return out;
}

}  // namespace hhmm
