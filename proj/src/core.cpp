#include "hhmm/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hhmm {

namespace {

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

void add_violation(ValidationResult& out, std::string invariant, std::string location,
                   double magnitude, std::string message) {
    out.violations.push_back({std::move(invariant), std::move(location), magnitude,
                              std::move(message)});
}

void check_distribution(ValidationResult& out, const std::string& name,
                        const std::string& location, const Vector& p) {
    for (Index k = 0; k < p.size(); ++k) {
        if (!std::isfinite(p(k)) || p(k) < 0.0 || p(k) > 1.0) {
            add_violation(out, name, location + " entry " + std::to_string(k), p(k),
                          name + " " + location + " entry " + std::to_string(k) +
                              " is not a probability: " + format_number(p(k)));
        }
    }
    const double s = p.sum();
    if (std::abs(s - 1.0) > kProbabilityTolerance) {
        std::string where = location.empty() ? "" : " " + location;
        add_violation(out, name, location, s,
                      name + where + " sums to " + format_number(s));
    }
}

}  // namespace

ObservationSequence make_empty_sequence(std::vector<std::int64_t> timestamps,
                                        int num_continuous,
                                        std::vector<int> cardinalities,
                                        std::vector<std::string> feature_names) {
    ObservationSequence seq;
    const Index T = static_cast<Index>(timestamps.size());
    const Index J = static_cast<Index>(cardinalities.size());
    seq.timestamps = std::move(timestamps);
    seq.continuous = Matrix::Constant(T, num_continuous, kMissingValue);
    seq.continuous_mask = MaskMatrix::Constant(T, num_continuous, false);
    seq.discrete = CategoryMatrix::Constant(T, J, kMissingCategory);
    seq.discrete_mask = MaskMatrix::Constant(T, J, false);
    if (feature_names.empty()) {
        for (int g = 0; g < num_continuous; ++g) feature_names.push_back("c" + std::to_string(g));
        for (Index j = 0; j < J; ++j) feature_names.push_back("d" + std::to_string(j));
    }
    seq.feature_names = std::move(feature_names);
    seq.cardinalities = std::move(cardinalities);
    return seq;
}

void check_sequence(const ObservationSequence& seq) {
    const Index T = seq.length();
    const std::string who = seq.id.empty() ? "sequence" : "sequence '" + seq.id + "'";
    if (T < 1) throw DataError(who + " has no slots");
    if (seq.continuous.rows() != T || seq.continuous_mask.rows() != T ||
        seq.discrete.rows() != T || seq.discrete_mask.rows() != T) {
        throw DataError(who + ": matrices do not share the timestamp row count");
    }
    if (seq.continuous_mask.cols() != seq.continuous.cols() ||
        seq.discrete_mask.cols() != seq.discrete.cols()) {
        throw DataError(who + ": mask shape differs from value shape");
    }
    if (static_cast<Index>(seq.cardinalities.size()) != seq.discrete.cols()) {
        throw DataError(who + ": one cardinality per discrete feature is required");
    }
    if (!seq.feature_names.empty() &&
        static_cast<Index>(seq.feature_names.size()) !=
            seq.continuous.cols() + seq.discrete.cols()) {
        throw DataError(who + ": feature_names must list G + J names");
    }
    for (Index t = 1; t < T; ++t) {
        if (seq.timestamps[t] <= seq.timestamps[t - 1]) {
            throw DataError(who + ": timestamps not strictly increasing at slot " +
                            std::to_string(t));
        }
    }
    for (Index j = 0; j < seq.discrete.cols(); ++j) {
        const int c = seq.cardinalities[j];
        if (c < 2) throw DataError(who + ": discrete feature " + std::to_string(j) +
                                   " needs cardinality >= 2");
        for (Index t = 0; t < T; ++t) {
            if (!seq.discrete_mask(t, j)) continue;
            const int v = seq.discrete(t, j);
            if (v < 0 || v >= c) {
                throw DataError(who + ": category " + std::to_string(v) + " out of range at slot " +
                                std::to_string(t) + ", feature " + std::to_string(j));
            }
        }
    }
    for (Index t = 0; t < T; ++t) {
        for (Index g = 0; g < seq.continuous.cols(); ++g) {
            if (seq.continuous_mask(t, g) && !std::isfinite(seq.continuous(t, g))) {
                throw DataError(who + ": observed continuous value is not finite at slot " +
                                std::to_string(t));
            }
        }
    }
}

std::vector<int> ModelParameters::cardinalities() const {
    std::vector<int> out;
    if (discretes.empty()) return out;
    for (const auto& d : discretes.front()) out.push_back(static_cast<int>(d.size()));
    return out;
}

std::string ValidationResult::summary() const {
    if (ok()) return "ok";
    std::string s;
    for (const auto& v : violations) {
        if (!s.empty()) s += "; ";
        s += v.message;
    }
    return s;
}

ValidationResult validate_model(const ModelParameters& params) {
    ValidationResult out;
    const int I = params.num_states;
    if (I < 1) {
        add_violation(out, "num_states", "", I, "num_states must be >= 1");
        return out;
    }
    if (params.pi.size() != I) {
        add_violation(out, "pi", "", static_cast<double>(params.pi.size()),
                      "pi has length " + std::to_string(params.pi.size()) + ", expected " +
                          std::to_string(I));
    } else {
        check_distribution(out, "pi", "", params.pi);
    }
    if (params.trans.rows() != I || params.trans.cols() != I) {
        add_violation(out, "trans", "", static_cast<double>(params.trans.rows()),
                      "trans must be " + std::to_string(I) + "x" + std::to_string(I));
    } else {
        for (int i = 0; i < I; ++i) {
            check_distribution(out, "trans", "row " + std::to_string(i),
                               params.trans.row(i).transpose());
        }
    }

    if (static_cast<int>(params.gaussians.size()) != I) {
        add_violation(out, "gaussians", "", static_cast<double>(params.gaussians.size()),
                      "expected one Gaussian emission per state");
    } else {
        const Index G = params.gaussians.front().mean.size();
        for (int i = 0; i < I; ++i) {
            const auto& e = params.gaussians[i];
            const std::string where = "state " + std::to_string(i);
            if (e.mean.size() != G || e.cov.rows() != G || e.cov.cols() != G) {
                add_violation(out, "gaussians", where, static_cast<double>(e.mean.size()),
                              "Gaussian dimensions inconsistent for " + where);
                continue;
            }
            if (G == 0) continue;
            if (!e.mean.allFinite() || !e.cov.allFinite()) {
                add_violation(out, "gaussians", where, 0.0, "non-finite Gaussian entry for " + where);
                continue;
            }
            const double asym = (e.cov - e.cov.transpose()).cwiseAbs().maxCoeff();
            if (asym > kSymmetryTolerance) {
                add_violation(out, "covariance symmetry", where, asym,
                              "covariance of " + where + " asymmetric by " + format_number(asym));
            }
            const Matrix sym = 0.5 * (e.cov + e.cov.transpose());
            Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
            const double lmin = es.eigenvalues().minCoeff();
            // Relative slack absorbs rounding in the floor shift itself.
            if (lmin < kCovarianceFloor * (1.0 - 1e-6)) {
                add_violation(out, "covariance floor", where, lmin,
                              "covariance of " + where + " has minimum eigenvalue " +
                                  format_number(lmin) + " below covariance floor " +
                                  format_number(kCovarianceFloor));
            }
        }
    }

    if (static_cast<int>(params.discretes.size()) != I) {
        add_violation(out, "discretes", "", static_cast<double>(params.discretes.size()),
                      "expected one set of discrete tables per state");
    } else {
        const auto J = params.discretes.front().size();
        for (int i = 0; i < I; ++i) {
            if (params.discretes[i].size() != J) {
                add_violation(out, "discretes", "state " + std::to_string(i),
                              static_cast<double>(params.discretes[i].size()),
                              "discrete feature count differs for state " + std::to_string(i));
                continue;
            }
            for (std::size_t j = 0; j < J; ++j) {
                const auto& d = params.discretes[i][j];
                if (d.size() != params.discretes.front()[j].size() || d.size() < 2) {
                    add_violation(out, "discretes", "state " + std::to_string(i),
                                  static_cast<double>(d.size()),
                                  "discrete table size mismatch for state " + std::to_string(i) +
                                      ", feature " + std::to_string(j));
                    continue;
                }
                check_distribution(out, "discrete",
                                   "state " + std::to_string(i) + " feature " + std::to_string(j),
                                   d);
            }
        }
        std::map<std::pair<int, int>, double> fixed_mass;
        for (const auto& c : params.clamp) {
            const std::string where = "clamp (" + std::to_string(c.state) + "," +
                                      std::to_string(c.feature) + "," +
                                      std::to_string(c.category) + ")";
            if (c.state < 0 || c.state >= I || c.feature < 0 ||
                c.feature >= static_cast<int>(J) || c.category < 0 ||
                c.category >= params.discretes.front()[c.feature].size()) {
                add_violation(out, "clamp", where, 0.0, where + " out of range");
                continue;
            }
            if (c.probability < 0.0 || c.probability > 1.0) {
                add_violation(out, "clamp", where, c.probability,
                              where + " probability not in [0,1]");
                continue;
            }
            const double held = params.discretes[c.state][c.feature](c.category);
            if (held != c.probability) {
                add_violation(out, "clamp", where, held,
                              where + " holds " + format_number(held) + " instead of " +
                                  format_number(c.probability));
            }
            fixed_mass[{c.state, c.feature}] += c.probability;
        }
        for (const auto& [key, mass] : fixed_mass) {
            if (mass > 1.0 + kProbabilityTolerance) {
                add_violation(out, "clamp", "state " + std::to_string(key.first), mass,
                              "clamped probabilities for state " + std::to_string(key.first) +
                                  " feature " + std::to_string(key.second) + " sum to " +
                                  format_number(mass));
            }
        }
    }
    return out;
}

void require_valid(const ModelParameters& params) {
    const auto verdict = validate_model(params);
    if (!verdict.ok()) throw std::invalid_argument("invalid model: " + verdict.summary());
}

void check_compatible(const ModelParameters& params, const ObservationSequence& seq) {
    if (params.num_continuous() != seq.num_continuous() && params.num_states > 0) {
        throw std::invalid_argument("model has " + std::to_string(params.num_continuous()) +
                                    " continuous features, sequence has " +
                                    std::to_string(seq.num_continuous()));
    }
    if (params.cardinalities() != seq.cardinalities) {
        throw std::invalid_argument("discrete feature cardinalities differ between model and sequence");
    }
}

Matrix floor_covariance(const Matrix& cov, double floor) {
    Matrix sym = 0.5 * (cov + cov.transpose());
    if (sym.rows() == 0) return sym;
    Eigen::LLT<Matrix> llt(sym);
    bool needs_shift = llt.info() != Eigen::Success;
    double lmin = 0.0;
    if (!needs_shift) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
        lmin = es.eigenvalues().minCoeff();
        needs_shift = lmin < floor;
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
        lmin = es.eigenvalues().minCoeff();
    }
    if (needs_shift) {
        // Land at twice the floor so rounding cannot dip back below it.
        sym.diagonal().array() += 2.0 * floor - lmin;
    }
    return sym;
}

void apply_clamp(std::vector<std::vector<Vector>>& discretes, std::span<const ClampEntry> clamp) {
    std::map<std::pair<int, int>, std::vector<const ClampEntry*>> groups;
    for (const auto& c : clamp) groups[{c.state, c.feature}].push_back(&c);
    for (const auto& [key, entries] : groups) {
        if (key.first < 0 || key.first >= static_cast<int>(discretes.size()) || key.second < 0 ||
            key.second >= static_cast<int>(discretes[key.first].size())) {
            throw std::invalid_argument("clamp entry references an unknown state or feature");
        }
        Vector& d = discretes[key.first][key.second];
        std::vector<bool> fixed(d.size(), false);
        double fixed_mass = 0.0;
        for (const auto* c : entries) {
            if (c->category < 0 || c->category >= d.size()) {
                throw std::invalid_argument("clamp entry references an unknown category");
            }
            fixed[c->category] = true;
        }
        for (const auto* c : entries) fixed_mass += c->probability;
        double free_mass = 0.0;
        Index free_count = 0;
        for (Index v = 0; v < d.size(); ++v) {
            if (!fixed[v]) {
                free_mass += d(v);
                ++free_count;
            }
        }
        const double target = std::max(0.0, 1.0 - fixed_mass);
        for (Index v = 0; v < d.size(); ++v) {
            if (fixed[v]) continue;
            d(v) = free_mass > 0.0 ? d(v) * target / free_mass
                                   : target / static_cast<double>(free_count);
        }
        for (const auto* c : entries) d(c->category) = c->probability;
    }
}

ModelParameters make_uniform_model(int num_states, int num_continuous,
                                   std::span<const int> cardinalities) {
    if (num_states < 1) throw std::invalid_argument("num_states must be >= 1");
    ModelParameters p;
    p.num_states = num_states;
    p.pi = Vector::Constant(num_states, 1.0 / num_states);
    p.trans = Matrix::Constant(num_states, num_states, 1.0 / num_states);
    for (int i = 0; i < num_states; ++i) {
        p.gaussians.push_back({Vector::Zero(num_continuous),
                               Matrix::Identity(num_continuous, num_continuous)});
        std::vector<Vector> tables;
        for (int c : cardinalities) tables.push_back(Vector::Constant(c, 1.0 / c));
        p.discretes.push_back(std::move(tables));
    }
    return p;
}

SleepLabels binarize_states(std::span<const int> path, int num_states,
                            const Constraints& constraints,
                            std::span<const std::int64_t> timestamps) {
    if (constraints.sleep_states.empty()) {
        throw std::invalid_argument("binarize_states: sleep_states is empty");
    }
    if (!timestamps.empty() && timestamps.size() != path.size()) {
        throw std::invalid_argument("binarize_states: timestamps and path lengths differ");
    }
    std::vector<bool> asleep(static_cast<std::size_t>(num_states), false);
    for (int s : constraints.sleep_states) {
        if (s < 0 || s >= num_states) {
            throw std::invalid_argument("sleep state " + std::to_string(s) + " out of range");
        }
        asleep[s] = true;
    }
    SleepLabels out;
    out.source = LabelSource::model;
    out.timestamps.assign(timestamps.begin(), timestamps.end());
    out.label.reserve(path.size());
    for (std::size_t t = 0; t < path.size(); ++t) {
        const int s = path[t];
        if (s < 0 || s >= num_states) {
            throw std::invalid_argument("state index " + std::to_string(s) + " at slot " +
                                        std::to_string(t) + " out of range");
        }
        out.label.push_back(asleep[s] ? 1 : 0);
    }
    return out;
}

}  // namespace hhmm
