#pragma once
// Domain types shared by every module: observation sequences with explicit
// missingness masks, HHMM parameters, clamping constraints and sleep labels.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hhmm/errors.hpp"

namespace hhmm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CategoryMatrix = Eigen::MatrixXi;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Sentinels written into masked-out cells. The masks are authoritative;
// nothing reads a cell whose mask bit is false.
inline constexpr double kMissingValue = std::numeric_limits<double>::quiet_NaN();
inline constexpr int kMissingCategory = -1;

inline constexpr double kCovarianceFloor = 1e-6;
inline constexpr double kProbabilityTolerance = 1e-9;
inline constexpr double kSymmetryTolerance = 1e-9;

// One run of time-aligned slots. Continuous features occupy the first G
// entries of feature_names, discrete features the following J.
struct ObservationSequence {
    std::string id;
    std::vector<std::int64_t> timestamps;  // seconds since the Unix epoch
    Matrix continuous;                     // T x G
    MaskMatrix continuous_mask;            // T x G, true = observed
    CategoryMatrix discrete;               // T x J
    MaskMatrix discrete_mask;              // T x J, true = observed
    std::vector<std::string> feature_names;
    std::vector<int> cardinalities;        // length J, each >= 2

    Index length() const { return static_cast<Index>(timestamps.size()); }
    int num_continuous() const { return static_cast<int>(continuous.cols()); }
    int num_discrete() const { return static_cast<int>(discrete.cols()); }

    // True when no feature at slot t is observed.
    bool fully_missing(Index t) const {
        return !continuous_mask.row(t).any() && !discrete_mask.row(t).any();
    }
};

// Builds an all-missing sequence of the given shape; callers fill cells and
// flip mask bits.
ObservationSequence make_empty_sequence(std::vector<std::int64_t> timestamps,
                                        int num_continuous,
                                        std::vector<int> cardinalities,
                                        std::vector<std::string> feature_names = {});

// Throws DataError when shapes, timestamps or observed categories are
// inconsistent.
void check_sequence(const ObservationSequence& seq);

struct GaussianEmission {
    Vector mean;  // length G
    Matrix cov;   // G x G, symmetric positive definite
};

// A fixed discrete emission probability p(feature = category | state).
struct ClampEntry {
    int state = 0;
    int feature = 0;  // discrete feature index in [0, J)
    int category = 0;
    double probability = 0.0;

    bool operator==(const ClampEntry&) const = default;
};

struct ModelParameters {
    int num_states = 0;
    Vector pi;                                     // length I
    Matrix trans;                                  // I x I, row-stochastic
    std::vector<GaussianEmission> gaussians;       // length I
    std::vector<std::vector<Vector>> discretes;    // [state][feature] -> length C_j
    std::vector<ClampEntry> clamp;

    int num_continuous() const {
        return gaussians.empty() ? 0 : static_cast<int>(gaussians.front().mean.size());
    }
    int num_discrete() const {
        return discretes.empty() ? 0 : static_cast<int>(discretes.front().size());
    }
    std::vector<int> cardinalities() const;
};

struct Constraints {
    std::vector<ClampEntry> fixed_entries;
    std::vector<int> sleep_states;
};

struct Violation {
    std::string invariant;  // e.g. "pi", "trans", "covariance floor"
    std::string location;   // e.g. "row 1", "state 0"
    double magnitude = 0.0; // offending value (sum, eigenvalue, asymmetry, ...)
    std::string message;
};

struct ValidationResult {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

ValidationResult validate_model(const ModelParameters& params);

// Throws std::invalid_argument carrying the validation summary.
void require_valid(const ModelParameters& params);

// Throws std::invalid_argument when the parameters cannot score the sequence.
void check_compatible(const ModelParameters& params, const ObservationSequence& seq);

// Symmetrizes and, if Cholesky fails or the smallest eigenvalue is below the
// floor, shifts the diagonal so the smallest eigenvalue clears it.
Matrix floor_covariance(const Matrix& cov, double floor = kCovarianceFloor);

// Overwrites clamped entries with their fixed values and rescales the free
// entries of each affected table so it sums to one.
void apply_clamp(std::vector<std::vector<Vector>>& discretes,
                 std::span<const ClampEntry> clamp);

// Uniform pi and trans, zero means, identity covariances, uniform tables.
ModelParameters make_uniform_model(int num_states, int num_continuous,
                                   std::span<const int> cardinalities);

inline constexpr std::int8_t kUnlabeled = -1;

enum class LabelSource { wearable, model };

// Per-slot sleep labels: 1 asleep, 0 awake, kUnlabeled where no label
// exists after alignment.
struct SleepLabels {
    std::vector<std::int64_t> timestamps;
    std::vector<std::int8_t> label;
    LabelSource source = LabelSource::model;

    std::size_t size() const { return label.size(); }
};

// Slot is asleep iff its state belongs to constraints.sleep_states.
SleepLabels binarize_states(std::span<const int> path, int num_states,
                            const Constraints& constraints,
                            std::span<const std::int64_t> timestamps = {});

}  // namespace hhmm
