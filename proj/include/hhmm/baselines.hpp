#pragma once
// Comparison methods for sleep/wake classification (mean/zero and mean/mode
// imputers, two-cluster k-means and GMM, dummy classifiers) and the
// accuracy/specificity/sensitivity metrics. Positive class = asleep.

#include <cstdint>
#include <span>
#include <vector>

#include "hhmm/clustering.hpp"
#include "hhmm/core.hpp"

namespace hhmm {

enum class Imputer {
    mean_zero = 1,  // continuous: global mean; discrete: 0
    mean_mode = 2,  // continuous: global mean; discrete: per-sequence mode, ties to 0
};

// Both return copies with every mask bit set; observed cells are untouched.
// A feature that is never observed in any sequence is a DataError.
std::vector<ObservationSequence> impute_method1(std::span<const ObservationSequence> sequences);
std::vector<ObservationSequence> impute_method2(std::span<const ObservationSequence> sequences);
std::vector<ObservationSequence> impute(std::span<const ObservationSequence> sequences,
                                        Imputer imputer);

enum class ClusterMethod { kmeans, gmm };

struct SleepClusterModel {
    ClusterMethod method = ClusterMethod::kmeans;
    Imputer imputer = Imputer::mean_zero;
    Vector center;          // standardization applied before clustering
    Vector scale;
    Matrix centroids;       // k-means, standardized space
    GaussianMixture mixture;
    int asleep_cluster = 0; // cluster with the lower mean actigraphy
    int actigraphy_feature = 0;
};

// Pools every slot of the training sequences after imputation.
SleepClusterModel fit_kmeans_sleep(std::span<const ObservationSequence> train, Imputer imputer,
                                   std::uint64_t seed, int actigraphy_feature = 0);
SleepClusterModel fit_gmm_sleep(std::span<const ObservationSequence> train, Imputer imputer,
                                std::uint64_t seed, int actigraphy_feature = 0);

std::vector<SleepLabels> predict_sleep(const SleepClusterModel& model,
                                       std::span<const ObservationSequence> sequences);

// Fit and label the same sequences.
std::vector<SleepLabels> kmeans_sleep(std::span<const ObservationSequence> sequences,
                                      Imputer imputer, std::uint64_t seed,
                                      int actigraphy_feature = 0);
std::vector<SleepLabels> gmm_sleep(std::span<const ObservationSequence> sequences,
                                   Imputer imputer, std::uint64_t seed,
                                   int actigraphy_feature = 0);

// Majority class of the labeled slots of `truth` (ties to awake), for every slot.
SleepLabels dummy_most_frequent(const SleepLabels& truth);
// Independent fair coin per slot.
SleepLabels dummy_uniform(std::uint64_t seed, std::span<const std::int64_t> timestamps);
SleepLabels dummy_uniform(std::uint64_t seed, std::size_t length);

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    std::int64_t fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
};

struct Evaluation {
    ConfusionCounts counts;
    double accuracy = 0.0;
    double specificity = 0.0;   // NaN when there are no awake slots
    double sensitivity = 0.0;   // NaN when there are no asleep slots
    bool specificity_defined = true;
    bool sensitivity_defined = true;
};

// Slots unlabeled in either input are skipped. Throws DataError when no slot
// carries both labels.
Evaluation evaluate(const SleepLabels& predicted, const SleepLabels& truth);
Evaluation evaluate_counts(const ConfusionCounts& counts);

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;   // sample standard deviation, 0 for one value
    int count = 0;      // sequences with a defined value
};

struct EvaluationSummary {
    MetricSummary accuracy;
    MetricSummary specificity;
    MetricSummary sensitivity;
};

// Mean and spread across per-sequence evaluations, skipping undefined ratios.
EvaluationSummary summarize(std::span<const Evaluation> evaluations);

}  // namespace hhmm
