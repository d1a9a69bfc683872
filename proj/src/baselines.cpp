#include "hhmm/baselines.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace hhmm {

namespace {

Vector global_continuous_means(std::span<const ObservationSequence> sequences) {
    const int G = sequences.front().num_continuous();
    Vector sum = Vector::Zero(G);
    Vector count = Vector::Zero(G);
    for (const auto& seq : sequences) {
        for (Index t = 0; t < seq.length(); ++t) {
            for (int g = 0; g < G; ++g) {
                if (!seq.continuous_mask(t, g)) continue;
                sum(g) += seq.continuous(t, g);
                count(g) += 1.0;
            }
        }
    }
    for (int g = 0; g < G; ++g) {
        if (count(g) == 0.0) {
            throw DataError("continuous feature " + std::to_string(g) + " is never observed");
        }
    }
    return sum.cwiseQuotient(count);
}

void check_discrete_observed(std::span<const ObservationSequence> sequences) {
    const int J = sequences.front().num_discrete();
    for (int j = 0; j < J; ++j) {
        bool seen = false;
        for (const auto& seq : sequences) {
            if (seq.discrete_mask.col(j).any()) {
                seen = true;
                break;
            }
        }
        if (!seen) throw DataError("discrete feature " + std::to_string(j) + " is never observed");
    }
}

void check_schema(std::span<const ObservationSequence> sequences) {
    if (sequences.empty()) throw std::invalid_argument("no sequences to impute");
    for (const auto& seq : sequences) {
        if (seq.num_continuous() != sequences.front().num_continuous() ||
            seq.cardinalities != sequences.front().cardinalities) {
            throw DataError("sequences do not share a feature schema");
        }
    }
}

std::vector<ObservationSequence> impute_impl(std::span<const ObservationSequence> sequences,
                                             bool use_mode) {
    check_schema(sequences);
    const Vector means = global_continuous_means(sequences);
    check_discrete_observed(sequences);
    std::vector<ObservationSequence> out(sequences.begin(), sequences.end());
    for (auto& seq : out) {
        for (Index t = 0; t < seq.length(); ++t) {
            for (int g = 0; g < seq.num_continuous(); ++g) {
                if (!seq.continuous_mask(t, g)) seq.continuous(t, g) = means(g);
            }
        }
        for (int j = 0; j < seq.num_discrete(); ++j) {
            int fill = 0;
            if (use_mode) {
                std::vector<Index> counts(static_cast<std::size_t>(seq.cardinalities[j]), 0);
                for (Index t = 0; t < seq.length(); ++t)
                    if (seq.discrete_mask(t, j)) ++counts[seq.discrete(t, j)];
                for (int c = 1; c < seq.cardinalities[j]; ++c)
                    if (counts[c] > counts[fill]) fill = c;
            }
            for (Index t = 0; t < seq.length(); ++t)
                if (!seq.discrete_mask(t, j)) seq.discrete(t, j) = fill;
        }
        seq.continuous_mask.setConstant(true);
        seq.discrete_mask.setConstant(true);
    }
    return out;
}

Matrix slot_features(std::span<const ObservationSequence> completed) {
    Index rows = 0;
    for (const auto& seq : completed) rows += seq.length();
    const int G = completed.front().num_continuous();
    const int J = completed.front().num_discrete();
    Matrix x(rows, G + J);
    Index r = 0;
    for (const auto& seq : completed) {
        for (Index t = 0; t < seq.length(); ++t, ++r) {
            for (int g = 0; g < G; ++g) x(r, g) = seq.continuous(t, g);
            for (int j = 0; j < J; ++j) x(r, G + j) = static_cast<double>(seq.discrete(t, j));
        }
    }
    return x;
}

Matrix standardize(const Matrix& x, const Vector& center, const Vector& scale) {
    return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

SleepClusterModel prepare(std::span<const ObservationSequence> train, Imputer imputer,
                          int actigraphy_feature, Matrix& standardized) {
    const auto completed = impute(train, imputer);
    const Matrix x = slot_features(completed);
    if (actigraphy_feature < 0 || actigraphy_feature >= x.cols()) {
        throw std::invalid_argument("actigraphy feature index out of range");
    }
    SleepClusterModel model;
    model.imputer = imputer;
    model.actigraphy_feature = actigraphy_feature;
    model.center = x.colwise().mean().transpose();
    model.scale = ((x.rowwise() - model.center.transpose()).colwise().squaredNorm() /
                   static_cast<double>(x.rows()))
                      .cwiseSqrt()
                      .transpose();
    for (Index c = 0; c < model.scale.size(); ++c)
        if (!(model.scale(c) > 0.0)) model.scale(c) = 1.0;
    standardized = standardize(x, model.center, model.scale);
    return model;
}

int lower_actigraphy(const Matrix& centers, int feature) {
    return centers(1, feature) < centers(0, feature) ? 1 : 0;
}

}  // namespace

std::vector<ObservationSequence> impute_method1(std::span<const ObservationSequence> sequences) {
    return impute_impl(sequences, false);
}

std::vector<ObservationSequence> impute_method2(std::span<const ObservationSequence> sequences) {
    return impute_impl(sequences, true);
}

std::vector<ObservationSequence> impute(std::span<const ObservationSequence> sequences,
                                        Imputer imputer) {
    return imputer == Imputer::mean_zero ? impute_method1(sequences) : impute_method2(sequences);
}

SleepClusterModel fit_kmeans_sleep(std::span<const ObservationSequence> train, Imputer imputer,
                                   std::uint64_t seed, int actigraphy_feature) {
    Matrix x;
    SleepClusterModel model = prepare(train, imputer, actigraphy_feature, x);
    model.method = ClusterMethod::kmeans;
    KMeansOptions opts;
    opts.max_iterations = 300;
    opts.tolerance = 1e-6;
    model.centroids = kmeans(x, 2, seed, opts).centroids;
    model.asleep_cluster = lower_actigraphy(model.centroids, actigraphy_feature);
    return model;
}

SleepClusterModel fit_gmm_sleep(std::span<const ObservationSequence> train, Imputer imputer,
                                std::uint64_t seed, int actigraphy_feature) {
    Matrix x;
    SleepClusterModel model = prepare(train, imputer, actigraphy_feature, x);
    model.method = ClusterMethod::gmm;
    model.mixture = fit_gmm(x, 2, seed);
    Matrix centers(2, x.cols());
    centers.row(0) = model.mixture.means[0].transpose();
    centers.row(1) = model.mixture.means[1].transpose();
    model.asleep_cluster = lower_actigraphy(centers, actigraphy_feature);
    return model;
}

std::vector<SleepLabels> predict_sleep(const SleepClusterModel& model,
                                       std::span<const ObservationSequence> sequences) {
    const auto completed = impute(sequences, model.imputer);
    std::vector<SleepLabels> out;
    out.reserve(completed.size());
    for (const auto& seq : completed) {
        const Matrix x = standardize(slot_features(std::span(&seq, 1)), model.center, model.scale);
        SleepLabels labels;
        labels.source = LabelSource::model;
        labels.timestamps = seq.timestamps;
        labels.label.resize(static_cast<std::size_t>(seq.length()));
        if (model.method == ClusterMethod::kmeans) {
            for (Index t = 0; t < x.rows(); ++t) {
                labels.label[t] = nearest_centroid(model.centroids, x.row(t)) == model.asleep_cluster;
            }
        } else {
            const Matrix resp = gmm_responsibilities(model.mixture, x);
            for (Index t = 0; t < x.rows(); ++t) {
                const int arg = resp(t, 1) > resp(t, 0) ? 1 : 0;
                labels.label[t] = arg == model.asleep_cluster;
            }
        }
        out.push_back(std::move(labels));
    }
    return out;
}

std::vector<SleepLabels> kmeans_sleep(std::span<const ObservationSequence> sequences,
                                      Imputer imputer, std::uint64_t seed,
                                      int actigraphy_feature) {
    return predict_sleep(fit_kmeans_sleep(sequences, imputer, seed, actigraphy_feature), sequences);
}

std::vector<SleepLabels> gmm_sleep(std::span<const ObservationSequence> sequences,
                                   Imputer imputer, std::uint64_t seed, int actigraphy_feature) {
    return predict_sleep(fit_gmm_sleep(sequences, imputer, seed, actigraphy_feature), sequences);
}

SleepLabels dummy_most_frequent(const SleepLabels& truth) {
    std::size_t asleep = 0, awake = 0;
    for (auto l : truth.label) {
        if (l == 1) ++asleep;
        else if (l == 0) ++awake;
    }
    SleepLabels out;
    out.source = LabelSource::model;
    out.timestamps = truth.timestamps;
    out.label.assign(truth.label.size(), asleep > awake ? 1 : 0);
    return out;
}

SleepLabels dummy_uniform(std::uint64_t seed, std::span<const std::int64_t> timestamps) {
    SleepLabels out = dummy_uniform(seed, timestamps.size());
    out.timestamps.assign(timestamps.begin(), timestamps.end());
    return out;
}

SleepLabels dummy_uniform(std::uint64_t seed, std::size_t length) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    SleepLabels out;
    out.source = LabelSource::model;
    out.label.resize(length);
    for (auto& l : out.label) l = coin(rng) ? 1 : 0;
    return out;
}

Evaluation evaluate_counts(const ConfusionCounts& c) {
    if (c.total() == 0) throw DataError("evaluate: no slot carries both a prediction and a truth label");
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    Evaluation e;
    e.counts = c;
    e.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    e.sensitivity_defined = c.tp + c.fn > 0;
    e.specificity_defined = c.tn + c.fp > 0;
    e.sensitivity = e.sensitivity_defined ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : nan;
    e.specificity = e.specificity_defined ? static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp) : nan;
    return e;
}

Evaluation evaluate(const SleepLabels& predicted, const SleepLabels& truth) {
    if (predicted.size() != truth.size()) {
        throw std::invalid_argument("evaluate: prediction and truth are not aligned");
    }
    if (!predicted.timestamps.empty() && !truth.timestamps.empty() &&
        predicted.timestamps != truth.timestamps) {
        throw std::invalid_argument("evaluate: prediction and truth timestamps differ");
    }
    ConfusionCounts c;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const auto p = predicted.label[t];
        const auto y = truth.label[t];
        if (p == kUnlabeled || y == kUnlabeled) continue;
        if (y == 1) (p == 1 ? c.tp : c.fn)++;
        else (p == 1 ? c.fp : c.tn)++;
    }
    return evaluate_counts(c);
}

EvaluationSummary summarize(std::span<const Evaluation> evaluations) {
    auto summary = [&](auto get) {
        MetricSummary s;
        std::vector<double> values;
        for (const auto& e : evaluations) {
            const double v = get(e);
            if (!std::isnan(v)) values.push_back(v);
        }
        s.count = static_cast<int>(values.size());
        if (values.empty()) {
            s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
            return s;
        }
        double sum = 0.0;
        for (double v : values) sum += v;
        s.mean = sum / static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
        return s;
    };
    EvaluationSummary out;
    out.accuracy = summary([](const Evaluation& e) { return e.accuracy; });
    out.specificity = summary([](const Evaluation& e) { return e.specificity; });
    out.sensitivity = summary([](const Evaluation& e) { return e.sensitivity; });
    return out;
}

}  // namespace hhmm
