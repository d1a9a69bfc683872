#include "hhmm/sampling.hpp"

#include <stdexcept>

namespace hhmm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over the combined words
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

int sample_categorical(const Vector& probabilities, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    int last_positive = 0;
    for (Index k = 0; k < probabilities.size(); ++k) {
        if (probabilities(k) <= 0.0) continue;
        acc += probabilities(k);
        last_positive = static_cast<int>(k);
        if (u < acc) return last_positive;
    }
    return last_positive;
}

SampledSequence sample_sequence(const ModelParameters& params, Index length,
                                std::span<const double> missing_rates, std::uint64_t seed,
                                const SampleOptions& options) {
    require_valid(params);
    if (length < 1) throw std::invalid_argument("sample_sequence: length must be >= 1");
    const int G = params.num_continuous();
    const std::vector<int> cards = params.cardinalities();
    const int J = static_cast<int>(cards.size());
    if (!missing_rates.empty() && static_cast<int>(missing_rates.size()) != G + J) {
        throw std::invalid_argument("sample_sequence: expected one missing rate per feature");
    }
    for (double r : missing_rates) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw std::invalid_argument("sample_sequence: missing rates must lie in [0,1]");
        }
    }

    std::vector<std::int64_t> ts(static_cast<std::size_t>(length));
    for (Index t = 0; t < length; ++t) ts[t] = options.start_time + t * options.slot_seconds;
    SampledSequence out;
    out.sequence = make_empty_sequence(std::move(ts), G, cards, options.feature_names);
    out.sequence.id = options.id;
    out.states.resize(static_cast<std::size_t>(length));

    std::vector<Matrix> chol(params.num_states);
    for (int i = 0; i < params.num_states && G > 0; ++i) {
        chol[i] = Eigen::LLT<Matrix>(params.gaussians[i].cov).matrixL();
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto& seq = out.sequence;
    int state = 0;
    for (Index t = 0; t < length; ++t) {
        state = t == 0 ? sample_categorical(params.pi, rng)
                       : sample_categorical(params.trans.row(state).transpose(), rng);
        out.states[t] = state;
        if (G > 0) {
            Vector z(G);
            for (int g = 0; g < G; ++g) z(g) = normal(rng);
            seq.continuous.row(t) = (params.gaussians[state].mean + chol[state] * z).transpose();
        }
        for (int j = 0; j < J; ++j) {
            seq.discrete(t, j) = sample_categorical(params.discretes[state][j], rng);
        }
        for (int f = 0; f < G + J; ++f) {
            const double rate = missing_rates.empty() ? 0.0 : missing_rates[f];
            const bool observed = !(unit(rng) < rate);
            if (f < G) {
                seq.continuous_mask(t, f) = observed;
                if (!observed) seq.continuous(t, f) = kMissingValue;
            } else {
                seq.discrete_mask(t, f - G) = observed;
                if (!observed) seq.discrete(t, f - G) = kMissingCategory;
            }
        }
    }
    return out;
}

}  // namespace hhmm
