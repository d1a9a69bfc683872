#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hhmm/core.hpp"

namespace hhmm {

struct SampleOptions {
    std::int64_t start_time = 0;       // timestamp of slot 0
    std::int64_t slot_seconds = 600;   // 10-minute slots
    std::vector<std::string> feature_names;
    std::string id;
};

struct SampledSequence {
    std::vector<int> states;
    ObservationSequence sequence;
};

// Ancestral sampling of the joint factorization: s_1 ~ pi, s_t ~ A[s_{t-1}],
// continuous rows from the state's Gaussian, discrete cells from its
// tables. Each cell is then hidden independently with its feature's rate
// (G + J rates, or empty for none). Deterministic for a fixed seed.
SampledSequence sample_sequence(const ModelParameters& params, Index length,
                                std::span<const double> missing_rates, std::uint64_t seed,
                                const SampleOptions& options = {});

// Deterministic seed derivation for sub-tasks (restarts, per-sequence draws).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Draws an index from a discrete distribution whose entries sum to one.
int sample_categorical(const Vector& probabilities, std::mt19937_64& rng);

}  // namespace hhmm
