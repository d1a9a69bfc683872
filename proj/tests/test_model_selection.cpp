#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hhmm/model_selection.hpp"
#include "synthetic.hpp"

using namespace hhmm;

namespace {

int formula(int I, int G, const std::vector<int>& cards, bool full) {
    int k = (I - 1) + I * (I - 1) + I * G + I * (full ? G * (G + 1) / 2 : G);
    for (int c : cards) k += I * (c - 1);
    return k;
}

}  // namespace

TEST_CASE("parameter counts") {
    const std::vector<int> one{2}, two{2, 2};
    CHECK(count_parameters(1, 1, one, CovarianceType::full) == 3);
    CHECK(count_parameters(2, 2, two, CovarianceType::full) == 17);
    CHECK(formula(2, 2, two, true) == 17);
    for (int I = 1; I <= 6; ++I)
        for (int G = 0; G <= 3; ++G) {
            const std::vector<int> cards{2, 3, 5};
            CHECK(count_parameters(I, G, cards, CovarianceType::full) == formula(I, G, cards, true));
            CHECK(count_parameters(I, G, cards, CovarianceType::diagonal) == formula(I, G, cards, false));
        }
    const std::vector<ClampEntry> clamp{{1, 0, 1, 0.0}};
    CHECK(count_parameters(2, 2, two, CovarianceType::full, clamp) == 16);
    // A fully pinned binary table contributes nothing, not a negative count.
    const std::vector<ClampEntry> both{{1, 0, 0, 1.0}, {1, 0, 1, 0.0}};
    CHECK(count_parameters(2, 2, two, CovarianceType::full, both) == 16);
}

TEST_CASE("information criteria") {
    CHECK(bic(0.0, 3, std::numbers::e) == doctest::Approx(3.0));
    CHECK(aic(0.0, 5) == 10.0);
    CHECK(bic(-10.0, 4, 100.0) == doctest::Approx(20.0 + 4 * std::log(100.0)));
}

TEST_CASE("BIC and AIC coincide when ln n = 2") {
    const double n = std::exp(2.0);
    const std::vector<std::pair<double, int>> fits{{-100, 3}, {-95, 7}, {-94.5, 9}, {-80, 20}};
    for (const auto& [l, k] : fits) CHECK(bic(l, k, n) == doctest::Approx(aic(l, k)));
    for (std::size_t a = 0; a < fits.size(); ++a)
        for (std::size_t b = 0; b < fits.size(); ++b)
            CHECK((bic(fits[a].first, fits[a].second, n) < bic(fits[b].first, fits[b].second, n)) ==
                  (aic(fits[a].first, fits[a].second) < aic(fits[b].first, fits[b].second)));
}

TEST_CASE("observed cells are counted per scalar") {
    auto seq = make_empty_sequence({0, 600, 1200}, 2, {2});
    seq.continuous_mask(0, 0) = true;
    seq.continuous_mask(1, 1) = true;
    seq.discrete_mask(2, 0) = true;
    seq.discrete(2, 0) = 1;
    std::vector<ObservationSequence> seqs{seq, seq};
    CHECK(count_observed_cells(seqs) == 6);
}

TEST_CASE("single-value range chooses it") {
    auto c = synthetic::sample_cohort(synthetic::selection_model(), 3, 60, {}, 1);
    const std::vector<int> range{1};
    FitConfig cfg;
    cfg.restarts = 1;
    auto r = sweep_states(c.sequences, range, {}, cfg);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.chosen == 1);
}

TEST_CASE("sweep rows are sorted, self-consistent and choose the BIC minimum") {
    auto c = synthetic::sample_cohort(synthetic::selection_model(), 12, 144, synthetic::scaled_missing(0.2), 3);
    const std::vector<int> range{4, 2, 1, 3, 3};
    FitConfig cfg;
    cfg.restarts = 2;
    cfg.seed = 1;
    Constraints cons;
    cons.fixed_entries = {{3, 1, 1, 0.0}};
    auto r = sweep_states(c.sequences, range, cons, cfg);
    REQUIRE(r.rows.size() == 4);
    const double n = static_cast<double>(count_observed_cells(c.sequences));
    double best = INFINITY;
    int arg = 0;
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
        const auto& row = r.rows[k];
        CHECK(row.num_states == static_cast<int>(k) + 1);
        REQUIRE_FALSE(row.error.has_value());
        CHECK(row.num_parameters > 0);
        CHECK(row.bic == doctest::Approx(-2 * row.log_likelihood + row.num_parameters * std::log(n)));
        CHECK(row.aic == doctest::Approx(2 * row.num_parameters - 2 * row.log_likelihood));
        if (row.bic < best) {
            best = row.bic;
            arg = row.num_states;
        }
    }
    CHECK(r.chosen == arg);
    CHECK(r.chosen == 3);
    // The clamp on state 3 only exists for I = 4.
    CHECK(r.rows[3].num_parameters == formula(4, 2, {2, 2}, true) - 1);
    // Larger models do not fit materially worse.
    for (std::size_t k = 1; k < r.rows.size(); ++k)
        CHECK(r.rows[k].log_likelihood >= r.rows[k - 1].log_likelihood - 1e-3 * std::abs(r.rows[k - 1].log_likelihood));
}

TEST_CASE("failed fits are recorded and excluded") {
    auto seq = make_empty_sequence({0, 600, 1200}, 1, {});
    for (Index t = 0; t < 3; ++t) {
        seq.continuous(t, 0) = static_cast<double>(t % 2);
        seq.continuous_mask(t, 0) = true;
    }
    std::vector<ObservationSequence> seqs{seq};
    const std::vector<int> range{1, 5};
    FitConfig cfg;
    cfg.restarts = 1;
    auto r = sweep_states(seqs, range, {}, cfg);
    REQUIRE(r.rows.size() == 2);
    CHECK_FALSE(r.rows[0].error.has_value());
    CHECK(r.rows[1].error.has_value());
    CHECK(r.chosen == 1);
}
