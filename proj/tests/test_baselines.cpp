#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hhmm/baselines.hpp"
#include "hhmm/errors.hpp"
#include "synthetic.hpp"

using namespace hhmm;

namespace {

SleepLabels labels(std::vector<std::int8_t> v) {
    SleepLabels l;
    l.label = std::move(v);
    for (std::size_t t = 0; t < l.label.size(); ++t) l.timestamps.push_back(600 * static_cast<std::int64_t>(t));
    return l;
}

ObservationSequence one_feature(std::vector<double> cont, std::vector<int> disc) {
    std::vector<std::int64_t> ts;
    for (std::size_t t = 0; t < cont.size(); ++t) ts.push_back(600 * static_cast<std::int64_t>(t));
    auto s = make_empty_sequence(ts, 1, {2});
    for (std::size_t t = 0; t < cont.size(); ++t) {
        if (!std::isnan(cont[t])) {
            s.continuous(t, 0) = cont[t];
            s.continuous_mask(t, 0) = true;
        }
        if (disc[t] >= 0) {
            s.discrete(t, 0) = disc[t];
            s.discrete_mask(t, 0) = true;
        }
    }
    return s;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

TEST_CASE("method 1 fills means and zeros") {
    std::vector<ObservationSequence> s{one_feature({1, kNaN, 3}, {-1, 1, 1})};
    auto out = impute_method1(s);
    CHECK(out[0].continuous(1, 0) == 2.0);
    CHECK(out[0].discrete(0, 0) == 0);
    CHECK(out[0].discrete(1, 0) == 1);
    CHECK(out[0].continuous_mask.all());
    CHECK(out[0].discrete_mask.all());
}

TEST_CASE("method 2 fills per-sequence modes with ties to zero") {
    std::vector<ObservationSequence> s{one_feature({1, 2, 3, kNaN}, {1, 1, 0, -1}),
                                       one_feature({5, kNaN, 0}, {1, 0, -1})};
    auto out = impute_method2(s);
    CHECK(out[0].discrete(3, 0) == 1);
    CHECK(out[1].discrete(2, 0) == 0);
    // Continuous path is the global mean, same as method 1.
    auto m1 = impute_method1(s);
    CHECK(out[0].continuous == m1[0].continuous);
    CHECK(out[1].continuous == m1[1].continuous);
    CHECK(out[1].continuous(1, 0) == doctest::Approx((1 + 2 + 3 + 5 + 0) / 5.0));
}

TEST_CASE("imputers are identity on complete data") {
    auto c = synthetic::sample_cohort(synthetic::cohort_model(), 3, 50, {}, 2);
    for (auto imp : {Imputer::mean_zero, Imputer::mean_mode}) {
        auto out = impute(c.sequences, imp);
        for (std::size_t n = 0; n < out.size(); ++n) {
            CHECK(out[n].continuous == c.sequences[n].continuous);
            CHECK(out[n].discrete == c.sequences[n].discrete);
        }
    }
}

TEST_CASE("a never-observed feature cannot be imputed") {
    std::vector<ObservationSequence> s{one_feature({kNaN, kNaN}, {0, 1})};
    CHECK_THROWS_AS(impute_method1(s), DataError);
    CHECK_THROWS_AS(impute_method2(s), DataError);
}

TEST_CASE("blob clustering labels the low-activity blob asleep") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0, 0.5);
    std::vector<std::int64_t> ts;
    for (int t = 0; t < 200; ++t) ts.push_back(600 * t);
    auto s = make_empty_sequence(ts, 2, {2});
    std::vector<std::int8_t> truth;
    for (int t = 0; t < 200; ++t) {
        const bool asleep = (t / 20) % 2 == 0;
        s.continuous(t, 0) = (asleep ? -3 : 3) + z(rng);
        s.continuous(t, 1) = (asleep ? 100 : -100) + 50 * z(rng);
        s.discrete(t, 0) = asleep ? 0 : 1;
        truth.push_back(asleep ? 1 : 0);
    }
    s.continuous_mask.setConstant(true);
    s.discrete_mask.setConstant(true);
    std::vector<ObservationSequence> seqs{s};
    for (int method = 0; method < 2; ++method) {
        auto pred = method == 0 ? kmeans_sleep(seqs, Imputer::mean_zero, 3)
                                : gmm_sleep(seqs, Imputer::mean_zero, 3);
        CHECK(pred[0].label == truth);
        CHECK(pred[0].source == LabelSource::model);
    }
}

TEST_CASE("permuting slots permutes cluster labels") {
    auto c = synthetic::sample_cohort(synthetic::cohort_model(), 1, 300, synthetic::kCohortMissing, 4);
    std::vector<Index> order(300);
    for (Index t = 0; t < 300; ++t) order[t] = (t * 7) % 300;
    auto shuffled = c.sequences[0];
    for (Index t = 0; t < 300; ++t) {
        shuffled.continuous.row(t) = c.sequences[0].continuous.row(order[t]);
        shuffled.continuous_mask.row(t) = c.sequences[0].continuous_mask.row(order[t]);
        shuffled.discrete.row(t) = c.sequences[0].discrete.row(order[t]);
        shuffled.discrete_mask.row(t) = c.sequences[0].discrete_mask.row(order[t]);
    }
    std::vector<ObservationSequence> a{c.sequences[0]}, b{shuffled};
    auto km = fit_kmeans_sleep(a, Imputer::mean_zero, 5);
    auto la = predict_sleep(km, a);
    auto lb = predict_sleep(km, b);
    for (Index t = 0; t < 300; ++t) CHECK(lb[0].label[t] == la[0].label[order[t]]);
    auto gm = fit_gmm_sleep(a, Imputer::mean_mode, 5);
    auto ga = predict_sleep(gm, a);
    auto gb = predict_sleep(gm, b);
    for (Index t = 0; t < 300; ++t) CHECK(gb[0].label[t] == ga[0].label[order[t]]);
}

TEST_CASE("clustering is deterministic per seed") {
    auto c = synthetic::sample_cohort(synthetic::cohort_model(), 4, 144, synthetic::kCohortMissing, 9);
    auto a = gmm_sleep(c.sequences, Imputer::mean_mode, 11);
    auto b = gmm_sleep(c.sequences, Imputer::mean_mode, 11);
    for (std::size_t n = 0; n < a.size(); ++n) CHECK(a[n].label == b[n].label);
}

TEST_CASE("single-cluster data is rejected") {
    auto s = one_feature({1, 1, 1, 1}, {0, 0, 0, 0});
    std::vector<ObservationSequence> seqs{s};
    CHECK_THROWS(kmeans_sleep(seqs, Imputer::mean_zero, 1));
    CHECK_THROWS(gmm_sleep(seqs, Imputer::mean_zero, 1));
}

TEST_CASE("most-frequent dummy on 68% awake truth") {
    std::vector<std::int8_t> v(1000, 0);
    for (int t = 0; t < 320; ++t) v[t * 3 % 1000] = 1;
    auto truth = labels(v);
    auto pred = dummy_most_frequent(truth);
    for (auto x : pred.label) CHECK(x == 0);
    auto e = evaluate(pred, truth);
    CHECK(e.accuracy == doctest::Approx(0.68));
    CHECK(e.specificity == 1.0);
    CHECK(e.sensitivity == 0.0);
    // Tie goes to awake.
    CHECK(dummy_most_frequent(labels({0, 1})).label == std::vector<std::int8_t>{0, 0});
}

TEST_CASE("uniform dummy") {
    auto one = dummy_uniform(3, std::size_t{1});
    REQUIRE(one.size() == 1);
    CHECK((one.label[0] == 0 || one.label[0] == 1));
    auto big = dummy_uniform(7, std::size_t{100000});
    std::vector<std::int8_t> truth(100000);
    for (std::size_t t = 0; t < truth.size(); ++t) truth[t] = t % 3 == 0;
    auto e = evaluate(big, labels(truth));
    CHECK(std::abs(e.accuracy - 0.5) < 0.01);
    CHECK(dummy_uniform(7, std::size_t{50}).label == dummy_uniform(7, std::size_t{50}).label);
}

TEST_CASE("evaluate arithmetic") {
    auto t = labels({1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
    auto p = labels({1, 1, 1, 0, 1, 0, 0, 0, 0, 0});
    auto e = evaluate(p, t);
    CHECK(e.counts.tp == 3);
    CHECK(e.counts.fn == 1);
    CHECK(e.counts.fp == 1);
    CHECK(e.counts.tn == 5);
    CHECK(e.accuracy == doctest::Approx(0.8));
    CHECK(e.specificity == doctest::Approx(5.0 / 6));
    CHECK(e.sensitivity == doctest::Approx(0.75));

    auto same = evaluate(t, t);
    CHECK(same.accuracy == 1.0);
    CHECK(same.specificity == 1.0);
    CHECK(same.sensitivity == 1.0);
}

TEST_CASE("evaluate swaps specificity and sensitivity under class relabeling") {
    std::mt19937_64 rng(2);
    std::bernoulli_distribution b(0.4);
    std::vector<std::int8_t> pv(200), tv(200), pf(200), tf(200);
    for (int k = 0; k < 200; ++k) {
        pv[k] = b(rng);
        tv[k] = b(rng);
        pf[k] = 1 - pv[k];
        tf[k] = 1 - tv[k];
    }
    auto e = evaluate(labels(pv), labels(tv));
    auto f = evaluate(labels(pf), labels(tf));
    CHECK(e.accuracy == f.accuracy);
    CHECK(e.sensitivity == f.specificity);
    CHECK(e.specificity == f.sensitivity);
}

TEST_CASE("unlabeled slots are skipped and undefined ratios flagged") {
    auto t = labels({kUnlabeled, 0, 0, kUnlabeled});
    auto p = labels({1, 0, 1, 1});
    auto e = evaluate(p, t);
    CHECK(e.counts.total() == 2);
    CHECK_FALSE(e.sensitivity_defined);
    CHECK(std::isnan(e.sensitivity));
    CHECK(e.specificity == 0.5);
    CHECK_THROWS_AS(evaluate(p, labels({kUnlabeled, kUnlabeled, kUnlabeled, kUnlabeled})), DataError);
    CHECK_THROWS_AS(evaluate(labels({1}), t), std::invalid_argument);
}

TEST_CASE("summaries use the sample standard deviation") {
    std::vector<Evaluation> evs;
    for (double a : {0.6, 0.8, 1.0}) {
        Evaluation e;
        e.accuracy = a;
        e.specificity = a;
        e.sensitivity = kNaN;
        e.sensitivity_defined = false;
        evs.push_back(e);
    }
    auto s = summarize(evs);
    CHECK(s.accuracy.mean == doctest::Approx(0.8));
    CHECK(s.accuracy.std == doctest::Approx(0.2));
    CHECK(s.accuracy.count == 3);
    CHECK(s.sensitivity.count == 0);
}
