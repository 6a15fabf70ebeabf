#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "coseg/gmm.hpp"

using namespace coseg;

TEST_CASE("two well-separated values, K=2: exact two-point MLE") {
    std::vector<double> samples;
    for (int i = 0; i < 50; ++i) samples.push_back(0.0);
    for (int i = 0; i < 50; ++i) samples.push_back(10.0);
    SeededRng rng(1);
    GmmModel m = fit_gmm(samples, 2, 30, rng);
    m.validate();
    std::vector<std::pair<double, double>> comp;  // (mean, weight)
    for (int k = 0; k < 2; ++k) comp.emplace_back(m.means[k], m.weights[k]);
    std::sort(comp.begin(), comp.end());
    CHECK(comp[0].first == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(comp[1].first == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(comp[0].second == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(comp[1].second == doctest::Approx(0.5).epsilon(1e-6));
    // The point masses collapse to the variance floor.
    for (double v : m.variances) CHECK(v >= kGmmVarianceFloor);
}

TEST_CASE("EM log-likelihood is non-decreasing, including warm restarts") {
    SeededRng rng(2);
    std::vector<double> samples;
    for (int i = 0; i < 200; ++i)
        samples.push_back(rng.uniform() < 0.5 ? rng.normal(0.3, 0.05) : rng.normal(0.7, 0.08));
    GmmModel m = fit_gmm(samples, 3, 1, rng);
    double prev = gmm_log_likelihood(m, samples);
    for (int step = 0; step < 15; ++step) {
        m = refit_gmm(m, samples, 1);
        const double ll = gmm_log_likelihood(m, samples);
        CHECK(ll >= prev - 1e-9);
        prev = ll;
    }
}

TEST_CASE("constant samples hit the variance floor and stay finite") {
    std::vector<double> samples(40, 0.25);
    SeededRng rng(3);
    const GmmModel m = fit_gmm(samples, 2, 10, rng);
    m.validate();
    for (double v : m.variances) CHECK(v == doctest::Approx(kGmmVarianceFloor));
    CHECK(std::isfinite(gmm_neg_log_likelihood(m, 0.25)));
    CHECK(std::isfinite(gmm_neg_log_likelihood(m, 123.0)));
}

TEST_CASE("fewer samples than components throws") {
    std::vector<double> samples{0.1, 0.2};
    SeededRng rng(4);
    CHECK_THROWS_WITH_AS(fit_gmm(samples, 5, 5, rng),
                         doctest::Contains("insufficient samples"), std::invalid_argument);
}

TEST_CASE("nll matches a direct density evaluation") {
    GmmModel m;
    m.weights = {0.4, 0.6};
    m.means = {0.2, 0.8};
    m.variances = {0.01, 0.04};
    const double x = 0.5;
    double p = 0.0;
    for (int k = 0; k < 2; ++k) {
        const double d = x - m.means[k];
        p += m.weights[k] / std::sqrt(2.0 * 3.14159265358979323846 * m.variances[k]) *
             std::exp(-d * d / (2.0 * m.variances[k]));
    }
    CHECK(gmm_neg_log_likelihood(m, x) == doctest::Approx(-std::log(p)).epsilon(1e-12));
}
