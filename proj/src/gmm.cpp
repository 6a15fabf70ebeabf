#include "coseg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace coseg {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// log N(x; mu, var)
inline double log_gauss(double x, double mu, double var) {
    const double d = x - mu;
    return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

inline double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// One EM pass set; responsibilities recomputed each iteration.
GmmModel em_iterate(GmmModel model, const std::vector<double>& samples, int iterations) {
    const int k = model.component_count();
    const std::size_t n = samples.size();
    std::vector<double> resp(n * k), lg(k);
    for (int iter = 0; iter < iterations; ++iter) {
        // E-step
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c)
                lg[c] = std::log(std::max(model.weights[c], 1e-300)) +
                        log_gauss(samples[i], model.means[c], model.variances[c]);
            const double lse = log_sum_exp(lg);
            for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(lg[c] - lse);
        }
        // M-step
        for (int c = 0; c < k; ++c) {
            double nk = 0.0, sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nk += resp[i * k + c];
                sum += resp[i * k + c] * samples[i];
            }
            if (nk < 1e-12) {
                // Dead component; keep its parameters, renormalize weight below.
                model.weights[c] = 1e-12;
                continue;
            }
            const double mean = sum / nk;
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = samples[i] - mean;
                var += resp[i * k + c] * d * d;
            }
            model.weights[c] = nk / static_cast<double>(n);
            model.means[c] = mean;
            model.variances[c] = std::max(var / nk, kGmmVarianceFloor);
        }
        double wsum = 0.0;
        for (double w : model.weights) wsum += w;
        for (double& w : model.weights) w /= wsum;
    }
    return model;
}

}  // namespace

void GmmModel::validate() const {
    const int k = component_count();
    if (k < 1 || static_cast<int>(means.size()) != k || static_cast<int>(variances.size()) != k)
        throw std::runtime_error("GmmModel: inconsistent component arrays");
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-9) throw std::runtime_error("GmmModel: weights must sum to 1");
    for (double v : variances)
        if (v < kGmmVarianceFloor * (1.0 - 1e-12))
            throw std::runtime_error("GmmModel: variance below floor");
}

GmmModel fit_gmm(const std::vector<double>& samples, int k, int em_iterations, SeededRng& rng) {
    if (k < 1) throw std::invalid_argument("fit_gmm: k must be >= 1");
    if (static_cast<int>(samples.size()) < k) throw std::invalid_argument("insufficient samples");

    // k-means++-style seeding of the means.
    GmmModel model;
    model.weights.assign(k, 1.0 / k);
    model.means.resize(k);
    model.variances.resize(k);

    const std::size_t n = samples.size();
    model.means[0] = samples[rng.uniform_int(n)];
    std::vector<double> d2(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < c; ++j) {
                const double d = samples[i] - model.means[j];
                best = std::min(best, d * d);
            }
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            model.means[c] = samples[rng.uniform_int(n)];
            continue;
        }
        double r = rng.uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            r -= d2[i];
            if (r <= 0.0) {
                pick = i;
                break;
            }
        }
        model.means[c] = samples[pick];
    }

    // Initial variance: overall sample variance (floored).
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : samples) var += (x - mean) * (x - mean);
    var = std::max(var / static_cast<double>(n), kGmmVarianceFloor);
    std::fill(model.variances.begin(), model.variances.end(), var);

    model = em_iterate(std::move(model), samples, em_iterations);
    model.validate();
    return model;
}

GmmModel refit_gmm(const GmmModel& init, const std::vector<double>& samples, int em_iterations) {
    if (samples.empty()) return init;
    GmmModel model = em_iterate(init, samples, em_iterations);
    model.validate();
    return model;
}

double gmm_neg_log_likelihood(const GmmModel& m, double x) {
    const int k = m.component_count();
    std::vector<double> lg(k);
    for (int c = 0; c < k; ++c)
        lg[c] = std::log(std::max(m.weights[c], 1e-300)) + log_gauss(x, m.means[c], m.variances[c]);
    double m0 = *std::max_element(lg.begin(), lg.end());
    double s = 0.0;
    for (double v : lg) s += std::exp(v - m0);
    return -(m0 + std::log(s));
}

double gmm_log_likelihood(const GmmModel& m, const std::vector<double>& samples) {
    double ll = 0.0;
    for (double x : samples) ll -= gmm_neg_log_likelihood(m, x);
    return ll;
}

}  // namespace coseg
