#pragma once

#include <vector>

#include "coseg/rng.hpp"

namespace coseg {

// 1-D Gaussian mixture over scalar intensities (CT grayscale), used as the
// GrabCut data term.
struct GmmModel {
    std::vector<double> weights;    // sum to 1
    std::vector<double> means;
    std::vector<double> variances;  // >= kVarianceFloor

    int component_count() const { return static_cast<int>(weights.size()); }
    void validate() const;
};

// Keeps components non-degenerate on constant regions.
inline constexpr double kGmmVarianceFloor = 1e-6;

// EM fit from a k-means++-style initialization. Log-likelihood is
// non-decreasing across EM iterations (warm starts continue that chain).
// Throws "insufficient samples" when sample count < K.
GmmModel fit_gmm(const std::vector<double>& samples, int k, int em_iterations, SeededRng& rng);

// EM continuation from an existing model on a (possibly different) sample
// set; used by the GrabCut outer loop so the energy stays monotone.
GmmModel refit_gmm(const GmmModel& init, const std::vector<double>& samples, int em_iterations);

// -log sum_k w_k N(x; mu_k, sigma_k^2); always finite for a valid model.
double gmm_neg_log_likelihood(const GmmModel& m, double x);

// Total data log-likelihood, for monotonicity checks.
double gmm_log_likelihood(const GmmModel& m, const std::vector<double>& samples);

}  // namespace coseg
