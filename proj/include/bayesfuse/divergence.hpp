#pragma once

#include "bayesfuse/fusion.hpp"
#include "bayesfuse/gaussian.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bayesfuse {

/// KL divergence between the prior-corrected (CIL) and product-of-experts
/// (CIP) fusions of the given locals. Propagates IndefinitePrecisionError
/// when the CIL fusion does not exist.
double kl_cil_cip(const GaussianBelief& prior, const std::vector<GaussianBelief>& locals);

/// log of S_m = integral of posterior(theta) * prior(theta)^m, closed form
/// for Gaussians, valid for real m >= 0. The additive constant is fixed by
/// S_0 = 1 (the posterior integrates to one), which the closed form already
/// satisfies, so no extra constant appears.
double log_s(double m, const GaussianBelief& prior, const GaussianBelief& posterior);

/// Exact first and second derivatives of log_s with respect to m. The second
/// derivative is nonnegative: log S_m is the cumulant generating function of
/// log prior(theta) under the posterior, hence convex in m.
std::pair<double, double> log_s_derivatives(double m, const GaussianBelief& prior,
                                            const GaussianBelief& posterior);

/// H(posterior, prior) = -E_posterior[log prior], closed form.
double cross_entropy_posterior_prior(const GaussianBelief& posterior,
                                     const GaussianBelief& prior);

/// The two terms of the divergence identity
///   KL(CIL || CIP) = log_ratio + cross_entropy_term
/// with log_ratio = log S_{M-1} evaluated at the CIL fusion and
/// cross_entropy_term = (M-1) * H(CIL fusion, prior). This is an independent
/// route to the same number as kl_cil_cip; the two must agree.
struct KlDecomposition {
    double log_ratio;
    double cross_entropy_term;
    double sum() const { return log_ratio + cross_entropy_term; }
};

KlDecomposition kl_decomposition(const GaussianBelief& prior,
                                 const std::vector<GaussianBelief>& locals);

enum class SweepAxis { Clients, PriorVariance, ClassPrior, Round };

const char* to_string(SweepAxis axis);

/// One divergence curve: KL values over an ordered grid, Monte Carlo
/// averaged. A failed grid point records its error message and leaves NaN in
/// `values`; failures are not fatal to the sweep.
struct KlSweep {
    SweepAxis axis;
    std::vector<double> grid;
    std::vector<double> values;
    std::vector<double> stderrs;
    std::vector<std::string> failures;  // empty string = point succeeded
    int repetitions = 0;
    std::uint64_t config_fingerprint = 0;
};

}  // namespace bayesfuse
