#pragma once

#include "bayesfuse/discrete.hpp"
#include "bayesfuse/gaussian.hpp"

#include <optional>
#include <vector>

namespace bayesfuse {

enum class FusionRule { CIL, CIP };

const char* to_string(FusionRule rule);

/// Result of fusing M local Gaussian beliefs.
///
/// For the CIL rule, `weights` holds Xi_0..Xi_M: the fused mean equals
/// Xi_0 * prior_mean + sum_m Xi_m * local_mean_m, and the weights sum to the
/// identity. Weight matrices are only materialized on request (they are d x d
/// each, which is wasteful for high-dimensional diagonal beliefs).
struct FusionReport {
    GaussianBelief fused;
    FusionRule rule;
    std::vector<MatrixXd> weights;
    std::optional<double> kl_to_alternative;
};

/// Prior-corrected optimal fusion: precision sum_m P_m - (M-1) P_0, with the
/// matching mean. Throws IndefinitePrecisionError when the corrected
/// precision is not positive definite (mutually inconsistent locals, e.g.
/// approximate posteriors less certain than the prior).
FusionReport fuse_cil(const GaussianBelief& prior, const std::vector<GaussianBelief>& locals,
                      bool compute_weights = true);

/// Product-of-experts fusion: precision sum_m P_m. Always well defined.
FusionReport fuse_cip(const std::vector<GaussianBelief>& locals);

/// Fusion when agents used their own local priors: the global prior times
/// the product of local likelihood ratios locals_m / local_priors_m.
FusionReport fuse_cil_heterogeneous(const GaussianBelief& global_prior,
                                    const std::vector<GaussianBelief>& local_priors,
                                    const std::vector<GaussianBelief>& locals,
                                    bool compute_weights = false);

/// Discrete analogue of CIL: prod_m p_m(c) / prior(c)^(M-1), normalized.
DiscreteBelief fuse_discrete_cil(const DiscreteBelief& prior,
                                 const std::vector<DiscreteBelief>& locals);

/// Discrete product of experts, normalized in log space.
DiscreteBelief fuse_discrete_cip(const std::vector<DiscreteBelief>& locals);

}  // namespace bayesfuse
