#include "bayesfuse/fusion.hpp"

#include <stdexcept>

namespace bayesfuse {

namespace {

bool all_diagonal(const GaussianBelief& prior, const std::vector<GaussianBelief>& locals) {
    if (!prior.is_diagonal()) return false;
    for (const auto& b : locals) {
        if (!b.is_diagonal()) return false;
    }
    return true;
}

void check_locals(const Eigen::Index d, const std::vector<GaussianBelief>& locals,
                  const char* context) {
    if (locals.empty()) throw std::invalid_argument(std::string(context) + ": no local beliefs");
    for (const auto& b : locals) detail::check_same_dim(b.dim(), d, context);
}

std::vector<MatrixXd> cil_weights(const GaussianBelief& fused, const GaussianBelief& prior,
                                  const std::vector<GaussianBelief>& locals) {
    const double m_count = static_cast<double>(locals.size());
    std::vector<MatrixXd> weights;
    weights.reserve(locals.size() + 1);
    weights.push_back((1.0 - m_count) * fused.solve(prior.precision_dense()));
    for (const auto& b : locals) weights.push_back(fused.solve(b.precision_dense()));
    return weights;
}

}  // namespace

const char* to_string(FusionRule rule) {
    return rule == FusionRule::CIL ? "CIL" : "CIP";
}

FusionReport fuse_cil(const GaussianBelief& prior, const std::vector<GaussianBelief>& locals,
                      bool compute_weights) {
    const Eigen::Index d = prior.dim();
    check_locals(d, locals, "fuse_cil");
    if (locals.size() == 1) {
        // (M-1) = 0: the rule reduces to the single local posterior.
        FusionReport report{locals.front(), FusionRule::CIL, {}, std::nullopt};
        if (compute_weights) {
            report.weights = {MatrixXd::Zero(d, d), MatrixXd::Identity(d, d)};
        }
        return report;
    }
    const double correction = static_cast<double>(locals.size()) - 1.0;

    GaussianBelief fused = [&] {
        if (all_diagonal(prior, locals)) {
            VectorXd prec = -correction * prior.precision_diag();
            VectorXd shift = -correction * prior.precision_diag().cwiseProduct(prior.mean());
            for (const auto& b : locals) {
                prec += b.precision_diag();
                shift += b.precision_diag().cwiseProduct(b.mean());
            }
            if ((prec.array() <= 0.0).any()) {
                throw IndefinitePrecisionError(
                    "fuse_cil: prior-corrected precision is not positive definite",
                    prec.minCoeff());
            }
            return GaussianBelief::from_natural_diagonal(std::move(prec), shift);
        }
        MatrixXd prec = -correction * prior.precision_dense();
        VectorXd shift = -correction * (prior.precision_dense() * prior.mean());
        for (const auto& b : locals) {
            prec += b.precision_dense();
            shift += b.precision_dense() * b.mean();
        }
        return GaussianBelief::from_natural_dense(std::move(prec), shift);
    }();

    FusionReport report{std::move(fused), FusionRule::CIL, {}, std::nullopt};
    if (compute_weights) report.weights = cil_weights(report.fused, prior, locals);
    return report;
}

FusionReport fuse_cip(const std::vector<GaussianBelief>& locals) {
    if (locals.empty()) throw std::invalid_argument("fuse_cip: no local beliefs");
    if (locals.size() == 1) return {locals.front(), FusionRule::CIP, {}, std::nullopt};
    UnnormalizedGaussian prod = product(locals);
    return {std::move(prod.belief), FusionRule::CIP, {}, std::nullopt};
}

FusionReport fuse_cil_heterogeneous(const GaussianBelief& global_prior,
                                    const std::vector<GaussianBelief>& local_priors,
                                    const std::vector<GaussianBelief>& locals,
                                    bool compute_weights) {
    const Eigen::Index d = global_prior.dim();
    check_locals(d, locals, "fuse_cil_heterogeneous");
    check_locals(d, local_priors, "fuse_cil_heterogeneous");
    if (local_priors.size() != locals.size()) {
        throw std::invalid_argument("fuse_cil_heterogeneous: list length mismatch");
    }

    bool diag = global_prior.is_diagonal() && all_diagonal(global_prior, locals) &&
                all_diagonal(global_prior, local_priors);
    GaussianBelief fused = [&] {
        if (diag) {
            VectorXd prec = global_prior.precision_diag();
            VectorXd shift = global_prior.precision_diag().cwiseProduct(global_prior.mean());
            for (std::size_t m = 0; m < locals.size(); ++m) {
                prec += locals[m].precision_diag() - local_priors[m].precision_diag();
                shift += locals[m].precision_diag().cwiseProduct(locals[m].mean()) -
                         local_priors[m].precision_diag().cwiseProduct(local_priors[m].mean());
            }
            if ((prec.array() <= 0.0).any()) {
                throw IndefinitePrecisionError(
                    "fuse_cil_heterogeneous: precision is not positive definite", prec.minCoeff());
            }
            return GaussianBelief::from_natural_diagonal(std::move(prec), shift);
        }
        MatrixXd prec = global_prior.precision_dense();
        VectorXd shift = global_prior.precision_dense() * global_prior.mean();
        for (std::size_t m = 0; m < locals.size(); ++m) {
            prec += locals[m].precision_dense() - local_priors[m].precision_dense();
            shift += locals[m].precision_dense() * locals[m].mean() -
                     local_priors[m].precision_dense() * local_priors[m].mean();
        }
        return GaussianBelief::from_natural_dense(std::move(prec), shift);
    }();

    FusionReport report{std::move(fused), FusionRule::CIL, {}, std::nullopt};
    if (compute_weights) {
        // Weight convention as in fuse_cil, with the likelihood-ratio precisions
        // playing the role of the locals. Only meaningful when requested.
        report.weights = cil_weights(report.fused, global_prior, locals);
    }
    return report;
}

DiscreteBelief fuse_discrete_cil(const DiscreteBelief& prior,
                                 const std::vector<DiscreteBelief>& locals) {
    if (locals.empty()) throw std::invalid_argument("fuse_discrete_cil: no local beliefs");
    const Eigen::Index num_classes = prior.size();
    if (!prior.log_probs().allFinite()) {
        throw std::invalid_argument("fuse_discrete_cil: prior has a zero class probability");
    }
    VectorXd acc = -(static_cast<double>(locals.size()) - 1.0) * prior.log_probs();
    for (const auto& b : locals) {
        detail::check_same_dim(b.size(), num_classes, "fuse_discrete_cil");
        acc += b.log_probs();
    }
    return DiscreteBelief::from_log_unnormalized(std::move(acc));
}

DiscreteBelief fuse_discrete_cip(const std::vector<DiscreteBelief>& locals) {
    if (locals.empty()) throw std::invalid_argument("fuse_discrete_cip: no local beliefs");
    VectorXd acc = VectorXd::Zero(locals.front().size());
    for (const auto& b : locals) {
        detail::check_same_dim(b.size(), acc.size(), "fuse_discrete_cip");
        acc += b.log_probs();
    }
    return DiscreteBelief::from_log_unnormalized(std::move(acc));
}

}  // namespace bayesfuse
