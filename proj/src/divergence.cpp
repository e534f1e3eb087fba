#include "bayesfuse/divergence.hpp"

#include <cmath>
#include <stdexcept>

namespace bayesfuse {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double kl_cil_cip(const GaussianBelief& prior, const std::vector<GaussianBelief>& locals) {
    if (locals.size() == 1) return 0.0;  // both rules reduce to the single local
    const FusionReport cil = fuse_cil(prior, locals, false);
    const FusionReport cip = fuse_cip(locals);
    return kl_divergence(cil.fused, cip.fused);
}

double log_s(double m, const GaussianBelief& prior, const GaussianBelief& posterior) {
    detail::check_same_dim(prior.dim(), posterior.dim(), "log_s");
    if (m < 0.0) throw std::invalid_argument("log_s: m must be >= 0");
    const double d = static_cast<double>(prior.dim());
    const VectorXd gap = prior.mean() - posterior.mean();
    const double log_det_c0 = -prior.log_det_precision();

    double log_det_a, quad;
    if (prior.is_diagonal() && posterior.is_diagonal()) {
        const VectorXd a = prior.precision_diag().cwiseInverse() +
                           m * posterior.precision_diag().cwiseInverse();
        log_det_a = a.array().log().sum();
        quad = m * (gap.array().square() / a.array()).sum();
    } else {
        const MatrixXd a = prior.covariance() + m * posterior.covariance();
        auto llt = detail::factorize_spd(a, "log_s");
        log_det_a = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        quad = m * gap.dot(llt.solve(gap));
    }
    return -0.5 * d * kLog2Pi - 0.5 * (m - 1.0) * (d * kLog2Pi + log_det_c0) -
           0.5 * log_det_a - 0.5 * quad;
}

std::pair<double, double> log_s_derivatives(double m, const GaussianBelief& prior,
                                            const GaussianBelief& posterior) {
    detail::check_same_dim(prior.dim(), posterior.dim(), "log_s_derivatives");
    if (m < 0.0) throw std::invalid_argument("log_s_derivatives: m must be >= 0");
    const double d = static_cast<double>(prior.dim());
    const VectorXd gap = prior.mean() - posterior.mean();
    const double log_det_c0 = -prior.log_det_precision();
    const double const_term = -0.5 * (d * kLog2Pi + log_det_c0);

    if (prior.is_diagonal() && posterior.is_diagonal()) {
        const Eigen::ArrayXd c0 = prior.precision_diag().array().inverse();
        const Eigen::ArrayXd cp = posterior.precision_diag().array().inverse();
        const Eigen::ArrayXd w = (c0 + m * cp).inverse();
        const Eigen::ArrayXd g2 = gap.array().square();
        const double first = const_term - 0.5 * (w * cp).sum() - 0.5 * (g2 * w * c0 * w).sum();
        const double second = 0.5 * (w * cp).square().sum() + (g2 * w * c0 * w * cp * w).sum();
        return {first, second};
    }

    const MatrixXd c0 = prior.covariance();
    const MatrixXd cp = posterior.covariance();
    const MatrixXd a = c0 + m * cp;
    auto llt = detail::factorize_spd(a, "log_s_derivatives");
    const MatrixXd w = llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
    const MatrixXd wcp = w * cp;
    const VectorXd wg = w * gap;
    const double first =
        const_term - 0.5 * wcp.trace() - 0.5 * wg.dot(c0 * wg);
    const double second =
        0.5 * (wcp * wcp).trace() + wg.dot(c0 * (wcp * wg));
    return {first, second};
}

double cross_entropy_posterior_prior(const GaussianBelief& posterior,
                                     const GaussianBelief& prior) {
    detail::check_same_dim(posterior.dim(), prior.dim(), "cross_entropy_posterior_prior");
    const double d = static_cast<double>(prior.dim());
    const VectorXd gap = posterior.mean() - prior.mean();
    double quad, trace;
    if (prior.is_diagonal() && posterior.is_diagonal()) {
        quad = (gap.array().square() * prior.precision_diag().array()).sum();
        trace = (prior.precision_diag().array() / posterior.precision_diag().array()).sum();
    } else {
        const MatrixXd prior_prec = prior.precision_dense();
        quad = gap.dot(prior_prec * gap);
        trace = posterior.solve(prior_prec).trace();
    }
    return 0.5 * (d * kLog2Pi - prior.log_det_precision()) + 0.5 * (quad + trace);
}

KlDecomposition kl_decomposition(const GaussianBelief& prior,
                                 const std::vector<GaussianBelief>& locals) {
    const FusionReport cil = fuse_cil(prior, locals, false);
    const double m = static_cast<double>(locals.size());
    const double log_ratio = log_s(m - 1.0, prior, cil.fused);
    const double ce = cross_entropy_posterior_prior(cil.fused, prior);
    return {log_ratio, (m - 1.0) * ce};
}

const char* to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Clients: return "M";
        case SweepAxis::PriorVariance: return "q0";
        case SweepAxis::ClassPrior: return "P1";
        case SweepAxis::Round: return "t";
    }
    return "?";
}

}  // namespace bayesfuse
