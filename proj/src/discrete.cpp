#include "bayesfuse/discrete.hpp"

#include "bayesfuse/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace bayesfuse {

double log_sum_exp(const VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

DiscreteBelief DiscreteBelief::from_probs(const VectorXd& probs) {
    if (probs.size() == 0) throw std::invalid_argument("DiscreteBelief: empty probability vector");
    if ((probs.array() <= 0.0).any() || !probs.allFinite()) {
        throw std::invalid_argument("DiscreteBelief: probabilities must be strictly positive");
    }
    return from_log_unnormalized(probs.array().log());
}

DiscreteBelief DiscreteBelief::from_log_unnormalized(VectorXd log_weights) {
    if (log_weights.size() == 0) throw std::invalid_argument("DiscreteBelief: empty log weights");
    if (!log_weights.allFinite()) {
        throw std::invalid_argument("DiscreteBelief: log weights must be finite");
    }
    log_weights.array() -= log_sum_exp(log_weights);
    return DiscreteBelief(std::move(log_weights));
}

DiscreteBelief DiscreteBelief::uniform(Eigen::Index num_classes) {
    return from_log_unnormalized(VectorXd::Zero(num_classes));
}

Eigen::Index DiscreteBelief::argmax() const {
    Eigen::Index i = 0;
    log_probs_.maxCoeff(&i);
    return i;
}

double kl_divergence(const DiscreteBelief& p, const DiscreteBelief& q) {
    detail::check_same_dim(p.size(), q.size(), "discrete kl_divergence");
    const double kl = (p.probs().array() * (p.log_probs() - q.log_probs()).array()).sum();
    return kl < 0.0 && kl > -1e-12 ? 0.0 : kl;
}

}  // namespace bayesfuse
