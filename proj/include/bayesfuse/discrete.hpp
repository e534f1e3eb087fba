#pragma once

#include <Eigen/Dense>

namespace bayesfuse {

using Eigen::VectorXd;

/// Probability vector over L class labels, kept in log space and always
/// normalized (logsumexp of log_probs is 0). All entries are finite, i.e.
/// every class carries strictly positive probability.
class DiscreteBelief {
public:
    static DiscreteBelief from_probs(const VectorXd& probs);
    /// Normalizes arbitrary finite log weights (max-subtraction + logsumexp).
    static DiscreteBelief from_log_unnormalized(VectorXd log_weights);
    static DiscreteBelief uniform(Eigen::Index num_classes);

    Eigen::Index size() const { return log_probs_.size(); }
    const VectorXd& log_probs() const { return log_probs_; }
    VectorXd probs() const { return log_probs_.array().exp(); }
    Eigen::Index argmax() const;

private:
    explicit DiscreteBelief(VectorXd log_probs) : log_probs_(std::move(log_probs)) {}
    VectorXd log_probs_;
};

/// KL(p || q) between two discrete beliefs over the same label set.
double kl_divergence(const DiscreteBelief& p, const DiscreteBelief& q);

double log_sum_exp(const VectorXd& v);

}  // namespace bayesfuse
