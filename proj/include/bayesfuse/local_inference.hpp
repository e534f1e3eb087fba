#pragma once

#include "bayesfuse/data.hpp"
#include "bayesfuse/discrete.hpp"
#include "bayesfuse/gaussian.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace bayesfuse {

/// Observation noise for the linear-Gaussian model, default isotropic r*I.
struct ObservationNoise {
    MatrixXd covariance;  // d_y x d_y, SPD

    static ObservationNoise isotropic(int d_y, double variance);
    Eigen::Index d_y() const { return covariance.rows(); }
};

/// Maps an input x to the d_y x d Jacobian of the observation model at x.
/// For a linear model y = theta^T phi(x) with scalar y this is the row
/// vector phi(x)^T.
using FeatureJacobian = std::function<MatrixXd(const VectorXd&)>;

/// Identity features for scalar observations: F(x) = x^T (1 x d row).
FeatureJacobian identity_features();

/// Conjugate update of a Gaussian prior with a regression shard:
///   posterior precision = prior precision + sum_n F_n^T R^-1 F_n
///   posterior mean solves precision * mean = prior_shift + sum_n F_n^T R^-1 y_n.
/// An empty shard returns the prior unchanged.
GaussianBelief linear_posterior(const GaussianBelief& prior, const LabeledShard& shard,
                                const ObservationNoise& noise,
                                const FeatureJacobian& features = identity_features());

/// LDA with a known shared covariance. Class means are estimated from the
/// shard as prior-regularized averages: one pseudo-observation at the given
/// reference mean, so classes absent from the shard fall back to it.
struct LdaModel {
    MatrixXd means;              // L x d estimated class means
    Eigen::LLT<MatrixXd> cov_llt;
    double log_det_cov = 0.0;
    DiscreteBelief prior;
};

LdaModel lda_fit(const MatrixXd& class_means, const MatrixXd& shared_cov,
                 const DiscreteBelief& prior_probs, const LabeledShard& shard);
DiscreteBelief lda_predict(const LdaModel& model, const VectorXd& query);

/// One-call form: fit on the shard, evaluate the class posterior at `query`.
DiscreteBelief lda_class_posterior(const MatrixXd& class_means, const MatrixXd& shared_cov,
                                   const DiscreteBelief& prior_probs, const LabeledShard& shard,
                                   const VectorXd& query);

enum class Activation { Tanh, Relu };

/// Fully connected softmax classifier: layer_sizes = {d_in, hidden..., L}.
/// Parameters are packed per layer as the weight matrix (row major) followed
/// by the bias vector.
struct MlpSpec {
    std::vector<int> layer_sizes;
    Activation activation = Activation::Tanh;

    int parameter_count() const;
    int num_classes() const { return layer_sizes.back(); }
    int input_dim() const { return layer_sizes.front(); }
    void validate() const;
};

struct TrainConfig {
    int epochs = 100;
    double learning_rate = 0.05;
    std::uint64_t rng_seed = 0;
    double fisher_jitter = 1e-6;
};

/// Per-layer scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
VectorXd mlp_init_params(const MlpSpec& spec, std::uint64_t seed);

/// Softmax class posterior of the network at `query`.
DiscreteBelief mlp_predict(const MlpSpec& spec, const VectorXd& params, const VectorXd& query);

/// Mean cross-entropy over the shard.
double mlp_mean_nll(const MlpSpec& spec, const VectorXd& params, const LabeledShard& shard);

/// Gradient of mlp_mean_nll with respect to the packed parameters.
VectorXd mlp_mean_nll_gradient(const MlpSpec& spec, const VectorXd& params,
                               const LabeledShard& shard);

/// Gradient of log p(y_i | x_i, params) for a single sample.
VectorXd mlp_sample_loglik_gradient(const MlpSpec& spec, const VectorXd& params,
                                    const VectorXd& x, int label);

/// Fraction of test rows whose argmax class matches the label.
double mlp_accuracy(const MlpSpec& spec, const VectorXd& params, const LabeledShard& test);

/// Diagonal empirical Fisher: mean over samples of the squared per-sample
/// log-likelihood gradient, coordinate-wise. Entrywise >= 0.
VectorXd empirical_fisher(const MlpSpec& spec, const VectorXd& params, const LabeledShard& shard);

/// Gradient of the (sample-mean normalized) MAP objective used by laplace_fit.
VectorXd map_objective_gradient(const GaussianBelief& prior, const LabeledShard& shard,
                                const MlpSpec& spec, const VectorXd& params);

/// Laplace approximation of the local posterior over network weights:
/// full-batch gradient descent on the MAP objective, then
///   precision = prior precision + |shard| * empirical Fisher + jitter.
/// The optimizer starts from the prior mean when it is informative (nonzero)
/// and from the seeded initialization otherwise. An empty shard returns the
/// prior unchanged. Throws on non-finite loss, reporting the epoch.
GaussianBelief laplace_fit(const GaussianBelief& prior, const LabeledShard& shard,
                           const MlpSpec& spec, const TrainConfig& cfg);

}  // namespace bayesfuse
