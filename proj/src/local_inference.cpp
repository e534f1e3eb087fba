#include "bayesfuse/local_inference.hpp"

#include "bayesfuse/rng.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace bayesfuse {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

MatrixXd activate(const MatrixXd& z, Activation act) {
    if (act == Activation::Tanh) return z.array().tanh();
    return z.cwiseMax(0.0);
}

MatrixXd activate_grad(const MatrixXd& z, Activation act) {
    if (act == Activation::Tanh) return 1.0 - z.array().tanh().square();
    return (z.array() > 0.0).cast<double>();
}

struct LayerView {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w;
    Eigen::Map<const VectorXd> b;
};

// Unpacks the flat parameter vector into per-layer weight/bias views.
std::vector<LayerView> unpack(const MlpSpec& spec, const VectorXd& params) {
    std::vector<LayerView> layers;
    const double* p = params.data();
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const int in = spec.layer_sizes[l];
        const int out = spec.layer_sizes[l + 1];
        layers.push_back(LayerView{
            {p, out, in},
            {p + static_cast<std::ptrdiff_t>(out) * in, out},
        });
        p += static_cast<std::ptrdiff_t>(out) * in + out;
    }
    return layers;
}

struct ForwardPass {
    std::vector<MatrixXd> activations;  // activations[0] = inputs, one per layer
    std::vector<MatrixXd> preact;       // pre-activation of each layer
    MatrixXd logits;                    // N x L
};

ForwardPass forward(const MlpSpec& spec, const VectorXd& params, const MatrixXd& inputs) {
    const auto layers = unpack(spec, params);
    ForwardPass fp;
    fp.activations.push_back(inputs);
    MatrixXd a = inputs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        MatrixXd z = a * layers[l].w.transpose();
        z.rowwise() += layers[l].b.transpose();
        if (l + 1 < layers.size()) {
            fp.preact.push_back(z);
            a = activate(z, spec.activation);
            fp.activations.push_back(a);
        } else {
            fp.logits = std::move(z);
        }
    }
    return fp;
}

// Row-wise softmax(logits) - onehot(labels); the common factor of every
// cross-entropy gradient.
MatrixXd softmax_residual(const MatrixXd& logits, const VectorXi& labels) {
    MatrixXd res(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        res.row(i) = e / e.sum();
        res(i, labels[i]) -= 1.0;
    }
    return res;
}

// Backpropagates the given output-layer residual, writing the packed
// gradient. `scale` multiplies every contribution (1/N for batch means).
VectorXd backward(const MlpSpec& spec, const VectorXd& params, const ForwardPass& fp,
                  MatrixXd delta, double scale) {
    const auto layers = unpack(spec, params);
    VectorXd grad = VectorXd::Zero(params.size());

    // Per-layer gradient offsets mirror the packing order.
    std::vector<std::ptrdiff_t> offsets;
    std::ptrdiff_t off = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        offsets.push_back(off);
        off += static_cast<std::ptrdiff_t>(spec.layer_sizes[l + 1]) * spec.layer_sizes[l] +
               spec.layer_sizes[l + 1];
    }

    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const int in = spec.layer_sizes[l];
        const int out = spec.layer_sizes[l + 1];
        MatrixXd gw = delta.transpose() * fp.activations[l] * scale;  // out x in
        VectorXd gb = (delta.colwise().sum() * scale).transpose();
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            grad.data() + offsets[l], out, in) = gw;
        Eigen::Map<VectorXd>(grad.data() + offsets[l] + static_cast<std::ptrdiff_t>(out) * in,
                             out) = gb;
        if (l > 0) {
            delta = (delta * layers[l].w).cwiseProduct(
                activate_grad(fp.preact[l - 1], spec.activation));
        }
    }
    return grad;
}

}  // namespace

ObservationNoise ObservationNoise::isotropic(int d_y, double variance) {
    if (!(variance > 0.0)) throw std::invalid_argument("ObservationNoise: variance must be > 0");
    return {MatrixXd::Identity(d_y, d_y) * variance};
}

FeatureJacobian identity_features() {
    return [](const VectorXd& x) { return MatrixXd(x.transpose()); };
}

GaussianBelief linear_posterior(const GaussianBelief& prior, const LabeledShard& shard,
                                const ObservationNoise& noise, const FeatureJacobian& features) {
    shard.validate();
    if (!shard.has_targets() && shard.size() > 0) {
        throw std::invalid_argument("linear_posterior: shard must carry real-valued targets");
    }
    if (shard.size() == 0) return prior;

    const Eigen::Index d = prior.dim();
    auto noise_llt = detail::factorize_spd(noise.covariance, "linear_posterior noise");

    MatrixXd prec = prior.precision_dense();
    VectorXd shift = prec * prior.mean();
    for (Eigen::Index n = 0; n < shard.size(); ++n) {
        const MatrixXd jac = features(shard.features.row(n).transpose());
        detail::check_same_dim(jac.cols(), d, "linear_posterior features");
        detail::check_same_dim(jac.rows(), noise.d_y(), "linear_posterior noise");
        const MatrixXd r_inv_jac = noise_llt.solve(jac);
        prec.noalias() += jac.transpose() * r_inv_jac;
        shift.noalias() += r_inv_jac.transpose() * shard.targets.row(n).transpose();
    }
    return GaussianBelief::from_natural_dense(std::move(prec), shift);
}

LdaModel lda_fit(const MatrixXd& class_means, const MatrixXd& shared_cov,
                 const DiscreteBelief& prior_probs, const LabeledShard& shard) {
    const Eigen::Index num_classes = class_means.rows();
    const Eigen::Index d = class_means.cols();
    detail::check_same_dim(prior_probs.size(), num_classes, "lda_fit");
    shard.validate(num_classes);
    if (shard.size() > 0) detail::check_same_dim(shard.features.cols(), d, "lda_fit");

    // Prior-regularized class means: one pseudo-observation at the reference
    // mean, so empty classes fall back to it exactly.
    MatrixXd sums = class_means;
    VectorXd counts = VectorXd::Ones(num_classes);
    for (Eigen::Index n = 0; n < shard.size(); ++n) {
        sums.row(shard.labels[n]) += shard.features.row(n);
        counts[shard.labels[n]] += 1.0;
    }

    LdaModel model{sums.array().colwise() / counts.array(), {}, 0.0, prior_probs};
    model.cov_llt = detail::factorize_spd(shared_cov, "lda_fit covariance");
    model.log_det_cov = 2.0 * model.cov_llt.matrixLLT().diagonal().array().log().sum();
    return model;
}

DiscreteBelief lda_predict(const LdaModel& model, const VectorXd& query) {
    const Eigen::Index num_classes = model.means.rows();
    detail::check_same_dim(query.size(), model.means.cols(), "lda_predict");
    VectorXd log_post(num_classes);
    const double norm_const =
        -0.5 * (static_cast<double>(query.size()) * kLog2Pi + model.log_det_cov);
    for (Eigen::Index c = 0; c < num_classes; ++c) {
        const VectorXd r = query - model.means.row(c).transpose();
        log_post[c] = model.prior.log_probs()[c] + norm_const -
                      0.5 * r.dot(model.cov_llt.solve(r));
    }
    return DiscreteBelief::from_log_unnormalized(std::move(log_post));
}

DiscreteBelief lda_class_posterior(const MatrixXd& class_means, const MatrixXd& shared_cov,
                                   const DiscreteBelief& prior_probs, const LabeledShard& shard,
                                   const VectorXd& query) {
    return lda_predict(lda_fit(class_means, shared_cov, prior_probs, shard), query);
}

int MlpSpec::parameter_count() const {
    int count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        count += layer_sizes[l + 1] * layer_sizes[l] + layer_sizes[l + 1];
    }
    return count;
}

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need input and output sizes");
    for (int s : layer_sizes) {
        if (s < 1) throw std::invalid_argument("MlpSpec: layer sizes must be >= 1");
    }
    if (layer_sizes.back() < 2) throw std::invalid_argument("MlpSpec: need at least two classes");
}

VectorXd mlp_init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto rng = make_rng(derive_seed(seed, {0x313714ULL}));
    VectorXd params = VectorXd::Zero(spec.parameter_count());
    double* p = params.data();
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const int in = spec.layer_sizes[l];
        const int out = spec.layer_sizes[l + 1];
        const bool output_layer = l + 2 == spec.layer_sizes.size();
        // The output layer starts at zero: coordinates the data never pushes
        // stay at the prior mean, where the fusion rules expect them.
        if (!output_layer) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            std::uniform_real_distribution<double> unif(-bound, bound);
            for (int i = 0; i < out * in; ++i) *p++ = unif(rng);
        } else {
            p += static_cast<std::ptrdiff_t>(out) * in;
        }
        p += out;  // biases start at zero
    }
    return params;
}

DiscreteBelief mlp_predict(const MlpSpec& spec, const VectorXd& params, const VectorXd& query) {
    detail::check_same_dim(params.size(), spec.parameter_count(), "mlp_predict params");
    detail::check_same_dim(query.size(), spec.input_dim(), "mlp_predict query");
    const ForwardPass fp = forward(spec, params, query.transpose());
    return DiscreteBelief::from_log_unnormalized(fp.logits.row(0).transpose());
}

double mlp_mean_nll(const MlpSpec& spec, const VectorXd& params, const LabeledShard& shard) {
    shard.validate(spec.num_classes());
    if (shard.size() == 0) return 0.0;
    const ForwardPass fp = forward(spec, params, shard.features);
    double total = 0.0;
    for (Eigen::Index i = 0; i < fp.logits.rows(); ++i) {
        total += log_sum_exp(fp.logits.row(i).transpose()) - fp.logits(i, shard.labels[i]);
    }
    return total / static_cast<double>(shard.size());
}

VectorXd mlp_mean_nll_gradient(const MlpSpec& spec, const VectorXd& params,
                               const LabeledShard& shard) {
    shard.validate(spec.num_classes());
    if (shard.size() == 0) return VectorXd::Zero(params.size());
    const ForwardPass fp = forward(spec, params, shard.features);
    return backward(spec, params, fp, softmax_residual(fp.logits, shard.labels),
                    1.0 / static_cast<double>(shard.size()));
}

VectorXd mlp_sample_loglik_gradient(const MlpSpec& spec, const VectorXd& params,
                                    const VectorXd& x, int label) {
    const ForwardPass fp = forward(spec, params, x.transpose());
    VectorXi labels(1);
    labels[0] = label;
    // log-likelihood gradient is minus the cross-entropy gradient
    return backward(spec, params, fp, softmax_residual(fp.logits, labels), -1.0);
}

double mlp_accuracy(const MlpSpec& spec, const VectorXd& params, const LabeledShard& test) {
    test.validate(spec.num_classes());
    if (test.size() == 0) return 0.0;
    const ForwardPass fp = forward(spec, params, test.features);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < fp.logits.rows(); ++i) {
        Eigen::Index best = 0;
        fp.logits.row(i).maxCoeff(&best);
        if (best == test.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

VectorXd empirical_fisher(const MlpSpec& spec, const VectorXd& params,
                          const LabeledShard& shard) {
    detail::check_same_dim(params.size(), spec.parameter_count(), "empirical_fisher");
    shard.validate(spec.num_classes());
    VectorXd fisher = VectorXd::Zero(params.size());
    if (shard.size() == 0) return fisher;
    for (Eigen::Index n = 0; n < shard.size(); ++n) {
        const VectorXd g =
            mlp_sample_loglik_gradient(spec, params, shard.features.row(n).transpose(),
                                       shard.labels[n]);
        fisher += g.cwiseProduct(g);
    }
    return fisher / static_cast<double>(shard.size());
}

VectorXd map_objective_gradient(const GaussianBelief& prior, const LabeledShard& shard,
                                const MlpSpec& spec, const VectorXd& params) {
    const double n = static_cast<double>(shard.size());
    const VectorXd centered = params - prior.mean();
    VectorXd prior_grad = prior.is_diagonal()
                              ? VectorXd(prior.precision_diag().cwiseProduct(centered))
                              : VectorXd(prior.precision_dense() * centered);
    return mlp_mean_nll_gradient(spec, params, shard) + prior_grad / std::max(n, 1.0);
}

GaussianBelief laplace_fit(const GaussianBelief& prior, const LabeledShard& shard,
                           const MlpSpec& spec, const TrainConfig& cfg) {
    spec.validate();
    detail::check_same_dim(prior.dim(), spec.parameter_count(), "laplace_fit prior");
    shard.validate(spec.num_classes());
    if (shard.size() == 0) return prior;
    if (cfg.epochs < 1 || !(cfg.learning_rate > 0.0)) {
        throw std::invalid_argument("laplace_fit: invalid training configuration");
    }

    VectorXd params = prior.mean().isZero(0.0) ? mlp_init_params(spec, cfg.rng_seed)
                                               : prior.mean();

    // Forward-backward iteration on the MAP objective: explicit gradient step
    // on the mean log-likelihood, implicit (proximal) step on the quadratic
    // prior. The fixed point is the same MAP stationarity condition, but the
    // prior step stays stable no matter how large the accumulated precision
    // grows over communication rounds.
    const double alpha = cfg.learning_rate / static_cast<double>(shard.size());
    const bool diag_prior = prior.is_diagonal();
    VectorXd prox_diag;
    Eigen::LLT<MatrixXd> prox_dense;
    if (diag_prior) {
        prox_diag = (1.0 + alpha * prior.precision_diag().array()).matrix();
    } else {
        prox_dense.compute(MatrixXd::Identity(prior.dim(), prior.dim()) +
                           alpha * prior.precision_dense());
    }
    const VectorXd prior_pull = diag_prior
                                    ? VectorXd(alpha * prior.precision_diag().cwiseProduct(
                                                           prior.mean()))
                                    : VectorXd(alpha * (prior.precision_dense() * prior.mean()));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const VectorXd half =
            params - cfg.learning_rate * mlp_mean_nll_gradient(spec, params, shard) +
            prior_pull;
        params = diag_prior ? VectorXd(half.cwiseQuotient(prox_diag)) : prox_dense.solve(half);
        if (!params.allFinite()) {
            throw std::runtime_error("laplace_fit: optimizer diverged at epoch " +
                                     std::to_string(epoch + 1) + " (non-finite parameters)");
        }
    }

    const VectorXd fisher = static_cast<double>(shard.size()) *
                                empirical_fisher(spec, params, shard).array() +
                            cfg.fisher_jitter;
    if (prior.is_diagonal()) {
        return GaussianBelief::diagonal(params, prior.precision_diag() + fisher);
    }
    MatrixXd prec = prior.precision_dense();
    prec.diagonal() += fisher;
    return GaussianBelief::dense(params, std::move(prec));
}

}  // namespace bayesfuse
