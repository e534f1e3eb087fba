#include "bayesfuse/datagen.hpp"

#include "bayesfuse/rng.hpp"

#include <random>
#include <stdexcept>

namespace bayesfuse {

namespace {

VectorXd resolve_priors(const GeneratorSpec& spec) {
    if (spec.class_priors.size() == 0) {
        return VectorXd::Constant(spec.num_classes, 1.0 / spec.num_classes);
    }
    if (spec.class_priors.size() != spec.num_classes) {
        throw std::invalid_argument("GeneratorSpec: class_priors length != num_classes");
    }
    return spec.class_priors / spec.class_priors.sum();
}

int draw_class(const VectorXd& priors, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    for (int c = 0; c < priors.size(); ++c) {
        u -= priors[c];
        if (u <= 0.0) return c;
    }
    return static_cast<int>(priors.size()) - 1;
}

// Class-conditional N(mean_c, std^2 I) sampler shared by the two unit-vector
// classification families.
ClassData gen_unit_vector_classes(const GeneratorSpec& spec) {
    spec.validate();
    const int d = spec.d_x;
    const int num_classes = spec.num_classes;
    if (num_classes > d) {
        throw std::invalid_argument("unit-vector family requires num_classes <= d_x");
    }
    ClassData out;
    out.class_means = MatrixXd::Zero(num_classes, d);
    for (int c = 0; c < num_classes; ++c) out.class_means(c, c) = 1.0;
    out.class_std = spec.noise_std;
    out.class_priors = resolve_priors(spec);

    auto rng = make_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.kind)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](int n, int agent_id) {
        LabeledShard shard;
        shard.agent_id = agent_id;
        shard.features.resize(n, d);
        shard.labels.resize(n);
        for (int i = 0; i < n; ++i) {
            const int c = draw_class(out.class_priors, rng);
            shard.labels[i] = c;
            for (int j = 0; j < d; ++j) {
                shard.features(i, j) = out.class_means(c, j) + spec.noise_std * normal(rng);
            }
        }
        return shard;
    };
    out.train = draw(spec.n_train, 0);
    out.test = draw(spec.n_test, 0);
    return out;
}

}  // namespace

GeneratorSpec GeneratorSpec::linear_defaults() {
    GeneratorSpec s;
    s.kind = GeneratorKind::Linear;
    s.n_train = 700;
    s.n_test = 300;
    s.d_x = 6;
    s.noise_std = 4.0;
    s.feature_std = 4.0;
    return s;
}

GeneratorSpec GeneratorSpec::two_class_defaults() {
    GeneratorSpec s;
    s.kind = GeneratorKind::TwoClass;
    s.n_train = 1000;
    s.n_test = 2000;
    s.d_x = 10;
    s.num_classes = 2;
    s.noise_std = 0.42;
    s.class_priors = (VectorXd(2) << 0.6, 0.4).finished();
    return s;
}

GeneratorSpec GeneratorSpec::multiclass_defaults() {
    GeneratorSpec s;
    s.kind = GeneratorKind::Multiclass;
    s.n_train = 1000;
    s.n_test = 1000;
    s.d_x = 10;
    s.num_classes = 10;
    s.noise_std = 0.42;
    return s;
}

GeneratorSpec GeneratorSpec::mixture_defaults() {
    GeneratorSpec s;
    s.kind = GeneratorKind::Mixture;
    s.n_train = 600;
    s.n_test = 300;
    s.d_x = 10;
    s.num_classes = 3;
    s.noise_std = 1.0;
    s.mixture_components = 4;
    return s;
}

void GeneratorSpec::validate() const {
    if (n_train < 1 || n_test < 1) throw std::invalid_argument("GeneratorSpec: counts must be >= 1");
    if (!(noise_std > 0.0)) throw std::invalid_argument("GeneratorSpec: noise_std must be > 0");
    if (d_x < 1) throw std::invalid_argument("GeneratorSpec: d_x must be >= 1");
    if (kind != GeneratorKind::Linear && num_classes < 2) {
        throw std::invalid_argument("GeneratorSpec: need at least two classes");
    }
    if (kind == GeneratorKind::Mixture && (mixture_components < 1 || mixture_components > 4)) {
        throw std::invalid_argument("GeneratorSpec: mixture_components must be in [1, 4]");
    }
}

LinearData gen_linear(const GeneratorSpec& spec) {
    spec.validate();
    if (spec.kind != GeneratorKind::Linear) throw std::invalid_argument("gen_linear: wrong kind");
    const int d = spec.d_x;
    auto rng = make_rng(derive_seed(spec.seed, {0x11ea7ULL}));

    std::uniform_int_distribution<int> theta_dist(-10, 20);
    LinearData out;
    out.true_theta.resize(d);
    for (int j = 0; j < d; ++j) out.true_theta[j] = static_cast<double>(theta_dist(rng));

    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](int n) {
        LabeledShard shard;
        shard.features.resize(n, d);
        shard.targets.resize(n, 1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) shard.features(i, j) = spec.feature_std * normal(rng);
            shard.targets(i, 0) =
                shard.features.row(i).dot(out.true_theta) + spec.noise_std * normal(rng);
        }
        return shard;
    };
    out.train = draw(spec.n_train);
    out.test = draw(spec.n_test);
    return out;
}

ClassData gen_two_class(const GeneratorSpec& spec) {
    if (spec.kind != GeneratorKind::TwoClass || spec.num_classes != 2) {
        throw std::invalid_argument("gen_two_class: wrong kind");
    }
    return gen_unit_vector_classes(spec);
}

ClassData gen_multiclass(const GeneratorSpec& spec) {
    if (spec.kind != GeneratorKind::Multiclass) {
        throw std::invalid_argument("gen_multiclass: wrong kind");
    }
    return gen_unit_vector_classes(spec);
}

MixtureData gen_mixture(const GeneratorSpec& spec) {
    spec.validate();
    if (spec.kind != GeneratorKind::Mixture) throw std::invalid_argument("gen_mixture: wrong kind");
    const int d = spec.d_x;
    const int num_classes = spec.num_classes;
    auto rng = make_rng(derive_seed(spec.seed, {0x312e7ULL}));
    std::uniform_real_distribution<double> mean_dist(-spec.mixture_mean_range,
                                                     spec.mixture_mean_range);
    std::uniform_int_distribution<int> count_dist(1, spec.mixture_components);

    MixtureData out;
    out.component_std = spec.noise_std;
    out.class_priors = resolve_priors(spec);
    for (int c = 0; c < num_classes; ++c) {
        const int k = count_dist(rng);
        MatrixXd means(k, d);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < d; ++j) means(i, j) = mean_dist(rng);
        }
        out.component_means.push_back(std::move(means));
        out.component_weights.push_back(VectorXd::Constant(k, 1.0 / k));
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](int n) {
        LabeledShard shard;
        shard.features.resize(n, d);
        shard.labels.resize(n);
        for (int i = 0; i < n; ++i) {
            const int c = draw_class(out.class_priors, rng);
            const int comp = draw_class(out.component_weights[c], rng);
            shard.labels[i] = c;
            for (int j = 0; j < d; ++j) {
                shard.features(i, j) =
                    out.component_means[c](comp, j) + spec.noise_std * normal(rng);
            }
        }
        return shard;
    };
    out.train = draw(spec.n_train);
    out.test = draw(spec.n_test);
    return out;
}

}  // namespace bayesfuse
