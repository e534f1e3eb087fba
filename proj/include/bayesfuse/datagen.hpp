#pragma once

#include "bayesfuse/data.hpp"

#include <cstdint>
#include <vector>

namespace bayesfuse {

enum class GeneratorKind { Linear, TwoClass, Multiclass, Mixture };

/// Declarative description of one synthetic dataset. All generators are pure
/// functions of the spec, including the seed.
struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::Linear;
    int n_train = 700;
    int n_test = 300;
    int d_x = 6;            // feature dimension
    int num_classes = 2;    // classification kinds
    double noise_std = 4.0;
    double feature_std = 4.0;       // linear kind: scale of the sampled inputs
    VectorXd class_priors;          // classification kinds; empty = uniform
    int mixture_components = 4;     // mixture kind: max components per class
    double mixture_mean_range = 2.0;  // mixture kind: component means ~ U[-range, range]^d
    std::uint64_t seed = 0;

    /// Linear regression family: y = theta^T x + noise, theta an integer
    /// vector uniform on [-10, 20], x ~ N(0, feature_std^2 I), d_x = 6.
    static GeneratorSpec linear_defaults();
    /// Two classes in 10 dimensions, class c mean is the c-th unit vector,
    /// isotropic noise, class priors (0.6, 0.4).
    static GeneratorSpec two_class_defaults();
    /// Ten classes, same unit-vector family, uniform priors.
    static GeneratorSpec multiclass_defaults();
    /// Three classes, up to four Gaussian components per class, 10 features.
    static GeneratorSpec mixture_defaults();

    void validate() const;
};

struct LinearData {
    LabeledShard train;
    LabeledShard test;
    VectorXd true_theta;
};

struct ClassData {
    LabeledShard train;
    LabeledShard test;
    MatrixXd class_means;   // L x d generative means
    double class_std;       // generative isotropic std
    VectorXd class_priors;  // generative priors
};

struct MixtureData {
    LabeledShard train;
    LabeledShard test;
    // Generative parameters, one entry per class.
    std::vector<MatrixXd> component_means;  // (components x d) per class
    std::vector<VectorXd> component_weights;
    double component_std;
    VectorXd class_priors;
};

LinearData gen_linear(const GeneratorSpec& spec);
ClassData gen_two_class(const GeneratorSpec& spec);
ClassData gen_multiclass(const GeneratorSpec& spec);
MixtureData gen_mixture(const GeneratorSpec& spec);

}  // namespace bayesfuse
