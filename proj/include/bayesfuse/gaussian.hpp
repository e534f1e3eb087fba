#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bayesfuse {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class DimensionMismatchError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised when a matrix that must be symmetric positive definite fails its
// factorization. Carries the most negative eigenvalue of the offending
// matrix so callers can see how far from SPD the input was.
class IndefinitePrecisionError : public std::runtime_error {
public:
    IndefinitePrecisionError(const std::string& what, double min_eigenvalue)
        : std::runtime_error(what), min_eigenvalue_(min_eigenvalue) {}

    double min_eigenvalue() const { return min_eigenvalue_; }

private:
    double min_eigenvalue_;
};

enum class StorageKind { Dense, Diagonal };

/// Multivariate normal over a parameter vector, stored as mean + precision.
/// Precision is the natural parameterization here: every fusion rule in this
/// library is additive in precision, and covariance is only ever needed on
/// demand (obtained through the cached Cholesky factor).
///
/// Immutable value type; safe to share across threads.
class GaussianBelief {
public:
    static GaussianBelief dense(VectorXd mean, MatrixXd precision);
    static GaussianBelief diagonal(VectorXd mean, VectorXd precision_diag);
    /// N(mean, variance * I), stored diagonally.
    static GaussianBelief isotropic(VectorXd mean, double variance);
    static GaussianBelief from_covariance(VectorXd mean, const MatrixXd& covariance);
    /// Natural parameters: precision Lambda and shift eta = Lambda * mean.
    static GaussianBelief from_natural_dense(MatrixXd precision, const VectorXd& shift);
    static GaussianBelief from_natural_diagonal(VectorXd precision_diag, const VectorXd& shift);

    Eigen::Index dim() const { return mean_.size(); }
    StorageKind kind() const { return kind_; }
    const VectorXd& mean() const { return mean_; }

    /// Precision as a dense matrix (materialized for diagonal storage).
    MatrixXd precision_dense() const;
    /// Diagonal storage only.
    const VectorXd& precision_diag() const;
    bool is_diagonal() const { return kind_ == StorageKind::Diagonal; }

    MatrixXd covariance() const;
    /// Diagonal of the covariance (per-parameter marginal variances).
    VectorXd variance_diag() const;
    double log_det_precision() const;

    /// Solves precision * x = rhs.
    VectorXd solve(const VectorXd& rhs) const;
    MatrixXd solve(const MatrixXd& rhs) const;

    double log_density(const VectorXd& x) const;

    /// n x dim matrix of draws; deterministic given the seed.
    MatrixXd sample(std::uint64_t seed, int n) const;

private:
    GaussianBelief(VectorXd mean, MatrixXd precision, VectorXd diag, StorageKind kind,
                   bool assume_checked);

    VectorXd mean_;
    MatrixXd prec_;                  // dense kind only
    VectorXd diag_;                  // diagonal kind only
    StorageKind kind_;
    Eigen::LLT<MatrixXd> llt_;       // cached factorization, dense kind only
};

/// A Gaussian-shaped function c * N(x; mean, precision^-1), kept in log space:
/// log_scale = log c. Products, powers and quotients of normalized Gaussians
/// are of this form.
struct UnnormalizedGaussian {
    GaussianBelief belief;
    double log_scale = 0.0;
};

/// KL(p || q) for multivariate normals, closed form, computed through
/// log-domain factorizations. Values within 1e-10 of zero are clamped to 0.
double kl_divergence(const GaussianBelief& p, const GaussianBelief& q);

/// Pointwise product of the given densities. The fused precision is the sum
/// of precisions; log_scale makes the identity
///   prod_i N(x; m_i, P_i^-1) = exp(log_scale) * N(x; m, P^-1)
/// hold exactly.
UnnormalizedGaussian product(const std::vector<GaussianBelief>& beliefs);

/// p(x)^k for k > 0: same mean, precision scaled by k.
UnnormalizedGaussian power(const GaussianBelief& belief, double k);

/// numerator / denominator as a normalized belief. The difference of
/// precisions must be SPD; otherwise IndefinitePrecisionError is thrown,
/// which signals mutually inconsistent inputs.
GaussianBelief divide(const GaussianBelief& numerator, const UnnormalizedGaussian& denominator);

namespace detail {
// Throws IndefinitePrecisionError with the smallest eigenvalue on failure.
Eigen::LLT<MatrixXd> factorize_spd(const MatrixXd& m, const char* context);
void check_same_dim(Eigen::Index a, Eigen::Index b, const char* context);
}  // namespace detail

}  // namespace bayesfuse
