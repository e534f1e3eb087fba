#include "bayesfuse/gaussian.hpp"

#include "bayesfuse/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace bayesfuse {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kKlClampTol = 1e-10;
constexpr double kSymmetryRelTol = 1e-12;

double min_eigenvalue(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
    return es.eigenvalues().minCoeff();
}

}  // namespace

namespace detail {

Eigen::LLT<MatrixXd> factorize_spd(const MatrixXd& m, const char* context) {
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw IndefinitePrecisionError(
            std::string(context) + ": matrix is not positive definite", min_eigenvalue(m));
    }
    return llt;
}

void check_same_dim(Eigen::Index a, Eigen::Index b, const char* context) {
    if (a != b) {
        throw DimensionMismatchError(std::string(context) + ": dimension mismatch (" +
                                     std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
}

}  // namespace detail

GaussianBelief::GaussianBelief(VectorXd mean, MatrixXd precision, VectorXd diag,
                               StorageKind kind, bool assume_checked)
    : mean_(std::move(mean)), prec_(std::move(precision)), diag_(std::move(diag)), kind_(kind) {
    const Eigen::Index d = mean_.size();
    if (d == 0) throw DimensionMismatchError("GaussianBelief: empty mean");
    if (kind_ == StorageKind::Dense) {
        detail::check_same_dim(prec_.rows(), d, "GaussianBelief");
        detail::check_same_dim(prec_.cols(), d, "GaussianBelief");
        if (!assume_checked) {
            const double scale = std::max(1.0, prec_.cwiseAbs().maxCoeff());
            const double asym = (prec_ - prec_.transpose()).cwiseAbs().maxCoeff();
            if (asym > kSymmetryRelTol * scale) {
                throw std::invalid_argument("GaussianBelief: precision is not symmetric");
            }
        }
        prec_ = ((prec_ + prec_.transpose()) * 0.5).eval();
        llt_ = detail::factorize_spd(prec_, "GaussianBelief precision");
    } else {
        detail::check_same_dim(diag_.size(), d, "GaussianBelief");
        if ((diag_.array() <= 0.0).any() || !diag_.allFinite()) {
            throw IndefinitePrecisionError("GaussianBelief: diagonal precision must be > 0",
                                           diag_.minCoeff());
        }
    }
    if (!mean_.allFinite()) throw std::invalid_argument("GaussianBelief: non-finite mean");
}

GaussianBelief GaussianBelief::dense(VectorXd mean, MatrixXd precision) {
    return GaussianBelief(std::move(mean), std::move(precision), VectorXd(), StorageKind::Dense,
                          false);
}

GaussianBelief GaussianBelief::diagonal(VectorXd mean, VectorXd precision_diag) {
    return GaussianBelief(std::move(mean), MatrixXd(), std::move(precision_diag),
                          StorageKind::Diagonal, false);
}

GaussianBelief GaussianBelief::isotropic(VectorXd mean, double variance) {
    if (!(variance > 0.0)) throw std::invalid_argument("isotropic: variance must be > 0");
    const Eigen::Index d = mean.size();
    return diagonal(std::move(mean), VectorXd::Constant(d, 1.0 / variance));
}

GaussianBelief GaussianBelief::from_covariance(VectorXd mean, const MatrixXd& covariance) {
    auto llt = detail::factorize_spd(covariance, "from_covariance");
    MatrixXd prec = llt.solve(MatrixXd::Identity(covariance.rows(), covariance.cols()));
    return dense(std::move(mean), std::move(prec));
}

GaussianBelief GaussianBelief::from_natural_dense(MatrixXd precision, const VectorXd& shift) {
    detail::check_same_dim(precision.rows(), shift.size(), "from_natural_dense");
    precision = ((precision + precision.transpose()) * 0.5).eval();
    auto llt = detail::factorize_spd(precision, "from_natural_dense precision");
    VectorXd mean = llt.solve(shift);
    return GaussianBelief(std::move(mean), std::move(precision), VectorXd(), StorageKind::Dense,
                          true);
}

GaussianBelief GaussianBelief::from_natural_diagonal(VectorXd precision_diag,
                                                     const VectorXd& shift) {
    detail::check_same_dim(precision_diag.size(), shift.size(), "from_natural_diagonal");
    if ((precision_diag.array() <= 0.0).any()) {
        throw IndefinitePrecisionError("from_natural_diagonal: precision must be > 0",
                                       precision_diag.minCoeff());
    }
    VectorXd mean = shift.cwiseQuotient(precision_diag);
    return diagonal(std::move(mean), std::move(precision_diag));
}

MatrixXd GaussianBelief::precision_dense() const {
    if (kind_ == StorageKind::Dense) return prec_;
    return diag_.asDiagonal();
}

const VectorXd& GaussianBelief::precision_diag() const {
    if (kind_ != StorageKind::Diagonal) {
        throw std::logic_error("precision_diag: belief has dense storage");
    }
    return diag_;
}

MatrixXd GaussianBelief::covariance() const {
    if (kind_ == StorageKind::Diagonal) {
        return VectorXd(diag_.cwiseInverse()).asDiagonal();
    }
    return llt_.solve(MatrixXd::Identity(dim(), dim()));
}

VectorXd GaussianBelief::variance_diag() const {
    if (kind_ == StorageKind::Diagonal) return diag_.cwiseInverse();
    return covariance().diagonal();
}

double GaussianBelief::log_det_precision() const {
    if (kind_ == StorageKind::Diagonal) return diag_.array().log().sum();
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

VectorXd GaussianBelief::solve(const VectorXd& rhs) const {
    detail::check_same_dim(rhs.size(), dim(), "GaussianBelief::solve");
    if (kind_ == StorageKind::Diagonal) return rhs.cwiseQuotient(diag_);
    return llt_.solve(rhs);
}

MatrixXd GaussianBelief::solve(const MatrixXd& rhs) const {
    detail::check_same_dim(rhs.rows(), dim(), "GaussianBelief::solve");
    if (kind_ == StorageKind::Diagonal) return diag_.cwiseInverse().asDiagonal() * rhs;
    return llt_.solve(rhs);
}

double GaussianBelief::log_density(const VectorXd& x) const {
    detail::check_same_dim(x.size(), dim(), "log_density");
    const VectorXd r = x - mean_;
    double quad;
    if (kind_ == StorageKind::Diagonal) {
        quad = (r.array().square() * diag_.array()).sum();
    } else {
        quad = r.dot(prec_ * r);
    }
    return 0.5 * (log_det_precision() - static_cast<double>(dim()) * kLog2Pi - quad);
}

MatrixXd GaussianBelief::sample(std::uint64_t seed, int n) const {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index d = dim();
    MatrixXd out(n, d);
    VectorXd z(d);
    for (int i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
        if (kind_ == StorageKind::Diagonal) {
            out.row(i) = (mean_ + z.cwiseQuotient(diag_.cwiseSqrt())).transpose();
        } else {
            // precision = L L^T, so x = mean + L^-T z has covariance precision^-1
            out.row(i) =
                (mean_ + llt_.matrixU().solve(z)).transpose();
        }
    }
    return out;
}

double kl_divergence(const GaussianBelief& p, const GaussianBelief& q) {
    detail::check_same_dim(p.dim(), q.dim(), "kl_divergence");
    const double d = static_cast<double>(p.dim());
    const VectorXd dm = p.mean() - q.mean();
    double quad, trace;
    if (p.is_diagonal() && q.is_diagonal()) {
        const auto& lp = p.precision_diag().array();
        const auto& lq = q.precision_diag().array();
        quad = (dm.array().square() * lq).sum();
        trace = (lq / lp).sum();
    } else {
        const MatrixXd q_prec = q.precision_dense();
        quad = dm.dot(q_prec * dm);
        trace = p.solve(q_prec).trace();
    }
    double kl = 0.5 * (p.log_det_precision() - q.log_det_precision() - d + quad + trace);
    if (std::abs(kl) < kKlClampTol) kl = 0.0;
    return kl;
}

UnnormalizedGaussian product(const std::vector<GaussianBelief>& beliefs) {
    if (beliefs.empty()) throw std::invalid_argument("product: empty belief list");
    if (beliefs.size() == 1) return {beliefs.front(), 0.0};
    const Eigen::Index d = beliefs.front().dim();
    bool all_diag = true;
    for (const auto& b : beliefs) {
        detail::check_same_dim(b.dim(), d, "product");
        all_diag = all_diag && b.is_diagonal();
    }

    GaussianBelief fused = [&] {
        if (all_diag) {
            VectorXd prec = VectorXd::Zero(d);
            VectorXd shift = VectorXd::Zero(d);
            for (const auto& b : beliefs) {
                prec += b.precision_diag();
                shift += b.precision_diag().cwiseProduct(b.mean());
            }
            return GaussianBelief::from_natural_diagonal(std::move(prec), shift);
        }
        MatrixXd prec = MatrixXd::Zero(d, d);
        VectorXd shift = VectorXd::Zero(d);
        for (const auto& b : beliefs) {
            prec += b.precision_dense();
            shift += b.precision_dense() * b.mean();
        }
        return GaussianBelief::from_natural_dense(std::move(prec), shift);
    }();

    // scale = prod_i N_i(x*) / N_fused(x*), constant in x; evaluate at the fused mean
    double log_scale = -fused.log_density(fused.mean());
    for (const auto& b : beliefs) log_scale += b.log_density(fused.mean());
    return {std::move(fused), log_scale};
}

UnnormalizedGaussian power(const GaussianBelief& belief, double k) {
    if (!(k > 0.0)) throw std::invalid_argument("power: exponent must be > 0");
    GaussianBelief scaled = belief.is_diagonal()
                                ? GaussianBelief::diagonal(belief.mean(), belief.precision_diag() * k)
                                : GaussianBelief::dense(belief.mean(), belief.precision_dense() * k);
    const double log_scale = k * belief.log_density(belief.mean()) - scaled.log_density(scaled.mean());
    return {std::move(scaled), log_scale};
}

GaussianBelief divide(const GaussianBelief& numerator, const UnnormalizedGaussian& denominator) {
    const GaussianBelief& den = denominator.belief;
    detail::check_same_dim(numerator.dim(), den.dim(), "divide");
    if (numerator.is_diagonal() && den.is_diagonal()) {
        VectorXd prec = numerator.precision_diag() - den.precision_diag();
        if ((prec.array() <= 0.0).any()) {
            throw IndefinitePrecisionError("divide: resulting precision is not positive definite",
                                           prec.minCoeff());
        }
        VectorXd shift = numerator.precision_diag().cwiseProduct(numerator.mean()) -
                         den.precision_diag().cwiseProduct(den.mean());
        return GaussianBelief::from_natural_diagonal(std::move(prec), shift);
    }
    MatrixXd prec = numerator.precision_dense() - den.precision_dense();
    VectorXd shift = numerator.precision_dense() * numerator.mean() -
                     den.precision_dense() * den.mean();
    return GaussianBelief::from_natural_dense(std::move(prec), shift);
}

}  // namespace bayesfuse
