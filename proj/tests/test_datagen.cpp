#include "bayesfuse/datagen.hpp"

#include "bayesfuse/data.hpp"
#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace bayesfuse;

TEST_CASE("linear generator") {
    GeneratorSpec spec = GeneratorSpec::linear_defaults();
    spec.seed = 7;

    SUBCASE("fixed seed reproduces theta and data") {
        const LinearData a = gen_linear(spec);
        const LinearData b = gen_linear(spec);
        CHECK((a.true_theta - b.true_theta).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.train.features - b.train.features).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a.test.targets - b.test.targets).cwiseAbs().maxCoeff() == 0.0);
        GeneratorSpec other = spec;
        other.seed = 8;
        CHECK(gen_linear(other).true_theta != a.true_theta);
    }

    SUBCASE("theta is an integer vector in [-10, 20]") {
        for (std::uint64_t s = 0; s < 20; ++s) {
            GeneratorSpec g = spec;
            g.seed = s;
            const VectorXd theta = gen_linear(g).true_theta;
            for (int j = 0; j < theta.size(); ++j) {
                CHECK(theta[j] == std::round(theta[j]));
                CHECK(theta[j] >= -10.0);
                CHECK(theta[j] <= 20.0);
            }
        }
    }

    SUBCASE("noiseless limit: ordinary least squares recovers theta") {
        GeneratorSpec g = spec;
        g.noise_std = 1e-12;
        const LinearData data = gen_linear(g);
        const MatrixXd x = data.train.features;
        const VectorXd theta_ols =
            (x.transpose() * x).ldlt().solve(x.transpose() * data.train.targets.col(0));
        CHECK((theta_ols - data.true_theta).cwiseAbs().maxCoeff() < 1e-8);
    }

    SUBCASE("test MSE of the true theta sits at the noise variance") {
        const LinearData data = gen_linear(spec);
        const VectorXd resid =
            data.test.targets.col(0) - data.test.features * data.true_theta;
        const double mse = resid.squaredNorm() / data.test.size();
        const double var = spec.noise_std * spec.noise_std;
        CHECK(std::abs(mse - var) < 3.0 * var * std::sqrt(2.0 / data.test.size()));
    }
}

TEST_CASE("two-class generator") {
    GeneratorSpec spec = GeneratorSpec::two_class_defaults();
    spec.seed = 11;
    const ClassData data = gen_two_class(spec);

    SUBCASE("class-1 fraction near 0.6 at N = 1000") {
        const double frac =
            1.0 - data.train.labels.cast<double>().sum() / data.train.size();
        CHECK(std::abs(frac - 0.6) < 3.0 * std::sqrt(0.6 * 0.4 / data.train.size()));
    }

    SUBCASE("per-class feature means near the unit vectors") {
        for (int c = 0; c < 2; ++c) {
            VectorXd sum = VectorXd::Zero(spec.d_x);
            int count = 0;
            for (Eigen::Index i = 0; i < data.train.size(); ++i) {
                if (data.train.labels[i] == c) {
                    sum += data.train.features.row(i).transpose();
                    ++count;
                }
            }
            const VectorXd mean = sum / count;
            const double se = spec.noise_std / std::sqrt(double(count));
            // 4 standard errors per coordinate to keep 10 x 2 comparisons stable
            CHECK((mean - data.class_means.row(c).transpose()).cwiseAbs().maxCoeff() <
                  4.0 * se);
        }
    }

    SUBCASE("seed determinism") {
        const ClassData again = gen_two_class(spec);
        CHECK((again.train.features - data.train.features).cwiseAbs().maxCoeff() == 0.0);
        CHECK((again.train.labels - data.train.labels).cwiseAbs().maxCoeff() == 0);
    }
}

TEST_CASE("multiclass generator") {
    GeneratorSpec spec = GeneratorSpec::multiclass_defaults();
    spec.seed = 3;
    const ClassData data = gen_multiclass(spec);
    CHECK(data.class_means.rows() == 10);
    CHECK(data.train.labels.maxCoeff() <= 9);
    CHECK(data.train.labels.minCoeff() >= 0);

    SUBCASE("determinism") {
        CHECK((gen_multiclass(spec).train.features - data.train.features)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }

    SUBCASE("class mean recovery") {
        VectorXd sum = VectorXd::Zero(spec.d_x);
        int count = 0;
        for (Eigen::Index i = 0; i < data.train.size(); ++i) {
            if (data.train.labels[i] == 0) {
                sum += data.train.features.row(i).transpose();
                ++count;
            }
        }
        const double se = spec.noise_std / std::sqrt(double(count));
        CHECK((sum / count - data.class_means.row(0).transpose()).cwiseAbs().maxCoeff() <
              4.0 * se);
    }

    SUBCASE("bayes oracle beats chance comfortably") {
        // known-generator Bayes classifier
        int hits = 0;
        for (Eigen::Index i = 0; i < data.test.size(); ++i) {
            int best = 0;
            double best_score = -1e300;
            for (int c = 0; c < 10; ++c) {
                const double score =
                    -(data.test.features.row(i).transpose() -
                      data.class_means.row(c).transpose())
                         .squaredNorm();
                if (score > best_score) {
                    best_score = score;
                    best = c;
                }
            }
            hits += best == data.test.labels[i];
        }
        CHECK(double(hits) / data.test.size() > 0.7);
    }
}

TEST_CASE("mixture generator") {
    GeneratorSpec spec = GeneratorSpec::mixture_defaults();
    spec.seed = 21;
    const MixtureData data = gen_mixture(spec);

    CHECK(data.component_means.size() == 3);
    for (const auto& means : data.component_means) {
        CHECK(means.rows() >= 1);
        CHECK(means.rows() <= 4);
        CHECK(means.cwiseAbs().maxCoeff() <= spec.mixture_mean_range);
    }
    CHECK(data.train.size() == 600);
    CHECK(data.test.size() == 300);

    SUBCASE("determinism") {
        const MixtureData again = gen_mixture(spec);
        CHECK((again.train.features - data.train.features).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("train and test come from the same distribution") {
        // two-sample mean comparison per coordinate at 3 sigma
        const VectorXd mu_train = data.train.features.colwise().mean();
        const VectorXd mu_test = data.test.features.colwise().mean();
        for (int j = 0; j < spec.d_x; ++j) {
            const double var_train =
                (data.train.features.col(j).array() - mu_train[j]).square().sum() /
                (data.train.size() - 1);
            const double var_test =
                (data.test.features.col(j).array() - mu_test[j]).square().sum() /
                (data.test.size() - 1);
            const double se =
                std::sqrt(var_train / data.train.size() + var_test / data.test.size());
            CHECK(std::abs(mu_train[j] - mu_test[j]) < 4.0 * se);
        }
    }
}

TEST_CASE("csv export writes header plus one row per sample") {
    GeneratorSpec spec = GeneratorSpec::two_class_defaults();
    spec.seed = 2;
    spec.n_train = 5;
    spec.n_test = 1;
    const ClassData data = gen_two_class(spec);
    const auto path = std::filesystem::temp_directory_path() / "bayesfuse_csv_test.csv";
    write_csv(path.string(), data.train);

    std::ifstream in(path);
    std::string line;
    int lines = 0;
    std::getline(in, line);
    CHECK(line == "x0,x1,x2,x3,x4,x5,x6,x7,x8,x9,label");
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 5);
    std::filesystem::remove(path);
}
