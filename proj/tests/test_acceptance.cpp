// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Tolerances are fixed here, not calibrated elsewhere.

#include "bayesfuse/datagen.hpp"
#include "bayesfuse/divergence.hpp"
#include "bayesfuse/experiments.hpp"
#include "bayesfuse/federated.hpp"
#include "bayesfuse/local_inference.hpp"
#include "bayesfuse/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

using namespace bayesfuse;

namespace {

struct Criterion {
    explicit Criterion(int number, const char* title) : number_(number), title_(title) {
        start_ = std::chrono::steady_clock::now();
    }
    ~Criterion() {
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::printf("criterion %d [%s]: %s (%.1f s)\n", number_, title_,
                    ok_ ? "PASS" : "FAIL", seconds);
        std::fflush(stdout);
    }
    void expect(bool condition, const char* what) {
        if (!condition) {
            ok_ = false;
            std::printf("criterion %d: violated: %s\n", number_, what);
        }
        CHECK_MESSAGE(condition, doctest::String(what));
    }

    int number_;
    const char* title_;
    bool ok_ = true;
    std::chrono::steady_clock::time_point start_;
};

std::vector<GaussianBelief> conjugate_locals(const GaussianBelief& prior,
                                             const LabeledShard& train, int num_agents,
                                             double noise_var, std::uint64_t seed) {
    const auto noise = ObservationNoise::isotropic(1, noise_var);
    std::vector<GaussianBelief> locals;
    for (const auto& shard : shard_dataset(train, num_agents, seed)) {
        locals.push_back(linear_posterior(prior, shard, noise));
    }
    return locals;
}

double max_abs_diff(const GaussianBelief& a, const GaussianBelief& b) {
    const double mean_diff = (a.mean() - b.mean()).cwiseAbs().maxCoeff();
    const double prec_diff =
        (a.precision_dense() - b.precision_dense()).cwiseAbs().maxCoeff();
    return std::max(mean_diff, prec_diff);
}

}  // namespace

TEST_CASE("criterion 1: cil matches the centralized posterior for every partition") {
    Criterion crit(1, "CIL exactness");
    GeneratorSpec gen = GeneratorSpec::linear_defaults();
    const double noise_var = gen.noise_std * gen.noise_std;

    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        gen.seed = seed;
        const LinearData data = gen_linear(gen);
        const auto prior = GaussianBelief::isotropic(VectorXd::Zero(gen.d_x), 1.0);
        const auto centralized =
            linear_posterior(prior, data.train, ObservationNoise::isotropic(1, noise_var));
        for (int num_agents : {1, 2, 6, 26, 50}) {
            const auto locals =
                conjugate_locals(prior, data.train, num_agents, noise_var, seed + num_agents);
            const auto fused = fuse_cil(prior, locals, false).fused;
            crit.expect(max_abs_diff(fused, centralized) < 1e-8,
                        "fused parameters differ from the centralized posterior by > 1e-8");
        }
    }
}

TEST_CASE("criterion 2: divergence grows strictly with the number of agents") {
    Criterion crit(2, "Theorem 1 reproduction");
    GeneratorSpec gen = GeneratorSpec::linear_defaults();
    const double noise_var = gen.noise_std * gen.noise_std;
    const int num_seeds = 20;

    std::vector<double> kl_at_26;
    for (int seed = 0; seed < num_seeds; ++seed) {
        gen.seed = derive_seed(1000, {static_cast<std::uint64_t>(seed)});
        const LinearData data = gen_linear(gen);
        for (double q0 : {1.0, 3.0}) {
            const auto prior = GaussianBelief::isotropic(VectorXd::Zero(gen.d_x), q0);
            double prev = -1.0;
            for (int num_agents = 2; num_agents <= 50; ++num_agents) {
                const auto locals = conjugate_locals(prior, data.train, num_agents, noise_var,
                                                     gen.seed + num_agents);
                const double kl = kl_cil_cip(prior, locals);
                crit.expect(kl > prev, "KL_M is not strictly increasing in M");
                prev = kl;
                if (num_agents == 26 && q0 == 1.0) kl_at_26.push_back(kl);
            }
        }
    }
    const double mean_kl_26 = mean_of(kl_at_26);
    std::printf("criterion 2: mean KL at M=26, q0=1: %.2f (target within [%.2f, %.2f])\n",
                mean_kl_26, 125.0 / 3.0, 125.0 * 3.0);
    crit.expect(mean_kl_26 > 125.0 / 3.0 && mean_kl_26 < 125.0 * 3.0,
                "KL at M=26, q0=1 is not within a factor of 3 of 125");
}

TEST_CASE("criterion 3: divergence vanishes as the prior becomes non-informative") {
    Criterion crit(3, "Theorem 2 reproduction");
    GeneratorSpec gen = GeneratorSpec::linear_defaults();
    const double noise_var = gen.noise_std * gen.noise_std;
    const std::vector<double> q0_grid = {1, 2, 3, 4, 9, 16, 25, 36, 64, 81};
    const int num_seeds = 20;

    std::vector<double> ratios, kl_noninf;
    for (int seed = 0; seed < num_seeds; ++seed) {
        gen.seed = derive_seed(2000, {static_cast<std::uint64_t>(seed)});
        const LinearData data = gen_linear(gen);
        double prev = std::numeric_limits<double>::infinity();
        double kl_first = 0.0, kl_last = 0.0;
        for (double q0 : q0_grid) {
            const auto prior = GaussianBelief::isotropic(VectorXd::Zero(gen.d_x), q0);
            const auto locals =
                conjugate_locals(prior, data.train, 6, noise_var, gen.seed + 6);
            const double kl = kl_cil_cip(prior, locals);
            crit.expect(kl < prev, "KL is not decreasing along the q0 grid");
            prev = kl;
            if (q0 == q0_grid.front()) kl_first = kl;
            if (q0 == q0_grid.back()) kl_last = kl;
        }
        ratios.push_back(kl_last / kl_first);
        const auto wide = GaussianBelief::isotropic(VectorXd::Zero(gen.d_x), 1e6);
        kl_noninf.push_back(
            kl_cil_cip(wide, conjugate_locals(wide, data.train, 6, noise_var, gen.seed + 6)));
    }
    std::printf("criterion 3: mean KL(81)/KL(1) = %.3e, mean KL(1e6) = %.3e\n",
                mean_of(ratios), mean_of(kl_noninf));
    crit.expect(mean_of(ratios) < 1e-3, "KL(q0=81)/KL(q0=1) >= 1e-3 at M=6");
    crit.expect(mean_of(kl_noninf) < 1e-6, "KL at q0=1e6 >= 1e-6");
}

TEST_CASE("criterion 4: test-error reproduction of the regression figure") {
    Criterion crit(4, "MSE vs number of agents");
    ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::Regression);
    cfg.m_grid = {2, 6, 10, 14, 18, 22, 26, 30, 34, 38, 42, 46, 50};
    cfg.q0 = 1.0;
    cfg.repetitions = 50;
    cfg.base_seed = 4242;
    const auto rows = run_experiment(cfg);

    std::map<double, double> cil_mse, cip_mse;
    for (const auto& row : rows) {
        if (row.metric != "test_mse") continue;
        (row.rule == "CIL" ? cil_mse : cip_mse)[row.axis_value] = row.mean;
    }
    const double cip_excess = cip_mse.at(50) / cil_mse.at(50) - 1.0;
    std::printf("criterion 4: M=50 CIP/CIL MSE = %.3f/%.3f (excess %.1f%%)\n", cip_mse.at(50),
                cil_mse.at(50), 100.0 * cip_excess);
    crit.expect(cip_excess >= 0.15, "CIP MSE at M=50 does not exceed CIL by >= 15%");

    double lo = 1e300, hi = -1e300;
    for (const auto& [m, mse] : cil_mse) {
        lo = std::min(lo, mse);
        hi = std::max(hi, mse);
    }
    std::printf("criterion 4: CIL MSE spread across M: %.3f%%\n", 100.0 * (hi / lo - 1.0));
    crit.expect(hi / lo - 1.0 < 0.05, "CIL MSE varies by >= 5% across the M grid");
}

TEST_CASE("criterion 5: cip is invariant to the data partition") {
    Criterion crit(5, "CIP partition invariance");
    GeneratorSpec gen = GeneratorSpec::linear_defaults();
    const double noise_var = gen.noise_std * gen.noise_std;
    for (std::uint64_t seed : {11ULL, 12ULL}) {
        gen.seed = seed;
        const LinearData data = gen_linear(gen);
        const auto prior = GaussianBelief::isotropic(VectorXd::Zero(gen.d_x), 1.0);
        for (int num_agents : {4, 10, 25}) {
            const auto a = fuse_cip(
                conjugate_locals(prior, data.train, num_agents, noise_var, 100 + seed));
            const auto b = fuse_cip(
                conjugate_locals(prior, data.train, num_agents, noise_var, 200 + seed));
            crit.expect(max_abs_diff(a.fused, b.fused) < 1e-10,
                        "two partitions with equal M give different CIP fusions");
        }
    }
}

TEST_CASE("criterion 6: discrete class-posterior fusion") {
    Criterion crit(6, "LDA fusion");
    const int num_seeds = 20;

    // KL over the class-prior grid (M = 6), minimized next to one half
    {
        ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::Lda);
        cfg.m = 6;
        cfg.repetitions = 10;
        cfg.base_seed = 600;
        cfg.generator.n_test = 1000;
        std::vector<double> grid;
        for (int k = 1; k <= 40; ++k) grid.push_back(k / 41.0);
        const KlSweep s = sweep(SweepAxis::ClassPrior, grid, cfg);
        std::size_t best = 0;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            crit.expect(s.failures[i].empty(), "class-prior sweep point failed");
            if (s.values[i] < s.values[best]) best = i;
        }
        std::printf("criterion 6: KL minimized at P1 = %.4f\n", s.grid[best]);
        crit.expect(best == 19 || best == 20,
                    "KL over the P1 grid is not minimized next to 0.5");
    }

    // KL increasing with M at fixed P1
    {
        ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::Lda);
        cfg.p1 = 0.1;
        cfg.repetitions = 10;
        cfg.base_seed = 601;
        cfg.generator.n_test = 1000;
        const KlSweep s = sweep(SweepAxis::Clients, {3, 6, 9, 12, 15, 18, 21, 24}, cfg);
        for (std::size_t i = 1; i < s.values.size(); ++i) {
            crit.expect(s.values[i] > s.values[i - 1],
                        "discrete KL is not increasing with M at P1 = 0.1");
        }
    }

    // accuracy gap at P1 = 0.1, M = 24
    {
        ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::Lda);
        cfg.repetitions = num_seeds;
        cfg.base_seed = 602;
        std::vector<double> gaps;
        for (int rep = 0; rep < num_seeds; ++rep) {
            const auto result = run_one_shot(cfg, 24, 1.0, 0.1,
                                             derive_seed(cfg.base_seed,
                                                         {static_cast<std::uint64_t>(rep)}));
            gaps.push_back(result.metrics.at("accuracy_cil") -
                           result.metrics.at("accuracy_cip"));
        }
        const double mean_gap_points = 100.0 * mean_of(gaps);
        std::printf("criterion 6: CIL - CIP accuracy gap at P1=0.1, M=24: %.2f points\n",
                    mean_gap_points);
        // >= 3 points with the stated +-1.5 point Monte Carlo tolerance
        crit.expect(mean_gap_points >= 1.5,
                    "CIL does not beat CIP by >= 3 (+-1.5) points at P1=0.1, M=24");
    }
}

TEST_CASE("criterion 7: one-shot fusion of Laplace-approximated classifiers") {
    Criterion crit(7, "BNN one-shot ordering");
    const std::vector<double> q0_grid = {1, 2, 4, 9, 16, 25, 32};
    const int num_seeds = 20;
    // Ordering ties: once the prior is non-informative both rules fuse to the
    // same posterior, so "CIL >= CIP" is read with a tie resolution of 0.002
    // (a tenth of the 2% convergence tolerance below).
    const double tie_resolution = 0.002;

    for (int num_agents : {6, 16}) {
        ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::BnnOneShot);
        cfg.base_seed = 700 + num_agents;
        for (double q0 : q0_grid) {
            std::vector<double> ratio_cil, ratio_cip;
            for (int rep = 0; rep < num_seeds; ++rep) {
                const auto result = run_one_shot(
                    cfg, num_agents, q0, 0.5,
                    derive_seed(cfg.base_seed, {static_cast<std::uint64_t>(rep)}));
                ratio_cil.push_back(result.metrics.at("accuracy_ratio_cil"));
                ratio_cip.push_back(result.metrics.at("accuracy_ratio_cip"));
            }
            const double cil = mean_of(ratio_cil), cip = mean_of(ratio_cip);
            std::printf("criterion 7: M=%d q0=%g ratios CIL %.4f CIP %.4f (gap %+.4f)\n",
                        num_agents, q0, cil, cip, cil - cip);
            crit.expect(cil >= cip - tie_resolution,
                        "CIL accuracy ratio below CIP at a grid point");
            if (q0 >= 25.0) {
                crit.expect(std::abs(cil - cip) <= 0.02,
                            "ratios differ by more than 2% at q0 >= 25");
            }
        }
    }
}

TEST_CASE("criterion 8: recursive federated rounds") {
    Criterion crit(8, "federated recursion");
    const int rounds = 18;
    const int num_seeds = 10;

    std::map<int, std::map<FusionRule, std::vector<std::vector<double>>>> acc, var;
    for (int num_agents : {4, 16}) {
        ExperimentConfig cfg = ExperimentConfig::defaults_for(ExperimentKind::Federated);
        cfg.m = num_agents;
        cfg.rounds = rounds;
        cfg.repetitions = num_seeds;
        cfg.base_seed = 800;
        const auto rows = run_experiment(cfg);
        for (const FusionRule rule : {FusionRule::CIL, FusionRule::CIP}) {
            acc[num_agents][rule].assign(rounds, {});
            var[num_agents][rule].assign(rounds, {});
        }
        for (const auto& row : rows) {
            const FusionRule rule =
                row.rule == "CIL" ? FusionRule::CIL : FusionRule::CIP;
            const int t = static_cast<int>(row.axis_value) - 1;
            if (row.metric == "test_accuracy") acc[num_agents][rule][t] = {row.mean};
            if (row.metric == "mean_param_variance") var[num_agents][rule][t] = {row.mean};
        }
    }

    for (int num_agents : {4, 16}) {
        for (const FusionRule rule : {FusionRule::CIL, FusionRule::CIP}) {
            const auto& a = acc[num_agents][rule];
            const auto& v = var[num_agents][rule];
            // accuracy non-decreasing after round 2, within 1 point of noise
            for (int t = 2; t < rounds; ++t) {
                crit.expect(a[t][0] >= a[t - 1][0] - 0.01,
                            "test accuracy decreases after round 2 beyond noise");
            }
            // variance strictly decreasing
            for (int t = 1; t < rounds; ++t) {
                crit.expect(v[t][0] < v[t - 1][0], "mean parameter variance not decreasing");
            }
            const double orders = std::log10(v[0][0] / v[9][0]);
            std::printf(
                "criterion 8: M=%d %s variance drop by round 10: %.1f orders of magnitude\n",
                num_agents, to_string(rule), orders);
            crit.expect(orders >= 10.0,
                        "mean parameter variance does not drop 10 orders by round 10");
        }
        // final accuracy sanity: the recursion actually learns
        crit.expect(acc[num_agents][FusionRule::CIL][rounds - 1][0] > 0.6,
                    "CIL accuracy after 18 rounds is not above 0.6");
    }
    for (int t = 1; t < rounds; ++t) {
        crit.expect(acc[4][FusionRule::CIL][t][0] >=
                        acc[16][FusionRule::CIL][t][0] - 0.005,
                    "M=4 does not dominate M=16 under CIL");
        crit.expect(acc[4][FusionRule::CIP][t][0] >=
                        acc[16][FusionRule::CIP][t][0] - 0.005,
                    "M=4 does not dominate M=16 under CIP");
    }
}

TEST_CASE("criterion 9: numerical property suite") {
    Criterion crit(9, "numerical properties");
    auto rng = make_rng(900);

    // Gaussian KL nonnegativity, 1e3 random SPD pairs
    {
        bool ok = true;
        for (int d : {1, 2, 6}) {
            for (int trial = 0; trial < 334; ++trial) {
                const auto p = oracles::random_dense_belief(rng, d);
                const auto q = oracles::random_dense_belief(rng, d);
                ok = ok && kl_divergence(p, q) >= 0.0;
            }
        }
        crit.expect(ok, "Gaussian KL went negative on a random SPD pair");
    }

    // log_s convexity, 1e3 trials
    {
        bool ok = true;
        for (int trial = 0; trial < 1000; ++trial) {
            const int d = trial % 2 == 0 ? 1 : 4;
            const auto prior = oracles::random_dense_belief(rng, d);
            const auto post = oracles::random_dense_belief(rng, d);
            const double m = 0.05 + 0.07 * (trial % 70);
            ok = ok && log_s_derivatives(m, prior, post).second >= -1e-12;
        }
        crit.expect(ok, "log_s second derivative below -1e-12");
    }

    // two-path agreement of the divergence decomposition
    {
        GeneratorSpec gen = GeneratorSpec::linear_defaults();
        bool ok = true;
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
            gen.seed = seed;
            const LinearData data = gen_linear(gen);
            const auto prior = GaussianBelief::isotropic(VectorXd::Zero(gen.d_x), 1.0);
            for (int num_agents : {2, 6, 17}) {
                const auto locals = conjugate_locals(prior, data.train, num_agents,
                                                     gen.noise_std * gen.noise_std, seed);
                const double direct = kl_cil_cip(prior, locals);
                const double via_decomp = kl_decomposition(prior, locals).sum();
                ok = ok && std::abs(direct - via_decomp) < 1e-8;
            }
        }
        crit.expect(ok, "kl_decomposition disagrees with the direct Gaussian KL");
    }

    // MLP gradient vs central finite differences
    {
        const MlpSpec spec{{5, 7, 4}, Activation::Tanh};
        std::normal_distribution<double> normal(0.0, 1.0);
        LabeledShard shard;
        shard.features.resize(15, 5);
        shard.labels.resize(15);
        for (int i = 0; i < 15; ++i) {
            for (int j = 0; j < 5; ++j) shard.features(i, j) = normal(rng);
            shard.labels[i] = i % 4;
        }
        bool ok = true;
        const double h = 1e-5;
        for (int trial = 0; trial < 10; ++trial) {
            VectorXd params(spec.parameter_count());
            for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = 0.6 * normal(rng);
            const VectorXd grad = mlp_mean_nll_gradient(spec, params, shard);
            VectorXd fd(params.size());
            for (Eigen::Index j = 0; j < params.size(); ++j) {
                VectorXd up = params, down = params;
                up[j] += h;
                down[j] -= h;
                fd[j] = (mlp_mean_nll(spec, up, shard) - mlp_mean_nll(spec, down, shard)) /
                        (2.0 * h);
            }
            ok = ok && (grad - fd).norm() <= 1e-4 * (fd.norm() + 1e-12);
        }
        crit.expect(ok, "analytic MLP gradient deviates from finite differences");
    }

    // product / divide round trips
    {
        bool ok = true;
        for (int trial = 0; trial < 50; ++trial) {
            const int d = 1 + trial % 3;
            const auto a = oracles::random_dense_belief(rng, d);
            const auto b = oracles::random_dense_belief(rng, d);
            const auto recovered = divide(product({a, b}).belief, power(b, 1.0));
            ok = ok && max_abs_diff(recovered, a) <
                           1e-10 * std::max(1.0, a.precision_dense().cwiseAbs().maxCoeff());
        }
        crit.expect(ok, "divide(product(a, b), b) does not recover a within 1e-10");
    }

    // 1-d quadrature oracles
    {
        const auto p = GaussianBelief::dense((VectorXd(1) << 0.4).finished(),
                                             (MatrixXd(1, 1) << 1.7).finished());
        const auto q = GaussianBelief::dense((VectorXd(1) << -0.3).finished(),
                                             (MatrixXd(1, 1) << 0.6).finished());
        const double quad_kl = oracles::integrate(
            [&](double t) {
                VectorXd v(1);
                v << t;
                const double lp = p.log_density(v);
                return std::exp(lp) * (lp - q.log_density(v));
            },
            -50.0, 50.0);
        crit.expect(std::abs(kl_divergence(p, q) - quad_kl) < 1e-6,
                    "closed-form KL deviates from quadrature");

        const double quad_logs = oracles::log_integrate_exp(
            [&](double t) {
                VectorXd v(1);
                v << t;
                return p.log_density(v) + 2.5 * q.log_density(v);
            },
            -60.0, 60.0);
        crit.expect(std::abs(log_s(2.5, q, p) - quad_logs) < 1e-6,
                    "log_s deviates from quadrature");

        const double quad_ce = -oracles::integrate(
            [&](double t) {
                VectorXd v(1);
                v << t;
                return std::exp(p.log_density(v)) * q.log_density(v);
            },
            -50.0, 50.0);
        crit.expect(std::abs(cross_entropy_posterior_prior(p, q) - quad_ce) < 1e-6,
                    "cross entropy deviates from quadrature");

        const double mass = oracles::integrate(
            [&](double t) {
                VectorXd v(1);
                v << t;
                return std::exp(p.log_density(v));
            },
            -50.0, 50.0);
        crit.expect(std::abs(mass - 1.0) < 1e-6, "density mass deviates from one");
    }
}
