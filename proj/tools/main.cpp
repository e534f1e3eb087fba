// Command-line driver for the fusion experiments: reproduces the synthetic
// regression, LDA, one-shot BNN and federated studies as CSV / plot-data
// files from declarative configuration.

#include "bayesfuse/experiments.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace bayesfuse;

// "2:50:4" (start:stop:step, inclusive) or "1,2,3".
std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    if (text.empty()) return grid;
    if (text.find(':') != std::string::npos) {
        double start, stop, step = 1.0;
        const int matched = std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &stop, &step);
        if (matched < 2 || step <= 0.0) {
            throw CLI::ValidationError("grid", "expected start:stop[:step] with step > 0");
        }
        for (double v = start; v <= stop + 1e-12; v += step) grid.push_back(v);
        return grid;
    }
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) grid.push_back(std::stod(item));
    }
    return grid;
}

struct CliOptions {
    std::string m_grid, q0_grid, p1_grid;
    std::string rules = "both";
    std::string output_dir;
    std::string axis = "q0";
    std::string sweep_experiment = "regression";
    std::string sweep_grid;
};

void add_common_options(CLI::App* cmd, ExperimentConfig& cfg, CliOptions& opts) {
    cmd->add_option("--M,-M", cfg.m, "number of agents");
    cmd->add_option("--M-grid", opts.m_grid, "agent-count grid (start:stop:step or list)");
    cmd->add_option("--q0", cfg.q0, "shared prior variance");
    cmd->add_option("--q0-grid", opts.q0_grid, "prior-variance grid");
    cmd->add_option("--P1", cfg.p1, "assumed class-1 prior probability");
    cmd->add_option("--P1-grid", opts.p1_grid, "class-prior grid");
    cmd->add_option("--reps", cfg.repetitions, "Monte Carlo repetitions");
    cmd->add_option("--seed", cfg.base_seed, "base RNG seed");
    cmd->add_option("--rules", opts.rules, "fusion rules to run: cil, cip or both")
        ->check(CLI::IsMember({"cil", "cip", "both"}));
    cmd->add_option("--out", opts.output_dir, "output directory (env BAYESFUSE_OUTPUT_DIR)");
    cmd->add_option("--n-train", cfg.generator.n_train, "training sample count");
    cmd->add_option("--n-test", cfg.generator.n_test, "test sample count");
    cmd->add_option("--noise-std", cfg.generator.noise_std, "generator noise std");
    cmd->add_option("--feature-std", cfg.generator.feature_std,
                    "input scale of the linear generator");
    cmd->add_option("--epochs", cfg.train.epochs, "training epochs per fit");
    cmd->add_option("--lr", cfg.train.learning_rate, "learning rate");
    cmd->add_option("--fisher-jitter", cfg.train.fisher_jitter,
                    "jitter added to the Fisher diagonal");
    cmd->add_option("--rounds", cfg.rounds, "federated communication rounds");
    cmd->add_option("--round1-q0", cfg.round1_q0, "variance of the round-1 prior");
}

void finalize_config(ExperimentConfig& cfg, CliOptions& opts) {
    cfg.m_grid = parse_grid(opts.m_grid);
    cfg.q0_grid = parse_grid(opts.q0_grid);
    cfg.p1_grid = parse_grid(opts.p1_grid);
    if (opts.rules == "cil") cfg.rules = RuleSelection::CIL;
    if (opts.rules == "cip") cfg.rules = RuleSelection::CIP;
    if (opts.rules == "both") cfg.rules = RuleSelection::Both;
    if (!opts.output_dir.empty()) {
        cfg.output_dir = opts.output_dir;
    } else if (const char* env = std::getenv("BAYESFUSE_OUTPUT_DIR")) {
        cfg.output_dir = env;
    }
    cfg.validate();
}

std::string axis_suffix(const ExperimentConfig& cfg) {
    if (!cfg.m_grid.empty()) return "M";
    if (!cfg.q0_grid.empty()) return "q0";
    if (!cfg.p1_grid.empty()) return "P1";
    if (cfg.experiment == ExperimentKind::Federated) return "t";
    return "point";
}

int emit(const ExperimentConfig& cfg, const std::vector<CsvRow>& rows,
         const std::string& stem) {
    const auto dir = std::filesystem::path(cfg.output_dir);
    const std::string csv = (dir / (stem + ".csv")).string();
    const std::string plot = (dir / (stem + "_plot.dat")).string();
    write_rows_csv(csv, rows);
    write_plot_data(plot, rows);
    std::printf("config: %s\n", cfg.summary().c_str());
    std::printf("fingerprint: %016llx\n",
                static_cast<unsigned long long>(cfg.fingerprint()));
    std::printf("rows: %zu -> %s (plot data: %s)\n", rows.size(), csv.c_str(), plot.c_str());
    return 0;
}

int run_standard(ExperimentKind kind, ExperimentConfig& cfg, CliOptions& opts) {
    finalize_config(cfg, opts);
    const auto rows = run_experiment(cfg);
    return emit(cfg, rows, std::string(to_string(kind)) + "_" + axis_suffix(cfg));
}

int run_kl_sweep(ExperimentConfig& cfg, CliOptions& opts) {
    static const std::map<std::string, SweepAxis> axes = {
        {"M", SweepAxis::Clients},
        {"q0", SweepAxis::PriorVariance},
        {"P1", SweepAxis::ClassPrior},
        {"round", SweepAxis::Round},
    };
    static const std::map<std::string, ExperimentKind> kinds = {
        {"regression", ExperimentKind::Regression},
        {"lda", ExperimentKind::Lda},
        {"bnn", ExperimentKind::BnnOneShot},
        {"federated", ExperimentKind::Federated},
    };
    const ExperimentKind kind = kinds.at(opts.sweep_experiment);
    ExperimentConfig base = ExperimentConfig::defaults_for(kind);
    // carry over every CLI override from the sweep subcommand's config
    base.m = cfg.m;
    base.q0 = cfg.q0;
    base.p1 = cfg.p1;
    base.rounds = cfg.rounds;
    base.round1_q0 = cfg.round1_q0;
    base.repetitions = cfg.repetitions;
    base.base_seed = cfg.base_seed;
    base.train = cfg.train.epochs != 0 ? cfg.train : base.train;
    cfg = base;
    finalize_config(cfg, opts);

    const SweepAxis axis = axes.at(opts.axis);
    std::vector<double> grid = parse_grid(opts.sweep_grid);
    if (grid.empty()) {
        switch (axis) {
            case SweepAxis::Clients: grid = parse_grid("2:50:4"); break;
            case SweepAxis::PriorVariance: grid = {1, 2, 3, 4, 9, 16, 25, 36, 64, 81}; break;
            case SweepAxis::ClassPrior:
                for (int k = 1; k <= 40; ++k) grid.push_back(k / 41.0);
                break;
            case SweepAxis::Round:
                for (int t = 1; t <= cfg.rounds; ++t) grid.push_back(t);
                break;
        }
    }

    const KlSweep result = sweep(axis, grid, cfg);
    int failed_points = 0;
    for (std::size_t i = 0; i < result.grid.size(); ++i) {
        if (!result.failures[i].empty()) {
            ++failed_points;
            std::fprintf(stderr, "point %s=%g failed: %s\n", to_string(axis), result.grid[i],
                         result.failures[i].c_str());
        }
    }
    const std::string stem =
        "kl_sweep_" + opts.sweep_experiment + "_" + std::string(to_string(axis));
    emit(cfg, sweep_rows(result), stem);
    return failed_points == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian data-fusion experiments: prior-corrected (CIL) vs "
                 "product-of-experts (CIP) fusion of distributed estimators"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file with one section per subcommand");

    std::map<std::string, ExperimentConfig> configs;
    std::map<std::string, CliOptions> options;

    auto add_experiment = [&](const char* name, const char* help, ExperimentKind kind) {
        CLI::App* cmd = app.add_subcommand(name, help);
        configs[name] = ExperimentConfig::defaults_for(kind);
        add_common_options(cmd, configs[name], options[name]);
        return cmd;
    };

    add_experiment("regression", "distributed linear-Gaussian estimation",
                   ExperimentKind::Regression);
    add_experiment("lda", "fusion of discrete class posteriors", ExperimentKind::Lda);
    add_experiment("bnn", "one-shot fusion of Laplace-approximated classifiers",
                   ExperimentKind::BnnOneShot);
    add_experiment("federated", "recursive communication rounds", ExperimentKind::Federated);

    CLI::App* sweep_cmd =
        app.add_subcommand("kl-sweep", "divergence between the fused posteriors along one axis");
    configs["kl-sweep"] = ExperimentConfig::defaults_for(ExperimentKind::Regression);
    add_common_options(sweep_cmd, configs["kl-sweep"], options["kl-sweep"]);
    sweep_cmd->add_option("--axis", options["kl-sweep"].axis, "sweep axis: M, q0, P1 or round")
        ->check(CLI::IsMember({"M", "q0", "P1", "round"}));
    sweep_cmd
        ->add_option("--experiment", options["kl-sweep"].sweep_experiment,
                     "experiment family the sweep runs on")
        ->check(CLI::IsMember({"regression", "lda", "bnn", "federated"}));
    sweep_cmd->add_option("--grid", options["kl-sweep"].sweep_grid,
                          "explicit sweep grid (start:stop:step or list)");

    app.add_subcommand("selftest", "oracle-equivalence and theorem property checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "selftest") {
            return run_selftest(std::cout) == 0 ? 0 : 2;
        }
        if (name == "kl-sweep") {
            return run_kl_sweep(configs[name], options[name]);
        }
        static const std::map<std::string, ExperimentKind> kinds = {
            {"regression", ExperimentKind::Regression},
            {"lda", ExperimentKind::Lda},
            {"bnn", ExperimentKind::BnnOneShot},
            {"federated", ExperimentKind::Federated},
        };
        return run_standard(kinds.at(name), configs[name], options[name]);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
