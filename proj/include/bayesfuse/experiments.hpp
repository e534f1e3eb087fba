#pragma once

#include "bayesfuse/datagen.hpp"
#include "bayesfuse/divergence.hpp"
#include "bayesfuse/federated.hpp"
#include "bayesfuse/fusion.hpp"
#include "bayesfuse/local_inference.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bayesfuse {

enum class ExperimentKind { Regression, Lda, BnnOneShot, Federated };
enum class RuleSelection { CIL, CIP, Both };

const char* to_string(ExperimentKind kind);

/// Aggregates every knob of the four experiment families. Defaults follow
/// the synthetic setups the library reproduces; any field can be overridden
/// from the CLI or a config file.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::Regression;
    GeneratorSpec generator;
    std::vector<double> m_grid;   // client-count axis, empty = fixed m
    std::vector<double> q0_grid;  // prior-variance axis
    std::vector<double> p1_grid;  // class-prior axis
    int m = 6;
    double q0 = 1.0;
    double p1 = 0.6;
    int rounds = 18;
    double round1_q0 = 100.0;  // federated: variance of the round-1 prior
    RuleSelection rules = RuleSelection::Both;
    int repetitions = 50;
    std::uint64_t base_seed = 1;
    std::string output_dir = ".";
    MlpSpec mlp;
    TrainConfig train;

    static ExperimentConfig defaults_for(ExperimentKind kind);
    void validate() const;
    /// Canonical key=value dump; drives the fingerprint and run summaries.
    std::string summary() const;
    std::uint64_t fingerprint() const;
};

/// One CSV record of an aggregated sweep.
struct CsvRow {
    double axis_value;
    std::string rule;    // "CIL", "CIP", "CILvsCIP", "GLOBAL"
    std::string metric;
    double mean;
    double stderr_;
    int repetitions;
};

/// One Monte Carlo draw of a single-fusion experiment at explicit parameter
/// values: generates data, shards it, computes the locals, fuses with both
/// rules and evaluates test metrics plus the CIL/CIP divergence.
struct OneShotResult {
    std::optional<FusionReport> cil;
    std::optional<FusionReport> cip;
    std::map<std::string, double> metrics;
};

OneShotResult run_one_shot(const ExperimentConfig& cfg, int num_agents, double q0, double p1,
                           std::uint64_t rep_seed);

/// Full experiment over the configured axis, Monte Carlo averaged.
std::vector<CsvRow> run_experiment(const ExperimentConfig& cfg);

/// Divergence curve along one axis for the configured experiment family.
KlSweep sweep(SweepAxis axis, const std::vector<double>& grid, const ExperimentConfig& cfg);

std::vector<CsvRow> sweep_rows(const KlSweep& s);

/// Writes rows as CSV with the fixed column order
/// axis_value,rule,metric_name,mean,stderr,repetitions. Deterministic byte
/// output for identical inputs.
void write_rows_csv(const std::string& path, const std::vector<CsvRow>& rows);

/// Companion plot file: one x column, one column per (metric, rule) series.
void write_plot_data(const std::string& path, const std::vector<CsvRow>& rows);

/// Oracle-equivalence and theorem property checks; returns the number of
/// failed checks and prints one line per check.
int run_selftest(std::ostream& out);

double mean_of(const std::vector<double>& v);
double stderr_of(const std::vector<double>& v);

}  // namespace bayesfuse
