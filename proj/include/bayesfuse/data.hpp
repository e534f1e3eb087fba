#pragma once

#include <Eigen/Dense>

#include <string>

namespace bayesfuse {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// One agent's dataset: a feature matrix plus either real-valued targets
/// (regression) or integer labels in [0, L) (classification). Exactly one of
/// the two is populated.
struct LabeledShard {
    MatrixXd features;  // N x d_x
    MatrixXd targets;   // N x d_y, empty for classification
    VectorXi labels;    // N, empty for regression
    int agent_id = 0;

    Eigen::Index size() const { return features.rows(); }
    bool has_labels() const { return labels.size() > 0; }
    bool has_targets() const { return targets.size() > 0; }

    /// Throws when row counts disagree or labels fall outside [0, num_classes).
    void validate(Eigen::Index num_classes = -1) const;

    LabeledShard rows(const std::vector<Eigen::Index>& idx) const;
    static LabeledShard concat(const LabeledShard& a, const LabeledShard& b);
};

/// Writes a CSV with a header row, one sample per line, label/target in the
/// last column(s).
void write_csv(const std::string& path, const LabeledShard& shard);

}  // namespace bayesfuse
