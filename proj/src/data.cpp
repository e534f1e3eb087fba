#include "bayesfuse/data.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace bayesfuse {

void LabeledShard::validate(Eigen::Index num_classes) const {
    if (has_labels() && has_targets()) {
        throw std::invalid_argument("LabeledShard: both labels and targets set");
    }
    if (has_labels() && labels.size() != features.rows()) {
        throw std::invalid_argument("LabeledShard: label count != row count");
    }
    if (has_targets() && targets.rows() != features.rows()) {
        throw std::invalid_argument("LabeledShard: target rows != feature rows");
    }
    if (has_labels() && num_classes >= 0) {
        if (labels.minCoeff() < 0 || labels.maxCoeff() >= num_classes) {
            throw std::invalid_argument("LabeledShard: label out of range");
        }
    }
}

LabeledShard LabeledShard::rows(const std::vector<Eigen::Index>& idx) const {
    LabeledShard out;
    out.agent_id = agent_id;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    if (has_targets()) out.targets.resize(static_cast<Eigen::Index>(idx.size()), targets.cols());
    if (has_labels()) out.labels.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
        if (has_targets()) out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(idx[i]);
        if (has_labels()) out.labels[static_cast<Eigen::Index>(i)] = labels[idx[i]];
    }
    return out;
}

LabeledShard LabeledShard::concat(const LabeledShard& a, const LabeledShard& b) {
    if (a.features.cols() != b.features.cols()) {
        throw std::invalid_argument("LabeledShard::concat: feature width mismatch");
    }
    LabeledShard out;
    out.agent_id = a.agent_id;
    out.features.resize(a.size() + b.size(), a.features.cols());
    out.features << a.features, b.features;
    if (a.has_targets() || b.has_targets()) {
        out.targets.resize(a.size() + b.size(), a.targets.cols());
        out.targets << a.targets, b.targets;
    }
    if (a.has_labels() || b.has_labels()) {
        out.labels.resize(a.size() + b.size());
        out.labels << a.labels, b.labels;
    }
    return out;
}

void write_csv(const std::string& path, const LabeledShard& shard) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    char buf[64];
    for (Eigen::Index c = 0; c < shard.features.cols(); ++c) out << "x" << c << ",";
    if (shard.has_labels()) {
        out << "label\n";
    } else {
        for (Eigen::Index c = 0; c + 1 < shard.targets.cols(); ++c) out << "y" << c << ",";
        out << "y" << (shard.targets.cols() - 1) << "\n";
    }
    for (Eigen::Index i = 0; i < shard.size(); ++i) {
        for (Eigen::Index c = 0; c < shard.features.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g,", shard.features(i, c));
            out << buf;
        }
        if (shard.has_labels()) {
            out << shard.labels[i] << "\n";
        } else {
            for (Eigen::Index c = 0; c < shard.targets.cols(); ++c) {
                std::snprintf(buf, sizeof buf, "%.17g%c", shard.targets(i, c),
                              c + 1 < shard.targets.cols() ? ',' : '\n');
                out << buf;
            }
        }
    }
}

}  // namespace bayesfuse
