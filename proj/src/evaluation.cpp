#include "foil/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace foil::metrics {

namespace {

void check_shapes(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth,
                  const char* what) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
    if (pred.size() == 0) {
        throw std::invalid_argument(std::string(what) + ": empty prediction set");
    }
}

}  // namespace

double mse(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth) {
    check_shapes(pred, truth, "mse");
    return (pred - truth).array().square().mean();
}

double mae(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth) {
    check_shapes(pred, truth, "mae");
    return (pred - truth).array().abs().mean();
}

Vector per_step_mse(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth) {
    check_shapes(pred, truth, "per_step_mse");
    return (pred - truth).array().square().colwise().mean().transpose();
}

EvalReport make_report(const std::string& split, const std::string& scale,
                       const Eigen::Ref<const Matrix>& pred,
                       const Eigen::Ref<const Matrix>& truth) {
    EvalReport r;
    r.split = split;
    r.scale = scale;
    r.mse = mse(pred, truth);
    r.mae = mae(pred, truth);
    r.samples = pred.rows();
    r.step_mse = per_step_mse(pred, truth);
    return r;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["split"] = split;
    j["scale"] = scale;
    j["mse"] = mse;
    j["mae"] = mae;
    j["samples"] = samples;
    j["step_mse"] = std::vector<double>(step_mse.data(), step_mse.data() + step_mse.size());
    if (env_accuracy.has_value()) j["env_accuracy"] = *env_accuracy;
    if (mean_run_length.has_value()) j["mean_run_length"] = *mean_run_length;
    return j;
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << std::left << std::setw(8) << split << " scale=" << std::setw(11) << scale
        << " n=" << std::setw(7) << samples << " mse=" << std::fixed << std::setprecision(6)
        << mse << " mae=" << mae;
    if (env_accuracy.has_value()) {
        out << " env_acc=" << std::setprecision(4) << *env_accuracy;
    }
    return out.str();
}

double env_recovery_score(const std::vector<int>& assignment, const std::vector<int>& truth,
                          int k) {
    if (k < 1 || k > 6) {
        throw std::invalid_argument("env_recovery_score: k must lie in [1, 6]");
    }
    if (assignment.size() != truth.size() || assignment.empty()) {
        throw std::invalid_argument("env_recovery_score: size mismatch or empty input");
    }
    for (int label : assignment) {
        if (label < 0 || label >= k) {
            throw std::invalid_argument("env_recovery_score: assignment label out of range");
        }
    }
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
        std::size_t agree = 0;
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            const int mapped = perm[static_cast<std::size_t>(assignment[i])];
            if (mapped == truth[i]) ++agree;
        }
        best = std::max(best, static_cast<double>(agree) / static_cast<double>(truth.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double mean_improvement(const std::vector<double>& baseline, const std::vector<double>& method) {
    if (baseline.size() != method.size() || baseline.empty()) {
        throw std::invalid_argument("mean_improvement: settings mismatch or empty");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        if (baseline[i] == 0.0) {
            throw std::invalid_argument("mean_improvement: zero baseline metric");
        }
        sum += (baseline[i] - method[i]) / baseline[i] * 100.0;
    }
    return sum / static_cast<double>(baseline.size());
}

std::string improvement_table(const std::vector<RunMetrics>& runs, std::size_t baseline_index) {
    if (runs.size() < 2) {
        throw std::invalid_argument("improvement_table: need at least two runs");
    }
    if (baseline_index >= runs.size()) {
        throw std::invalid_argument("improvement_table: baseline index out of range");
    }
    const auto settings = runs[baseline_index].mse.size();
    for (const auto& run : runs) {
        if (run.mse.size() != settings || run.mae.size() != settings) {
            throw std::invalid_argument("improvement_table: runs do not share settings");
        }
    }

    std::size_t name_width = 6;
    for (const auto& run : runs) name_width = std::max(name_width, run.name.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_width + 2)) << "run";
    for (std::size_t s = 0; s < settings; ++s) {
        out << std::right << std::setw(12) << ("mse[" + std::to_string(s) + "]")
            << std::setw(12) << ("mae[" + std::to_string(s) + "]");
    }
    out << std::setw(12) << "imp_mse%" << std::setw(12) << "imp_mae%" << '\n';

    const auto& base = runs[baseline_index];
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        out << std::left << std::setw(static_cast<int>(name_width + 2)) << run.name;
        out << std::right << std::fixed << std::setprecision(6);
        for (std::size_t s = 0; s < settings; ++s) {
            out << std::setw(12) << run.mse[s] << std::setw(12) << run.mae[s];
        }
        out << std::setprecision(2) << std::setw(12) << mean_improvement(base.mse, run.mse)
            << std::setw(12) << mean_improvement(base.mae, run.mae);
        if (i == baseline_index) out << "  (baseline)";
        out << '\n';
    }
    return out.str();
}

}  // namespace foil::metrics
