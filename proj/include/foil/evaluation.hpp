#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "foil/types.hpp"

namespace foil::metrics {

/// Means over all samples (rows) and horizon steps (cols).
double mse(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth);
double mae(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth);

/// MSE per horizon step; averages back to mse().
Vector per_step_mse(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth);

struct EvalReport {
    std::string split;
    std::string scale;  // "normalized" or "raw"
    double mse = 0.0;
    double mae = 0.0;
    Index samples = 0;
    Vector step_mse;
    std::optional<double> env_accuracy;
    std::optional<double> mean_run_length;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

EvalReport make_report(const std::string& split, const std::string& scale,
                       const Eigen::Ref<const Matrix>& pred,
                       const Eigen::Ref<const Matrix>& truth);

/// Best agreement with the true labels over all permutations of predicted
/// labels. Exhaustive, guarded to k <= 6.
double env_recovery_score(const std::vector<int>& assignment, const std::vector<int>& truth,
                          int k);

/// One run's metrics across horizon settings, for comparison tables.
struct RunMetrics {
    std::string name;
    std::vector<double> mse;
    std::vector<double> mae;
};

/// Aligned-text table of runs with average percentage improvement over the
/// baseline row: (baseline - run) / baseline * 100, averaged across settings.
std::string improvement_table(const std::vector<RunMetrics>& runs, std::size_t baseline_index);

/// Mean percentage improvement of `method` over `baseline` across settings.
double mean_improvement(const std::vector<double>& baseline, const std::vector<double>& method);

}  // namespace foil::metrics
