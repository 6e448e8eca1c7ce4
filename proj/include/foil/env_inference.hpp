#pragma once

#include <vector>

#include "foil/losses.hpp"
#include "foil/nn.hpp"
#include "foil/rng.hpp"
#include "foil/types.hpp"

namespace foil::envinf {

/// Per-sample integer environment labels over the training set, in time order.
struct EnvironmentAssignment {
    std::vector<int> labels;
    int k = 1;
    double changed_fraction = 0.0;

    void validate() const;
    static EnvironmentAssignment random(Index n, int k, Rng& rng);
};

/// K environment-specific regressor heads sharing one architecture.
struct MultiHeadRegressors {
    std::vector<nn::MlpNetwork> heads;

    int k() const { return static_cast<int>(heads.size()); }

    /// K copies of the given regressor (the warm start used between rounds).
    static MultiHeadRegressors from_template(const nn::MlpNetwork& regressor, int k);
};

struct MStepResult {
    std::vector<double> risks;    // per-head mean loss after training; NaN when skipped
    std::vector<bool> skipped;    // true for environments with zero samples
};

/// Trains each head on its environment's samples by full-batch gradient
/// descent on the per-sample loss mean. Representations are precomputed and
/// frozen; only head parameters move.
MStepResult m_step(MultiHeadRegressors& heads, const Eigen::Ref<const Matrix>& reps,
                   const Eigen::Ref<const Matrix>& targets,
                   const EnvironmentAssignment& assignment, int epochs,
                   const nn::SgdConfig& opt, losses::SampleLoss mode);

/// N x K matrix of per-sample losses under every head.
Matrix head_loss_matrix(const MultiHeadRegressors& heads, const Eigen::Ref<const Matrix>& reps,
                        const Eigen::Ref<const Matrix>& targets, losses::SampleLoss mode);

/// Reassigns every sample to its lowest-loss head. Exact ties keep the
/// sample's current label when it is among the minimizers, otherwise the
/// lowest head index wins.
EnvironmentAssignment e_step_assign(const MultiHeadRegressors& heads,
                                    const Eigen::Ref<const Matrix>& reps,
                                    const Eigen::Ref<const Matrix>& targets,
                                    const EnvironmentAssignment& current,
                                    losses::SampleLoss mode);

/// Synchronous majority vote over the window [t-r, t+r] of the old labels,
/// truncated at the sequence boundaries. Ties keep the sample's own old label
/// when it is among the modes, otherwise the lowest label wins. r = 0 is the
/// identity.
EnvironmentAssignment label_propagate(const EnvironmentAssignment& assignment, int radius);

struct EmConfig {
    int max_iters = 10;
    double delta = 0.01;     // stop when the changed fraction falls below this
    int epochs_m = 60;
    nn::SgdConfig opt{0.05, 0.9};
    int radius = 2;
    losses::SampleLoss loss_mode = losses::SampleLoss::kSuf;

    void validate() const;
};

struct EmIterationRecord {
    int iter = 0;
    double changed_fraction = 0.0;
    // Summed per-sample losses under the pre-E-step and post-E-step labels,
    // both measured against the same freshly trained heads. The E-step can
    // only decrease this sum.
    double assign_loss_before = 0.0;
    double assign_loss_after = 0.0;
    std::vector<double> head_risks;
};

struct EmResult {
    EnvironmentAssignment assignment;
    std::vector<EmIterationRecord> trace;
    bool converged = false;
};

/// Alternates m_step -> e_step_assign -> label_propagate until the label
/// change fraction drops below delta or max_iters is reached. On
/// non-convergence the lowest-total-loss assignment seen is returned.
EmResult em_infer(MultiHeadRegressors& heads, const Eigen::Ref<const Matrix>& reps,
                  const Eigen::Ref<const Matrix>& targets, EnvironmentAssignment initial,
                  const EmConfig& cfg);

/// Mean length of maximal constant runs in a label sequence.
double mean_run_length(const std::vector<int>& labels);

}  // namespace foil::envinf
