#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "foil/data.hpp"
#include "foil/env_inference.hpp"
#include "foil/losses.hpp"
#include "foil/nn.hpp"
#include "foil/types.hpp"

namespace foil::trainer {

struct BackboneSpec {
    std::vector<Index> hidden{64};
    Index d_rep = 32;
    nn::Activation act = nn::Activation::kRelu;
};

/// All hyperparameters of a FOIL run. Field defaults are the desk-scale
/// benchmark configuration.
struct FoilConfig {
    Index lookback = 24;
    Index horizon = 8;

    int envs = 2;
    int radius = 2;
    double lambda1 = 1.0;
    double lambda2 = 1.0;

    double lr_til = 0.02;
    double lr_tei = 0.05;
    double momentum = 0.9;
    double lr_decay = 1.0;   // per-round multiplier on lr_til
    double clip_norm = 10.0;  // global gradient-norm clip; 0 disables

    int stage1_epochs = 30;
    int outer_rounds = 5;

    double em_delta = 0.01;
    int em_max_iters = 10;
    int em_epochs = 60;

    Index batch_size = 64;
    int patience = 2;  // rounds without val improvement before stopping; 0 disables
    std::uint64_t seed = 7;

    BackboneSpec backbone;

    bool revin = false;
    bool feature_affine = true;
    bool ablate_suf = false;
    bool ablate_tei = false;
    bool ablate_lp = false;

    void validate() const;

    /// Environment count and propagation radius after ablation flags.
    int effective_envs() const { return ablate_tei ? 1 : envs; }
    int effective_radius() const { return ablate_lp ? 0 : radius; }
    losses::SampleLoss sample_loss_mode() const {
        return ablate_suf ? losses::SampleLoss::kMse : losses::SampleLoss::kSuf;
    }
};

/// The trained model: optional per-dimension affine on raw covariates,
/// backbone phi, main regressor rho, and the environment heads kept between
/// rounds. Dataset normalization statistics ride along for evaluation.
struct FoilModel {
    Vector affine_scale;
    Vector affine_shift;
    nn::MlpNetwork phi;
    nn::MlpNetwork rho;
    envinf::MultiHeadRegressors heads;

    bool revin = false;
    bool feature_affine = true;
    Index lookback = 0;
    Index horizon = 0;
    Index d_in = 0;
    Index target_col = 0;

    bool normalized = false;
    Vector norm_mean;
    Vector norm_std;
};

/// Normalized series plus windowed splits, ready for training.
struct Dataset {
    data::RawSeries series;  // zero-mean normalized
    data::SplitSpec split;
    std::vector<data::WindowSample> train;
    std::vector<data::WindowSample> val;
    std::vector<data::WindowSample> test;

    static Dataset make(const data::RawSeries& raw, const data::SplitSpec& split,
                        Index lookback, Index horizon);
};

struct EpochRecord {
    int round = 0;
    int epoch = 0;
    losses::LossBreakdown loss;
};

struct RoundRecord {
    int round = 0;
    losses::LossBreakdown train_loss;  // full-train breakdown at round end
    double train_mse = 0.0;
    double val_mse = std::numeric_limits<double>::quiet_NaN();
    double changed_fraction = 0.0;
    int em_iters = 0;
    bool em_converged = true;
    std::vector<envinf::EmIterationRecord> em_trace;
    double lr = 0.0;
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
    std::vector<RoundRecord> rounds;
    envinf::EnvironmentAssignment final_assignment;
    int best_round = 0;      // 1-based; 0 when no validation selection happened
    bool early_stopped = false;

    std::string to_jsonl() const;
};

/// Observation hook for tests and tooling; phases are "post_stage1" and
/// "post_stage2", fired once per round.
using RoundHook = std::function<void(const char* phase, int round, const FoilModel& model)>;

/// The alternating FOIL trainer: Stage 1 descends the composite invariance
/// loss on (phi, rho, affine) with environment labels fixed; Stage 2 re-infers
/// environments on frozen representations. Validation selects the best round
/// by plain MSE when a val split exists.
std::pair<FoilModel, TrainingLog> train_foil(const Dataset& dataset, const FoilConfig& config,
                                             const RoundHook& hook = {});

/// Control arm: identical backbone and schedule, plain MSE objective, no
/// environment machinery.
std::pair<FoilModel, TrainingLog> train_erm(const Dataset& dataset, const FoilConfig& config,
                                            const RoundHook& hook = {});

/// Deterministic forecast for one lookback window (model/normalized scale).
Vector forecast(const FoilModel& model, const Eigen::Ref<const Matrix>& window);

/// Forecasts for a set of windows, rows = samples.
Matrix forecast_batch(const FoilModel& model, const std::vector<data::WindowSample>& samples);

void save_checkpoint(const FoilModel& model, const std::string& path);
FoilModel load_checkpoint(const std::string& path);

namespace detail {

/// Gradients of one composite-loss evaluation over a batch of windows, with
/// respect to every trainable parameter of the forecast path.
struct BatchGradients {
    nn::ParamGradients phi;
    nn::ParamGradients rho;
    Vector daffine_scale;
    Vector daffine_shift;
};

/// Forward + loss + backward through the full forecast path
/// (affine -> optional RevIN -> phi -> rho -> optional RevIN denorm).
/// With `labels` null the objective is the plain batch-mean MSE; otherwise it
/// is the composite loss over the given per-sample environment labels.
/// Pass `grads` as null to evaluate the loss only.
losses::LossBreakdown batch_loss_grad(const FoilModel& model,
                                      const std::vector<data::WindowSample>& samples,
                                      const std::vector<Index>& idx,
                                      const std::vector<int>* labels, double lambda1,
                                      double lambda2, losses::SampleLoss mode,
                                      BatchGradients* grads);

}  // namespace detail

}  // namespace foil::trainer
