#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "foil/data.hpp"
#include "foil/types.hpp"

namespace foil::scm {

/// One contiguous run of time steps belonging to a single environment.
struct Segment {
    int env = 0;
    Index len = 0;
};

/// Parameters of the synthetic causal generator.
///
/// The generated series contains an autoregressive invariant driver x_inv,
/// environment-dependent variant features x_var built from x_inv, and an
/// observed target y that is a per-block affine contamination of the
/// sufficiently predictable component y_suf:
///
///   x_inv(t) = ar_coeff * x_inv(t-1) + sigma_drive * eta(t)
///   y_suf(t) = g(x_inv(t - lag_offset - k), k = 0..g_lags-1) + sigma_eps * eps(t)
///   x_var(t) = W_env(t) * x_inv(t) + sigma_var_noise * nu(t)
///   y(t)     = alpha_block(t) * y_suf(t) + beta_block(t)
///
/// alpha/beta are redrawn per contiguous block of z_block_len steps. Horizon
/// windows of length <= lag_offset are fully determined by the lookback
/// (up to the eps noise), so the sufficiency assumption holds by design.
struct ScmSpec {
    Index series_len = 4000;
    int k_true = 2;
    Index d_inv = 3;
    Index d_var = 3;
    std::vector<Segment> layout;  // empty -> default benchmark layout

    Index z_block_len = 8;
    double alpha_min = 0.6;
    double alpha_max = 1.5;
    double beta_min = -1.0;
    double beta_max = 1.0;

    // When > 0, the final fraction of blocks draws alpha/beta from the
    // test ranges instead (the shifted-Z protocol's distribution change).
    double shift_test_fraction = 0.0;
    double test_alpha_min = 2.0;
    double test_alpha_max = 3.0;
    double test_beta_min = -1.0;
    double test_beta_max = 1.0;

    double sigma_eps = 0.1;
    double sigma_var_noise = 0.05;
    double sigma_drive = 1.0;
    double ar_coeff = 0.7;

    Index g_lags = 4;
    Index lag_offset = 8;
    std::string g_kind = "linear";  // or "tanh"

    // 0 = environments and the Z process are independent; 1 = each block's
    // alpha/beta quantile is pinned to its environment's anchor point.
    double env_z_coupling = 0.0;

    std::uint64_t seed = 7;

    // Optional overrides; empty -> deterministic defaults.
    Matrix w_inv;                // d_inv x g_lags
    std::vector<Matrix> w_var;   // k_true entries, each d_var x d_inv

    void validate() const;

    /// Layout in effect (the default when `layout` is empty).
    std::vector<Segment> effective_layout() const;
};

/// Ground truth kept out of the training path, for evaluation only.
struct ScmTruth {
    std::vector<int> env_label;   // per time step
    std::vector<double> alpha;    // per time step (expanded from blocks)
    std::vector<double> beta;
    Vector y_suf;
    Index z_block_len = 0;
    Index shift_start = 0;        // first shifted-Z row; == series_len when none
    Matrix w_inv;
    std::vector<Matrix> w_var;
};

std::pair<data::RawSeries, ScmTruth> generate(const ScmSpec& spec);

enum class OodProtocol { kHeldOutEnvironment, kShiftedZ };

OodProtocol protocol_from_string(const std::string& name);

/// Chronological split whose test region differs from train by construction:
/// held-out-environment reserves the maximal single-environment suffix,
/// shifted-Z reserves the region generated with the test alpha/beta ranges.
/// The val region is the val_fraction of rows immediately before test.
data::SplitSpec ood_split(const data::RawSeries& series, const ScmTruth& truth,
                          OodProtocol protocol, double val_fraction = 0.1);

void write_truth_json(const ScmTruth& truth, const std::string& path);
ScmTruth read_truth_json(const std::string& path);

}  // namespace foil::scm
