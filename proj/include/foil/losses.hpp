#pragma once

#include <span>
#include <vector>

#include "foil/types.hpp"

namespace foil::losses {

/// Floor applied to instance standard deviations before dividing.
inline constexpr double kSigmaFloor = 1e-8;

/// A vector standardized by its own mean and population std.
/// `sigma` is the raw (unfloored) population std; division uses
/// max(sigma, kSigmaFloor).
struct Standardized {
    Vector values;
    double mean = 0.0;
    double sigma = 0.0;
};

Standardized instance_standardize(const Vector& v);

/// Chain rule through instance standardization: given dLoss/d(standardized),
/// return dLoss/d(original). The mean/std dependence on the input is
/// differentiated through; when sigma sits at the floor the divisor is
/// treated as the constant floor.
Vector standardize_backward(const Standardized& s, const Vector& grad_std);

/// Residual between the per-instance standardized target and prediction.
/// Has mean 0 and population variance 2 - 2*corr(yhat, y) when both stds
/// clear the floor.
Vector irn_residual(const Vector& yhat, const Vector& y);

/// Surrogate sufficiency loss: mean squared standardized residual.
/// Zero exactly when yhat is a positive affine transform of y.
double suf_loss(const Vector& yhat, const Vector& y);

/// suf_loss value plus gradient with respect to yhat.
double suf_loss_grad(const Vector& yhat, const Vector& y, Vector& dyhat);

/// Plain MSE on raw (unstandardized) vectors.
double erm_loss(const Vector& yhat, const Vector& y);
double erm_loss_grad(const Vector& yhat, const Vector& y, Vector& dyhat);

/// Per-sample loss selector; kMse backs the surrogate-loss ablation.
enum class SampleLoss { kSuf, kMse };

double sample_loss(SampleLoss mode, const Vector& yhat, const Vector& y);
double sample_loss_grad(SampleLoss mode, const Vector& yhat, const Vector& y, Vector& dyhat);

/// Composite training loss split into its terms:
///   total = mean_e(env_risks) + lambda1 * erm + lambda2 * var_e(env_risks)
/// Environment risks average the per-sample sufficiency losses of each
/// environment present in the batch; the variance is the population variance
/// over those risks (0 with a single environment present).
struct LossBreakdown {
    double total = 0.0;
    double suf_mean = 0.0;
    double erm = 0.0;
    double variance = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::vector<int> envs_present;
    std::vector<double> env_risks;
};

LossBreakdown til_loss(const Eigen::Ref<const Matrix>& preds,
                       const Eigen::Ref<const Matrix>& targets,
                       std::span<const int> env_labels, double lambda1, double lambda2,
                       SampleLoss mode = SampleLoss::kSuf);

/// As til_loss, additionally filling dpreds (same shape as preds) with the
/// gradient of `total` with respect to each prediction entry.
LossBreakdown til_loss_grad(const Eigen::Ref<const Matrix>& preds,
                            const Eigen::Ref<const Matrix>& targets,
                            std::span<const int> env_labels, double lambda1, double lambda2,
                            Matrix& dpreds, SampleLoss mode = SampleLoss::kSuf);

}  // namespace foil::losses
