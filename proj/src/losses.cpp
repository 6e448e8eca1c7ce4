#include "foil/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace foil::losses {

Standardized instance_standardize(const Vector& v) {
    if (v.size() < 1) {
        throw std::invalid_argument("instance_standardize: empty vector");
    }
    Standardized s;
    s.mean = v.mean();
    const double var = (v.array() - s.mean).square().mean();
    s.sigma = std::sqrt(var);
    const double denom = std::max(s.sigma, kSigmaFloor);
    s.values = (v.array() - s.mean).matrix() / denom;
    return s;
}

Vector standardize_backward(const Standardized& s, const Vector& grad_std) {
    if (grad_std.size() != s.values.size()) {
        throw std::invalid_argument("standardize_backward: gradient length mismatch");
    }
    const double gbar = grad_std.mean();
    if (s.sigma > kSigmaFloor) {
        const double gv = (grad_std.array() * s.values.array()).mean();
        return ((grad_std.array() - gbar - s.values.array() * gv) / s.sigma).matrix();
    }
    return ((grad_std.array() - gbar) / kSigmaFloor).matrix();
}

Vector irn_residual(const Vector& yhat, const Vector& y) {
    if (yhat.size() != y.size()) {
        throw std::invalid_argument("irn_residual: length mismatch");
    }
    return instance_standardize(y).values - instance_standardize(yhat).values;
}

double suf_loss(const Vector& yhat, const Vector& y) {
    return irn_residual(yhat, y).squaredNorm() / static_cast<double>(y.size());
}

double suf_loss_grad(const Vector& yhat, const Vector& y, Vector& dyhat) {
    if (yhat.size() != y.size()) {
        throw std::invalid_argument("suf_loss_grad: length mismatch");
    }
    const double h = static_cast<double>(y.size());
    const Standardized sy = instance_standardize(y);
    const Standardized sp = instance_standardize(yhat);
    const Vector res = sy.values - sp.values;
    // loss = mean(res^2); d loss / d standardized-yhat = -(2/h) res
    const Vector grad_std = (-2.0 / h) * res;
    dyhat = standardize_backward(sp, grad_std);
    return res.squaredNorm() / h;
}

double erm_loss(const Vector& yhat, const Vector& y) {
    if (yhat.size() != y.size()) {
        throw std::invalid_argument("erm_loss: length mismatch");
    }
    return (yhat - y).squaredNorm() / static_cast<double>(y.size());
}

double erm_loss_grad(const Vector& yhat, const Vector& y, Vector& dyhat) {
    if (yhat.size() != y.size()) {
        throw std::invalid_argument("erm_loss_grad: length mismatch");
    }
    const double h = static_cast<double>(y.size());
    dyhat = (2.0 / h) * (yhat - y);
    return (yhat - y).squaredNorm() / h;
}

double sample_loss(SampleLoss mode, const Vector& yhat, const Vector& y) {
    return mode == SampleLoss::kSuf ? suf_loss(yhat, y) : erm_loss(yhat, y);
}

double sample_loss_grad(SampleLoss mode, const Vector& yhat, const Vector& y, Vector& dyhat) {
    return mode == SampleLoss::kSuf ? suf_loss_grad(yhat, y, dyhat)
                                    : erm_loss_grad(yhat, y, dyhat);
}

namespace {

struct EnvSlot {
    double risk_sum = 0.0;
    Index count = 0;
};

}  // namespace

LossBreakdown til_loss_grad(const Eigen::Ref<const Matrix>& preds,
                            const Eigen::Ref<const Matrix>& targets,
                            std::span<const int> env_labels, double lambda1, double lambda2,
                            Matrix& dpreds, SampleLoss mode) {
    const Index batch = preds.rows();
    if (batch == 0) {
        throw std::invalid_argument("til_loss: empty batch");
    }
    if (targets.rows() != batch || targets.cols() != preds.cols() ||
        static_cast<Index>(env_labels.size()) != batch) {
        throw std::invalid_argument("til_loss: shape/label mismatch");
    }
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw std::invalid_argument("til_loss: lambda weights must be >= 0");
    }

    const double h = static_cast<double>(preds.cols());
    (void)h;

    // First pass: per-sample losses and gradients, per-environment risk sums.
    std::vector<double> suf_vals(batch);
    std::map<int, EnvSlot> env_slots;  // ordered => deterministic reduction order
    Matrix suf_grads(batch, preds.cols());
    Matrix erm_grads(batch, preds.cols());
    double erm_total = 0.0;
    Vector dy;
    for (Index b = 0; b < batch; ++b) {
        const Vector yhat = preds.row(b).transpose();
        const Vector y = targets.row(b).transpose();
        suf_vals[b] = sample_loss_grad(mode, yhat, y, dy);
        suf_grads.row(b) = dy.transpose();
        erm_total += erm_loss_grad(yhat, y, dy);
        erm_grads.row(b) = dy.transpose();
        auto& slot = env_slots[env_labels[b]];
        slot.risk_sum += suf_vals[b];
        slot.count += 1;
    }

    LossBreakdown out;
    out.lambda1 = lambda1;
    out.lambda2 = lambda2;
    out.erm = erm_total / static_cast<double>(batch);

    const auto n_envs = static_cast<double>(env_slots.size());
    double risk_mean = 0.0;
    for (const auto& [env, slot] : env_slots) {
        const double risk = slot.risk_sum / static_cast<double>(slot.count);
        out.envs_present.push_back(env);
        out.env_risks.push_back(risk);
        risk_mean += risk;
    }
    risk_mean /= n_envs;
    out.suf_mean = risk_mean;

    double variance = 0.0;
    for (double risk : out.env_risks) {
        variance += (risk - risk_mean) * (risk - risk_mean);
    }
    variance /= n_envs;
    out.variance = variance;
    out.total = out.suf_mean + lambda1 * out.erm + lambda2 * out.variance;

    // Second pass: combine per-sample gradients with their env weights.
    //   d total / d suf_b = (1/E + lambda2 * (2/E)(R_e - Rbar)) / n_e
    //   d total / d mse_b = lambda1 / B
    std::map<int, double> env_weight;
    for (std::size_t i = 0; i < out.envs_present.size(); ++i) {
        const int env = out.envs_present[i];
        const double risk = out.env_risks[i];
        const double n_e = static_cast<double>(env_slots[env].count);
        env_weight[env] =
            (1.0 / n_envs + lambda2 * (2.0 / n_envs) * (risk - risk_mean)) / n_e;
    }
    const double erm_weight = lambda1 / static_cast<double>(batch);
    dpreds.resize(batch, preds.cols());
    for (Index b = 0; b < batch; ++b) {
        dpreds.row(b) =
            env_weight[env_labels[b]] * suf_grads.row(b) + erm_weight * erm_grads.row(b);
    }
    return out;
}

LossBreakdown til_loss(const Eigen::Ref<const Matrix>& preds,
                       const Eigen::Ref<const Matrix>& targets,
                       std::span<const int> env_labels, double lambda1, double lambda2,
                       SampleLoss mode) {
    Matrix scratch;
    return til_loss_grad(preds, targets, env_labels, lambda1, lambda2, scratch, mode);
}

}  // namespace foil::losses
