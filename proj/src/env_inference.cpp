#include "foil/env_inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace foil::envinf {

void EnvironmentAssignment::validate() const {
    if (k < 1) {
        throw ConfigError("assignment: k must be >= 1");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw ConfigError("assignment: label " + std::to_string(labels[i]) + " at index " +
                              std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
        }
    }
}

EnvironmentAssignment EnvironmentAssignment::random(Index n, int k, Rng& rng) {
    EnvironmentAssignment a;
    a.k = k;
    a.labels.resize(static_cast<std::size_t>(n));
    for (auto& label : a.labels) {
        label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k)));
    }
    return a;
}

MultiHeadRegressors MultiHeadRegressors::from_template(const nn::MlpNetwork& regressor, int k) {
    if (k < 1) {
        throw ConfigError("multi-head: k must be >= 1");
    }
    MultiHeadRegressors mh;
    mh.heads.assign(static_cast<std::size_t>(k), regressor);
    return mh;
}

MStepResult m_step(MultiHeadRegressors& heads, const Eigen::Ref<const Matrix>& reps,
                   const Eigen::Ref<const Matrix>& targets,
                   const EnvironmentAssignment& assignment, int epochs,
                   const nn::SgdConfig& opt, losses::SampleLoss mode) {
    assignment.validate();
    if (assignment.k != heads.k()) {
        throw ConfigError("m_step: assignment k does not match head count");
    }
    const Index n = reps.rows();
    if (static_cast<Index>(assignment.labels.size()) != n || targets.rows() != n) {
        throw ConfigError("m_step: sample count mismatch");
    }

    MStepResult result;
    result.risks.assign(heads.heads.size(), std::numeric_limits<double>::quiet_NaN());
    result.skipped.assign(heads.heads.size(), false);

    for (int e = 0; e < heads.k(); ++e) {
        std::vector<Index> idx;
        for (Index i = 0; i < n; ++i) {
            if (assignment.labels[static_cast<std::size_t>(i)] == e) idx.push_back(i);
        }
        if (idx.empty()) {
            result.skipped[static_cast<std::size_t>(e)] = true;
            continue;
        }
        Matrix env_reps(static_cast<Index>(idx.size()), reps.cols());
        Matrix env_targets(static_cast<Index>(idx.size()), targets.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            env_reps.row(static_cast<Index>(r)) = reps.row(idx[r]);
            env_targets.row(static_cast<Index>(r)) = targets.row(idx[r]);
        }

        auto& head = heads.heads[static_cast<std::size_t>(e)];
        nn::SgdOptimizer optimizer{opt};
        const double inv_n = 1.0 / static_cast<double>(idx.size());
        Vector dy;
        for (int epoch = 0; epoch < epochs; ++epoch) {
            nn::ActivationCache cache;
            const Matrix preds = nn::forward(head, env_reps, &cache);
            Matrix grad_out(preds.rows(), preds.cols());
            for (Index b = 0; b < preds.rows(); ++b) {
                losses::sample_loss_grad(mode, preds.row(b).transpose(),
                                         env_targets.row(b).transpose(), dy);
                grad_out.row(b) = inv_n * dy.transpose();
            }
            const auto grads = nn::backward(head, cache, grad_out);
            optimizer.step(head, grads);
        }

        const Matrix preds = nn::forward(head, env_reps);
        double risk = 0.0;
        for (Index b = 0; b < preds.rows(); ++b) {
            risk += losses::sample_loss(mode, preds.row(b).transpose(),
                                        env_targets.row(b).transpose());
        }
        result.risks[static_cast<std::size_t>(e)] = risk * inv_n;
    }
    return result;
}

Matrix head_loss_matrix(const MultiHeadRegressors& heads, const Eigen::Ref<const Matrix>& reps,
                        const Eigen::Ref<const Matrix>& targets, losses::SampleLoss mode) {
    const Index n = reps.rows();
    Matrix losses_nk(n, heads.k());
    for (int e = 0; e < heads.k(); ++e) {
        const Matrix preds = nn::forward(heads.heads[static_cast<std::size_t>(e)], reps);
        for (Index i = 0; i < n; ++i) {
            losses_nk(i, e) = losses::sample_loss(mode, preds.row(i).transpose(),
                                                  targets.row(i).transpose());
        }
    }
    return losses_nk;
}

namespace {

EnvironmentAssignment assign_from_losses(const Matrix& losses_nk,
                                         const EnvironmentAssignment& current) {
    EnvironmentAssignment next = current;
    const Index n = losses_nk.rows();
    const int k = static_cast<int>(losses_nk.cols());
    for (Index i = 0; i < n; ++i) {
        double best = losses_nk(i, 0);
        for (int e = 1; e < k; ++e) {
            best = std::min(best, losses_nk(i, e));
        }
        const int cur = current.labels[static_cast<std::size_t>(i)];
        if (losses_nk(i, cur) == best) {
            next.labels[static_cast<std::size_t>(i)] = cur;
            continue;
        }
        for (int e = 0; e < k; ++e) {
            if (losses_nk(i, e) == best) {
                next.labels[static_cast<std::size_t>(i)] = e;
                break;
            }
        }
    }
    return next;
}

double assignment_loss_sum(const Matrix& losses_nk, const std::vector<int>& labels) {
    double sum = 0.0;
    for (Index i = 0; i < losses_nk.rows(); ++i) {
        sum += losses_nk(i, labels[static_cast<std::size_t>(i)]);
    }
    return sum;
}

double fraction_changed(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty()) return 0.0;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        changed += a[i] != b[i] ? 1 : 0;
    }
    return static_cast<double>(changed) / static_cast<double>(a.size());
}

}  // namespace

EnvironmentAssignment e_step_assign(const MultiHeadRegressors& heads,
                                    const Eigen::Ref<const Matrix>& reps,
                                    const Eigen::Ref<const Matrix>& targets,
                                    const EnvironmentAssignment& current,
                                    losses::SampleLoss mode) {
    current.validate();
    if (current.k != heads.k()) {
        throw ConfigError("e_step: assignment k does not match head count");
    }
    const Matrix losses_nk = head_loss_matrix(heads, reps, targets, mode);
    return assign_from_losses(losses_nk, current);
}

EnvironmentAssignment label_propagate(const EnvironmentAssignment& assignment, int radius) {
    assignment.validate();
    if (radius < 0) {
        throw ConfigError("label_propagate: radius must be >= 0");
    }
    if (radius == 0 || assignment.labels.size() <= 1) {
        return assignment;
    }
    const auto n = static_cast<std::ptrdiff_t>(assignment.labels.size());
    EnvironmentAssignment out = assignment;
    std::vector<int> counts(static_cast<std::size_t>(assignment.k));
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        std::fill(counts.begin(), counts.end(), 0);
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - radius);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, t + radius);
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
            ++counts[static_cast<std::size_t>(assignment.labels[static_cast<std::size_t>(j)])];
        }
        const int max_count = *std::max_element(counts.begin(), counts.end());
        const int own = assignment.labels[static_cast<std::size_t>(t)];
        if (counts[static_cast<std::size_t>(own)] == max_count) {
            out.labels[static_cast<std::size_t>(t)] = own;
            continue;
        }
        for (int e = 0; e < assignment.k; ++e) {
            if (counts[static_cast<std::size_t>(e)] == max_count) {
                out.labels[static_cast<std::size_t>(t)] = e;
                break;
            }
        }
    }
    return out;
}

void EmConfig::validate() const {
    if (max_iters < 1) throw ConfigError("em: max_iters must be >= 1");
    if (delta < 0.0) throw ConfigError("em: delta must be >= 0");
    if (epochs_m < 1) throw ConfigError("em: epochs_m must be >= 1");
    if (radius < 0) throw ConfigError("em: radius must be >= 0");
    opt.validate();
}

EmResult em_infer(MultiHeadRegressors& heads, const Eigen::Ref<const Matrix>& reps,
                  const Eigen::Ref<const Matrix>& targets, EnvironmentAssignment initial,
                  const EmConfig& cfg) {
    cfg.validate();
    initial.validate();
    if (initial.k != heads.k()) {
        throw ConfigError("em_infer: assignment k does not match head count");
    }

    EmResult result;
    EnvironmentAssignment assignment = std::move(initial);
    EnvironmentAssignment best = assignment;
    double best_loss = std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        const auto m_result =
            m_step(heads, reps, targets, assignment, cfg.epochs_m, cfg.opt, cfg.loss_mode);

        const Matrix losses_nk = head_loss_matrix(heads, reps, targets, cfg.loss_mode);
        EmIterationRecord record;
        record.iter = iter;
        record.head_risks = m_result.risks;
        record.assign_loss_before = assignment_loss_sum(losses_nk, assignment.labels);

        EnvironmentAssignment reassigned = assign_from_losses(losses_nk, assignment);
        record.assign_loss_after = assignment_loss_sum(losses_nk, reassigned.labels);

        EnvironmentAssignment propagated = label_propagate(reassigned, cfg.radius);
        record.changed_fraction = fraction_changed(assignment.labels, propagated.labels);
        propagated.changed_fraction = record.changed_fraction;
        result.trace.push_back(record);

        const double propagated_loss = assignment_loss_sum(losses_nk, propagated.labels);
        if (propagated_loss < best_loss) {
            best_loss = propagated_loss;
            best = propagated;
        }

        assignment = std::move(propagated);
        if (record.changed_fraction < cfg.delta) {
            result.converged = true;
            break;
        }
    }

    result.assignment = result.converged ? assignment : best;
    return result;
}

double mean_run_length(const std::vector<int>& labels) {
    if (labels.empty()) return 0.0;
    std::size_t runs = 1;
    for (std::size_t i = 1; i < labels.size(); ++i) {
        if (labels[i] != labels[i - 1]) ++runs;
    }
    return static_cast<double>(labels.size()) / static_cast<double>(runs);
}

}  // namespace foil::envinf
