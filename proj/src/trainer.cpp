#include "foil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "foil/checkpoint.hpp"

namespace foil::trainer {

namespace {

constexpr double kStdFloor = 1e-8;

nlohmann::json json_number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

}  // namespace

void FoilConfig::validate() const {
    if (lookback < 1 || horizon < 1) throw ConfigError("config: lookback and horizon must be >= 1");
    if (envs < 1) throw ConfigError("config: envs must be >= 1");
    if (radius < 0) throw ConfigError("config: radius must be >= 0");
    if (lambda1 < 0.0) throw ConfigError("config: lambda1 must be >= 0");
    if (lambda2 < 0.0) throw ConfigError("config: lambda2 must be >= 0");
    if (!(lr_til > 0.0)) throw ConfigError("config: lr_til must be > 0");
    if (!(lr_tei > 0.0)) throw ConfigError("config: lr_tei must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum must lie in [0, 1)");
    if (!(lr_decay > 0.0)) throw ConfigError("config: lr_decay must be > 0");
    if (stage1_epochs < 1) throw ConfigError("config: stage1_epochs must be >= 1");
    if (outer_rounds < 1) throw ConfigError("config: outer_rounds must be >= 1");
    if (em_delta < 0.0) throw ConfigError("config: em_delta must be >= 0");
    if (em_max_iters < 1) throw ConfigError("config: em_max_iters must be >= 1");
    if (em_epochs < 1) throw ConfigError("config: em_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (patience < 0) throw ConfigError("config: patience must be >= 0");
    if (backbone.d_rep < 1) throw ConfigError("config: d_rep must be >= 1");
    for (Index width : backbone.hidden) {
        if (width < 1) throw ConfigError("config: hidden layer widths must be >= 1");
    }
}

Dataset Dataset::make(const data::RawSeries& raw, const data::SplitSpec& split, Index lookback,
                      Index horizon) {
    Dataset ds;
    ds.series = raw.normalized ? raw : data::zero_mean_normalize(raw, split);
    ds.split = split;
    ds.train = data::make_windows(ds.series, lookback, horizon, split, data::Split::kTrain);
    ds.val = data::make_windows(ds.series, lookback, horizon, split, data::Split::kVal);
    ds.test = data::make_windows(ds.series, lookback, horizon, split, data::Split::kTest);
    if (ds.train.empty()) {
        throw DataError("dataset: train split produces no windows");
    }
    return ds;
}

namespace {

// ---------------------------------------------------------------------------
// Forward/backward through the full forecast path:
//   window -> per-dimension affine -> (optional RevIN) -> flatten -> phi -> rho
//          -> (optional RevIN denormalization)
// ---------------------------------------------------------------------------

struct ForwardPass {
    Matrix x;      // B x (l * d_in), transformed, flattened inputs
    Matrix reps;   // B x d_rep
    Matrix core;   // B x h, before RevIN denormalization
    Matrix preds;  // B x h
    std::vector<data::RevinStats> stats;
    nn::ActivationCache phi_cache;
    nn::ActivationCache rho_cache;
};

ForwardPass forward_windows(const FoilModel& m, const std::vector<data::WindowSample>& samples,
                            const std::vector<Index>& idx, bool need_cache) {
    const Index l = m.lookback;
    const Index din = m.d_in;
    const auto batch = static_cast<Index>(idx.size());
    ForwardPass fp;
    fp.x.resize(batch, l * din);
    if (m.revin) fp.stats.resize(static_cast<std::size_t>(batch));

    for (Index b = 0; b < batch; ++b) {
        const auto& sample = samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])];
        if (sample.x.rows() != l || sample.x.cols() != din) {
            throw ConfigError("forecast: window shape mismatch");
        }
        Matrix w = sample.x * m.affine_scale.asDiagonal();
        w.rowwise() += m.affine_shift.transpose();
        if (m.revin) {
            w = data::revin_normalize(w, fp.stats[static_cast<std::size_t>(b)]);
        }
        fp.x.row(b) = Eigen::Map<const Vector>(w.data(), l * din).transpose();
    }

    fp.reps = nn::forward(m.phi, fp.x, need_cache ? &fp.phi_cache : nullptr);
    fp.core = nn::forward(m.rho, fp.reps, need_cache ? &fp.rho_cache : nullptr);
    fp.preds = fp.core;
    if (m.revin) {
        for (Index b = 0; b < batch; ++b) {
            const auto& st = fp.stats[static_cast<std::size_t>(b)];
            const double sd = std::max(st.std(m.target_col), kStdFloor);
            fp.preds.row(b) = fp.core.row(b) * sd;
            fp.preds.row(b).array() += st.mean(m.target_col);
        }
    }
    return fp;
}

// Chain rule through one RevIN-standardized column. vt holds the standardized
// values, g the gradient w.r.t. them; gmu/gsigma are direct gradients into the
// column's mean and (unfloored) std from the output denormalization.
Vector revin_col_backward(const Eigen::Ref<const Vector>& vt, double sigma,
                          const Eigen::Ref<const Vector>& g, double gmu, double gsigma) {
    const double len = static_cast<double>(vt.size());
    const double gbar = g.mean();
    if (sigma > kStdFloor) {
        const double gv = (g.array() * vt.array()).mean();
        return ((g.array() - gbar - vt.array() * gv) / sigma + gmu / len +
                gsigma * vt.array() / len)
            .matrix();
    }
    return ((g.array() - gbar) / kStdFloor + gmu / len).matrix();
}

detail::BatchGradients backward_windows(const FoilModel& m,
                                        const std::vector<data::WindowSample>& samples,
                                        const std::vector<Index>& idx, const ForwardPass& fp,
                                        const Eigen::Ref<const Matrix>& dpreds) {
    const Index l = m.lookback;
    const Index din = m.d_in;
    const auto batch = static_cast<Index>(idx.size());

    Matrix dcore = dpreds;
    std::vector<double> gmu(static_cast<std::size_t>(batch), 0.0);
    std::vector<double> gsigma(static_cast<std::size_t>(batch), 0.0);
    if (m.revin) {
        for (Index b = 0; b < batch; ++b) {
            const auto& st = fp.stats[static_cast<std::size_t>(b)];
            const double sd_raw = st.std(m.target_col);
            const double sd = std::max(sd_raw, kStdFloor);
            dcore.row(b) = dpreds.row(b) * sd;
            gmu[static_cast<std::size_t>(b)] = dpreds.row(b).sum();
            gsigma[static_cast<std::size_t>(b)] =
                sd_raw > kStdFloor ? dpreds.row(b).dot(fp.core.row(b)) : 0.0;
        }
    }

    detail::BatchGradients grads;
    grads.rho = nn::backward(m.rho, fp.rho_cache, dcore);
    grads.phi = nn::backward(m.phi, fp.phi_cache, grads.rho.dinput);
    grads.daffine_scale = Vector::Zero(din);
    grads.daffine_shift = Vector::Zero(din);

    const Matrix& dx = grads.phi.dinput;  // B x (l * d_in), rows contiguous
    for (Index b = 0; b < batch; ++b) {
        Eigen::Map<const Matrix> d2(dx.data() + b * l * din, l, din);
        Matrix d1(l, din);
        if (m.revin) {
            Eigen::Map<const Matrix> w2(fp.x.data() + b * l * din, l, din);
            const auto& st = fp.stats[static_cast<std::size_t>(b)];
            for (Index j = 0; j < din; ++j) {
                const bool is_target = (j == m.target_col);
                d1.col(j) = revin_col_backward(
                    w2.col(j), st.std(j), d2.col(j),
                    is_target ? gmu[static_cast<std::size_t>(b)] : 0.0,
                    is_target ? gsigma[static_cast<std::size_t>(b)] : 0.0);
            }
        } else {
            d1 = d2;
        }
        const auto& raw = samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])].x;
        grads.daffine_scale += (d1.array() * raw.array()).colwise().sum().matrix().transpose();
        grads.daffine_shift += d1.colwise().sum().transpose();
    }
    return grads;
}

Matrix stack_targets(const std::vector<data::WindowSample>& samples,
                     const std::vector<Index>& idx, Index horizon) {
    Matrix targets(static_cast<Index>(idx.size()), horizon);
    for (std::size_t b = 0; b < idx.size(); ++b) {
        targets.row(static_cast<Index>(b)) = samples[static_cast<std::size_t>(idx[b])].y.transpose();
    }
    return targets;
}

std::vector<Index> all_indices(std::size_t n) {
    std::vector<Index> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<Index>(i);
    return idx;
}

// Environment-stratified batches: each batch pulls round-robin from every
// environment's shuffled queue while samples remain, so all environments are
// represented whenever possible and exhausted ones simply drop out.
std::vector<std::vector<Index>> make_batches(Index n, Index batch_size,
                                             const std::vector<int>* labels, int k, Rng& rng) {
    std::vector<std::vector<Index>> queues;
    if (labels == nullptr) {
        queues.emplace_back();
        queues.back().reserve(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) queues.back().push_back(i);
        k = 1;
    } else {
        queues.assign(static_cast<std::size_t>(k), {});
        for (Index i = 0; i < n; ++i) {
            queues[static_cast<std::size_t>((*labels)[static_cast<std::size_t>(i)])].push_back(i);
        }
    }
    for (auto& q : queues) rng.shuffle(q.begin(), q.end());

    std::vector<std::size_t> cursor(queues.size(), 0);
    Index remaining = n;
    std::vector<std::vector<Index>> batches;
    while (remaining > 0) {
        std::vector<Index> batch;
        batch.reserve(static_cast<std::size_t>(std::min(batch_size, remaining)));
        while (static_cast<Index>(batch.size()) < batch_size && remaining > 0) {
            bool pulled = false;
            for (std::size_t e = 0; e < queues.size(); ++e) {
                if (cursor[e] < queues[e].size()) {
                    batch.push_back(queues[e][cursor[e]++]);
                    --remaining;
                    pulled = true;
                    if (static_cast<Index>(batch.size()) >= batch_size || remaining == 0) break;
                }
            }
            if (!pulled) break;
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

struct ParamSnapshot {
    Vector affine_scale;
    Vector affine_shift;
    nn::MlpNetwork phi;
    nn::MlpNetwork rho;
    envinf::MultiHeadRegressors heads;
};

ParamSnapshot snapshot(const FoilModel& m) {
    return {m.affine_scale, m.affine_shift, m.phi, m.rho, m.heads};
}

void restore(FoilModel& m, const ParamSnapshot& s) {
    m.affine_scale = s.affine_scale;
    m.affine_shift = s.affine_shift;
    m.phi = s.phi;
    m.rho = s.rho;
    m.heads = s.heads;
}

double plain_mse(const Matrix& preds, const Matrix& targets) {
    return (preds - targets).array().square().mean();
}

}  // namespace

namespace detail {

losses::LossBreakdown batch_loss_grad(const FoilModel& model,
                                      const std::vector<data::WindowSample>& samples,
                                      const std::vector<Index>& idx,
                                      const std::vector<int>* labels, double lambda1,
                                      double lambda2, losses::SampleLoss mode,
                                      BatchGradients* grads) {
    if (idx.empty()) {
        throw std::invalid_argument("batch_loss_grad: empty batch");
    }
    const auto fp = forward_windows(model, samples, idx, grads != nullptr);
    const Matrix targets = stack_targets(samples, idx, model.horizon);

    Matrix dpreds;
    losses::LossBreakdown bd;
    if (labels == nullptr) {
        const auto bsz = static_cast<Index>(idx.size());
        const double inv_b = 1.0 / static_cast<double>(bsz);
        dpreds.resize(bsz, model.horizon);
        double total = 0.0;
        Vector dy;
        for (Index b = 0; b < bsz; ++b) {
            total += losses::erm_loss_grad(fp.preds.row(b).transpose(),
                                           targets.row(b).transpose(), dy);
            dpreds.row(b) = inv_b * dy.transpose();
        }
        bd.erm = total * inv_b;
        bd.lambda1 = 1.0;
        bd.total = bd.erm;
    } else {
        bd = losses::til_loss_grad(fp.preds, targets, *labels, lambda1, lambda2, dpreds, mode);
    }
    if (grads != nullptr) {
        *grads = backward_windows(model, samples, idx, fp, dpreds);
    }
    return bd;
}

}  // namespace detail

namespace {

std::pair<FoilModel, TrainingLog> run_training(const Dataset& dataset, const FoilConfig& config,
                                               bool erm_mode, const RoundHook& hook) {
    config.validate();
    const auto& series = dataset.series;
    const Index din = series.dims();
    const Index h = config.horizon;
    const auto n_train = static_cast<Index>(dataset.train.size());

    Rng rng(config.seed);

    FoilModel model;
    model.lookback = config.lookback;
    model.horizon = h;
    model.d_in = din;
    model.target_col = series.target_col;
    model.revin = config.revin;
    model.feature_affine = config.feature_affine;
    model.normalized = series.normalized;
    model.norm_mean = series.norm_mean;
    model.norm_std = series.norm_std;
    model.affine_scale = Vector::Ones(din);
    model.affine_shift = Vector::Zero(din);
    model.phi = nn::MlpNetwork::make(config.lookback * din, config.backbone.hidden,
                                     config.backbone.d_rep, config.backbone.act,
                                     nn::Activation::kIdentity, rng);
    model.rho = nn::MlpNetwork::make(config.backbone.d_rep, {}, h, config.backbone.act,
                                     nn::Activation::kIdentity, rng);

    const int k = config.effective_envs();
    model.heads = envinf::MultiHeadRegressors::from_template(model.rho, k);
    envinf::EnvironmentAssignment assignment =
        envinf::EnvironmentAssignment::random(n_train, k, rng);

    const auto train_idx = all_indices(dataset.train.size());
    const auto val_idx = all_indices(dataset.val.size());
    const Matrix train_targets = stack_targets(dataset.train, train_idx, h);
    const Matrix val_targets =
        dataset.val.empty() ? Matrix(0, h) : stack_targets(dataset.val, val_idx, h);

    TrainingLog log;
    double best_val = std::numeric_limits<double>::infinity();
    std::optional<ParamSnapshot> best_state;
    int rounds_since_improvement = 0;

    const losses::SampleLoss mode = config.sample_loss_mode();
    double lr = config.lr_til;

    for (int round = 1; round <= config.outer_rounds; ++round) {
        // Stage 1: descend the composite loss with labels fixed.
        nn::SgdConfig sgd{lr, config.momentum};
        nn::SgdOptimizer phi_opt{sgd};
        nn::SgdOptimizer rho_opt{sgd};
        Vector vel_scale = Vector::Zero(din);
        Vector vel_shift = Vector::Zero(din);

        for (int epoch = 1; epoch <= config.stage1_epochs; ++epoch) {
            const auto batches = make_batches(n_train, config.batch_size,
                                              erm_mode ? nullptr : &assignment.labels, k, rng);
            double sum_total = 0.0, sum_suf = 0.0, sum_erm = 0.0, sum_var = 0.0;
            Index seen = 0;
            for (const auto& batch : batches) {
                if (batch.empty()) continue;
                std::vector<int> batch_labels;
                const std::vector<int>* labels_ptr = nullptr;
                if (!erm_mode) {
                    batch_labels.resize(batch.size());
                    for (std::size_t b = 0; b < batch.size(); ++b) {
                        batch_labels[b] =
                            assignment.labels[static_cast<std::size_t>(batch[b])];
                    }
                    labels_ptr = &batch_labels;
                }
                detail::BatchGradients grads;
                losses::LossBreakdown bd;
                try {
                    bd = detail::batch_loss_grad(model, dataset.train, batch, labels_ptr,
                                                 config.lambda1, config.lambda2, mode, &grads);
                } catch (const NumericError& e) {
                    throw NumericError("train: round " + std::to_string(round) + ", epoch " +
                                       std::to_string(epoch) + ": " + e.what());
                }
                if (!std::isfinite(bd.total)) {
                    throw NumericError("train: loss became non-finite at round " +
                                       std::to_string(round) + ", epoch " +
                                       std::to_string(epoch));
                }
                phi_opt.step(model.phi, grads.phi);
                rho_opt.step(model.rho, grads.rho);
                if (config.feature_affine) {
                    nn::sgd_step(model.affine_scale, grads.daffine_scale, vel_scale, sgd);
                    nn::sgd_step(model.affine_shift, grads.daffine_shift, vel_shift, sgd);
                }
                const auto w = static_cast<double>(batch.size());
                sum_total += bd.total * w;
                sum_suf += bd.suf_mean * w;
                sum_erm += bd.erm * w;
                sum_var += bd.variance * w;
                seen += static_cast<Index>(batch.size());
            }
            EpochRecord er;
            er.round = round;
            er.epoch = epoch;
            er.loss.total = sum_total / static_cast<double>(seen);
            er.loss.suf_mean = sum_suf / static_cast<double>(seen);
            er.loss.erm = sum_erm / static_cast<double>(seen);
            er.loss.variance = sum_var / static_cast<double>(seen);
            er.loss.lambda1 = erm_mode ? 1.0 : config.lambda1;
            er.loss.lambda2 = erm_mode ? 0.0 : config.lambda2;
            log.epochs.push_back(std::move(er));
        }

        RoundRecord rr;
        rr.round = round;
        rr.lr = lr;
        if (hook) hook("post_stage1", round, model);

        // Stage 2: re-infer environments on frozen representations.
        if (!erm_mode) {
            const auto fp = forward_windows(model, dataset.train, train_idx, false);
            model.heads = envinf::MultiHeadRegressors::from_template(model.rho, k);
            envinf::EmConfig em;
            em.max_iters = config.em_max_iters;
            em.delta = config.em_delta;
            em.epochs_m = config.em_epochs;
            em.opt = nn::SgdConfig{config.lr_tei, config.momentum};
            em.radius = config.effective_radius();
            em.loss_mode = mode;
            auto em_result =
                envinf::em_infer(model.heads, fp.reps, train_targets, assignment, em);
            assignment = std::move(em_result.assignment);
            rr.changed_fraction = assignment.changed_fraction;
            rr.em_iters = static_cast<int>(em_result.trace.size());
            rr.em_converged = em_result.converged;
            rr.em_trace = std::move(em_result.trace);
            if (hook) hook("post_stage2", round, model);
        }

        // Round-end metrics on the full splits.
        {
            const auto fp = forward_windows(model, dataset.train, train_idx, false);
            if (erm_mode) {
                rr.train_loss.erm = plain_mse(fp.preds, train_targets);
                rr.train_loss.lambda1 = 1.0;
                rr.train_loss.total = rr.train_loss.erm;
            } else {
                rr.train_loss = losses::til_loss(fp.preds, train_targets, assignment.labels,
                                                 config.lambda1, config.lambda2, mode);
            }
            rr.train_mse = plain_mse(fp.preds, train_targets);
        }
        if (!dataset.val.empty()) {
            const auto fp = forward_windows(model, dataset.val, val_idx, false);
            rr.val_mse = plain_mse(fp.preds, val_targets);
        }
        log.rounds.push_back(rr);

        // Validation selection and patience-based early stopping.
        if (!dataset.val.empty()) {
            if (rr.val_mse < best_val) {
                best_val = rr.val_mse;
                best_state = snapshot(model);
                log.best_round = round;
                rounds_since_improvement = 0;
            } else {
                ++rounds_since_improvement;
                if (config.patience > 0 && rounds_since_improvement >= config.patience) {
                    log.early_stopped = true;
                    break;
                }
            }
        }
        lr *= config.lr_decay;
    }

    if (best_state.has_value()) {
        restore(model, *best_state);
    }
    log.final_assignment = assignment;
    return {std::move(model), std::move(log)};
}

}  // namespace

std::pair<FoilModel, TrainingLog> train_foil(const Dataset& dataset, const FoilConfig& config,
                                             const RoundHook& hook) {
    return run_training(dataset, config, false, hook);
}

std::pair<FoilModel, TrainingLog> train_erm(const Dataset& dataset, const FoilConfig& config,
                                            const RoundHook& hook) {
    return run_training(dataset, config, true, hook);
}

Vector forecast(const FoilModel& model, const Eigen::Ref<const Matrix>& window) {
    if (window.rows() != model.lookback || window.cols() != model.d_in) {
        throw ConfigError("forecast: expected a " + std::to_string(model.lookback) + "x" +
                          std::to_string(model.d_in) + " window, got " +
                          std::to_string(window.rows()) + "x" + std::to_string(window.cols()));
    }
    std::vector<data::WindowSample> one(1);
    one[0].x = window;
    one[0].y = Vector::Zero(model.horizon);
    const auto fp = forward_windows(model, one, {0}, false);
    return fp.preds.row(0).transpose();
}

Matrix forecast_batch(const FoilModel& model, const std::vector<data::WindowSample>& samples) {
    if (samples.empty()) {
        return Matrix(0, model.horizon);
    }
    std::vector<Index> idx(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) idx[i] = static_cast<Index>(i);
    return forward_windows(model, samples, idx, false).preds;
}

namespace {

void save_net(io::TensorFile& file, const std::string& prefix, const nn::MlpNetwork& net) {
    file.put_scalar(prefix + "/n_layers", static_cast<double>(net.layers.size()));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& layer = net.layers[i];
        const std::string lp = prefix + "/L" + std::to_string(i);
        file.put(lp + "/weight", layer.weight);
        file.put(lp + "/bias", layer.bias);
        file.put_scalar(lp + "/act", static_cast<double>(static_cast<int>(layer.act)));
    }
}

nn::MlpNetwork load_net(const io::TensorFile& file, const std::string& prefix) {
    const auto n = static_cast<std::size_t>(file.scalar(prefix + "/n_layers"));
    nn::MlpNetwork net;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string lp = prefix + "/L" + std::to_string(i);
        nn::DenseLayer layer;
        layer.weight = file.matrix(lp + "/weight");
        layer.bias = file.vector(lp + "/bias");
        layer.act = static_cast<nn::Activation>(static_cast<int>(file.scalar(lp + "/act")));
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

}  // namespace

void save_checkpoint(const FoilModel& model, const std::string& path) {
    io::TensorFile file;
    file.put_scalar("meta/version", 1.0);
    file.put_scalar("meta/lookback", static_cast<double>(model.lookback));
    file.put_scalar("meta/horizon", static_cast<double>(model.horizon));
    file.put_scalar("meta/d_in", static_cast<double>(model.d_in));
    file.put_scalar("meta/target_col", static_cast<double>(model.target_col));
    file.put_scalar("meta/revin", model.revin ? 1.0 : 0.0);
    file.put_scalar("meta/feature_affine", model.feature_affine ? 1.0 : 0.0);
    file.put_scalar("meta/normalized", model.normalized ? 1.0 : 0.0);
    if (model.normalized) {
        file.put("norm/mean", model.norm_mean);
        file.put("norm/std", model.norm_std);
    }
    file.put("affine/scale", model.affine_scale);
    file.put("affine/shift", model.affine_shift);
    save_net(file, "phi", model.phi);
    save_net(file, "rho", model.rho);
    file.put_scalar("heads/count", static_cast<double>(model.heads.k()));
    for (int e = 0; e < model.heads.k(); ++e) {
        save_net(file, "heads/H" + std::to_string(e), model.heads.heads[static_cast<std::size_t>(e)]);
    }
    file.save(path);
}

FoilModel load_checkpoint(const std::string& path) {
    const auto file = io::TensorFile::load(path);
    if (static_cast<int>(file.scalar("meta/version")) != 1) {
        throw DataError("checkpoint: unsupported version in '" + path + "'");
    }
    FoilModel model;
    model.lookback = static_cast<Index>(file.scalar("meta/lookback"));
    model.horizon = static_cast<Index>(file.scalar("meta/horizon"));
    model.d_in = static_cast<Index>(file.scalar("meta/d_in"));
    model.target_col = static_cast<Index>(file.scalar("meta/target_col"));
    model.revin = file.scalar("meta/revin") != 0.0;
    model.feature_affine = file.scalar("meta/feature_affine") != 0.0;
    model.normalized = file.scalar("meta/normalized") != 0.0;
    if (model.normalized) {
        model.norm_mean = file.vector("norm/mean");
        model.norm_std = file.vector("norm/std");
    }
    model.affine_scale = file.vector("affine/scale");
    model.affine_shift = file.vector("affine/shift");
    model.phi = load_net(file, "phi");
    model.rho = load_net(file, "rho");
    const int heads = static_cast<int>(file.scalar("heads/count"));
    model.heads.heads.clear();
    for (int e = 0; e < heads; ++e) {
        model.heads.heads.push_back(load_net(file, "heads/H" + std::to_string(e)));
    }
    return model;
}

std::string TrainingLog::to_jsonl() const {
    std::string out;
    for (const auto& er : epochs) {
        nlohmann::json j;
        j["type"] = "epoch";
        j["round"] = er.round;
        j["epoch"] = er.epoch;
        j["total"] = json_number(er.loss.total);
        j["suf"] = json_number(er.loss.suf_mean);
        j["erm"] = json_number(er.loss.erm);
        j["var"] = json_number(er.loss.variance);
        out += j.dump();
        out += '\n';
    }
    for (const auto& rr : rounds) {
        nlohmann::json j;
        j["type"] = "round";
        j["round"] = rr.round;
        j["lr"] = rr.lr;
        j["total"] = json_number(rr.train_loss.total);
        j["suf"] = json_number(rr.train_loss.suf_mean);
        j["erm"] = json_number(rr.train_loss.erm);
        j["var"] = json_number(rr.train_loss.variance);
        j["lambda1"] = rr.train_loss.lambda1;
        j["lambda2"] = rr.train_loss.lambda2;
        j["envs"] = rr.train_loss.envs_present;
        nlohmann::json risks = nlohmann::json::array();
        for (double r : rr.train_loss.env_risks) risks.push_back(json_number(r));
        j["env_risks"] = std::move(risks);
        j["train_mse"] = json_number(rr.train_mse);
        j["val_mse"] = json_number(rr.val_mse);
        j["changed_fraction"] = rr.changed_fraction;
        j["em_iters"] = rr.em_iters;
        j["em_converged"] = rr.em_converged;
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& it : rr.em_trace) {
            nlohmann::json t;
            t["iter"] = it.iter;
            t["changed"] = it.changed_fraction;
            t["loss_before"] = json_number(it.assign_loss_before);
            t["loss_after"] = json_number(it.assign_loss_after);
            nlohmann::json hr = nlohmann::json::array();
            for (double r : it.head_risks) hr.push_back(json_number(r));
            t["head_risks"] = std::move(hr);
            trace.push_back(std::move(t));
        }
        j["em_trace"] = std::move(trace);
        out += j.dump();
        out += '\n';
    }
    nlohmann::json j;
    j["type"] = "final";
    j["best_round"] = best_round;
    j["early_stopped"] = early_stopped;
    j["envs"] = final_assignment.k;
    j["mean_run_length"] = envinf::mean_run_length(final_assignment.labels);
    out += j.dump();
    out += '\n';
    return out;
}

}  // namespace foil::trainer
