#include "foil/scm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "foil/rng.hpp"

namespace foil::scm {

namespace {

Matrix default_w_inv(Index d_inv, Index g_lags) {
    Matrix w(d_inv, g_lags);
    for (Index d = 0; d < d_inv; ++d) {
        const double sign = (d % 2 == 0) ? 1.0 : -1.0;
        const double scale = sign / static_cast<double>(1 + d);
        for (Index k = 0; k < g_lags; ++k) {
            w(d, k) = scale * std::pow(0.7, static_cast<double>(k));
        }
    }
    return w;
}

std::vector<Matrix> default_w_var(int k_true, Index d_var, Index d_inv) {
    Matrix base(d_var, d_inv);
    for (Index i = 0; i < d_var; ++i) {
        for (Index j = 0; j < d_inv; ++j) {
            base(i, j) = (j == i % d_inv) ? 1.0 : 0.25 / static_cast<double>(1 + std::abs(i - j));
        }
    }
    // Distinct per-environment couplings; adjacent environments flip sign so
    // a variant feature's relationship to the driver reverses across them.
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(k_true));
    for (int e = 0; e < k_true; ++e) {
        const double magnitude = 1.0 + 0.5 * static_cast<double>(e / 2);
        const double sign = (e % 2 == 0) ? 1.0 : -1.0;
        out.push_back(sign * magnitude * base);
    }
    return out;
}

constexpr Index kBurnIn = 256;

}  // namespace

void ScmSpec::validate() const {
    if (k_true < 2) throw ConfigError("scm: k_true must be >= 2");
    if (series_len < 1) throw ConfigError("scm: series_len must be >= 1");
    if (d_inv < 1 || d_var < 1) throw ConfigError("scm: d_inv and d_var must be >= 1");
    if (z_block_len < 1) throw ConfigError("scm: z_block_len must be >= 1");
    if (g_lags < 1) throw ConfigError("scm: g_lags must be >= 1");
    if (lag_offset < 1) throw ConfigError("scm: lag_offset must be >= 1");
    if (lag_offset + g_lags >= kBurnIn) throw ConfigError("scm: lag depth exceeds burn-in");
    if (!(alpha_min <= alpha_max) || !(beta_min <= beta_max)) {
        throw ConfigError("scm: alpha/beta ranges must be ordered");
    }
    if (alpha_min <= 0.0 && alpha_max >= 0.0) {
        throw ConfigError("scm: alpha range must be bounded away from 0");
    }
    if (shift_test_fraction < 0.0 || shift_test_fraction >= 1.0) {
        throw ConfigError("scm: shift_test_fraction must lie in [0, 1)");
    }
    if (shift_test_fraction > 0.0) {
        if (!(test_alpha_min <= test_alpha_max) || !(test_beta_min <= test_beta_max)) {
            throw ConfigError("scm: test alpha/beta ranges must be ordered");
        }
        if (test_alpha_min <= 0.0 && test_alpha_max >= 0.0) {
            throw ConfigError("scm: test alpha range must be bounded away from 0");
        }
    }
    if (sigma_eps < 0 || sigma_var_noise < 0 || sigma_drive <= 0) {
        throw ConfigError("scm: noise scales must be non-negative (sigma_drive > 0)");
    }
    if (std::abs(ar_coeff) >= 1.0) throw ConfigError("scm: |ar_coeff| must be < 1");
    if (g_kind != "linear" && g_kind != "tanh") {
        throw ConfigError("scm: g_kind must be linear or tanh, got '" + g_kind + "'");
    }
    if (env_z_coupling < 0.0 || env_z_coupling > 1.0) {
        throw ConfigError("scm: env_z_coupling must lie in [0, 1]");
    }

    const auto segs = effective_layout();
    Index covered = 0;
    for (const auto& seg : segs) {
        if (seg.len < 1) throw ConfigError("scm: layout segment with non-positive length");
        if (seg.env < 0 || seg.env >= k_true) {
            throw ConfigError("scm: layout references environment " + std::to_string(seg.env) +
                              " outside [0, " + std::to_string(k_true) + ")");
        }
        covered += seg.len;
    }
    if (covered != series_len) {
        throw ConfigError("scm: layout covers " + std::to_string(covered) + " steps, series has " +
                          std::to_string(series_len));
    }

    if (w_inv.size() != 0 && (w_inv.rows() != d_inv || w_inv.cols() != g_lags)) {
        throw ConfigError("scm: w_inv override must be d_inv x g_lags");
    }
    if (!w_var.empty()) {
        if (static_cast<int>(w_var.size()) != k_true) {
            throw ConfigError("scm: w_var override must have k_true entries");
        }
        for (const auto& w : w_var) {
            if (w.rows() != d_var || w.cols() != d_inv) {
                throw ConfigError("scm: each w_var entry must be d_var x d_inv");
            }
        }
        for (std::size_t i = 0; i < w_var.size(); ++i) {
            for (std::size_t j = i + 1; j < w_var.size(); ++j) {
                if ((w_var[i] - w_var[j]).norm() == 0.0) {
                    throw ConfigError("scm: spurious weights must differ across environments");
                }
            }
        }
    }
}

std::vector<Segment> ScmSpec::effective_layout() const {
    if (!layout.empty()) {
        return layout;
    }
    // Default benchmark layout: both environments alternate through the
    // training region and environment 1 owns the final 20% of time, so the
    // held-out-environment protocol is feasible out of the box.
    const double unit = static_cast<double>(series_len) / 4000.0;
    auto scaled = [&](double n) { return static_cast<Index>(std::llround(n * unit)); };
    std::vector<Segment> segs = {
        {0, scaled(600)}, {1, scaled(400)}, {0, scaled(600)}, {1, scaled(400)},
        {0, scaled(600)}, {1, scaled(200)}, {0, scaled(400)},
    };
    Index used = 0;
    for (const auto& s : segs) used += s.len;
    segs.push_back({1, series_len - used});
    return segs;
}

std::pair<data::RawSeries, ScmTruth> generate(const ScmSpec& spec) {
    spec.validate();
    const Index T = spec.series_len;
    const auto segs = spec.effective_layout();

    ScmTruth truth;
    truth.z_block_len = spec.z_block_len;
    truth.env_label.reserve(static_cast<std::size_t>(T));
    for (const auto& seg : segs) {
        truth.env_label.insert(truth.env_label.end(), static_cast<std::size_t>(seg.len), seg.env);
    }

    truth.w_inv = spec.w_inv.size() != 0 ? spec.w_inv : default_w_inv(spec.d_inv, spec.g_lags);
    truth.w_var =
        !spec.w_var.empty() ? spec.w_var : default_w_var(spec.k_true, spec.d_var, spec.d_inv);

    Rng rng(spec.seed);

    // Phase 1: invariant AR(1) driver with burn-in history.
    Matrix x_inv(kBurnIn + T, spec.d_inv);
    x_inv.row(0).setZero();
    for (Index t = 1; t < kBurnIn + T; ++t) {
        for (Index d = 0; d < spec.d_inv; ++d) {
            x_inv(t, d) = spec.ar_coeff * x_inv(t - 1, d) + spec.sigma_drive * rng.normal();
        }
    }

    // Phase 2: sufficiently predictable target component.
    truth.y_suf = Vector(T);
    for (Index t = 0; t < T; ++t) {
        double acc = 0.0;
        for (Index k = 0; k < spec.g_lags; ++k) {
            const Index src = kBurnIn + t - spec.lag_offset - k;
            acc += truth.w_inv.col(k).dot(x_inv.row(src).transpose());
        }
        if (spec.g_kind == "tanh") {
            acc = std::tanh(acc);
        }
        truth.y_suf(t) = acc + spec.sigma_eps * rng.normal();
    }

    // Phase 3: environment-coupled variant features.
    Matrix x_var(T, spec.d_var);
    for (Index t = 0; t < T; ++t) {
        const Matrix& w = truth.w_var[static_cast<std::size_t>(truth.env_label[t])];
        x_var.row(t) = (w * x_inv.row(kBurnIn + t).transpose()).transpose();
        for (Index d = 0; d < spec.d_var; ++d) {
            x_var(t, d) += spec.sigma_var_noise * rng.normal();
        }
    }

    // Phase 4: per-block affine contamination (the unobserved-Z effect).
    const Index n_blocks = (T + spec.z_block_len - 1) / spec.z_block_len;
    truth.shift_start = T;
    if (spec.shift_test_fraction > 0.0) {
        const auto shift_rows =
            static_cast<Index>(std::llround(spec.shift_test_fraction * static_cast<double>(T)));
        // Align the shifted region to a block boundary.
        const Index first_block = (T - shift_rows) / spec.z_block_len;
        truth.shift_start = std::min<Index>(first_block * spec.z_block_len, T);
    }
    truth.alpha.resize(static_cast<std::size_t>(T));
    truth.beta.resize(static_cast<std::size_t>(T));
    for (Index b = 0; b < n_blocks; ++b) {
        const Index start = b * spec.z_block_len;
        const Index stop = std::min<Index>(start + spec.z_block_len, T);
        const bool shifted = start >= truth.shift_start;
        double ua = rng.uniform();
        double ub = rng.uniform();
        if (spec.env_z_coupling > 0.0) {
            const int env = truth.env_label[static_cast<std::size_t>(start)];
            const double anchor =
                (static_cast<double>(env) + 0.5) / static_cast<double>(spec.k_true);
            ua = (1.0 - spec.env_z_coupling) * ua + spec.env_z_coupling * anchor;
            ub = (1.0 - spec.env_z_coupling) * ub + spec.env_z_coupling * anchor;
        }
        const double a_lo = shifted ? spec.test_alpha_min : spec.alpha_min;
        const double a_hi = shifted ? spec.test_alpha_max : spec.alpha_max;
        const double b_lo = shifted ? spec.test_beta_min : spec.beta_min;
        const double b_hi = shifted ? spec.test_beta_max : spec.beta_max;
        const double alpha = a_lo + ua * (a_hi - a_lo);
        const double beta = b_lo + ub * (b_hi - b_lo);
        for (Index t = start; t < stop; ++t) {
            truth.alpha[static_cast<std::size_t>(t)] = alpha;
            truth.beta[static_cast<std::size_t>(t)] = beta;
        }
    }

    // Assemble the observed series: [x_inv | x_var | y], target = y.
    data::RawSeries series;
    series.values = Matrix(T, spec.d_inv + spec.d_var + 1);
    series.values.leftCols(spec.d_inv) = x_inv.bottomRows(T);
    series.values.middleCols(spec.d_inv, spec.d_var) = x_var;
    for (Index t = 0; t < T; ++t) {
        series.values(t, spec.d_inv + spec.d_var) =
            truth.alpha[static_cast<std::size_t>(t)] * truth.y_suf(t) +
            truth.beta[static_cast<std::size_t>(t)];
    }
    series.target_col = spec.d_inv + spec.d_var;
    for (Index d = 0; d < spec.d_inv; ++d) {
        series.column_names.push_back("xi" + std::to_string(d));
    }
    for (Index d = 0; d < spec.d_var; ++d) {
        series.column_names.push_back("xv" + std::to_string(d));
    }
    series.column_names.push_back("y");
    return {std::move(series), std::move(truth)};
}

OodProtocol protocol_from_string(const std::string& name) {
    if (name == "held-out-env" || name == "held_out_env" || name == "held-out-environment") {
        return OodProtocol::kHeldOutEnvironment;
    }
    if (name == "shifted-z" || name == "shifted_z") {
        return OodProtocol::kShiftedZ;
    }
    throw ConfigError("ood protocol: expected held-out-env or shifted-z, got '" + name + "'");
}

data::SplitSpec ood_split(const data::RawSeries& series, const ScmTruth& truth,
                          OodProtocol protocol, double val_fraction) {
    const Index T = series.length();
    if (static_cast<Index>(truth.env_label.size()) != T) {
        throw ConfigError("ood_split: truth does not match series length");
    }
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
        throw ConfigError("ood_split: val_fraction must lie in [0, 1)");
    }

    Index test_start = 0;
    if (protocol == OodProtocol::kHeldOutEnvironment) {
        const int tail_env = truth.env_label.back();
        Index s = T - 1;
        while (s > 0 && truth.env_label[static_cast<std::size_t>(s - 1)] == tail_env) {
            --s;
        }
        if (s == 0) {
            throw ConfigError(
                "ood_split: held-out-environment is infeasible, the series has a single "
                "environment");
        }
        test_start = s;
    } else {
        if (truth.shift_start >= T) {
            throw ConfigError(
                "ood_split: shifted-Z is infeasible, the spec generated no shifted region");
        }
        test_start = truth.shift_start;
    }

    const auto val_rows =
        static_cast<Index>(std::llround(val_fraction * static_cast<double>(T)));
    const Index train_end = test_start - std::min<Index>(val_rows, test_start);
    if (train_end < 1) {
        throw ConfigError("ood_split: no training rows remain before the test region");
    }
    return data::SplitSpec::from_boundaries(T, train_end, test_start);
}

void write_truth_json(const ScmTruth& truth, const std::string& path) {
    nlohmann::json j;
    j["schema"] = "foil-scm-truth-v1";
    j["z_block_len"] = truth.z_block_len;
    j["shift_start"] = truth.shift_start;
    j["env_label"] = truth.env_label;
    j["alpha"] = truth.alpha;
    j["beta"] = truth.beta;
    j["y_suf"] = std::vector<double>(truth.y_suf.data(), truth.y_suf.data() + truth.y_suf.size());
    auto dump_matrix = [](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Index r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["w_inv"] = dump_matrix(truth.w_inv);
    auto& jv = j["w_var"] = nlohmann::json::array();
    for (const auto& w : truth.w_var) jv.push_back(dump_matrix(w));

    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("write_truth_json: cannot open '" + path + "'");
    }
    out << j.dump(2) << '\n';
}

ScmTruth read_truth_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("read_truth_json: cannot open '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_truth_json: '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.value("schema", "") != "foil-scm-truth-v1") {
        throw DataError("read_truth_json: '" + path + "' is not a foil-scm-truth-v1 file");
    }
    ScmTruth truth;
    truth.z_block_len = j.at("z_block_len").get<Index>();
    truth.shift_start = j.at("shift_start").get<Index>();
    truth.env_label = j.at("env_label").get<std::vector<int>>();
    truth.alpha = j.at("alpha").get<std::vector<double>>();
    truth.beta = j.at("beta").get<std::vector<double>>();
    const auto ys = j.at("y_suf").get<std::vector<double>>();
    truth.y_suf = Eigen::Map<const Vector>(ys.data(), static_cast<Index>(ys.size()));
    auto parse_matrix = [](const nlohmann::json& rows) {
        const auto r = static_cast<Index>(rows.size());
        const auto c = r > 0 ? static_cast<Index>(rows[0].size()) : 0;
        Matrix m(r, c);
        for (Index i = 0; i < r; ++i) {
            for (Index k = 0; k < c; ++k) m(i, k) = rows[static_cast<std::size_t>(i)]
                                                        [static_cast<std::size_t>(k)]
                                                            .get<double>();
        }
        return m;
    };
    truth.w_inv = parse_matrix(j.at("w_inv"));
    for (const auto& w : j.at("w_var")) {
        truth.w_var.push_back(parse_matrix(w));
    }
    return truth;
}

}  // namespace foil::scm
