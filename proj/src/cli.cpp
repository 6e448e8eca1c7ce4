#include "foil/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "foil/config.hpp"
#include "foil/evaluation.hpp"
#include "foil/scm.hpp"

namespace foil::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out << content;
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

// --------------------------------------------------------------------------
// Dataset source shared by train / infer-env / ablate / grid.
// --------------------------------------------------------------------------

struct DatasetSource {
    std::string csv_path;
    std::string target = "y";
    bool header = true;
    std::string split = "0.7:0.1:0.2";

    std::string synth_spec_path;
    std::string protocol = "held-out-env";  // or shifted-z, chrono

    bool is_synth() const { return !synth_spec_path.empty(); }

    json to_json() const {
        json j;
        if (is_synth()) {
            j["kind"] = "synth";
            j["spec"] = synth_spec_path;
            j["protocol"] = protocol;
        } else {
            j["kind"] = "csv";
            j["path"] = csv_path;
            j["target"] = target;
            j["header"] = header;
        }
        j["split"] = split;
        return j;
    }

    static DatasetSource from_json(const json& j) {
        DatasetSource src;
        if (j.at("kind") == "synth") {
            src.synth_spec_path = j.at("spec").get<std::string>();
            src.protocol = j.at("protocol").get<std::string>();
        } else {
            src.csv_path = j.at("path").get<std::string>();
            src.target = j.at("target").get<std::string>();
            src.header = j.at("header").get<bool>();
        }
        src.split = j.at("split").get<std::string>();
        return src;
    }

    std::string input_bytes() const {
        return is_synth() ? read_file(synth_spec_path) : read_file(csv_path);
    }
};

struct LoadedData {
    trainer::Dataset dataset;
    std::optional<scm::ScmTruth> truth;
};

LoadedData load_dataset(const DatasetSource& src, const trainer::FoilConfig& cfg) {
    LoadedData out;
    if (src.is_synth()) {
        auto map = config::ConfigMap::parse_file(src.synth_spec_path);
        auto spec = config::scm_spec_from(map);
        map.reject_unknown("scm spec");
        auto [series, truth] = scm::generate(spec);
        data::SplitSpec split =
            src.protocol == "chrono"
                ? config::parse_split_fractions(src.split, series.length())
                : scm::ood_split(series, truth, scm::protocol_from_string(src.protocol));
        out.dataset = trainer::Dataset::make(series, split, cfg.lookback, cfg.horizon);
        out.truth = std::move(truth);
    } else {
        auto series = data::load_csv(src.csv_path, src.target, src.header);
        auto split = config::parse_split_fractions(src.split, series.length());
        out.dataset = trainer::Dataset::make(series, split, cfg.lookback, cfg.horizon);
    }
    if (out.dataset.val.empty()) {
        std::cerr << "warning: validation split produces no windows; "
                     "early stopping is disabled\n";
    }
    if (out.dataset.test.empty()) {
        std::cerr << "warning: test split produces no windows\n";
    }
    return out;
}

// --------------------------------------------------------------------------
// Run directories and manifests.
// --------------------------------------------------------------------------

std::string resolve_out_dir(const std::string& out) {
    fs::path p(out);
    if (p.is_relative()) {
        if (const char* root = std::getenv("FOIL_RUN_ROOT"); root != nullptr && *root != '\0') {
            p = fs::path(root) / p;
        }
    }
    return p.string();
}

void prepare_run_dir(const std::string& dir, bool force) {
    fs::path p(dir);
    if (fs::exists(p / "manifest.json") && !force) {
        throw ConfigError("run directory '" + dir +
                          "' already holds a run; pass --force or use a fresh directory");
    }
    fs::create_directories(p);
}

json make_manifest(const std::string& command, const DatasetSource& src,
                   const trainer::FoilConfig& cfg, const std::vector<std::string>& artifacts) {
    json m;
    m["command"] = command;
    m["dataset"] = src.to_json();
    m["config"] = to_config_text(cfg);
    m["seed"] = cfg.seed;
    m["input_hash"] = fnv1a64_hex(src.input_bytes() + to_config_text(cfg));
    m["created_at"] = iso_timestamp();
    m["artifacts"] = artifacts;
    return m;
}

void write_assignment_csv(const std::string& path,
                          const std::vector<data::WindowSample>& train,
                          const envinf::EnvironmentAssignment& assignment) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out << "t,label\n";
    for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
        out << train[i].t << ',' << assignment.labels[i] << '\n';
    }
}

metrics::EvalReport evaluate_split(const trainer::FoilModel& model,
                                   const std::vector<data::WindowSample>& samples,
                                   const data::RawSeries& series, const std::string& name,
                                   bool raw_scale) {
    Matrix preds = trainer::forecast_batch(model, samples);
    Matrix truth(preds.rows(), preds.cols());
    for (Index i = 0; i < preds.rows(); ++i) {
        truth.row(i) = samples[static_cast<std::size_t>(i)].y.transpose();
    }
    std::string scale = series.normalized ? "normalized" : "raw";
    if (raw_scale && series.normalized) {
        for (Index i = 0; i < preds.rows(); ++i) {
            preds.row(i) = data::denormalize_target(series, preds.row(i).transpose()).transpose();
            truth.row(i) = data::denormalize_target(series, truth.row(i).transpose()).transpose();
        }
        scale = "raw";
    }
    return metrics::make_report(name, scale, preds, truth);
}

// --------------------------------------------------------------------------
// Subcommand options.
// --------------------------------------------------------------------------

struct CommonTrainArgs {
    DatasetSource source;
    std::string config_path;
    std::string manifest_path;  // --from-manifest
    std::string out_dir;
    bool force = false;
    bool erm = false;
    bool raw_scale = false;
    std::string dump_windows;

    // Flag overrides, applied only when the flag was passed.
    CLI::App* cmd = nullptr;
    Index lookback = 0;
    Index horizon = 0;
    int envs = 0;
    int radius = 0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::uint64_t seed = 0;
    std::string revin;
};

void add_dataset_options(CLI::App* cmd, CommonTrainArgs& args) {
    cmd->add_option("--data", args.source.csv_path, "CSV series to train on");
    cmd->add_option("--target", args.source.target, "target column (name, or index without header)");
    cmd->add_flag("--no-header{false},--header{true}", args.source.header,
                  "whether the CSV has a header row (default: yes)");
    cmd->add_option("--split", args.source.split, "train:val:test fractions (default 0.7:0.1:0.2)");
    cmd->add_option("--synth", args.source.synth_spec_path, "generator spec to synthesize data from");
    cmd->add_option("--protocol", args.source.protocol,
                    "split protocol for --synth: held-out-env|shifted-z|chrono");
}

void add_override_options(CLI::App* cmd, CommonTrainArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (documented key set)");
    cmd->add_option("--lookback", args.lookback, "lookback window length");
    cmd->add_option("--horizon", args.horizon, "horizon window length");
    cmd->add_option("--envs", args.envs, "number of inferred environments");
    cmd->add_option("--radius", args.radius, "label propagation radius");
    cmd->add_option("--lambda1", args.lambda1, "ERM term weight");
    cmd->add_option("--lambda2", args.lambda2, "variance term weight");
    cmd->add_option("--seed", args.seed, "training seed");
    cmd->add_option("--revin", args.revin, "instance input normalization: on|off")
        ->check(CLI::IsMember({"on", "off"}));
}

trainer::FoilConfig resolve_config(const CommonTrainArgs& args) {
    trainer::FoilConfig cfg;
    if (!args.config_path.empty()) {
        auto map = config::ConfigMap::parse_file(args.config_path);
        cfg = config::foil_config_from(map);
        map.reject_unknown("train config");
    }
    const auto passed = [&](const std::string& flag) {
        return args.cmd != nullptr && args.cmd->count(flag) > 0;
    };
    if (passed("--lookback")) cfg.lookback = args.lookback;
    if (passed("--horizon")) cfg.horizon = args.horizon;
    if (passed("--envs")) cfg.envs = args.envs;
    if (passed("--radius")) cfg.radius = args.radius;
    if (passed("--lambda1")) cfg.lambda1 = args.lambda1;
    if (passed("--lambda2")) cfg.lambda2 = args.lambda2;
    if (passed("--seed")) cfg.seed = args.seed;
    if (passed("--revin")) cfg.revin = (args.revin == "on");
    cfg.validate();
    return cfg;
}

// --------------------------------------------------------------------------
// Subcommands.
// --------------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& out_csv,
              const std::string& truth_path, std::uint64_t seed, bool seed_passed) {
    scm::ScmSpec spec;
    if (!spec_path.empty()) {
        auto map = config::ConfigMap::parse_file(spec_path);
        spec = config::scm_spec_from(map);
        map.reject_unknown("scm spec");
    }
    if (seed_passed) {
        spec.seed = seed;
    }
    spec.validate();
    auto [series, truth] = scm::generate(spec);
    data::write_csv(series, out_csv);
    if (!truth_path.empty()) {
        scm::write_truth_json(truth, truth_path);
    }
    std::cout << "synth: wrote " << series.length() << " rows x " << series.dims()
              << " cols to " << out_csv << '\n';
    return 0;
}

struct TrainOutcome {
    trainer::FoilModel model;
    trainer::TrainingLog log;
    trainer::Dataset dataset;
};

TrainOutcome run_one_training(const DatasetSource& src, const trainer::FoilConfig& cfg,
                              bool erm) {
    auto loaded = load_dataset(src, cfg);
    auto [model, log] = erm ? trainer::train_erm(loaded.dataset, cfg)
                            : trainer::train_foil(loaded.dataset, cfg);
    return {std::move(model), std::move(log), std::move(loaded.dataset)};
}

int cmd_train(CommonTrainArgs& args) {
    DatasetSource src = args.source;
    trainer::FoilConfig cfg;
    if (!args.manifest_path.empty()) {
        const json m = json::parse(read_file(args.manifest_path));
        src = DatasetSource::from_json(m.at("dataset"));
        auto map = config::ConfigMap::parse_string(m.at("config").get<std::string>(),
                                                   args.manifest_path);
        cfg = config::foil_config_from(map);
        map.reject_unknown("manifest config");
        const std::string expected = m.at("input_hash").get<std::string>();
        const std::string actual = fnv1a64_hex(src.input_bytes() + to_config_text(cfg));
        if (expected != actual) {
            throw DataError("--from-manifest: input files changed since the manifest was "
                            "written (hash " + actual + " != " + expected + ")");
        }
    } else {
        cfg = resolve_config(args);
    }
    if (src.is_synth() == src.csv_path.empty() && !src.is_synth()) {
        throw ConfigError("train: pass exactly one of --data or --synth");
    }

    const std::string out_dir = resolve_out_dir(args.out_dir);
    prepare_run_dir(out_dir, args.force);

    auto outcome = run_one_training(src, cfg, args.erm);
    const fs::path dir(out_dir);

    if (!args.dump_windows.empty()) {
        data::write_windows_jsonl(outcome.dataset.train, args.dump_windows);
    }

    trainer::save_checkpoint(outcome.model, (dir / "model.ckpt").string());
    write_file((dir / "log.jsonl").string(), outcome.log.to_jsonl());
    write_file((dir / "config_echo.toml").string(), to_config_text(cfg));
    write_assignment_csv((dir / "assignment.csv").string(), outcome.dataset.train,
                         outcome.log.final_assignment);

    json reports = json::array();
    for (const auto* split : {"val", "test"}) {
        const auto& samples =
            std::string(split) == "val" ? outcome.dataset.val : outcome.dataset.test;
        if (samples.empty()) continue;
        const auto report = evaluate_split(outcome.model, samples, outcome.dataset.series, split,
                                           args.raw_scale);
        std::cout << report.to_text() << '\n';
        reports.push_back(report.to_json());
    }
    write_file((dir / "report.json").string(), reports.dump(2) + "\n");

    const auto manifest = make_manifest(args.erm ? "train --erm" : "train", src, cfg,
                                        {"model.ckpt", "log.jsonl", "config_echo.toml",
                                         "assignment.csv", "report.json"});
    write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    std::cout << "train: run directory " << out_dir << '\n';
    return 0;
}

int cmd_infer_env(CommonTrainArgs& args, const std::string& out_csv) {
    const auto cfg = resolve_config(args);
    auto outcome = run_one_training(args.source, cfg, false);
    write_assignment_csv(out_csv, outcome.dataset.train, outcome.log.final_assignment);
    std::cout << "infer-env: wrote " << outcome.log.final_assignment.labels.size()
              << " labels to " << out_csv << '\n';
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path,
             const std::string& target, bool header, bool raw_scale,
             const std::string& out_json) {
    fs::path ckpt(checkpoint);
    if (fs::is_directory(ckpt)) {
        ckpt /= "model.ckpt";
    }
    const auto model = trainer::load_checkpoint(ckpt.string());
    auto series = data::load_csv(data_path, target, header);
    if (series.dims() != model.d_in) {
        throw DataError("eval: data has " + std::to_string(series.dims()) +
                        " columns, model expects " + std::to_string(model.d_in));
    }
    if (model.normalized) {
        // Apply the training-time statistics, never refit them on test data.
        series.norm_mean = model.norm_mean;
        series.norm_std = model.norm_std;
        for (Index c = 0; c < series.dims(); ++c) {
            const double sd = std::max(model.norm_std(c), 1e-8);
            series.values.col(c) = (series.values.col(c).array() - model.norm_mean(c)) / sd;
        }
        series.normalized = true;
    }
    const auto split = data::SplitSpec::from_boundaries(series.length(), series.length(),
                                                        series.length());
    (void)split;
    const auto whole = data::SplitSpec::from_boundaries(series.length(), 0, 0);
    const auto samples =
        data::make_windows(series, model.lookback, model.horizon, whole, data::Split::kTest);
    if (samples.empty()) {
        throw DataError("eval: file too short for lookback+horizon windows");
    }
    const auto report = evaluate_split(model, samples, series, "eval", raw_scale);
    std::cout << report.to_text() << '\n';
    if (!out_json.empty()) {
        write_file(out_json, report.to_json().dump(2) + "\n");
    }
    return 0;
}

struct AblationArm {
    std::string name;
    bool erm = false;
    bool ablate_suf = false;
    bool ablate_tei = false;
    bool ablate_lp = false;
};

int cmd_ablate(CommonTrainArgs& args) {
    const auto base_cfg = resolve_config(args);
    const std::string out_dir = resolve_out_dir(args.out_dir);
    prepare_run_dir(out_dir, args.force);
    const fs::path dir(out_dir);

    const std::vector<AblationArm> arms = {
        {"erm", true, false, false, false},
        {"foil", false, false, false, false},
        {"foil_no_suf", false, true, false, false},
        {"foil_no_tei", false, false, true, false},
        {"foil_no_lp", false, false, false, true},
    };

    std::vector<metrics::RunMetrics> rows;
    json results = json::array();
    bool failed = false;
    std::string failure;
    for (const auto& arm : arms) {
        trainer::FoilConfig cfg = base_cfg;
        cfg.ablate_suf = arm.ablate_suf;
        cfg.ablate_tei = arm.ablate_tei;
        cfg.ablate_lp = arm.ablate_lp;
        try {
            auto outcome = run_one_training(args.source, cfg, arm.erm);
            const auto report = evaluate_split(outcome.model, outcome.dataset.test,
                                               outcome.dataset.series, "test", args.raw_scale);
            rows.push_back({arm.name, {report.mse}, {report.mae}});
            json jr = report.to_json();
            jr["arm"] = arm.name;
            results.push_back(std::move(jr));
        } catch (const std::exception& e) {
            failed = true;
            failure = arm.name + std::string(": ") + e.what();
            break;
        }
    }
    // Partial results are preserved even when an arm fails.
    write_file((dir / "ablation.json").string(), results.dump(2) + "\n");
    if (rows.size() >= 2) {
        const std::string table = metrics::improvement_table(rows, 0);
        write_file((dir / "ablation.txt").string(), table);
        std::cout << table;
    }
    const auto manifest = make_manifest("ablate", args.source, base_cfg,
                                        {"ablation.json", "ablation.txt"});
    write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");

    if (failed) {
        throw NumericError("ablate: arm failed, partial results kept in " + out_dir + " (" +
                           failure + ")");
    }

    // Reported orderings (observations from the ablation study, not asserted).
    auto find_mse = [&](const std::string& name) {
        for (const auto& row : rows) {
            if (row.name == name) return row.mse[0];
        }
        return std::numeric_limits<double>::quiet_NaN();
    };
    const double no_tei = find_mse("foil_no_tei");
    const double no_lp = find_mse("foil_no_lp");
    std::cout << "ablate: foil_no_tei " << (no_tei <= no_lp ? "<=" : ">") << " foil_no_lp ("
              << no_tei << " vs " << no_lp << ")\n";
    std::cout << "ablate: artifacts in " << out_dir << '\n';
    return 0;
}

struct GridAxis {
    std::string key;
    std::vector<double> values;
};

std::vector<GridAxis> parse_grid(const std::string& text) {
    std::vector<GridAxis> axes;
    std::stringstream ss(text);
    std::string chunk;
    while (std::getline(ss, chunk, ';')) {
        if (chunk.empty()) continue;
        const auto eq = chunk.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("grid: expected key=v1,v2,... got '" + chunk + "'");
        }
        GridAxis axis;
        axis.key = chunk.substr(0, eq);
        std::stringstream vs(chunk.substr(eq + 1));
        std::string cell;
        while (std::getline(vs, cell, ',')) {
            try {
                axis.values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("grid: non-numeric value '" + cell + "' for '" + axis.key + "'");
            }
        }
        if (axis.values.empty()) {
            throw ConfigError("grid: no values for '" + axis.key + "'");
        }
        axes.push_back(std::move(axis));
    }
    if (axes.empty()) {
        throw ConfigError("grid: empty grid specification");
    }
    return axes;
}

void apply_grid_value(trainer::FoilConfig& cfg, const std::string& key, double value) {
    if (key == "lambda1") cfg.lambda1 = value;
    else if (key == "lambda2") cfg.lambda2 = value;
    else if (key == "lr_til") cfg.lr_til = value;
    else if (key == "lr_tei") cfg.lr_tei = value;
    else if (key == "envs") cfg.envs = static_cast<int>(value);
    else if (key == "radius") cfg.radius = static_cast<int>(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(value);
    else if (key == "batch_size") cfg.batch_size = static_cast<Index>(value);
    else if (key == "stage1_epochs") cfg.stage1_epochs = static_cast<int>(value);
    else if (key == "outer_rounds") cfg.outer_rounds = static_cast<int>(value);
    else {
        throw ConfigError("grid: key '" + key + "' is not grid-searchable");
    }
}

int cmd_grid(CommonTrainArgs& args, const std::string& grid_text, int jobs) {
    const auto base_cfg = resolve_config(args);
    const auto axes = parse_grid(grid_text);
    const std::string out_dir = resolve_out_dir(args.out_dir);
    prepare_run_dir(out_dir, args.force);
    const fs::path dir(out_dir);

    // Cartesian product of axis values.
    std::vector<std::vector<double>> combos{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<double>> next;
        for (const auto& prefix : combos) {
            for (double v : axis.values) {
                auto c = prefix;
                c.push_back(v);
                next.push_back(std::move(c));
            }
        }
        combos = std::move(next);
    }

    struct GridResult {
        std::string name;
        double val_mse = std::numeric_limits<double>::quiet_NaN();
        double test_mse = std::numeric_limits<double>::quiet_NaN();
        double test_mae = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<GridResult> results(combos.size());

    auto run_combo = [&](std::size_t i) {
        trainer::FoilConfig cfg = base_cfg;
        std::string name = "g" + std::to_string(i);
        for (std::size_t a = 0; a < axes.size(); ++a) {
            apply_grid_value(cfg, axes[a].key, combos[i][a]);
            name += "_" + axes[a].key + "=" + format_double(combos[i][a]);
        }
        cfg.validate();
        auto outcome = run_one_training(args.source, cfg, args.erm);
        const fs::path sub = dir / name;
        fs::create_directories(sub);
        trainer::save_checkpoint(outcome.model, (sub / "model.ckpt").string());
        write_file((sub / "log.jsonl").string(), outcome.log.to_jsonl());
        write_file((sub / "config_echo.toml").string(), to_config_text(cfg));
        const auto manifest = make_manifest("grid", args.source, cfg, {"model.ckpt", "log.jsonl"});
        write_file((sub / "manifest.json").string(), manifest.dump(2) + "\n");

        GridResult r;
        r.name = name;
        if (!outcome.dataset.val.empty()) {
            r.val_mse = evaluate_split(outcome.model, outcome.dataset.val,
                                       outcome.dataset.series, "val", false)
                            .mse;
        }
        if (!outcome.dataset.test.empty()) {
            const auto report = evaluate_split(outcome.model, outcome.dataset.test,
                                               outcome.dataset.series, "test", false);
            r.test_mse = report.mse;
            r.test_mae = report.mae;
        }
        results[i] = std::move(r);
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < combos.size(); ++i) run_combo(i);
    } else {
        std::vector<std::future<void>> inflight;
        for (std::size_t i = 0; i < combos.size(); ++i) {
            if (static_cast<int>(inflight.size()) >= jobs) {
                inflight.front().get();
                inflight.erase(inflight.begin());
            }
            inflight.push_back(std::async(std::launch::async, run_combo, i));
        }
        for (auto& f : inflight) f.get();
    }

    json summary = json::array();
    std::size_t best = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        json j;
        j["name"] = r.name;
        j["val_mse"] = std::isfinite(r.val_mse) ? json(r.val_mse) : json(nullptr);
        j["test_mse"] = std::isfinite(r.test_mse) ? json(r.test_mse) : json(nullptr);
        j["test_mae"] = std::isfinite(r.test_mae) ? json(r.test_mae) : json(nullptr);
        summary.push_back(std::move(j));
        if (r.val_mse < results[best].val_mse || !std::isfinite(results[best].val_mse)) {
            best = i;
        }
    }
    write_file((dir / "grid_summary.json").string(), summary.dump(2) + "\n");
    std::cout << "grid: " << results.size() << " runs; best by val MSE: " << results[best].name
              << " (val " << results[best].val_mse << ", test " << results[best].test_mse
              << ")\n";
    return 0;
}

}  // namespace

std::string to_config_text(const trainer::FoilConfig& cfg) {
    std::ostringstream out;
    out << "lookback = " << cfg.lookback << '\n';
    out << "horizon = " << cfg.horizon << '\n';
    out << "envs = " << cfg.envs << '\n';
    out << "radius = " << cfg.radius << '\n';
    out << "lambda1 = " << format_double(cfg.lambda1) << '\n';
    out << "lambda2 = " << format_double(cfg.lambda2) << '\n';
    out << "lr_til = " << format_double(cfg.lr_til) << '\n';
    out << "lr_tei = " << format_double(cfg.lr_tei) << '\n';
    out << "momentum = " << format_double(cfg.momentum) << '\n';
    out << "lr_decay = " << format_double(cfg.lr_decay) << '\n';
    out << "stage1_epochs = " << cfg.stage1_epochs << '\n';
    out << "outer_rounds = " << cfg.outer_rounds << '\n';
    out << "em_delta = " << format_double(cfg.em_delta) << '\n';
    out << "em_max_iters = " << cfg.em_max_iters << '\n';
    out << "em_epochs = " << cfg.em_epochs << '\n';
    out << "batch_size = " << cfg.batch_size << '\n';
    out << "patience = " << cfg.patience << '\n';
    out << "seed = " << cfg.seed << '\n';
    out << "hidden = [";
    for (std::size_t i = 0; i < cfg.backbone.hidden.size(); ++i) {
        out << (i > 0 ? ", " : "") << cfg.backbone.hidden[i];
    }
    out << "]\n";
    out << "d_rep = " << cfg.backbone.d_rep << '\n';
    out << "activation = \"" << nn::to_string(cfg.backbone.act) << "\"\n";
    out << "revin = " << (cfg.revin ? "true" : "false") << '\n';
    out << "feature_affine = " << (cfg.feature_affine ? "true" : "false") << '\n';
    out << "ablate_suf = " << (cfg.ablate_suf ? "true" : "false") << '\n';
    out << "ablate_tei = " << (cfg.ablate_tei ? "true" : "false") << '\n';
    out << "ablate_lp = " << (cfg.ablate_lp ? "true" : "false") << '\n';
    return out.str();
}

int run(int argc, const char* const* argv) {
    CLI::App app{"FOIL: invariant learning for out-of-distribution time-series forecasting"};
    app.require_subcommand(1);

    // synth
    std::string synth_spec, synth_out = "series.csv", synth_truth;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark series");
    synth->add_option("--spec", synth_spec, "generator spec file (defaults when omitted)");
    synth->add_option("--out", synth_out, "output CSV path")->required();
    synth->add_option("--truth", synth_truth, "ground-truth JSON path");
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "override the spec seed");

    // train
    CommonTrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a forecasting model");
    train_args.cmd = train;
    add_dataset_options(train, train_args);
    add_override_options(train, train_args);
    train->add_option("--out", train_args.out_dir, "run directory")->required();
    train->add_flag("--force", train_args.force, "allow reusing a non-empty run directory");
    train->add_flag("--erm", train_args.erm, "train the plain-ERM control instead of FOIL");
    train->add_flag("--raw-scale", train_args.raw_scale, "report metrics on the raw scale");
    train->add_option("--dump-windows", train_args.dump_windows,
                      "debug dump of train windows (JSON lines)");
    train->add_option("--from-manifest", train_args.manifest_path,
                      "reproduce a run from its manifest");

    // infer-env
    CommonTrainArgs infer_args;
    std::string infer_out = "assignment.csv";
    auto* infer = app.add_subcommand("infer-env", "run training and dump inferred environments");
    infer_args.cmd = infer;
    add_dataset_options(infer, infer_args);
    add_override_options(infer, infer_args);
    infer->add_option("--out", infer_out, "assignment CSV path")->required();

    // eval
    std::string eval_ckpt, eval_data, eval_target = "y", eval_out;
    bool eval_header = true, eval_raw = false;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a CSV");
    eval->add_option("--checkpoint", eval_ckpt, "run directory or model.ckpt path")->required();
    eval->add_option("--data", eval_data, "CSV to evaluate on")->required();
    eval->add_option("--target", eval_target, "target column");
    eval->add_flag("--no-header{false},--header{true}", eval_header, "CSV header presence");
    eval->add_flag("--raw-scale", eval_raw, "report metrics on the raw scale");
    eval->add_option("--out", eval_out, "write the report JSON here");

    // ablate
    CommonTrainArgs ablate_args;
    auto* ablate = app.add_subcommand("ablate", "train FOIL, its three ablations, and ERM");
    ablate_args.cmd = ablate;
    add_dataset_options(ablate, ablate_args);
    add_override_options(ablate, ablate_args);
    ablate->add_option("--out", ablate_args.out_dir, "output directory")->required();
    ablate->add_flag("--force", ablate_args.force, "allow reusing a non-empty directory");
    ablate->add_flag("--raw-scale", ablate_args.raw_scale, "report metrics on the raw scale");

    // grid
    CommonTrainArgs grid_args;
    std::string grid_text;
    int grid_jobs = 1;
    auto* grid = app.add_subcommand("grid", "grid search over hyperparameters");
    grid_args.cmd = grid;
    add_dataset_options(grid, grid_args);
    add_override_options(grid, grid_args);
    grid->add_option("--grid", grid_text, "axes, e.g. \"lambda1=0.1,1,10;lambda2=0,1\"")
        ->required();
    grid->add_option("--out", grid_args.out_dir, "output directory")->required();
    grid->add_option("--jobs", grid_jobs, "parallel runs (default 1)");
    grid->add_flag("--force", grid_args.force, "allow reusing a non-empty directory");
    grid->add_flag("--erm", grid_args.erm, "grid-search the ERM control instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_spec, synth_out, synth_truth, synth_seed,
                             synth_seed_opt->count() > 0);
        }
        if (train->parsed()) return cmd_train(train_args);
        if (infer->parsed()) return cmd_infer_env(infer_args, infer_out);
        if (eval->parsed()) {
            return cmd_eval(eval_ckpt, eval_data, eval_target, eval_header, eval_raw, eval_out);
        }
        if (ablate->parsed()) return cmd_ablate(ablate_args);
        if (grid->parsed()) return cmd_grid(grid_args, grid_text, grid_jobs);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace foil::cli
