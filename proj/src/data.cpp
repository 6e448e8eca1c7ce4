#include "foil/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace foil::data {

namespace {

constexpr double kStdFloor = 1e-8;

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool is_timestamp_header(const std::string& name) {
    const std::string lc = lowercase(name);
    return lc == "date" || lc == "timestamp" || lc == "time";
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') ++start;
        cells.push_back(cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& cell, double& out) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && !cell.empty();
}

}  // namespace

const char* to_string(Split split) {
    switch (split) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "train";
}

SplitSpec SplitSpec::from_fractions(Index total, double train_frac, double val_frac,
                                    double test_frac) {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0) {
        throw ConfigError("split: fractions must be non-negative");
    }
    const double sum = train_frac + val_frac + test_frac;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split: fractions must sum to 1, got " + std::to_string(sum));
    }
    SplitSpec s;
    s.total = total;
    s.train_end = static_cast<Index>(std::llround(train_frac * static_cast<double>(total)));
    s.val_end =
        static_cast<Index>(std::llround((train_frac + val_frac) * static_cast<double>(total)));
    s.train_end = std::clamp<Index>(s.train_end, 0, total);
    s.val_end = std::clamp<Index>(s.val_end, s.train_end, total);
    return s;
}

SplitSpec SplitSpec::from_boundaries(Index total, Index train_end, Index val_end) {
    if (!(0 <= train_end && train_end <= val_end && val_end <= total)) {
        throw ConfigError("split: boundaries must satisfy 0 <= train_end <= val_end <= total");
    }
    SplitSpec s;
    s.total = total;
    s.train_end = train_end;
    s.val_end = val_end;
    return s;
}

RawSeries load_csv(const std::string& path, const std::string& target, bool has_header) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("load_csv: cannot open '" + path + "'");
    }

    std::string line;
    std::vector<std::string> header;
    bool timestamp_col = false;
    if (has_header) {
        if (!std::getline(in, line)) {
            throw DataError("load_csv: '" + path + "' is empty");
        }
        header = split_line(line);
        if (header.empty()) {
            throw DataError("load_csv: '" + path + "' has an empty header row");
        }
        timestamp_col = is_timestamp_header(header.front());
    }

    RawSeries series;
    std::vector<double> flat;
    Index width = -1;
    Index row_number = has_header ? 1 : 0;  // for error messages, 1-based with header

    while (std::getline(in, line)) {
        ++row_number;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto cells = split_line(line);
        if (timestamp_col) {
            series.timestamps.push_back(cells.empty() ? "" : cells.front());
            if (!cells.empty()) cells.erase(cells.begin());
        }
        if (width < 0) {
            width = static_cast<Index>(cells.size());
            if (width == 0) {
                throw DataError("load_csv: row " + std::to_string(row_number) +
                                " has no data cells");
            }
        } else if (static_cast<Index>(cells.size()) != width) {
            throw DataError("load_csv: ragged row " + std::to_string(row_number) + " (" +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(width) + ")");
        }
        for (Index c = 0; c < width; ++c) {
            double v = 0.0;
            if (!parse_double(cells[static_cast<std::size_t>(c)], v)) {
                std::string col_name;
                if (has_header) {
                    const std::size_t hidx = static_cast<std::size_t>(c) + (timestamp_col ? 1 : 0);
                    col_name = hidx < header.size() ? header[hidx] : std::to_string(c);
                } else {
                    col_name = std::to_string(c);
                }
                throw DataError("load_csv: non-numeric cell at row " + std::to_string(row_number) +
                                ", column \"" + col_name + "\"");
            }
            flat.push_back(v);
        }
    }

    const Index rows = width > 0 ? static_cast<Index>(flat.size()) / width : 0;
    if (rows == 0) {
        throw DataError("load_csv: '" + path + "' contains no data rows");
    }
    series.values = Eigen::Map<const Matrix>(flat.data(), rows, width);

    if (has_header) {
        series.column_names.assign(header.begin() + (timestamp_col ? 1 : 0), header.end());
        auto it = std::find(series.column_names.begin(), series.column_names.end(), target);
        if (it == series.column_names.end()) {
            throw DataError("load_csv: target column \"" + target + "\" not found in header");
        }
        series.target_col = static_cast<Index>(it - series.column_names.begin());
    } else {
        Index idx = -1;
        try {
            idx = static_cast<Index>(std::stol(target));
        } catch (const std::exception&) {
            throw DataError("load_csv: without a header, target must be a column index, got \"" +
                            target + "\"");
        }
        if (idx < 0 || idx >= width) {
            throw DataError("load_csv: target index " + std::to_string(idx) +
                            " out of range [0, " + std::to_string(width) + ")");
        }
        series.target_col = idx;
    }
    return series;
}

RawSeries zero_mean_normalize(const RawSeries& series, const SplitSpec& split) {
    if (split.total != series.length()) {
        throw ConfigError("zero_mean_normalize: split total does not match series length");
    }
    if (split.train_len() < 1) {
        throw ConfigError("zero_mean_normalize: train split is empty");
    }
    RawSeries out = series;
    const auto train = series.values.topRows(split.train_end);
    out.norm_mean = train.colwise().mean().transpose();
    out.norm_std = Vector(series.dims());
    for (Index c = 0; c < series.dims(); ++c) {
        const double var = (train.col(c).array() - out.norm_mean(c)).square().mean();
        out.norm_std(c) = std::sqrt(var);
    }
    for (Index c = 0; c < series.dims(); ++c) {
        const double denom = std::max(out.norm_std(c), kStdFloor);
        out.values.col(c) = (series.values.col(c).array() - out.norm_mean(c)) / denom;
    }
    out.normalized = true;
    return out;
}

Vector denormalize_target(const RawSeries& series, const Vector& values) {
    if (!series.normalized) {
        return values;
    }
    const double mu = series.norm_mean(series.target_col);
    const double sd = std::max(series.norm_std(series.target_col), kStdFloor);
    return (values.array() * sd + mu).matrix();
}

std::vector<WindowSample> make_windows(const RawSeries& series, Index lookback, Index horizon,
                                       const SplitSpec& split, Split which) {
    if (lookback < 1 || horizon < 1) {
        throw ConfigError("make_windows: lookback and horizon must be >= 1");
    }
    if (split.total != series.length()) {
        throw ConfigError("make_windows: split total does not match series length");
    }
    Index begin = 0;
    Index end = 0;
    switch (which) {
        case Split::kTrain: begin = 0; end = split.train_end; break;
        case Split::kVal: begin = split.train_end; end = split.val_end; break;
        case Split::kTest: begin = split.val_end; end = split.total; break;
    }

    // Anchor t is valid when x rows [t-l+1, t] exist and y rows [t+1, t+h]
    // lie inside [begin, end). The lookback may reach before `begin`.
    const Index t_lo = std::max<Index>(lookback - 1, begin - 1);
    const Index t_hi = end - 1 - horizon;
    std::vector<WindowSample> samples;
    if (t_hi < t_lo) {
        return samples;
    }
    samples.reserve(static_cast<std::size_t>(t_hi - t_lo + 1));
    for (Index t = t_lo; t <= t_hi; ++t) {
        WindowSample w;
        w.t = t;
        w.x = series.values.middleRows(t - lookback + 1, lookback);
        w.y = series.values.col(series.target_col).segment(t + 1, horizon);
        samples.push_back(std::move(w));
    }
    return samples;
}

Matrix revin_normalize(const Eigen::Ref<const Matrix>& window, RevinStats& stats) {
    const Index l = window.rows();
    const Index d = window.cols();
    if (l < 1) {
        throw ConfigError("revin_normalize: empty window");
    }
    stats.mean = window.colwise().mean().transpose();
    stats.std = Vector(d);
    Matrix out(l, d);
    for (Index c = 0; c < d; ++c) {
        const double var = (window.col(c).array() - stats.mean(c)).square().mean();
        stats.std(c) = std::sqrt(var);
        out.col(c) = (window.col(c).array() - stats.mean(c)) / std::max(stats.std(c), kStdFloor);
    }
    return out;
}

Vector revin_denormalize(const Vector& y_norm, const RevinStats& stats, Index target_col) {
    if (target_col < 0 || target_col >= stats.mean.size()) {
        throw ConfigError("revin_denormalize: target column out of range");
    }
    const double sd = std::max(stats.std(target_col), kStdFloor);
    return (y_norm.array() * sd + stats.mean(target_col)).matrix();
}

void write_windows_jsonl(const std::vector<WindowSample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("write_windows_jsonl: cannot open '" + path + "'");
    }
    for (const auto& w : samples) {
        nlohmann::json j;
        j["t"] = w.t;
        auto& jx = j["x"] = nlohmann::json::array();
        for (Index r = 0; r < w.x.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Index c = 0; c < w.x.cols(); ++c) row.push_back(w.x(r, c));
            jx.push_back(std::move(row));
        }
        auto& jy = j["y"] = nlohmann::json::array();
        for (Index i = 0; i < w.y.size(); ++i) jy.push_back(w.y(i));
        out << j.dump() << '\n';
    }
}

void write_csv(const RawSeries& series, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("write_csv: cannot open '" + path + "'");
    }
    const bool stamps = !series.timestamps.empty();
    if (!series.column_names.empty()) {
        if (stamps) out << "date,";
        for (Index c = 0; c < series.dims(); ++c) {
            out << series.column_names[static_cast<std::size_t>(c)]
                << (c + 1 < series.dims() ? "," : "");
        }
        out << '\n';
    }
    out.precision(17);
    for (Index r = 0; r < series.length(); ++r) {
        if (stamps) out << series.timestamps[static_cast<std::size_t>(r)] << ',';
        for (Index c = 0; c < series.dims(); ++c) {
            out << series.values(r, c) << (c + 1 < series.dims() ? "," : "");
        }
        out << '\n';
    }
}

}  // namespace foil::data
