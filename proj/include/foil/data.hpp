#pragma once

#include <string>
#include <vector>

#include "foil/types.hpp"

namespace foil::data {

/// A multivariate series in time order, with the target designated by column.
/// After zero_mean_normalize, norm_mean/norm_std hold the train-split
/// statistics used for the transform.
struct RawSeries {
    Matrix values;  // T x d_in
    Index target_col = 0;
    std::vector<std::string> column_names;  // empty when the file had no header
    std::vector<std::string> timestamps;    // pass-through, empty when absent
    Vector norm_mean;
    Vector norm_std;
    bool normalized = false;

    Index length() const { return values.rows(); }
    Index dims() const { return values.cols(); }
};

/// Contiguous chronological train/val/test regions: rows [0, train_end),
/// [train_end, val_end), [val_end, T).
struct SplitSpec {
    Index train_end = 0;
    Index val_end = 0;
    Index total = 0;

    static SplitSpec from_fractions(Index total, double train_frac, double val_frac,
                                    double test_frac);
    static SplitSpec from_boundaries(Index total, Index train_end, Index val_end);

    Index train_len() const { return train_end; }
    Index val_len() const { return val_end - train_end; }
    Index test_len() const { return total - val_end; }
};

enum class Split { kTrain, kVal, kTest };

const char* to_string(Split split);

/// One training instance: lookback matrix, horizon target vector, anchor index.
/// x rows are series rows [t-l+1, t]; y entries are target rows [t+1, t+h].
struct WindowSample {
    Matrix x;  // l x d_in
    Vector y;  // h
    Index t = 0;
};

/// Loads a numeric CSV. With a header, `target` is resolved by column name and
/// a leading "date"/"timestamp" column is kept as pass-through strings; without
/// a header, `target` must parse as a 0-based column index.
RawSeries load_csv(const std::string& path, const std::string& target, bool has_header);

/// Per-column (v - mean)/std using train-split statistics only; population
/// std with a 1e-8 floor. Constant columns map to zero.
RawSeries zero_mean_normalize(const RawSeries& series, const SplitSpec& split);

/// Undo zero_mean_normalize for the target column only.
Vector denormalize_target(const RawSeries& series, const Vector& values);

/// All samples whose horizon lies inside the requested split. Lookbacks may
/// reach back across the split start into earlier rows; labels may not.
/// Returns an empty list when the split is too short.
std::vector<WindowSample> make_windows(const RawSeries& series, Index lookback, Index horizon,
                                       const SplitSpec& split, Split which);

/// Per-feature standardization of one lookback window by its own statistics.
struct RevinStats {
    Vector mean;
    Vector std;  // raw population std, floor applied on use
};

Matrix revin_normalize(const Eigen::Ref<const Matrix>& window, RevinStats& stats);

/// Applies the target feature's window statistics to a horizon output.
Vector revin_denormalize(const Vector& y_norm, const RevinStats& stats, Index target_col);

/// Debug dump: one window per JSON line {"t":..,"x":[[..]],"y":[..]}.
void write_windows_jsonl(const std::vector<WindowSample>& samples, const std::string& path);

/// Writes the series back out as CSV (header + optional timestamp column).
void write_csv(const RawSeries& series, const std::string& path);

}  // namespace foil::data
