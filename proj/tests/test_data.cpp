#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "foil/data.hpp"
#include "foil/rng.hpp"

using namespace foil;
using namespace foil::data;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) : path(name) {
        std::ofstream out(path, std::ios::trunc);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

SplitSpec whole(Index total) { return SplitSpec::from_boundaries(total, total, total); }

}  // namespace

TEST_CASE("load_csv: small file with header resolves target by name") {
    TempFile f("data_small.csv", "x1,y\n1.0,10\n2.0,20\n3.0,30\n");
    const auto series = load_csv(f.path, "y", true);
    CHECK(series.length() == 3);
    CHECK(series.dims() == 2);
    CHECK(series.target_col == 1);
    CHECK(series.values(2, 1) == 30.0);
}

TEST_CASE("load_csv: non-numeric cell names row and column") {
    TempFile f("data_bad.csv", "x1,y\n1.0,10\noops,20\n");
    try {
        load_csv(f.path, "y", true);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);  // 1-based with header row
        CHECK(msg.find("\"x1\"") != std::string::npos);
    }
}

TEST_CASE("load_csv: missing target column") {
    TempFile f("data_missing.csv", "a,b\n1,2\n");
    CHECK_THROWS_AS(load_csv(f.path, "y", true), DataError);
}

TEST_CASE("load_csv: ragged rows are rejected") {
    TempFile f("data_ragged.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_AS(load_csv(f.path, "a", true), DataError);
}

TEST_CASE("load_csv: ETT-style file keeps the date column as timestamps") {
    std::string content = "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n";
    for (int r = 0; r < 4; ++r) {
        content += "2016-07-01 0" + std::to_string(r) + ":00:00";
        for (int c = 0; c < 7; ++c) content += "," + std::to_string(r + c * 0.5);
        content += "\n";
    }
    TempFile f("data_ett.csv", content);
    const auto series = load_csv(f.path, "OT", true);
    CHECK(series.dims() == 7);
    CHECK(series.target_col == 6);
    CHECK(series.timestamps.size() == 4);
    CHECK(series.timestamps[1] == "2016-07-01 01:00:00");
}

TEST_CASE("load_csv: headerless file takes a numeric target index") {
    TempFile f("data_nohdr.csv", "1,2\n3,4\n");
    const auto series = load_csv(f.path, "1", false);
    CHECK(series.target_col == 1);
    CHECK_THROWS_AS(load_csv(f.path, "5", false), DataError);
}

TEST_CASE("zero_mean_normalize: hand-computed column [1,2,3]") {
    RawSeries s;
    s.values = Matrix(3, 1);
    s.values << 1.0, 2.0, 3.0;
    const auto norm = zero_mean_normalize(s, whole(3));
    CHECK(norm.values(0, 0) == doctest::Approx(-1.2247448713915890).epsilon(1e-12));
    CHECK(norm.values(1, 0) == doctest::Approx(0.0));
    CHECK(norm.values(2, 0) == doctest::Approx(1.2247448713915890).epsilon(1e-12));
    CHECK(norm.norm_mean(0) == doctest::Approx(2.0));
    CHECK(norm.norm_std(0) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("zero_mean_normalize: constant column maps to zeros via the floor") {
    RawSeries s;
    s.values = Matrix::Constant(4, 1, 5.0);
    const auto norm = zero_mean_normalize(s, whole(4));
    CHECK(norm.values.col(0).norm() == 0.0);
}

TEST_CASE("zero_mean_normalize: idempotent on standardized data") {
    Rng rng(2);
    RawSeries s;
    s.values = Matrix(64, 2);
    for (Index r = 0; r < 64; ++r)
        for (Index c = 0; c < 2; ++c) s.values(r, c) = rng.normal();
    const auto once = zero_mean_normalize(s, whole(64));
    const auto twice = zero_mean_normalize(once, whole(64));
    CHECK((twice.values - once.values).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("zero_mean_normalize: statistics come from the train split only") {
    Rng rng(3);
    RawSeries s;
    s.values = Matrix(100, 1);
    for (Index r = 0; r < 100; ++r) s.values(r, 0) = rng.normal();
    const auto split = SplitSpec::from_boundaries(100, 70, 85);
    const auto a = zero_mean_normalize(s, split);

    RawSeries perturbed = s;
    perturbed.values.bottomRows(15).array() += 100.0;  // test rows only
    const auto b = zero_mean_normalize(perturbed, split);
    CHECK(a.norm_mean(0) == b.norm_mean(0));
    CHECK(a.norm_std(0) == b.norm_std(0));
}

TEST_CASE("make_windows: T=5, l=2, h=1 yields anchors {1,2,3} (0-based)") {
    RawSeries s;
    s.values = Matrix(5, 1);
    s.values << 0, 1, 2, 3, 4;
    const auto samples = make_windows(s, 2, 1, whole(5), Split::kTrain);
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].t == 1);
    CHECK(samples[2].t == 3);
    // First sample: x rows 0..1, y = row 2 of the target column.
    CHECK(samples[0].x(0, 0) == 0.0);
    CHECK(samples[0].x(1, 0) == 1.0);
    CHECK(samples[0].y(0) == 2.0);
}

TEST_CASE("make_windows: l+h > T yields empty") {
    RawSeries s;
    s.values = Matrix::Zero(5, 1);
    CHECK(make_windows(s, 4, 2, whole(5), Split::kTrain).empty());
}

TEST_CASE("make_windows: a 1000-step split with l=h=96 yields 809 samples") {
    RawSeries s;
    s.values = Matrix::Zero(1000, 1);
    CHECK(make_windows(s, 96, 96, whole(1000), Split::kTrain).size() == 809);
}

TEST_CASE("make_windows: counts match a brute-force anchor enumeration") {
    // Lookbacks may span backward across split starts; labels may not. The
    // oracle enumerates every anchor and checks both rules directly.
    RawSeries s;
    s.values = Matrix::Zero(60, 1);
    for (Index train_end : {20, 23, 40}) {
        for (Index val_end : {Index(45), Index(50)}) {
            const auto split = SplitSpec::from_boundaries(60, train_end, val_end);
            for (Index l : {1, 3, 8}) {
                for (Index h : {1, 2, 5}) {
                    for (auto which : {Split::kTrain, Split::kVal, Split::kTest}) {
                        Index begin = 0, end = 0;
                        switch (which) {
                            case Split::kTrain: begin = 0; end = train_end; break;
                            case Split::kVal: begin = train_end; end = val_end; break;
                            case Split::kTest: begin = val_end; end = 60; break;
                        }
                        std::size_t expected = 0;
                        for (Index t = 0; t < 60; ++t) {
                            const bool x_ok = t - l + 1 >= 0;
                            const bool y_ok = t + 1 >= begin && t + h <= end - 1;
                            if (x_ok && y_ok) ++expected;
                        }
                        CHECK(make_windows(s, l, h, split, which).size() == expected);
                    }
                }
            }
        }
    }
}

TEST_CASE("make_windows: chronological order and in-split labels") {
    Rng rng(5);
    RawSeries s;
    s.values = Matrix(200, 2);
    for (Index r = 0; r < 200; ++r)
        for (Index c = 0; c < 2; ++c) s.values(r, c) = rng.normal();
    s.target_col = 1;
    const auto split = SplitSpec::from_fractions(200, 0.7, 0.1, 0.2);
    const auto train = make_windows(s, 16, 4, split, Split::kTrain);
    for (std::size_t i = 1; i < train.size(); ++i) {
        CHECK(train[i].t == train[i - 1].t + 1);
    }
    // No label reaches beyond the train region.
    CHECK(train.back().t + 4 <= split.train_end - 1);
}

TEST_CASE("revin: constant window degenerates to zeros and round-trips") {
    Matrix window = Matrix::Constant(6, 2, 4.2);
    RevinStats stats;
    const Matrix norm = revin_normalize(window, stats);
    CHECK(norm.norm() == 0.0);
    const Vector back = revin_denormalize(Vector::Zero(3), stats, 1);
    CHECK((back.array() == 4.2).all());
}

TEST_CASE("revin: hand-computed normalization and denormalization") {
    Matrix window(2, 1);
    window << 1.0, 3.0;  // mean 2, population std 1
    RevinStats stats;
    const Matrix norm = revin_normalize(window, stats);
    CHECK(norm(0, 0) == doctest::Approx(-1.0));
    CHECK(norm(1, 0) == doctest::Approx(1.0));
    Vector y(1);
    y << 0.5;
    const Vector denorm = revin_denormalize(y, stats, 0);
    CHECK(denorm(0) == doctest::Approx(2.5));
}

TEST_CASE("revin: denormalize inverts normalize within 1e-10") {
    Rng rng(6);
    Matrix window(8, 3);
    for (Index r = 0; r < 8; ++r)
        for (Index c = 0; c < 3; ++c) window(r, c) = rng.normal(2.0, 3.0);
    RevinStats stats;
    const Matrix norm = revin_normalize(window, stats);
    const Vector recovered = revin_denormalize(norm.col(2), stats, 2);
    CHECK((recovered - window.col(2)).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("split fractions must sum to one") {
    CHECK_THROWS_AS(SplitSpec::from_fractions(100, 0.7, 0.2, 0.2), ConfigError);
    const auto s = SplitSpec::from_fractions(100, 0.7, 0.1, 0.2);
    CHECK(s.train_end == 70);
    CHECK(s.val_end == 80);
}

TEST_CASE("window dump writes one JSON line per sample") {
    RawSeries s;
    s.values = Matrix(6, 1);
    s.values << 0, 1, 2, 3, 4, 5;
    const auto samples = make_windows(s, 2, 1, whole(6), Split::kTrain);
    const std::string path = "windows_dump_test.jsonl";
    write_windows_jsonl(samples, path);
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        if (!line.empty()) ++lines;
        CHECK(line.find("\"t\"") != std::string::npos);
    }
    CHECK(lines == samples.size());
    std::remove(path.c_str());
}
