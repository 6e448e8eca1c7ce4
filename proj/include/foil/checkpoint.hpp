#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "foil/types.hpp"

namespace foil::io {

/// Flat key -> tensor container used for model checkpoints.
///
/// Layout (all integers little-endian):
///   magic   "FOILTNSR" + version byte '1'
///   u64     tensor count
///   per tensor:
///     u32   key length, then key bytes (UTF-8, no terminator)
///     u64   rows, u64 cols
///     f64   rows*cols values, row-major, IEEE-754 little-endian
class TensorFile {
public:
    void put(const std::string& key, Matrix value);
    void put(const std::string& key, const Vector& value);  // stored as n x 1
    void put_scalar(const std::string& key, double value);  // stored as 1 x 1

    bool contains(const std::string& key) const;
    const Matrix& matrix(const std::string& key) const;
    Vector vector(const std::string& key) const;
    double scalar(const std::string& key) const;

    const std::map<std::string, Matrix>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static TensorFile load(const std::string& path);

private:
    std::map<std::string, Matrix> entries_;
};

}  // namespace foil::io
