#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace foil {

using Index = Eigen::Index;

// Dense storage is row-major so tensors serialize in natural reading order.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

/// Bad or unparsable user configuration (unknown key, out-of-range value).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or unusable input data (CSV parse failures, shape problems).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical breakdown (NaN/Inf surfaced from a computation).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
    return m.allFinite();
}

inline bool all_finite(const Vector& v) {
    return v.allFinite();
}

inline void require_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
    if (!m.allFinite()) {
        throw NumericError(std::string(what) + ": non-finite value encountered");
    }
}

inline void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) {
        throw NumericError(std::string(what) + ": non-finite value encountered");
    }
}

}  // namespace foil
