#pragma once

// Test-side oracles, independent of the library's implementation paths:
// central finite differences, a brute-force majority vote, and a
// normal-equations least-squares fit.

#include <functional>
#include <vector>

#include "foil/nn.hpp"
#include "foil/types.hpp"

namespace oracles {

inline double rel_err(double got, double want, double abs_floor = 1e-8) {
    const double denom = std::max(std::abs(want), abs_floor);
    return std::abs(got - want) / denom;
}

/// Central finite-difference gradient of a scalar function of a vector.
inline foil::Vector fd_gradient(const std::function<double(const foil::Vector&)>& f,
                                const foil::Vector& x, double eps = 1e-5) {
    foil::Vector grad(x.size());
    foil::Vector probe = x;
    for (foil::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + eps;
        const double hi = f(probe);
        probe(i) = x(i) - eps;
        const double lo = f(probe);
        probe(i) = x(i);
        grad(i) = (hi - lo) / (2.0 * eps);
    }
    return grad;
}

/// Central finite-difference gradient w.r.t. every weight and bias of a
/// network, for a scalar loss evaluated from the (mutated) network.
struct NetFdGradients {
    std::vector<foil::Matrix> dweight;
    std::vector<foil::Vector> dbias;
};

inline NetFdGradients fd_net_gradient(foil::nn::MlpNetwork& net,
                                      const std::function<double()>& loss, double eps = 1e-5) {
    NetFdGradients g;
    for (auto& layer : net.layers) {
        foil::Matrix dw(layer.weight.rows(), layer.weight.cols());
        for (foil::Index r = 0; r < layer.weight.rows(); ++r) {
            for (foil::Index c = 0; c < layer.weight.cols(); ++c) {
                const double saved = layer.weight(r, c);
                layer.weight(r, c) = saved + eps;
                const double hi = loss();
                layer.weight(r, c) = saved - eps;
                const double lo = loss();
                layer.weight(r, c) = saved;
                dw(r, c) = (hi - lo) / (2.0 * eps);
            }
        }
        g.dweight.push_back(std::move(dw));
        foil::Vector db(layer.bias.size());
        for (foil::Index i = 0; i < layer.bias.size(); ++i) {
            const double saved = layer.bias(i);
            layer.bias(i) = saved + eps;
            const double hi = loss();
            layer.bias(i) = saved - eps;
            const double lo = loss();
            layer.bias(i) = saved;
            db(i) = (hi - lo) / (2.0 * eps);
        }
        g.dbias.push_back(std::move(db));
    }
    return g;
}

/// Elementwise relative-error comparison with an absolute floor; returns the
/// worst relative error seen.
inline double max_rel_err(const foil::Matrix& got, const foil::Matrix& want,
                          double abs_floor = 1e-8) {
    double worst = 0.0;
    for (foil::Index r = 0; r < got.rows(); ++r) {
        for (foil::Index c = 0; c < got.cols(); ++c) {
            worst = std::max(worst, rel_err(got(r, c), want(r, c), abs_floor));
        }
    }
    return worst;
}

/// Brute-force synchronous majority vote: for each index, count labels in the
/// truncated window and apply the tie rules directly.
inline std::vector<int> brute_force_propagate(const std::vector<int>& labels, int k, int radius) {
    const auto n = static_cast<std::ptrdiff_t>(labels.size());
    std::vector<int> out(labels.size());
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        std::vector<int> count(static_cast<std::size_t>(k), 0);
        for (std::ptrdiff_t j = t - radius; j <= t + radius; ++j) {
            if (j < 0 || j >= n) continue;
            ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])];
        }
        int best = 0;
        for (int e = 1; e < k; ++e) {
            if (count[static_cast<std::size_t>(e)] > count[static_cast<std::size_t>(best)]) {
                best = e;
            }
        }
        const int own = labels[static_cast<std::size_t>(t)];
        if (count[static_cast<std::size_t>(own)] == count[static_cast<std::size_t>(best)]) {
            out[static_cast<std::size_t>(t)] = own;
        } else {
            for (int e = 0; e < k; ++e) {
                if (count[static_cast<std::size_t>(e)] == count[static_cast<std::size_t>(best)]) {
                    out[static_cast<std::size_t>(t)] = e;
                    break;
                }
            }
        }
    }
    return out;
}

/// Ordinary least squares with intercept via normal equations.
/// Returns coefficients (features first, intercept last).
inline foil::Vector ols_fit(const foil::Matrix& x, const foil::Vector& y) {
    foil::Matrix design(x.rows(), x.cols() + 1);
    design.leftCols(x.cols()) = x;
    design.col(x.cols()).setOnes();
    return (design.transpose() * design)
        .ldlt()
        .solve(design.transpose() * y);
}

inline double ols_mse(const foil::Matrix& x, const foil::Vector& y, const foil::Vector& coef) {
    foil::Matrix design(x.rows(), x.cols() + 1);
    design.leftCols(x.cols()) = x;
    design.col(x.cols()).setOnes();
    return (design * coef - y).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace oracles
