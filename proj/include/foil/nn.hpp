#pragma once

#include <string>
#include <vector>

#include "foil/rng.hpp"
#include "foil/types.hpp"

namespace foil::nn {

enum class Activation { kIdentity, kRelu, kTanh };

Activation activation_from_string(const std::string& name);
const char* to_string(Activation act);

/// One fully connected layer: y = act(W x + b), W is out_dim x in_dim.
struct DenseLayer {
    Matrix weight;
    Vector bias;
    Activation act = Activation::kIdentity;

    Index in_dim() const { return weight.cols(); }
    Index out_dim() const { return weight.rows(); }

    /// Glorot-uniform weights, zero bias.
    static DenseLayer init(Index in, Index out, Activation act, Rng& rng);
};

struct MlpNetwork {
    std::vector<DenseLayer> layers;

    Index input_dim() const;
    Index output_dim() const;
    Index parameter_count() const;

    /// Hidden layers use `hidden_act`; the final layer uses `out_act`.
    static MlpNetwork make(Index in, const std::vector<Index>& hidden, Index out,
                           Activation hidden_act, Activation out_act, Rng& rng);

    void validate() const;
};

/// Per-layer pre/post activations recorded by forward for use in backward.
/// Rows are batch samples throughout.
struct ActivationCache {
    Matrix input;
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
};

struct ParamGradients {
    std::vector<Matrix> dweight;
    std::vector<Vector> dbias;
    Matrix dinput;

    static ParamGradients zeros_like(const MlpNetwork& net, Index batch);
    void add_scaled(const ParamGradients& other, double scale);
};

/// Batched forward pass; rows of x are independent samples.
Matrix forward(const MlpNetwork& net, const Eigen::Ref<const Matrix>& x,
               ActivationCache* cache = nullptr);

inline Matrix forward(const MlpNetwork& net, const Matrix& x, ActivationCache* cache = nullptr) {
    return forward(net, Eigen::Ref<const Matrix>(x), cache);
}

/// Single-sample convenience overload.
Vector forward(const MlpNetwork& net, const Vector& x, ActivationCache* cache = nullptr);

/// Gradients of a scalar loss given dLoss/dOutput per sample (rows).
/// Weight/bias gradients are summed over the batch; dinput keeps per-sample rows.
ParamGradients backward(const MlpNetwork& net, const ActivationCache& cache,
                        const Eigen::Ref<const Matrix>& grad_out);

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.0;

    void validate() const;
};

/// p <- p - lr * v with v <- momentum * v + g.
void sgd_step(Matrix& param, const Eigen::Ref<const Matrix>& grad, Matrix& velocity,
              const SgdConfig& cfg);
void sgd_step(Vector& param, const Vector& grad, Vector& velocity, const SgdConfig& cfg);

/// Momentum-buffer owner for a whole network.
class SgdOptimizer {
public:
    SgdOptimizer() = default;
    explicit SgdOptimizer(SgdConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    void step(MlpNetwork& net, const ParamGradients& grads);
    void reset() { vel_w_.clear(); vel_b_.clear(); }

    const SgdConfig& config() const { return cfg_; }

private:
    SgdConfig cfg_;
    std::vector<Matrix> vel_w_;
    std::vector<Vector> vel_b_;
};

}  // namespace foil::nn
