#include "foil/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace foil::nn {

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::kIdentity;
    if (name == "relu") return Activation::kRelu;
    if (name == "tanh") return Activation::kTanh;
    throw ConfigError("activation: expected one of identity|relu|tanh, got '" + name + "'");
}

const char* to_string(Activation act) {
    switch (act) {
        case Activation::kIdentity: return "identity";
        case Activation::kRelu: return "relu";
        case Activation::kTanh: return "tanh";
    }
    return "identity";
}

namespace {

Matrix apply_activation(Activation act, const Matrix& z) {
    switch (act) {
        case Activation::kIdentity:
            return z;
        case Activation::kRelu:
            return z.cwiseMax(0.0);
        case Activation::kTanh:
            return z.array().tanh().matrix();
    }
    return z;
}

// d act(z) / d z, elementwise, from the pre-activation z and post-activation a.
Matrix activation_derivative(Activation act, const Matrix& z, const Matrix& a) {
    switch (act) {
        case Activation::kIdentity:
            return Matrix::Ones(z.rows(), z.cols());
        case Activation::kRelu:
            return (z.array() > 0.0).cast<double>().matrix();
        case Activation::kTanh:
            return (1.0 - a.array().square()).matrix();
    }
    return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

DenseLayer DenseLayer::init(Index in, Index out, Activation act, Rng& rng) {
    if (in < 1 || out < 1) {
        throw ConfigError("DenseLayer: dimensions must be positive");
    }
    DenseLayer layer;
    layer.act = act;
    layer.weight.resize(out, in);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (Index r = 0; r < out; ++r) {
        for (Index c = 0; c < in; ++c) {
            layer.weight(r, c) = rng.uniform(-limit, limit);
        }
    }
    layer.bias = Vector::Zero(out);
    return layer;
}

Index MlpNetwork::input_dim() const {
    if (layers.empty()) throw std::logic_error("MlpNetwork: empty network");
    return layers.front().in_dim();
}

Index MlpNetwork::output_dim() const {
    if (layers.empty()) throw std::logic_error("MlpNetwork: empty network");
    return layers.back().out_dim();
}

Index MlpNetwork::parameter_count() const {
    Index n = 0;
    for (const auto& layer : layers) {
        n += layer.weight.size() + layer.bias.size();
    }
    return n;
}

MlpNetwork MlpNetwork::make(Index in, const std::vector<Index>& hidden, Index out,
                            Activation hidden_act, Activation out_act, Rng& rng) {
    MlpNetwork net;
    Index prev = in;
    for (Index width : hidden) {
        net.layers.push_back(DenseLayer::init(prev, width, hidden_act, rng));
        prev = width;
    }
    net.layers.push_back(DenseLayer::init(prev, out, out_act, rng));
    net.validate();
    return net;
}

void MlpNetwork::validate() const {
    if (layers.empty()) {
        throw ConfigError("MlpNetwork: at least one layer required");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        if (layer.bias.size() != layer.weight.rows()) {
            throw ConfigError("MlpNetwork: bias/weight shape mismatch at layer " +
                              std::to_string(i));
        }
        if (i > 0 && layers[i - 1].out_dim() != layer.in_dim()) {
            throw ConfigError("MlpNetwork: layer dims do not chain at layer " +
                              std::to_string(i));
        }
    }
}

ParamGradients ParamGradients::zeros_like(const MlpNetwork& net, Index batch) {
    ParamGradients g;
    g.dweight.reserve(net.layers.size());
    g.dbias.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        g.dweight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
        g.dbias.push_back(Vector::Zero(layer.bias.size()));
    }
    g.dinput = Matrix::Zero(batch, net.input_dim());
    return g;
}

void ParamGradients::add_scaled(const ParamGradients& other, double scale) {
    for (std::size_t i = 0; i < dweight.size(); ++i) {
        dweight[i] += scale * other.dweight[i];
        dbias[i] += scale * other.dbias[i];
    }
}

Matrix forward(const MlpNetwork& net, const Eigen::Ref<const Matrix>& x,
               ActivationCache* cache) {
    if (x.cols() != net.input_dim()) {
        throw ConfigError("forward: input has " + std::to_string(x.cols()) +
                          " features, network expects " + std::to_string(net.input_dim()));
    }
    if (cache != nullptr) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
        cache->pre.reserve(net.layers.size());
        cache->post.reserve(net.layers.size());
    }
    Matrix a = x;
    for (const auto& layer : net.layers) {
        Matrix z = a * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        a = apply_activation(layer.act, z);
        if (cache != nullptr) {
            cache->pre.push_back(std::move(z));
            cache->post.push_back(a);
        }
    }
    require_finite(a, "nn::forward");
    return a;
}

Vector forward(const MlpNetwork& net, const Vector& x, ActivationCache* cache) {
    Matrix row = x.transpose();
    Matrix y = forward(net, row, cache);
    return y.row(0).transpose();
}

ParamGradients backward(const MlpNetwork& net, const ActivationCache& cache,
                        const Eigen::Ref<const Matrix>& grad_out) {
    const auto n_layers = net.layers.size();
    if (cache.pre.size() != n_layers || cache.post.size() != n_layers) {
        throw std::logic_error("nn::backward: cache does not match network");
    }
    if (grad_out.rows() != cache.input.rows() || grad_out.cols() != net.output_dim()) {
        throw std::logic_error("nn::backward: grad_out shape does not match forward pass");
    }

    ParamGradients grads;
    grads.dweight.resize(n_layers);
    grads.dbias.resize(n_layers);

    // delta = dLoss/d(pre-activation) for the current layer, per sample.
    Matrix delta = grad_out.cwiseProduct(
        activation_derivative(net.layers[n_layers - 1].act, cache.pre[n_layers - 1],
                              cache.post[n_layers - 1]));
    for (std::size_t li = n_layers; li-- > 0;) {
        const Matrix& layer_input = (li == 0) ? cache.input : cache.post[li - 1];
        grads.dweight[li] = delta.transpose() * layer_input;
        grads.dbias[li] = delta.colwise().sum().transpose();
        Matrix grad_prev = delta * net.layers[li].weight;
        if (li > 0) {
            delta = grad_prev.cwiseProduct(
                activation_derivative(net.layers[li - 1].act, cache.pre[li - 1],
                                      cache.post[li - 1]));
        } else {
            grads.dinput = std::move(grad_prev);
        }
    }
    return grads;
}

void SgdConfig::validate() const {
    if (!(lr > 0.0)) {
        throw ConfigError("sgd: learning rate must be > 0");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ConfigError("sgd: momentum must lie in [0, 1)");
    }
}

void sgd_step(Matrix& param, const Eigen::Ref<const Matrix>& grad, Matrix& velocity,
              const SgdConfig& cfg) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
        throw std::logic_error("sgd_step: parameter/gradient shape mismatch");
    }
    if (velocity.rows() != param.rows() || velocity.cols() != param.cols()) {
        velocity = Matrix::Zero(param.rows(), param.cols());
    }
    velocity = cfg.momentum * velocity + grad;
    param -= cfg.lr * velocity;
}

void sgd_step(Vector& param, const Vector& grad, Vector& velocity, const SgdConfig& cfg) {
    if (param.size() != grad.size()) {
        throw std::logic_error("sgd_step: parameter/gradient shape mismatch");
    }
    if (velocity.size() != param.size()) {
        velocity = Vector::Zero(param.size());
    }
    velocity = cfg.momentum * velocity + grad;
    param -= cfg.lr * velocity;
}

void SgdOptimizer::step(MlpNetwork& net, const ParamGradients& grads) {
    if (grads.dweight.size() != net.layers.size()) {
        throw std::logic_error("SgdOptimizer: gradient/network layer count mismatch");
    }
    if (vel_w_.size() != net.layers.size()) {
        vel_w_.assign(net.layers.size(), Matrix());
        vel_b_.assign(net.layers.size(), Vector());
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        sgd_step(net.layers[i].weight, grads.dweight[i], vel_w_[i], cfg_);
        sgd_step(net.layers[i].bias, grads.dbias[i], vel_b_[i], cfg_);
    }
}

}  // namespace foil::nn
