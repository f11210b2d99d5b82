#pragma once

// Feed-forward encoder onto the unit sphere, an L1 regression head for the
// baseline, and the Adam optimizer.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kercon/rng.hpp"
#include "kercon/similarity.hpp"

namespace kercon {

/// tanh MLP followed by sphere projection. Parameters live in one flat
/// vector (per layer: weight matrix out x in, column-major, then bias).
class Encoder {
public:
    struct Pass {
        std::vector<Eigen::MatrixXd> activations;  // input, then each hidden layer output
        Eigen::MatrixXd raw;                       // pre-projection output, N x d
        Eigen::MatrixXd unit;                      // projected output, N x d
    };

    Encoder() = default;

    explicit Encoder(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
        if (sizes_.size() < 2) throw std::invalid_argument("encoder needs at least input and output sizes");
        for (int s : sizes_) {
            if (s <= 0) throw std::invalid_argument("encoder layer sizes must be positive");
        }
        if (sizes_.back() < 2) throw std::invalid_argument("embedding dimension must be at least 2");
        std::size_t count = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            offsets_.push_back(count);
            count += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
        }
        params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
    }

    /// Glorot-uniform weights, zero biases.
    static Encoder initialized(std::vector<int> layer_sizes, std::uint64_t seed) {
        Encoder enc(std::move(layer_sizes));
        Rng rng(seed);
        for (std::size_t l = 0; l < enc.num_layers(); ++l) {
            const double limit = std::sqrt(6.0 / (enc.sizes_[l] + enc.sizes_[l + 1]));
            auto w = enc.weight(l);
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
            }
        }
        return enc;
    }

    const std::vector<int>& layer_sizes() const { return sizes_; }
    std::size_t num_layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }

    Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer) {
        return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
    }
    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const {
        return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t layer) {
        return {params_.data() + offsets_[layer] + weight_size(layer), sizes_[layer + 1]};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const {
        return {params_.data() + offsets_[layer] + weight_size(layer), sizes_[layer + 1]};
    }

    Pass forward_pass(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
        if (features.cols() != input_dim()) {
            throw std::invalid_argument("feature dimension " + std::to_string(features.cols()) +
                                        " does not match encoder input size " + std::to_string(input_dim()));
        }
        Pass pass;
        pass.activations.emplace_back(features);
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Eigen::MatrixXd pre = pass.activations.back() * weight(l).transpose();
            pre.rowwise() += bias(l).transpose();
            if (l + 1 < num_layers()) {
                pass.activations.emplace_back(pre.array().tanh().matrix());
            } else {
                pass.raw = std::move(pre);
            }
        }
        pass.unit = project_rows(pass.raw);
        return pass;
    }

    Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
        return forward_pass(features).unit;
    }

    /// Parameter gradient given dL/d(unit embeddings) for the pass's batch.
    Eigen::VectorXd backward(const Pass& pass, const Eigen::Ref<const Eigen::MatrixXd>& grad_unit) const {
        if (grad_unit.rows() != pass.unit.rows() || grad_unit.cols() != pass.unit.cols()) {
            throw std::invalid_argument("upstream gradient shape does not match forward pass");
        }
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
        Eigen::MatrixXd delta = project_rows_backward(pass.raw, grad_unit);
        for (std::size_t l = num_layers(); l-- > 0;) {
            const auto& input = pass.activations[l];
            Eigen::Map<Eigen::MatrixXd>(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]) =
                delta.transpose() * input;
            Eigen::Map<Eigen::VectorXd>(grad.data() + offsets_[l] + weight_size(l), sizes_[l + 1]) =
                delta.colwise().sum().transpose();
            if (l > 0) {
                Eigen::MatrixXd upstream = delta * weight(l);
                delta = upstream.array() * (1.0 - input.array().square());
            }
        }
        return grad;
    }

private:
    std::size_t weight_size(std::size_t layer) const {
        return static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer];
    }

    std::vector<int> sizes_;
    std::vector<std::size_t> offsets_;
    Eigen::VectorXd params_;
};

/// Linear age regressor on embeddings for the L1 baseline. Predicts
/// offset + scale * (w.z + b), with offset/scale fixed from the training ages.
struct BaselineHead {
    Eigen::VectorXd params;  // d weights, then bias
    double offset = 0.0;
    double scale = 1.0;

    static BaselineHead make(int dim, double offset, double scale) {
        return {Eigen::VectorXd::Zero(dim + 1), offset, scale};
    }

    int dim() const { return static_cast<int>(params.size()) - 1; }

    Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& embeddings) const {
        const Eigen::VectorXd linear =
            (embeddings * params.head(dim())).array() + params(dim());
        return (offset + scale * linear.array()).matrix();
    }
};

struct L1Step {
    double loss = 0.0;
    Eigen::VectorXd head_grad;
    Eigen::MatrixXd embedding_grad;
};

/// Mean absolute error of the head's predictions with its subgradient.
inline L1Step l1_loss(const BaselineHead& head, const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                      const Eigen::Ref<const Eigen::VectorXd>& targets) {
    const Eigen::Index n = embeddings.rows();
    const Eigen::VectorXd pred = head.predict(embeddings);
    L1Step out;
    out.head_grad = Eigen::VectorXd::Zero(head.params.size());
    out.embedding_grad = Eigen::MatrixXd::Zero(n, embeddings.cols());
    const int d = head.dim();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = pred(i) - targets(i);
        out.loss += std::abs(r);
        const double g = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) * head.scale / static_cast<double>(n);
        out.head_grad.head(d) += g * embeddings.row(i).transpose();
        out.head_grad(d) += g;
        out.embedding_grad.row(i) = g * head.params.head(d).transpose();
    }
    out.loss /= static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay and step-decay learning-rate schedule.
// ---------------------------------------------------------------------------

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::uint64_t step = 0;

    static AdamState zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }
};

/// lr * decay^floor(epoch / every), epochs counted from 0.
inline double scheduled_learning_rate(double base_lr, double decay, int decay_every, int epoch) {
    if (decay_every <= 0) return base_lr;
    return base_lr * std::pow(decay, epoch / decay_every);
}

inline void adam_step(Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state,
                      double learning_rate, double weight_decay, const AdamHyper& hyper = {}) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("adam: parameter, gradient and state shapes differ");
    }
    ++state.step;
    state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grads;
    state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grads.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    if (weight_decay != 0.0) params *= (1.0 - learning_rate * weight_decay);
    params.array() -= learning_rate * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + hyper.epsilon);
}

}  // namespace kercon
