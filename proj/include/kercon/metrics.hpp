#pragma once

// Challenge evaluation: age MAE through a ridge probe, site balanced accuracy
// through a multinomial logistic probe, and the combined challenge score
// BAcc^0.3 * MAE_ext (lower is better).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kercon/datagen.hpp"
#include "kercon/train.hpp"

namespace kercon {

struct ProbeResult {
    double mae_internal = 0.0;
    double mae_external = 0.0;
    double site_bacc = 0.0;  // fraction in [0, 1]
    double challenge_score = 0.0;
};

inline double mae(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw std::invalid_argument("mae: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("mae: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) sum += std::abs(predictions[i] - targets[i]);
    return sum / static_cast<double>(predictions.size());
}

inline double mae(const Eigen::Ref<const Eigen::VectorXd>& predictions, const Eigen::Ref<const Eigen::VectorXd>& targets) {
    return mae(std::span<const double>(predictions.data(), static_cast<std::size_t>(predictions.size())),
               std::span<const double>(targets.data(), static_cast<std::size_t>(targets.size())));
}

/// Mean per-class recall over `classes`. Classes without any true instance
/// are excluded with a warning on std::clog.
inline double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth, std::span<const int> classes) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("balanced_accuracy: length mismatch");
    std::map<int, std::pair<std::size_t, std::size_t>> counts;  // class -> (hits, total)
    for (int c : classes) counts.emplace(c, std::pair<std::size_t, std::size_t>{0, 0});
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto it = counts.find(truth[i]);
        if (it == counts.end()) continue;
        ++it->second.second;
        if (predicted[i] == truth[i]) ++it->second.first;
    }
    double recall_sum = 0.0;
    std::size_t used = 0;
    for (const auto& [cls, hc] : counts) {
        if (hc.second == 0) {
            std::clog << "warning: class " << cls << " has no true instances; excluded from balanced accuracy\n";
            continue;
        }
        recall_sum += static_cast<double>(hc.first) / static_cast<double>(hc.second);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("balanced_accuracy: no class has true instances");
    return recall_sum / static_cast<double>(used);
}

inline double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth) {
    std::set<int> present(truth.begin(), truth.end());
    const std::vector<int> classes(present.begin(), present.end());
    return balanced_accuracy(predicted, truth, classes);
}

inline double challenge_score(double bacc, double mae_external) {
    if (!(bacc >= 0.0 && bacc <= 1.0)) {
        throw std::invalid_argument("balanced accuracy must be a fraction in [0, 1] (got " + std::to_string(bacc) +
                                    "; percentages must be divided by 100)");
    }
    if (!(mae_external >= 0.0)) throw std::invalid_argument("external MAE must be non-negative");
    return std::pow(bacc, 0.3) * mae_external;
}

// ---------------------------------------------------------------------------
// Ridge probe: intercept unpenalized, closed form on centered data.
// ---------------------------------------------------------------------------

struct RidgeProbe {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    double lambda = 1.0;

    Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        return ((x * weights).array() + intercept).matrix();
    }
};

inline RidgeProbe fit_ridge_probe(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                                  double lambda) {
    if (x.rows() != y.size()) throw std::invalid_argument("ridge: row count mismatch");
    if (x.rows() == 0) throw std::invalid_argument("ridge: empty training set");
    if (!(lambda >= 0.0)) throw std::invalid_argument("ridge: lambda must be non-negative");

    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;

    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = xc.transpose() * yc;

    RidgeProbe probe;
    probe.lambda = lambda;
    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
        if (qr.rank() < gram.cols()) {
            throw std::invalid_argument("ridge: singular normal equations with lambda = 0; use lambda > 0");
        }
        probe.weights = qr.solve(rhs);
    } else {
        probe.weights = gram.ldlt().solve(rhs);
    }
    probe.intercept = y_mean - x_mean.dot(probe.weights);
    return probe;
}

/// |(Xc^T Xc + lambda I) w - Xc^T yc|_inf for a fitted probe.
inline double normal_equation_residual(const RidgeProbe& probe, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& y) {
    const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    const Eigen::VectorXd yc = y.array() - y.mean();
    const Eigen::VectorXd lhs = xc.transpose() * (xc * probe.weights) + probe.lambda * probe.weights;
    return (lhs - xc.transpose() * yc).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Multinomial logistic probe on standardized inputs, full-batch gradient
// descent from zero initialization.
// ---------------------------------------------------------------------------

struct LogisticProbe {
    std::vector<int> classes;   // column j of `weights` scores classes[j]
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;
    Eigen::MatrixXd weights;    // d x C
    Eigen::RowVectorXd bias;    // C
    std::vector<double> objective;  // cross-entropy after each epoch (entry 0: at initialization)

    Eigen::MatrixXd logits(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        const Eigen::MatrixXd xs = (x.rowwise() - mean).array().rowwise() / scale.array();
        Eigen::MatrixXd z = xs * weights;
        z.rowwise() += bias;
        return z;
    }

    std::vector<int> predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
        const auto z = logits(x);
        std::vector<int> out(static_cast<std::size_t>(z.rows()));
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            Eigen::Index best = 0;
            z.row(i).maxCoeff(&best);
            out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(best)];
        }
        return out;
    }
};

namespace detail {

inline double softmax_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<Eigen::Index>& target,
                                    Eigen::MatrixXd* prob_out) {
    double loss = 0.0;
    Eigen::MatrixXd prob(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        prob.row(i) = (logits.row(i).array() - m).exp();
        const double total = prob.row(i).sum();
        prob.row(i) /= total;
        loss += (m + std::log(total)) - logits(i, target[static_cast<std::size_t>(i)]);
    }
    if (prob_out) *prob_out = std::move(prob);
    return loss / static_cast<double>(logits.rows());
}

}  // namespace detail

/// `seed` is accepted for interface stability; initialization is all-zero
/// and gradient descent is full-batch, so the fit is deterministic.
inline LogisticProbe fit_logistic_probe(const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const int> sites,
                                        int epochs = 500, double learning_rate = 0.1, std::uint64_t seed = 0) {
    (void)seed;
    if (static_cast<std::size_t>(x.rows()) != sites.size()) throw std::invalid_argument("logistic: row count mismatch");
    std::set<int> present(sites.begin(), sites.end());
    if (present.size() < 2) throw std::invalid_argument("logistic probe needs at least 2 sites");

    LogisticProbe probe;
    probe.classes.assign(present.begin(), present.end());
    std::map<int, Eigen::Index> column;
    for (std::size_t j = 0; j < probe.classes.size(); ++j) column[probe.classes[j]] = static_cast<Eigen::Index>(j);
    std::vector<Eigen::Index> target;
    target.reserve(sites.size());
    for (int s : sites) target.push_back(column[s]);

    const auto n = x.rows();
    const auto c = static_cast<Eigen::Index>(probe.classes.size());
    probe.mean = x.colwise().mean();
    probe.scale = ((x.rowwise() - probe.mean).colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
    for (Eigen::Index j = 0; j < probe.scale.size(); ++j) {
        if (!(probe.scale(j) > 1e-12)) probe.scale(j) = 1.0;
    }
    const Eigen::MatrixXd xs = (x.rowwise() - probe.mean).array().rowwise() / probe.scale.array();
    probe.weights = Eigen::MatrixXd::Zero(x.cols(), c);
    probe.bias = Eigen::RowVectorXd::Zero(c);

    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, c);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, target[static_cast<std::size_t>(i)]) = 1.0;

    auto objective_at = [&](const Eigen::MatrixXd& w, const Eigen::RowVectorXd& b, Eigen::MatrixXd* prob) {
        Eigen::MatrixXd z = xs * w;
        z.rowwise() += b;
        return detail::softmax_cross_entropy(z, target, prob);
    };

    Eigen::MatrixXd prob;
    double current = objective_at(probe.weights, probe.bias, &prob);
    probe.objective.push_back(current);
    double step = learning_rate;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const Eigen::MatrixXd residual = (prob - onehot) / static_cast<double>(n);
        const Eigen::MatrixXd grad_w = xs.transpose() * residual;
        const Eigen::RowVectorXd grad_b = residual.colwise().sum();

        // Halve the step until the objective does not increase.
        for (int tries = 0; tries < 40; ++tries) {
            const Eigen::MatrixXd w = probe.weights - step * grad_w;
            const Eigen::RowVectorXd b = probe.bias - step * grad_b;
            Eigen::MatrixXd next_prob;
            const double next = objective_at(w, b, &next_prob);
            if (next <= current) {
                probe.weights = w;
                probe.bias = b;
                prob = std::move(next_prob);
                current = next;
                break;
            }
            step *= 0.5;
        }
        probe.objective.push_back(current);
    }
    return probe;
}

// ---------------------------------------------------------------------------
// Full evaluation protocol.
// ---------------------------------------------------------------------------

struct EvalConfig {
    double ridge_lambda = 1.0;
    int logistic_epochs = 500;
    double logistic_lr = 0.1;
    std::uint64_t seed = 0;
};

using EmbedFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;
using AgePredictFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Probes are fit on train embeddings only. Ages are predicted by `predict`
/// when given, otherwise by a ridge probe on the embeddings. The site probe
/// is scored on the internal test split.
inline ProbeResult evaluate_representation(const EmbedFn& embed, const Dataset& data, const EvalConfig& config,
                                           const AgePredictFn& predict = {}) {
    data.validate();
    const auto train = data.subset(Split::Train);
    const auto internal = data.subset(Split::Internal);
    const auto external = data.subset(Split::External);
    if (train.size() == 0 || internal.size() == 0 || external.size() == 0) {
        throw std::invalid_argument("evaluation needs non-empty train, internal and external splits");
    }

    const Eigen::MatrixXd z_train = embed(train.features);
    const Eigen::MatrixXd z_internal = embed(internal.features);
    const Eigen::MatrixXd z_external = embed(external.features);

    Eigen::VectorXd pred_internal, pred_external;
    if (predict) {
        pred_internal = predict(internal.features);
        pred_external = predict(external.features);
    } else {
        const auto ridge = fit_ridge_probe(z_train, train.age_vector(), config.ridge_lambda);
        pred_internal = ridge.predict(z_internal);
        pred_external = ridge.predict(z_external);
    }

    const auto logistic =
        fit_logistic_probe(z_train, train.sites, config.logistic_epochs, config.logistic_lr, config.seed);
    const auto site_pred = logistic.predict(z_internal);

    ProbeResult r;
    r.mae_internal = mae(pred_internal, internal.age_vector());
    r.site_bacc = balanced_accuracy(site_pred, internal.sites);
    r.mae_external = mae(pred_external, external.age_vector());
    r.challenge_score = challenge_score(r.site_bacc, r.mae_external);
    return r;
}

inline ProbeResult evaluate(const TrainedModel& model, const Dataset& data, const EvalConfig& config) {
    const EmbedFn embed = [&](const Eigen::MatrixXd& x) { return model.encoder.forward(x); };
    AgePredictFn predict;
    if (model.head) {
        predict = [&](const Eigen::MatrixXd& x) { return model.head->predict(model.encoder.forward(x)); };
    }
    return evaluate_representation(embed, data, config, predict);
}

}  // namespace kercon
