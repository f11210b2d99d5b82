#pragma once

// Kernel-weighted contrastive losses for continuous labels.
//
// Every loss is evaluated per anchor i over the other batch members A(i) and
// averaged over the anchors that have a nonzero weight row. With s the
// similarities of the anchor row and w its kernel weights:
//
//   y-aware    L_i = -sum_k w_k/W * log( e^{s_k} / sum_{t in A} e^{s_t} )
//   threshold  L_i = -sum_k w_k/Z_k * log( e^{s_k} / sum_{t: w_t < w_k} e^{s_t} )
//   exp        L_i = -1/W * sum_k w_k log( e^{s_k} / sum_{t in A, t != k} e^{s_t (1 - w_t)} )
//
// where W = sum_{t in A} w_t and Z_k is either the weight sum or the count of
// the strictly-less-positive set (see ThresholdNormalization).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "kercon/kernels.hpp"
#include "kercon/similarity.hpp"

namespace kercon {

enum class LossKind { YAware, Threshold, Exp, SupCon };

inline std::string_view loss_name(LossKind kind) {
    switch (kind) {
        case LossKind::YAware: return "yaware";
        case LossKind::Threshold: return "thr";
        case LossKind::Exp: return "exp";
        case LossKind::SupCon: return "supcon";
    }
    return "?";
}

inline LossKind parse_loss_kind(std::string_view name) {
    if (name == "yaware") return LossKind::YAware;
    if (name == "thr" || name == "threshold") return LossKind::Threshold;
    if (name == "exp") return LossKind::Exp;
    if (name == "supcon") return LossKind::SupCon;
    throw std::invalid_argument("unknown loss '" + std::string(name) +
                                "' (valid: yaware, thr, exp, supcon)");
}

/// How the threshold loss normalizes each positive's term.
enum class ThresholdNormalization {
    WeightSum,  // sum of weights in the less-positive set, count if that sum is negligible next to w_k
    Count,      // number of samples in the less-positive set
};

struct LossOptions {
    ThresholdNormalization threshold_normalization = ThresholdNormalization::WeightSum;
};

struct LossOutput {
    double value = 0.0;
    Eigen::MatrixXd sim_grad;  // dL/ds, N x N (row = anchor)
    Eigen::MatrixXd grad;      // dL/dz, N x d; empty when the similarities carry no embeddings
    std::size_t active_anchors = 0;
};

namespace detail {

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            carry_ += (sum_ - t) + x;
        } else {
            carry_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

/// log(sum_j exp(x_j)) over `index`, with max subtraction. Writes the softmax
/// probabilities into `prob` (same order as `index`).
inline double log_sum_exp(std::span<const Eigen::Index> index, const auto& x, std::vector<double>& prob) {
    double m = -std::numeric_limits<double>::infinity();
    for (auto t : index) m = std::max(m, x(t));
    prob.resize(index.size());
    double total = 0.0;
    for (std::size_t j = 0; j < index.size(); ++j) {
        prob[j] = std::exp(x(index[j]) - m);
        total += prob[j];
    }
    for (auto& p : prob) p /= total;
    return m + std::log(total);
}

inline void check_shapes(const SimilarityMatrix& sims, const WeightMatrix& weights) {
    const auto n = sims.values.rows();
    if (sims.values.cols() != n || weights.values.rows() != n || weights.values.cols() != n) {
        throw std::invalid_argument("similarity and weight matrices must both be N x N");
    }
    if (n < 2) throw std::invalid_argument("batch too small for contrastive loss");
}

using RowView = Eigen::Ref<const Eigen::RowVectorXd>;
using GradRow = Eigen::Ref<Eigen::RowVectorXd>;

// Per-anchor evaluators: return the anchor's loss and accumulate dL_i/ds_i.
// std::nullopt means the anchor has no positives and is skipped.

inline std::optional<double> yaware_anchor(Eigen::Index anchor, RowView s, RowView w, GradRow g) {
    const Eigen::Index n = s.size();
    std::vector<Eigen::Index> others;
    double weight_sum = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (t == anchor) continue;
        others.push_back(t);
        weight_sum += w(t);
    }
    if (!(weight_sum > 0.0)) return std::nullopt;

    std::vector<double> prob;
    const double lse = log_sum_exp(others, s, prob);
    double value = 0.0;
    for (std::size_t j = 0; j < others.size(); ++j) {
        const auto k = others[j];
        const double coeff = w(k) / weight_sum;
        if (coeff != 0.0) value += coeff * (lse - s(k));
        g(k) += prob[j] - coeff;
    }
    return value;
}

/// Weight sum of the less-positive set, or its size when that sum is
/// negligible next to w_k. Keeps every coefficient below 1 / epsilon.
inline double threshold_normalizer(ThresholdNormalization mode, double w_k, double less_weight, std::size_t count) {
    if (mode == ThresholdNormalization::WeightSum &&
        less_weight > std::numeric_limits<double>::epsilon() * w_k) {
        return less_weight;
    }
    return static_cast<double>(count);
}

inline std::optional<double> threshold_anchor(Eigen::Index anchor, RowView s, RowView w, GradRow g,
                                              ThresholdNormalization mode) {
    const Eigen::Index n = s.size();
    double weight_sum = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (t != anchor) weight_sum += w(t);
    }
    if (!(weight_sum > 0.0)) return std::nullopt;

    double value = 0.0;
    std::vector<Eigen::Index> less;
    std::vector<double> prob;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k == anchor || !(w(k) > 0.0)) continue;
        less.clear();
        double less_weight = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (t == anchor || !(w(t) < w(k))) continue;
            less.push_back(t);
            less_weight += w(t);
        }
        if (less.empty()) continue;

        const double coeff = w(k) / threshold_normalizer(mode, w(k), less_weight, less.size());

        const double lse = log_sum_exp(less, s, prob);
        value += coeff * (lse - s(k));
        g(k) -= coeff;
        for (std::size_t j = 0; j < less.size(); ++j) g(less[j]) += coeff * prob[j];
    }
    return value;
}

inline std::optional<double> exp_anchor(Eigen::Index anchor, RowView s, RowView w, GradRow g) {
    const Eigen::Index n = s.size();
    double weight_sum = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (t != anchor) weight_sum += w(t);
    }
    if (!(weight_sum > 0.0)) return std::nullopt;

    // Repulsion logits s_t (1 - w_t).
    Eigen::RowVectorXd scaled(n);
    for (Eigen::Index t = 0; t < n; ++t) scaled(t) = s(t) * (1.0 - w(t));

    double value = 0.0;
    std::vector<Eigen::Index> rest;
    std::vector<double> prob;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k == anchor || !(w(k) > 0.0)) continue;
        rest.clear();
        for (Eigen::Index t = 0; t < n; ++t) {
            if (t != anchor && t != k) rest.push_back(t);
        }
        // N == 2: the uniformity sum is empty and the term is undefined.
        if (rest.empty()) continue;

        const double coeff = w(k) / weight_sum;
        const double lse = log_sum_exp(rest, scaled, prob);
        value += coeff * (lse - s(k));
        g(k) -= coeff;
        for (std::size_t j = 0; j < rest.size(); ++j) {
            const auto t = rest[j];
            g(t) += coeff * prob[j] * (1.0 - w(t));
        }
    }
    return value;
}

template <class AnchorFn>
LossOutput reduce_anchors(const SimilarityMatrix& sims, AnchorFn&& anchor_fn) {
    const Eigen::Index n = sims.values.rows();
    LossOutput out;
    out.sim_grad = Eigen::MatrixXd::Zero(n, n);
    CompensatedSum total;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(n);
        const auto v = anchor_fn(i, g);
        if (!v) continue;
        total.add(*v);
        out.sim_grad.row(i) = g;
        ++out.active_anchors;
    }
    if (out.active_anchors == 0) throw std::invalid_argument("no positive pairs in batch");

    const double scale = 1.0 / static_cast<double>(out.active_anchors);
    out.value = total.value() * scale;
    out.sim_grad *= scale;
    if (sims.has_embeddings()) {
        out.grad = similarity_backward(out.sim_grad, sims.embeddings, sims.temperature);
    }
    return out;
}

}  // namespace detail

inline LossOutput yaware_loss(const SimilarityMatrix& sims, const WeightMatrix& weights) {
    detail::check_shapes(sims, weights);
    return detail::reduce_anchors(sims, [&](Eigen::Index i, detail::GradRow g) {
        return detail::yaware_anchor(i, sims.values.row(i), weights.values.row(i), g);
    });
}

inline LossOutput thr_loss(const SimilarityMatrix& sims, const WeightMatrix& weights,
                           ThresholdNormalization mode = ThresholdNormalization::WeightSum) {
    detail::check_shapes(sims, weights);
    return detail::reduce_anchors(sims, [&](Eigen::Index i, detail::GradRow g) {
        return detail::threshold_anchor(i, sims.values.row(i), weights.values.row(i), g, mode);
    });
}

inline LossOutput exp_loss(const SimilarityMatrix& sims, const WeightMatrix& weights) {
    detail::check_shapes(sims, weights);
    return detail::reduce_anchors(sims, [&](Eigen::Index i, detail::GradRow g) {
        return detail::exp_anchor(i, sims.values.row(i), weights.values.row(i), g);
    });
}

/// Supervised contrastive loss on discrete class ids: each anchor averages
/// -log softmax over its same-class partners, softmax taken over all other
/// batch members.
inline LossOutput supcon_loss(const SimilarityMatrix& sims, std::span<const int> classes) {
    const Eigen::Index n = sims.values.rows();
    if (static_cast<Eigen::Index>(classes.size()) != n) {
        throw std::invalid_argument("class id count does not match batch size");
    }
    if (n < 2) throw std::invalid_argument("batch too small for contrastive loss");

    return detail::reduce_anchors(sims, [&](Eigen::Index i, detail::GradRow g) -> std::optional<double> {
        std::vector<Eigen::Index> others;
        std::size_t positives = 0;
        for (Eigen::Index a = 0; a < n; ++a) {
            if (a == i) continue;
            others.push_back(a);
            if (classes[a] == classes[i]) ++positives;
        }
        if (positives == 0) return std::nullopt;

        const auto s = sims.values.row(i);
        std::vector<double> prob;
        const double lse = detail::log_sum_exp(others, s, prob);
        const double inv = 1.0 / static_cast<double>(positives);
        double value = 0.0;
        for (std::size_t j = 0; j < others.size(); ++j) {
            const auto a = others[j];
            g(a) += prob[j];
            if (classes[a] == classes[i]) {
                value -= inv * (s(a) - lse);
                g(a) -= inv;
            }
        }
        return value;
    });
}

/// Dispatches on kind. SupCon needs `classes`; the others ignore it.
inline LossOutput compute_loss(LossKind kind, const SimilarityMatrix& sims, const WeightMatrix& weights,
                               const LossOptions& options = {}, std::span<const int> classes = {}) {
    switch (kind) {
        case LossKind::YAware: return yaware_loss(sims, weights);
        case LossKind::Threshold: return thr_loss(sims, weights, options.threshold_normalization);
        case LossKind::Exp: return exp_loss(sims, weights);
        case LossKind::SupCon:
            if (classes.empty()) throw std::invalid_argument("supcon loss needs discrete class ids");
            return supcon_loss(sims, classes);
    }
    throw std::invalid_argument("unknown loss kind");
}

// ---------------------------------------------------------------------------
// Hard-margin counterparts.
//
// Each smooth loss is a weighted sum of LogSumExp terms c_k * LSE_{t in T_k}(x_kt)
// with x_kt = s_t - s_k (y-aware, threshold) or s_t (1 - w_t) - s_k (exp).
// `Hinge` evaluates c_k * max(0, max_t x_kt), the weighted max-margin objective
// that the LogSumExp relaxes. `Max` drops the clamp at zero. The two coincide
// for y-aware, where t = k is part of T_k and contributes x = 0.
// ---------------------------------------------------------------------------

enum class MarginForm { Hinge, Max };

struct MarginOracleResult {
    double value = 0.0;      // batch-averaged hard objective
    double log_terms = 0.0;  // batch-averaged sum_k c_k log|T_k|
};

inline MarginOracleResult margin_oracle_bounds(LossKind kind, const SimilarityMatrix& sims,
                                               const WeightMatrix& weights, MarginForm form = MarginForm::Hinge,
                                               const LossOptions& options = {}) {
    detail::check_shapes(sims, weights);
    const Eigen::Index n = sims.values.rows();
    const auto& S = sims.values;
    const auto& W = weights.values;

    detail::CompensatedSum value_sum, log_sum;
    std::size_t active = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double weight_sum = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (t != i) weight_sum += W(i, t);
        }
        if (!(weight_sum > 0.0)) continue;
        ++active;

        double anchor_value = 0.0;
        double anchor_log = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i || !(W(i, k) > 0.0)) continue;
            double best = -std::numeric_limits<double>::infinity();
            std::size_t terms = 0;
            double less_weight = 0.0;
            for (Eigen::Index t = 0; t < n; ++t) {
                if (t == i) continue;
                double x = 0.0;
                switch (kind) {
                    case LossKind::YAware:
                    case LossKind::SupCon:
                        x = S(i, t) - S(i, k);
                        break;
                    case LossKind::Threshold:
                        if (!(W(i, t) < W(i, k))) continue;
                        less_weight += W(i, t);
                        x = S(i, t) - S(i, k);
                        break;
                    case LossKind::Exp:
                        if (t == k) continue;
                        x = S(i, t) * (1.0 - W(i, t)) - S(i, k);
                        break;
                }
                best = std::max(best, x);
                ++terms;
            }
            if (terms == 0) continue;

            double coeff = W(i, k) / weight_sum;
            if (kind == LossKind::Threshold) {
                coeff = W(i, k) /
                        detail::threshold_normalizer(options.threshold_normalization, W(i, k), less_weight, terms);
            }
            if (form == MarginForm::Hinge) best = std::max(0.0, best);
            anchor_value += coeff * best;
            anchor_log += coeff * std::log(static_cast<double>(terms));
        }
        value_sum.add(anchor_value);
        log_sum.add(anchor_log);
    }
    if (active == 0) throw std::invalid_argument("no positive pairs in batch");
    const double scale = 1.0 / static_cast<double>(active);
    return {value_sum.value() * scale, log_sum.value() * scale};
}

inline double margin_oracle(LossKind kind, const SimilarityMatrix& sims, const WeightMatrix& weights,
                            MarginForm form = MarginForm::Hinge, const LossOptions& options = {}) {
    return margin_oracle_bounds(kind, sims, weights, form, options).value;
}

// ---------------------------------------------------------------------------
// Gradient check through sphere projection and similarity.
// ---------------------------------------------------------------------------

struct LossEvaluation {
    double value = 0.0;
    Eigen::MatrixXd raw_grad;  // dL/dv for the raw (pre-projection) rows
};

/// Loss and its gradient with respect to raw embedding rows, which are
/// projected onto the sphere before the similarities are taken.
inline LossEvaluation loss_on_raw_embeddings(LossKind kind, const Eigen::Ref<const Eigen::MatrixXd>& raw,
                                             double temperature, const WeightMatrix& weights,
                                             const LossOptions& options = {}, std::span<const int> classes = {}) {
    EmbeddingBatch batch{project_rows(raw), {}, {}};
    const auto sims = cosine_similarity_matrix(batch, temperature);
    const auto loss = compute_loss(kind, sims, weights, options, classes);
    return {loss.value, project_rows_backward(raw, loss.grad)};
}

/// Max relative error between analytic and central-difference gradients,
/// measured as max|a - n| / max(|a|_inf, |n|_inf). Falls back to the absolute
/// error when both gradients vanish.
inline double relative_gradient_error(const Eigen::Ref<const Eigen::MatrixXd>& analytic,
                                      const Eigen::Ref<const Eigen::MatrixXd>& numeric) {
    const double diff = (analytic - numeric).cwiseAbs().maxCoeff();
    const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
    return scale > 1e-12 ? diff / scale : diff;
}

inline double loss_gradient_check(LossKind kind, const Eigen::Ref<const Eigen::MatrixXd>& raw, double temperature,
                                  const WeightMatrix& weights, double epsilon, const LossOptions& options = {},
                                  std::span<const int> classes = {}) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw std::invalid_argument("finite-difference epsilon must lie in [1e-7, 1e-3]");
    }
    const auto analytic = loss_on_raw_embeddings(kind, raw, temperature, weights, options, classes).raw_grad;
    Eigen::MatrixXd numeric(raw.rows(), raw.cols());
    Eigen::MatrixXd probe = raw;
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (Eigen::Index j = 0; j < raw.cols(); ++j) {
            const double orig = probe(i, j);
            probe(i, j) = orig + epsilon;
            const double up = loss_on_raw_embeddings(kind, probe, temperature, weights, options, classes).value;
            probe(i, j) = orig - epsilon;
            const double down = loss_on_raw_embeddings(kind, probe, temperature, weights, options, classes).value;
            probe(i, j) = orig;
            numeric(i, j) = (up - down) / (2.0 * epsilon);
        }
    }
    return relative_gradient_error(analytic, numeric);
}

}  // namespace kercon
