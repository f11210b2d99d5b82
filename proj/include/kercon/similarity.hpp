#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kercon {

inline constexpr double kSphereTolerance = 1e-6;
inline constexpr double kMinProjectableNorm = 1e-12;

/// Unit-norm representations with their labels and acquisition sites.
struct EmbeddingBatch {
    Eigen::MatrixXd vectors;  // N x d, one embedding per row
    std::vector<double> labels;
    std::vector<int> sites;

    Eigen::Index size() const { return vectors.rows(); }
    Eigen::Index dim() const { return vectors.cols(); }

    void validate() const {
        if (vectors.rows() < 2 || vectors.cols() < 2) {
            throw std::invalid_argument("embedding batch needs N >= 2 and d >= 2");
        }
        if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != vectors.rows()) {
            throw std::invalid_argument("label count does not match batch size");
        }
        if (!sites.empty() && static_cast<Eigen::Index>(sites.size()) != vectors.rows()) {
            throw std::invalid_argument("site count does not match batch size");
        }
        for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
            const double norm = vectors.row(i).norm();
            if (!(std::abs(norm - 1.0) <= kSphereTolerance)) {
                throw std::invalid_argument("embedding not on hypersphere (row " +
                                            std::to_string(i) + ")");
            }
        }
    }
};

/// Pairwise similarities scaled by 1/temperature. `embeddings` holds the unit
/// vectors they were computed from, when known, so that losses can report
/// gradients with respect to the embeddings as well as the similarities.
struct SimilarityMatrix {
    Eigen::MatrixXd values;
    double temperature = 1.0;
    Eigen::MatrixXd embeddings;

    Eigen::Index size() const { return values.rows(); }
    bool has_embeddings() const { return embeddings.rows() == values.rows() && embeddings.size() > 0; }

    static SimilarityMatrix from_values(Eigen::MatrixXd values, double temperature = 1.0) {
        return {std::move(values), temperature, Eigen::MatrixXd()};
    }
};

inline Eigen::VectorXd project_to_sphere(const Eigen::Ref<const Eigen::VectorXd>& v,
                                         Eigen::Index index = 0) {
    const double norm = v.norm();
    if (!(norm > kMinProjectableNorm) || !std::isfinite(norm)) {
        throw std::invalid_argument("cannot project near-zero vector onto sphere (index " +
                                    std::to_string(index) + ")");
    }
    return v / norm;
}

/// Row-wise sphere projection; errors name the offending row.
inline Eigen::MatrixXd project_rows(const Eigen::Ref<const Eigen::MatrixXd>& raw) {
    Eigen::MatrixXd out(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        out.row(i) = project_to_sphere(raw.row(i).transpose(), i).transpose();
    }
    return out;
}

/// Backpropagates a gradient on the unit rows z = v/|v| to the raw rows v:
/// dL/dv = (I - z z^T) g / |v|.
inline Eigen::MatrixXd project_rows_backward(const Eigen::Ref<const Eigen::MatrixXd>& raw,
                                             const Eigen::Ref<const Eigen::MatrixXd>& grad_unit) {
    Eigen::MatrixXd out(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const double norm = raw.row(i).norm();
        const Eigen::RowVectorXd z = raw.row(i) / norm;
        const Eigen::RowVectorXd g = grad_unit.row(i);
        out.row(i) = (g - g.dot(z) * z) / norm;
    }
    return out;
}

inline SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& batch, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw std::invalid_argument("temperature must be positive");
    }
    for (Eigen::Index i = 0; i < batch.vectors.rows(); ++i) {
        if (!(batch.vectors.row(i).norm() > kMinProjectableNorm)) {
            throw std::invalid_argument("embedding not on hypersphere (row " + std::to_string(i) +
                                        ")");
        }
    }
    batch.validate();

    const Eigen::Index n = batch.size();
    SimilarityMatrix out{Eigen::MatrixXd(n, n), temperature, batch.vectors};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i; k < n; ++k) {
            const double s = batch.vectors.row(i).dot(batch.vectors.row(k)) / temperature;
            out.values(i, k) = s;
            out.values(k, i) = s;
        }
    }
    return out;
}

/// Chains dL/ds (N x N, row = anchor) to dL/dz for unit embeddings z, where
/// s_ik = <z_i, z_k> / temperature.
inline Eigen::MatrixXd similarity_backward(const Eigen::Ref<const Eigen::MatrixXd>& sim_grad,
                                           const Eigen::Ref<const Eigen::MatrixXd>& embeddings,
                                           double temperature) {
    return (sim_grad + sim_grad.transpose()) * embeddings / temperature;
}

}  // namespace kercon
