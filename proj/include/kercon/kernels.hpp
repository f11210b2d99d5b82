#pragma once

// Label-distance kernels: turn differences between continuous labels into a
// degree of positiveness w in [0, 1].

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace kercon {

enum class KernelKind { Gaussian, Cauchy, Delta };

struct LabelKernel {
    KernelKind kind = KernelKind::Gaussian;
    double bandwidth = 2.0;  // sigma (Gaussian) or gamma (Cauchy); unused by Delta

    static LabelKernel gaussian(double sigma) { return make(KernelKind::Gaussian, sigma); }
    static LabelKernel cauchy(double gamma) { return make(KernelKind::Cauchy, gamma); }
    static LabelKernel delta() { return {KernelKind::Delta, 1.0}; }

    static LabelKernel make(KernelKind kind, double bandwidth) {
        LabelKernel k{kind, bandwidth};
        k.validate();
        return k;
    }

    void validate() const {
        if (kind != KernelKind::Delta && !(std::isfinite(bandwidth) && bandwidth > 0.0)) {
            throw std::invalid_argument("kernel bandwidth must be a positive finite number");
        }
    }

    friend bool operator==(const LabelKernel&, const LabelKernel&) = default;
};

// Config names: "rbf" | "cauchy" | "delta".
inline std::string_view kernel_name(KernelKind kind) {
    switch (kind) {
        case KernelKind::Gaussian: return "rbf";
        case KernelKind::Cauchy: return "cauchy";
        case KernelKind::Delta: return "delta";
    }
    return "?";
}

inline KernelKind parse_kernel_kind(std::string_view name) {
    if (name == "rbf" || name == "gaussian") return KernelKind::Gaussian;
    if (name == "cauchy") return KernelKind::Cauchy;
    if (name == "delta") return KernelKind::Delta;
    throw std::invalid_argument("unknown kernel '" + std::string(name) +
                                "' (valid: rbf, cauchy, delta)");
}

inline double kernel_eval(const LabelKernel& kernel, double u) {
    if (!std::isfinite(u)) throw std::invalid_argument("invalid label difference");
    kernel.validate();
    const double u2 = u * u;
    switch (kernel.kind) {
        case KernelKind::Gaussian:
            return std::exp(-u2 / (2.0 * kernel.bandwidth * kernel.bandwidth));
        case KernelKind::Cauchy:
            return 1.0 / (kernel.bandwidth * u2 + 1.0);
        case KernelKind::Delta:
            return u == 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

/// Signed distance between two labels fed to the kernel. Scalar labels use
/// the plain difference; the hook exists so that other label metrics can be
/// slotted in without touching the losses.
using LabelDistance = std::function<double(double, double)>;

inline double label_difference(double a, double b) { return a - b; }

/// Symmetric N x N matrix of kernel weights between batch labels. The
/// diagonal is 0: an anchor is never its own positive.
struct WeightMatrix {
    Eigen::MatrixXd values;

    Eigen::Index size() const { return values.rows(); }
    double operator()(Eigen::Index i, Eigen::Index k) const { return values(i, k); }
};

inline WeightMatrix weight_matrix(const LabelKernel& kernel, const std::vector<double>& labels,
                                  const LabelDistance& distance = label_difference) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (n < 2) throw std::invalid_argument("batch too small for contrastive loss");
    for (double y : labels) {
        if (!std::isfinite(y)) throw std::invalid_argument("invalid label difference");
    }
    kernel.validate();

    WeightMatrix w{Eigen::MatrixXd::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = i + 1; k < n; ++k) {
            const double v = kernel_eval(kernel, distance(labels[i], labels[k]));
            w.values(i, k) = v;
            w.values(k, i) = v;
        }
    }
    return w;
}

}  // namespace kercon
