#pragma once

// Mini-batch training of the encoder under a contrastive loss, or of
// encoder + linear head under mean absolute error for the baseline.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kercon/datagen.hpp"
#include "kercon/encoder.hpp"
#include "kercon/kernels.hpp"
#include "kercon/losses.hpp"
#include "kercon/rng.hpp"
#include "kercon/similarity.hpp"

namespace kercon {

enum class TrainMode { Contrastive, Baseline };

struct TrainConfig {
    double learning_rate = 1e-4;
    double lr_decay = 0.9;
    int decay_every_epochs = 10;
    double weight_decay = 5e-5;
    int batch_size = 32;
    int epochs = 300;
    std::uint64_t seed = 0;
    double temperature = 0.1;
    TrainMode mode = TrainMode::Contrastive;
    LossKind loss = LossKind::Exp;
    LabelKernel kernel = LabelKernel::gaussian(2.0);
    LossOptions loss_options{};
    std::vector<int> hidden_sizes{64, 64};
    int embedding_dim = 8;
    AdamHyper adam{};

    void validate() const {
        if (!(learning_rate > 0.0) || !(lr_decay > 0.0) || !(weight_decay >= 0.0) || !(temperature > 0.0)) {
            throw std::invalid_argument("learning rate, decay and temperature must be positive");
        }
        if (decay_every_epochs <= 0) throw std::invalid_argument("decay_every_epochs must be positive");
        if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
        if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
        if (embedding_dim < 2) throw std::invalid_argument("embedding_dim must be at least 2");
        kernel.validate();
    }
};

struct EpochStat {
    int epoch = 0;
    double mean_loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainedModel {
    Encoder encoder;
    std::optional<BaselineHead> head;
    std::vector<EpochStat> trace;
};

/// Class ids for SupCon on continuous ages: ages rounded to whole years.
inline std::vector<int> age_classes(const std::vector<double>& ages) {
    std::vector<int> out;
    out.reserve(ages.size());
    for (double a : ages) out.push_back(static_cast<int>(std::lround(a)));
    return out;
}

namespace detail {

inline bool has_positive_pair(const WeightMatrix& w) {
    return (w.values.rowwise().sum().array() > 0.0).any();
}

inline bool has_repeated_class(const std::vector<int>& classes) {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        for (std::size_t j = i + 1; j < classes.size(); ++j) {
            if (classes[i] == classes[j]) return true;
        }
    }
    return false;
}

}  // namespace detail

/// Contrastive loss and parameter gradient for one batch; std::nullopt if the
/// batch holds no positive pair.
struct BatchResult {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

inline std::optional<BatchResult> contrastive_batch(const Encoder& encoder, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                                    const std::vector<double>& ages, const TrainConfig& config) {
    const auto pass = encoder.forward_pass(x);
    const auto sims = cosine_similarity_matrix(EmbeddingBatch{pass.unit, ages, {}}, config.temperature);

    LossOutput loss;
    if (config.loss == LossKind::SupCon) {
        const auto classes = age_classes(ages);
        if (!detail::has_repeated_class(classes)) return std::nullopt;
        loss = supcon_loss(sims, classes);
    } else {
        const auto weights = weight_matrix(config.kernel, ages);
        if (!detail::has_positive_pair(weights)) return std::nullopt;
        loss = compute_loss(config.loss, sims, weights, config.loss_options);
    }
    return BatchResult{loss.value, encoder.backward(pass, loss.grad)};
}

inline TrainedModel train(const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.size() == 0) throw std::invalid_argument("cannot train on an empty dataset");

    std::vector<int> sizes{data.feature_dim()};
    sizes.insert(sizes.end(), config.hidden_sizes.begin(), config.hidden_sizes.end());
    sizes.push_back(config.embedding_dim);

    TrainedModel model{Encoder::initialized(sizes, derive_seed(config.seed, 0)), std::nullopt, {}};
    const auto n_enc = static_cast<Eigen::Index>(model.encoder.parameter_count());

    Eigen::VectorXd params = model.encoder.parameters();
    if (config.mode == TrainMode::Baseline) {
        double mean = 0.0;
        for (double a : data.ages) mean += a;
        mean /= static_cast<double>(data.size());
        double var = 0.0;
        for (double a : data.ages) var += (a - mean) * (a - mean);
        const double sd = data.size() > 1 ? std::sqrt(var / static_cast<double>(data.size() - 1)) : 1.0;
        model.head = BaselineHead::make(config.embedding_dim, mean, sd > 0.0 ? sd : 1.0);
        params.conservativeResize(n_enc + model.head->params.size());
        params.tail(model.head->params.size()) = model.head->params;
    }
    auto state = AdamState::zeros(params.size());

    Rng shuffle_rng(derive_seed(config.seed, 1));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr =
            scheduled_learning_rate(config.learning_rate, config.lr_decay, config.decay_every_epochs, epoch);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            if (end - start < 2) continue;  // a single leftover sample cannot be contrasted

            const auto m = static_cast<Eigen::Index>(end - start);
            Eigen::MatrixXd x(m, data.features.cols());
            std::vector<double> ages;
            ages.reserve(end - start);
            for (std::size_t r = start; r < end; ++r) {
                x.row(static_cast<Eigen::Index>(r - start)) = data.features.row(static_cast<Eigen::Index>(order[r]));
                ages.push_back(data.ages[order[r]]);
            }

            Eigen::VectorXd grad;
            double loss = 0.0;
            if (config.mode == TrainMode::Baseline) {
                const auto pass = model.encoder.forward_pass(x);
                const Eigen::VectorXd targets = Eigen::Map<const Eigen::VectorXd>(ages.data(), m);
                const auto step = l1_loss(*model.head, pass.unit, targets);
                grad.resize(params.size());
                grad.head(n_enc) = model.encoder.backward(pass, step.embedding_grad);
                grad.tail(step.head_grad.size()) = step.head_grad;
                loss = step.loss;
            } else {
                auto result = contrastive_batch(model.encoder, x, ages, config);
                if (!result) continue;
                grad = std::move(result->grad);
                loss = result->loss;
            }

            adam_step(params, grad, state, lr, config.weight_decay, config.adam);
            model.encoder.parameters() = params.head(n_enc);
            if (model.head) model.head->params = params.tail(model.head->params.size());
            loss_sum += loss;
            ++batches;
        }
        model.trace.push_back({epoch + 1, batches > 0 ? loss_sum / batches : 0.0, lr});
    }
    return model;
}

inline std::string trace_to_csv(const std::vector<EpochStat>& trace) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,mean_loss,lr\n";
    for (const auto& e : trace) os << e.epoch << ',' << e.mean_loss << ',' << e.learning_rate << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON with the layer-size header and flat parameter arrays.
// ---------------------------------------------------------------------------

inline nlohmann::json checkpoint_json(const TrainedModel& model) {
    const auto& p = model.encoder.parameters();
    nlohmann::json j{{"layer_sizes", model.encoder.layer_sizes()},
                     {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
    if (model.head) {
        const auto& h = model.head->params;
        j["head"] = {{"parameters", std::vector<double>(h.data(), h.data() + h.size())},
                     {"offset", model.head->offset},
                     {"scale", model.head->scale}};
    }
    return j;
}

inline TrainedModel model_from_checkpoint(const nlohmann::json& j) {
    TrainedModel model{Encoder(j.at("layer_sizes").get<std::vector<int>>()), std::nullopt, {}};
    const auto params = j.at("parameters").get<std::vector<double>>();
    if (params.size() != model.encoder.parameter_count()) {
        throw std::invalid_argument("checkpoint parameter count does not match its layer sizes");
    }
    model.encoder.parameters() = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    if (j.contains("head")) {
        const auto h = j["head"].at("parameters").get<std::vector<double>>();
        if (static_cast<int>(h.size()) != model.encoder.output_dim() + 1) {
            throw std::invalid_argument("checkpoint head size does not match embedding dimension");
        }
        BaselineHead head;
        head.params = Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
        head.offset = j["head"].at("offset").get<double>();
        head.scale = j["head"].at("scale").get<double>();
        model.head = head;
    }
    return model;
}

}  // namespace kercon
