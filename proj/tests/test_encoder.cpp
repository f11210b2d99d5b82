#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "encoder_gradcheck.hpp"
#include "kercon/encoder.hpp"
#include "kercon/similarity.hpp"

using namespace kercon;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(gen);
    return m;
}

}  // namespace

TEST_CASE("encoder layout and parameter count", "[encoder]") {
    const auto enc = Encoder::initialized({32, 64, 64, 8}, 1);
    CHECK(enc.num_layers() == 3);
    CHECK(enc.input_dim() == 32);
    CHECK(enc.output_dim() == 8);
    CHECK(enc.parameter_count() == 64 * 33 + 64 * 65 + 8 * 65);
    CHECK(enc.parameters().allFinite());
    CHECK(enc.bias(0).isZero(0.0));
    CHECK_THROWS(Encoder({4}));
    CHECK_THROWS(Encoder({4, 0, 3}));
    CHECK_THROWS(Encoder({4, 1}));
}

TEST_CASE("forward projects onto the sphere", "[encoder]") {
    std::mt19937_64 gen(2);
    const auto enc = Encoder::initialized({6, 10, 4}, 9);
    const auto x = random_matrix(gen, 50, 6);
    const auto z = enc.forward(x);
    CHECK(z.rows() == 50);
    CHECK((z.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-6);
    CHECK_THROWS_WITH(enc.forward(random_matrix(gen, 3, 5)), Catch::Matchers::ContainsSubstring("does not match"));
}

TEST_CASE("forward is deterministic", "[encoder]") {
    std::mt19937_64 gen(3);
    const auto x = random_matrix(gen, 20, 6);
    const auto a = Encoder::initialized({6, 10, 4}, 42);
    const auto b = Encoder::initialized({6, 10, 4}, 42);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.forward(x) == b.forward(x));
    CHECK(a.parameters() != Encoder::initialized({6, 10, 4}, 43).parameters());
}

TEST_CASE("zero final layer with nonzero bias maps everything to one point", "[encoder]") {
    std::mt19937_64 gen(4);
    auto enc = Encoder::initialized({5, 7, 3}, 1);
    enc.weight(1).setZero();
    enc.bias(1) << 0.3, -1.0, 2.0;
    const auto z = enc.forward(random_matrix(gen, 6, 5));
    const auto s = cosine_similarity_matrix(EmbeddingBatch{z, {}, {}}, 1.0);
    CHECK((s.values.array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("backward examples", "[encoder]") {
    SECTION("zero upstream gradient") {
        std::mt19937_64 gen(5);
        const auto enc = Encoder::initialized({4, 6, 3}, 2);
        const auto pass = enc.forward_pass(random_matrix(gen, 5, 4));
        CHECK(enc.backward(pass, Eigen::MatrixXd::Zero(5, 3)).isZero(0.0));
        CHECK_THROWS(enc.backward(pass, Eigen::MatrixXd::Zero(4, 3)));
    }
    SECTION("single linear layer, hand-derived Jacobian") {
        // v = W x + b = (1, 1), z = v/|v|; dL/dv = (I - z z^T) g / |v| = (0.5, -0.5)/sqrt(2)
        Encoder enc({2, 2});
        enc.weight(0) = Eigen::Matrix2d::Identity();
        enc.bias(0) << 0.0, 1.0;
        Eigen::MatrixXd x(1, 2);
        x << 1.0, 0.0;
        Eigen::MatrixXd g(1, 2);
        g << 1.0, 0.0;
        const auto grad = enc.backward(enc.forward_pass(x), g);
        const double h = 0.5 / std::sqrt(2.0);
        Eigen::VectorXd expected(6);
        expected << h, -h, 0.0, 0.0, h, -h;  // W column-major, then b
        CHECK((grad - expected).cwiseAbs().maxCoeff() <= 1e-15);
    }
}

TEST_CASE("backward matches finite differences on random encoders", "[encoder][gradient]") {
    std::mt19937_64 gen(6);
    for (int trial = 0; trial < 10; ++trial) {
        auto enc = Encoder::initialized({3, 4, 4, 3}, 100 + trial);
        for (auto& p : enc.parameters()) p += 0.1 * std::normal_distribution<double>()(gen);
        const auto x = random_matrix(gen, 5, 3);
        const auto target = random_matrix(gen, 5, 3);
        // f(theta) = <forward(x), target>
        auto f = [&](const Encoder& e) { return (e.forward(x).array() * target.array()).sum(); };
        const auto analytic = enc.backward(enc.forward_pass(x), target);
        Eigen::VectorXd numeric(enc.parameter_count());
        for (Eigen::Index p = 0; p < numeric.size(); ++p) {
            auto up = enc, down = enc;
            up.parameters()(p) += 1e-6;
            down.parameters()(p) -= 1e-6;
            numeric(p) = (f(up) - f(down)) / 2e-6;
        }
        CHECK(relative_gradient_error(analytic, numeric) <= 1e-4);
    }
}

TEST_CASE("end-to-end loss gradient through the encoder", "[encoder][gradient]") {
    for (auto kind : {LossKind::YAware, LossKind::Threshold, LossKind::Exp, LossKind::SupCon}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            CAPTURE(loss_name(kind), seed);
            CHECK(testing_support::encoder_gradient_error(kind, seed) <= 1e-4);
        }
    }
}

TEST_CASE("learning-rate schedule", "[encoder][adam]") {
    CHECK(scheduled_learning_rate(1e-4, 0.9, 10, 0) == 1e-4);
    CHECK(scheduled_learning_rate(1e-4, 0.9, 10, 9) == 1e-4);
    CHECK(scheduled_learning_rate(1e-4, 0.9, 10, 10) == Approx(9e-5).epsilon(1e-12));
    CHECK(scheduled_learning_rate(1e-4, 0.9, 10, 25) == Approx(8.1e-5).epsilon(1e-12));
}

TEST_CASE("adam first step", "[encoder][adam]") {
    Eigen::VectorXd params(3), grads(3);
    params << 1.0, 1.0, 1.0;
    grads << 0.5, -2.0, 0.0;
    auto state = AdamState::zeros(3);
    adam_step(params, grads, state, 1e-3, 0.0);
    // bias-corrected moments are g and g^2 after one step
    CHECK(params(0) == Approx(1.0 - 1e-3 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    CHECK(params(1) == Approx(1.0 + 1e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
    CHECK(params(2) == 1.0);
    CHECK(state.step == 1);
}

TEST_CASE("adam without gradient or decay leaves parameters unchanged", "[encoder][adam]") {
    Eigen::VectorXd params = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
    const Eigen::VectorXd before = params;
    auto state = AdamState::zeros(5);
    for (int i = 0; i < 3; ++i) adam_step(params, Eigen::VectorXd::Zero(5), state, 1e-2, 0.0);
    CHECK(params == before);
    CHECK(state.step == 3);
}

TEST_CASE("weight decay is decoupled and reduces to plain Adam at zero", "[encoder][adam]") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> nd;
    const AdamHyper hyper{};

    Eigen::VectorXd params(4), reference(4);
    for (int i = 0; i < 4; ++i) params(i) = reference(i) = nd(gen);
    auto state = AdamState::zeros(4);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(4), v = Eigen::VectorXd::Zero(4);
    for (int t = 1; t <= 20; ++t) {
        Eigen::VectorXd g(4);
        for (int i = 0; i < 4; ++i) g(i) = nd(gen);
        adam_step(params, g, state, 1e-2, 0.0, hyper);
        for (int i = 0; i < 4; ++i) {
            m(i) = hyper.beta1 * m(i) + (1 - hyper.beta1) * g(i);
            v(i) = hyper.beta2 * v(i) + (1 - hyper.beta2) * g(i) * g(i);
            const double mh = m(i) / (1 - std::pow(hyper.beta1, t));
            const double vh = v(i) / (1 - std::pow(hyper.beta2, t));
            reference(i) -= 1e-2 * mh / (std::sqrt(vh) + hyper.epsilon);
        }
    }
    CHECK((params - reference).cwiseAbs().maxCoeff() <= 1e-14);

    // zero gradient: decay alone shrinks by (1 - lr * wd) per step
    Eigen::VectorXd p(2);
    p << 2.0, -4.0;
    auto s = AdamState::zeros(2);
    adam_step(p, Eigen::VectorXd::Zero(2), s, 0.1, 0.5);
    CHECK(p(0) == Approx(2.0 * 0.95));
    CHECK(p(1) == Approx(-4.0 * 0.95));
    CHECK_THROWS(adam_step(p, Eigen::VectorXd::Zero(3), s, 0.1, 0.0));
}

TEST_CASE("baseline head and L1 subgradient", "[encoder][baseline]") {
    auto head = BaselineHead::make(2, 40.0, 10.0);
    head.params << 1.0, -1.0, 0.5;
    Eigen::MatrixXd z(2, 2);
    z << 1.0, 0.0, 0.0, 1.0;
    const auto pred = head.predict(z);
    CHECK(pred(0) == Approx(40.0 + 10.0 * 1.5));
    CHECK(pred(1) == Approx(40.0 + 10.0 * -0.5));

    Eigen::Vector2d targets(50.0, 40.0);  // residuals +5 and -5
    const auto step = l1_loss(head, z, targets);
    CHECK(step.loss == Approx(5.0));
    // d/dparams of mean |r|: scale * sign(r) * [z, 1] / N
    CHECK(step.head_grad(0) == Approx(5.0));
    CHECK(step.head_grad(1) == Approx(-5.0));
    CHECK(step.head_grad(2) == Approx(0.0));
    CHECK(step.embedding_grad(0, 0) == Approx(5.0));
    CHECK(step.embedding_grad(1, 1) == Approx(5.0));
}
