// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "vectune/densenet.hpp"

using namespace vectune;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
    }
    return m;
}

/// Central finite differences over every parameter of `net` against the
/// analytic gradients of the MSE loss; returns the max relative error.
double max_gradcheck_error(DenseNet& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double h = 1e-4) {
    auto cache = net.forward_batch(X);
    Eigen::MatrixXd grad_out;
    mse_loss(cache.post[4], Y, &grad_out);
    Gradients analytic = net.backward(cache, grad_out);

    auto loss_at = [&]() { return mse_loss(net.forward_batch(X).post[4], Y); };
    double worst = 0.0;
    auto check_param = [&](double& p, double analytic_grad) {
        double orig = p;
        p = orig + h;
        double lp = loss_at();
        p = orig - h;
        double lm = loss_at();
        p = orig;
        double fd = (lp - lm) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(analytic_grad), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic_grad) / denom);
    };
    for (size_t l = 0; l < net.weights().size(); ++l) {
        auto& W = net.weights()[l];
        for (int r = 0; r < W.rows(); ++r) {
            for (int c = 0; c < W.cols(); ++c) check_param(W(r, c), analytic.dW[l](r, c));
        }
        auto& b = net.biases()[l];
        for (int r = 0; r < b.size(); ++r) check_param(b[r], analytic.db[l][r]);
    }
    return worst;
}

}  // namespace

TEST_CASE("zero weights and biases produce zero output under identity head") {
    DenseNet net({3, 4, 4, 4, 2}, Activation::LeakyRelu, {Activation::Identity, Activation::Identity}, 1);
    for (auto& w : net.weights()) w.setZero();
    auto out = net.forward(Eigen::Vector3d(1.0, -2.0, 3.0)).output;
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
}

TEST_CASE("all-ones 1-wide identity net is the identity function") {
    DenseNet net({1, 1, 1, 1, 1}, Activation::Identity, {Activation::Identity}, 1);
    for (auto& w : net.weights()) w.setOnes();
    for (auto& b : net.biases()) b.setZero();
    Eigen::VectorXd x(1);
    x[0] = 0.37;
    CHECK(net.forward(x).output[0] == Approx(0.37));
}

TEST_CASE("penultimate layer has the documented width") {
    DenseNet net({5, 16, 16, 7, 2}, Activation::LeakyRelu, {Activation::Sigmoid, Activation::Identity}, 3);
    auto res = net.forward(Eigen::VectorXd::Ones(5));
    CHECK(res.penultimate.size() == 7);
    CHECK(res.output.size() == 2);
}

TEST_CASE("input length mismatch is rejected") {
    DenseNet net({3, 4, 4, 4, 1}, Activation::LeakyRelu, {Activation::Identity}, 1);
    CHECK_THROWS_AS(net.forward(Eigen::VectorXd::Ones(5)), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
    SECTION("two-output regression head (MSE)") {
        DenseNet net({4, 8, 8, 6, 2}, Activation::LeakyRelu, {Activation::Sigmoid, Activation::Identity}, 17);
        Eigen::MatrixXd X = random_matrix(4, 6, 5);
        Eigen::MatrixXd Y = random_matrix(2, 6, 6, 0.1, 0.9);
        CHECK(max_gradcheck_error(net, X, Y) < 1e-4);
    }
    SECTION("critic-shaped single output (TD3 critic loss)") {
        DenseNet net({6, 8, 8, 6, 1}, Activation::LeakyRelu, {Activation::Identity}, 23);
        Eigen::MatrixXd X = random_matrix(6, 8, 7);
        Eigen::MatrixXd Y = random_matrix(1, 8, 8, -2.0, 2.0);
        CHECK(max_gradcheck_error(net, X, Y) < 1e-4);
    }
    SECTION("tanh actor head") {
        DenseNet net({5, 8, 8, 6, 3}, Activation::LeakyRelu,
                     {Activation::Tanh, Activation::Tanh, Activation::Tanh}, 29);
        Eigen::MatrixXd X = random_matrix(5, 6, 9);
        Eigen::MatrixXd Y = random_matrix(3, 6, 10, -0.8, 0.8);
        CHECK(max_gradcheck_error(net, X, Y) < 1e-4);
    }
}

TEST_CASE("input gradient chains a critic into an actor correctly") {
    // finite-difference the composite f(theta_actor) = mean(critic(s, actor(s)))
    DenseNet actor({4, 6, 6, 5, 2}, Activation::LeakyRelu, {Activation::Tanh, Activation::Tanh}, 31);
    DenseNet critic({6, 6, 6, 5, 1}, Activation::LeakyRelu, {Activation::Identity}, 37);
    Eigen::MatrixXd S = random_matrix(4, 5, 11);

    auto value = [&]() {
        Eigen::MatrixXd A = actor.forward_batch(S).post[4];
        Eigen::MatrixXd SA(6, S.cols());
        SA.topRows(4) = S;
        SA.bottomRows(2) = A;
        return critic.forward_batch(SA).post[4].mean();
    };

    auto actor_cache = actor.forward_batch(S);
    Eigen::MatrixXd SA(6, S.cols());
    SA.topRows(4) = S;
    SA.bottomRows(2) = actor_cache.post[4];
    auto critic_cache = critic.forward_batch(SA);
    Eigen::MatrixXd out_grad = Eigen::MatrixXd::Constant(1, S.cols(), 1.0 / double(S.cols()));
    Eigen::MatrixXd input_grad;
    critic.backward(critic_cache, out_grad, &input_grad);
    Gradients ag = actor.backward(actor_cache, input_grad.bottomRows(2));

    const double h = 1e-5;
    double worst = 0.0;
    auto& W = actor.weights()[0];
    for (int r = 0; r < W.rows(); ++r) {
        for (int c = 0; c < W.cols(); ++c) {
            double orig = W(r, c);
            W(r, c) = orig + h;
            double vp = value();
            W(r, c) = orig - h;
            double vm = value();
            W(r, c) = orig;
            double fd = (vp - vm) / (2.0 * h);
            double denom = std::max({std::abs(fd), std::abs(ag.dW[0](r, c)), 1e-6});
            worst = std::max(worst, std::abs(fd - ag.dW[0](r, c)) / denom);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("fit reaches a constant target quickly") {
    DenseNet net({2, 8, 8, 6, 1}, Activation::LeakyRelu, {Activation::Identity}, 3);
    Eigen::MatrixXd X = random_matrix(2, 64, 4);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(1, 64, 0.7);
    TrainSpec spec;
    spec.steps = 2000;
    spec.batch_size = 16;
    auto history = fit(net, X, Y, spec);
    REQUIRE(history.size() == 2000);
    CHECK(history.back() < 1e-4);
}

TEST_CASE("zero learning rate leaves weights unchanged") {
    DenseNet net({2, 4, 4, 4, 1}, Activation::LeakyRelu, {Activation::Identity}, 5);
    DenseNet before = net;
    TrainSpec spec;
    spec.learning_rate = 0.0;
    spec.steps = 50;
    fit(net, random_matrix(2, 16, 6), random_matrix(1, 16, 7), spec);
    for (size_t l = 0; l < net.weights().size(); ++l) {
        REQUIRE(net.weights()[l] == before.weights()[l]);
        REQUIRE(net.biases()[l] == before.biases()[l]);
    }
}

TEST_CASE("linear function is learned to small held-out error") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd X(1, 256), Y(1, 256), Xh(1, 64), Yh(1, 64);
    for (int i = 0; i < 256; ++i) {
        X(0, i) = u(rng);
        Y(0, i) = 2.0 * X(0, i);
    }
    for (int i = 0; i < 64; ++i) {
        Xh(0, i) = u(rng);
        Yh(0, i) = 2.0 * Xh(0, i);
    }
    DenseNet net({1, 16, 16, 8, 1}, Activation::LeakyRelu, {Activation::Identity}, 9);
    TrainSpec spec;
    spec.steps = 4000;
    fit(net, X, Y, spec);
    CHECK(mse_loss(net.forward_batch(Xh).post[4], Yh) < 1e-3);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto run = [] {
        DenseNet net({2, 8, 8, 6, 1}, Activation::LeakyRelu, {Activation::Identity}, 13);
        TrainSpec spec;
        spec.steps = 300;
        spec.seed = 99;
        fit(net, random_matrix(2, 40, 14), random_matrix(1, 40, 15), spec);
        return net;
    };
    DenseNet a = run();
    DenseNet b = run();
    for (size_t l = 0; l < a.weights().size(); ++l) {
        REQUIRE(a.weights()[l] == b.weights()[l]);
    }
}

TEST_CASE("divergence aborts with a diagnostic") {
    DenseNet net({1, 4, 4, 4, 1}, Activation::LeakyRelu, {Activation::Identity}, 1);
    for (auto& w : net.weights()) w.setConstant(1e200);
    TrainSpec spec;
    spec.steps = 3;
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(1, 4);
    CHECK_THROWS_WITH(fit(net, X, X, spec), Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("checkpoints round-trip") {
    DenseNet net({3, 8, 8, 6, 2}, Activation::LeakyRelu, {Activation::Sigmoid, Activation::Identity}, 21);
    auto path = (fs::temp_directory_path() / "vectune_net.ckpt").string();
    net.save_checkpoint(path);

    DenseNet first = DenseNet::load_checkpoint(path);
    DenseNet second = DenseNet::load_checkpoint(path);
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd x(3);
        for (int i = 0; i < 3; ++i) x[i] = u(rng);
        Eigen::VectorXd a = first.forward(x).output;
        Eigen::VectorXd b = second.forward(x).output;
        REQUIRE(a == b);
    }

    SECTION("re-saving a loaded net reproduces the same bytes") {
        auto path2 = (fs::temp_directory_path() / "vectune_net2.ckpt").string();
        first.save_checkpoint(path2);
        std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
        std::string b1((std::istreambuf_iterator<char>(f1)), {});
        std::string b2((std::istreambuf_iterator<char>(f2)), {});
        REQUIRE(b1 == b2);
        fs::remove(path2);
    }

    SECTION("corrupted magic is rejected") {
        std::fstream f(path, std::ios::in | std::ios::out);
        f.seekp(0);
        f.write("zzz", 3);
        f.close();
        CHECK_THROWS(DenseNet::load_checkpoint(path));
    }
    fs::remove(path);
}

TEST_CASE("loading into a mismatched shape slot is rejected") {
    DenseNet net({3, 4, 4, 4, 1}, Activation::LeakyRelu, {Activation::Identity}, 2);
    auto path = (fs::temp_directory_path() / "vectune_net3.ckpt").string();
    net.save_checkpoint(path);
    CHECK_THROWS(DenseNet::load_checkpoint_expect(path, {5, 4, 4, 4, 1}));
    CHECK_NOTHROW(DenseNet::load_checkpoint_expect(path, {3, 4, 4, 4, 1}));
    fs::remove(path);
}
