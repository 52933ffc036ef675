// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vectune {

enum class Activation { Identity, Sigmoid, Tanh, LeakyRelu };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::LeakyRelu: return "leaky_relu";
    }
    throw std::logic_error("unknown activation");
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "tanh") return Activation::Tanh;
    if (name == "leaky_relu") return Activation::LeakyRelu;
    throw std::runtime_error("unknown activation name: " + name);
}

inline double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::Identity: return z;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::Tanh: return std::tanh(z);
        case Activation::LeakyRelu: return z > 0.0 ? z : 0.01 * z;
    }
    return z;
}

/// Derivative expressed through the post-activation value where possible.
inline double activation_grad(Activation a, double z, double post) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::Sigmoid: return post * (1.0 - post);
        case Activation::Tanh: return 1.0 - post * post;
        case Activation::LeakyRelu: return z > 0.0 ? 1.0 : 0.01;
    }
    return 1.0;
}

struct TrainSpec {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int epochs = 200;   // full passes over the data; ignored when steps > 0
    long steps = 0;     // exact number of minibatch updates when > 0
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 42;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
};

/// Fully connected net with an input layer, three hidden layers and an
/// output layer (four weight matrices). Hidden units share one activation;
/// each output unit carries its own.
class DenseNet {
public:
    DenseNet() = default;

    DenseNet(const std::array<int, 5>& dims, Activation hidden, std::vector<Activation> output_acts,
             uint64_t seed) {
        for (int d : dims) {
            if (d < 1) throw std::invalid_argument("DenseNet: layer dims must be positive");
        }
        if (output_acts.size() != static_cast<size_t>(dims[4])) {
            throw std::invalid_argument("DenseNet: one output activation per output unit required");
        }
        dims_ = dims;
        hidden_ = hidden;
        out_acts_ = std::move(output_acts);
        std::mt19937_64 rng(seed);
        for (int l = 0; l < 4; ++l) {
            double bound = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
            std::uniform_real_distribution<double> u(-bound, bound);
            Eigen::MatrixXd w(dims[l + 1], dims[l]);
            for (int r = 0; r < w.rows(); ++r) {
                for (int c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
            }
            W_.push_back(std::move(w));
            b_.emplace_back(Eigen::VectorXd::Zero(dims[l + 1]));
        }
    }

    const std::array<int, 5>& dims() const { return dims_; }
    int input_dim() const { return dims_[0]; }
    int output_dim() const { return dims_[4]; }
    int penultimate_dim() const { return dims_[3]; }
    Activation hidden_activation() const { return hidden_; }
    const std::vector<Activation>& output_activations() const { return out_acts_; }

    std::vector<Eigen::MatrixXd>& weights() { return W_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return W_; }
    std::vector<Eigen::VectorXd>& biases() { return b_; }
    const std::vector<Eigen::VectorXd>& biases() const { return b_; }

    /// Per-layer pre- and post-activation values for a batch (columns are
    /// samples). post[0] is the input; post[4] the output.
    struct BatchCache {
        std::vector<Eigen::MatrixXd> pre;   // 4 entries
        std::vector<Eigen::MatrixXd> post;  // 5 entries
    };

    BatchCache forward_batch(const Eigen::MatrixXd& X) const {
        if (X.rows() != dims_[0]) throw std::invalid_argument("forward: input length mismatch");
        BatchCache cache;
        cache.post.push_back(X);
        for (int l = 0; l < 4; ++l) {
            Eigen::MatrixXd z = (W_[l] * cache.post.back()).colwise() + b_[l];
            Eigen::MatrixXd a(z.rows(), z.cols());
            if (l < 3) {
                a = z.unaryExpr([&](double v) { return apply_activation(hidden_, v); });
            } else {
                for (int r = 0; r < z.rows(); ++r) {
                    for (int c = 0; c < z.cols(); ++c) a(r, c) = apply_activation(out_acts_[r], z(r, c));
                }
            }
            cache.pre.push_back(std::move(z));
            cache.post.push_back(std::move(a));
        }
        return cache;
    }

    struct ForwardResult {
        Eigen::VectorXd output;
        Eigen::VectorXd penultimate;
    };

    ForwardResult forward(const Eigen::VectorXd& input) const {
        BatchCache cache = forward_batch(input);
        return {cache.post[4].col(0), cache.post[3].col(0)};
    }

    /// Backpropagates dL/dY through the cached forward pass. Returns
    /// parameter gradients and optionally fills dL/dX (needed to chain a
    /// critic's input gradient into an actor).
    Gradients backward(const BatchCache& cache, const Eigen::MatrixXd& grad_output,
                       Eigen::MatrixXd* grad_input = nullptr) const {
        Gradients g;
        g.dW.resize(4);
        g.db.resize(4);
        Eigen::MatrixXd delta(grad_output.rows(), grad_output.cols());
        for (int r = 0; r < delta.rows(); ++r) {
            for (int c = 0; c < delta.cols(); ++c) {
                delta(r, c) =
                    grad_output(r, c) * activation_grad(out_acts_[r], cache.pre[3](r, c), cache.post[4](r, c));
            }
        }
        for (int l = 3; l >= 0; --l) {
            g.dW[l] = delta * cache.post[l].transpose();
            g.db[l] = delta.rowwise().sum();
            if (l > 0) {
                Eigen::MatrixXd back = W_[l].transpose() * delta;
                delta = back.cwiseProduct(cache.pre[l - 1].binaryExpr(
                    cache.post[l], [&](double z, double post) { return activation_grad(hidden_, z, post); }));
            } else if (grad_input) {
                *grad_input = W_[0].transpose() * delta;
            }
        }
        return g;
    }

    // --- checkpointing ------------------------------------------------------
    // ASCII header (version, dims, activation names), then little-endian
    // float32 flat arrays per layer, weights before biases.

    void save_checkpoint(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path);
        out << "vectune-densenet 1";
        for (int d : dims_) out << ' ' << d;
        out << ' ' << activation_name(hidden_) << ' ';
        for (size_t i = 0; i < out_acts_.size(); ++i) {
            if (i) out << ',';
            out << activation_name(out_acts_[i]);
        }
        out << '\n';
        auto write_block = [&](const double* data, size_t n) {
            std::vector<float> buf(n);
            for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
            out.write(reinterpret_cast<const char*>(buf.data()), 4 * n);
        };
        for (int l = 0; l < 4; ++l) {
            // row-major element order for the weight matrix
            Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr = W_[l];
            write_block(wr.data(), static_cast<size_t>(wr.size()));
            write_block(b_[l].data(), static_cast<size_t>(b_[l].size()));
        }
        if (!out) throw std::runtime_error("I/O error writing " + path);
    }

    static DenseNet load_checkpoint(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        std::string header;
        if (!std::getline(in, header)) throw std::runtime_error("truncated checkpoint: " + path);
        std::istringstream hs(header);
        std::string magic;
        int version = 0;
        hs >> magic >> version;
        if (magic != "vectune-densenet" || version != 1) {
            throw std::runtime_error("bad checkpoint header in " + path);
        }
        std::array<int, 5> dims{};
        for (int& d : dims) hs >> d;
        std::string hidden_name, outs_name;
        hs >> hidden_name >> outs_name;
        if (!hs) throw std::runtime_error("bad checkpoint header in " + path);

        std::vector<Activation> outs;
        std::stringstream os(outs_name);
        std::string tok;
        while (std::getline(os, tok, ',')) outs.push_back(activation_from_name(tok));

        DenseNet net(dims, activation_from_name(hidden_name), outs, 0);
        auto read_block = [&](double* data, size_t n) {
            std::vector<float> buf(n);
            in.read(reinterpret_cast<char*>(buf.data()), 4 * n);
            if (!in) throw std::runtime_error("truncated checkpoint: " + path);
            for (size_t i = 0; i < n; ++i) data[i] = static_cast<double>(buf[i]);
        };
        for (int l = 0; l < 4; ++l) {
            Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr(dims[l + 1], dims[l]);
            read_block(wr.data(), static_cast<size_t>(wr.size()));
            net.W_[l] = wr;
            read_block(net.b_[l].data(), static_cast<size_t>(net.b_[l].size()));
        }
        return net;
    }

    static DenseNet load_checkpoint_expect(const std::string& path, const std::array<int, 5>& dims) {
        DenseNet net = load_checkpoint(path);
        if (net.dims_ != dims) throw std::runtime_error("checkpoint layer dims mismatch: " + path);
        return net;
    }

private:
    std::array<int, 5> dims_{};
    Activation hidden_ = Activation::LeakyRelu;
    std::vector<Activation> out_acts_;
    std::vector<Eigen::MatrixXd> W_;
    std::vector<Eigen::VectorXd> b_;
};

/// Adam optimizer state for one DenseNet.
class AdamState {
public:
    explicit AdamState(const DenseNet& net) {
        for (const auto& w : net.weights()) {
            mW_.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            vW_.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        }
        for (const auto& b : net.biases()) {
            mb_.emplace_back(Eigen::VectorXd::Zero(b.size()));
            vb_.emplace_back(Eigen::VectorXd::Zero(b.size()));
        }
    }

    void step(DenseNet& net, const Gradients& g, const TrainSpec& spec) {
        ++t_;
        double bc1 = 1.0 - std::pow(spec.beta1, t_);
        double bc2 = 1.0 - std::pow(spec.beta2, t_);
        for (size_t l = 0; l < net.weights().size(); ++l) {
            mW_[l] = spec.beta1 * mW_[l] + (1.0 - spec.beta1) * g.dW[l];
            vW_[l] = spec.beta2 * vW_[l] + (1.0 - spec.beta2) * g.dW[l].cwiseProduct(g.dW[l]);
            net.weights()[l] -=
                (spec.learning_rate * (mW_[l] / bc1).array() / ((vW_[l] / bc2).array().sqrt() + spec.adam_eps))
                    .matrix();
            mb_[l] = spec.beta1 * mb_[l] + (1.0 - spec.beta1) * g.db[l];
            vb_[l] = spec.beta2 * vb_[l] + (1.0 - spec.beta2) * g.db[l].cwiseProduct(g.db[l]);
            net.biases()[l] -=
                (spec.learning_rate * (mb_[l] / bc1).array() / ((vb_[l] / bc2).array().sqrt() + spec.adam_eps))
                    .matrix();
        }
    }

private:
    std::vector<Eigen::MatrixXd> mW_, vW_;
    std::vector<Eigen::VectorXd> mb_, vb_;
    long t_ = 0;
};

/// Mean squared error over all outputs and samples, both heads weighted
/// equally. Returns the loss and fills the output gradient.
inline double mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                       Eigen::MatrixXd* grad = nullptr) {
    Eigen::MatrixXd diff = prediction - target;
    double n = static_cast<double>(diff.size());
    if (grad) *grad = (2.0 / n) * diff;
    return diff.squaredNorm() / n;
}

/// Mini-batch Adam descent on MSE. Inputs/targets are column-per-sample.
/// Deterministic for a fixed spec.seed. Returns the per-step loss history.
inline std::vector<double> fit(DenseNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                               const TrainSpec& spec) {
    if (inputs.cols() != targets.cols()) throw std::invalid_argument("fit: inputs/targets misaligned");
    if (inputs.cols() == 0) throw std::invalid_argument("fit: no samples");
    if (!inputs.allFinite() || !targets.allFinite()) throw std::invalid_argument("fit: non-finite data");

    const long n = inputs.cols();
    const long batch = std::min<long>(spec.batch_size, n);
    std::mt19937_64 rng(spec.seed);
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0L);

    long total_steps = spec.steps > 0 ? spec.steps : spec.epochs * ((n + batch - 1) / batch);
    std::vector<double> history;
    history.reserve(total_steps);

    AdamState adam(net);
    long cursor = n;  // forces a shuffle on the first step
    Eigen::MatrixXd bx(inputs.rows(), batch), by(targets.rows(), batch);
    for (long step = 0; step < total_steps; ++step) {
        if (cursor + batch > n) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        long bsize = std::min(batch, n - cursor);
        for (long i = 0; i < bsize; ++i) {
            bx.col(i) = inputs.col(order[cursor + i]);
            by.col(i) = targets.col(order[cursor + i]);
        }
        cursor += bsize;

        auto cache = net.forward_batch(bx.leftCols(bsize));
        Eigen::MatrixXd grad;
        double loss = mse_loss(cache.post[4], by.leftCols(bsize), &grad);
        if (!std::isfinite(loss)) {
            throw std::runtime_error("fit diverged: non-finite loss at step " + std::to_string(step));
        }
        history.push_back(loss);
        Gradients g = net.backward(cache, grad);
        adam.step(net, g, spec);
    }
    return history;
}

}  // namespace vectune
