// SPDX-License-Identifier: Apache-2.0
// Copyright 2025 vectune contributors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vectune/collector.hpp"
#include "vectune/config_space.hpp"
#include "vectune/dataio.hpp"
#include "vectune/densenet.hpp"
#include "vectune/hnsw.hpp"
#include "vectune/qpp.hpp"

namespace vectune {

constexpr int kStateDim = 12;
constexpr int kActionDim = 3;

/// Performance changes of the last recommended configuration against the
/// target recall and the current best configuration.
struct Deltas {
    double rec_lt = 0.0;   // rec_l - rec_t
    double rec_bt = 0.0;   // rec_b - rec_t
    double rec_lb = 0.0;   // rec_l - rec_b
    double adcn_lb = 0.0;  // (-adcn_l + adcn_b) / adcn_b
};

inline Deltas compute_deltas(double rec_l, double rec_b, double rec_t, double adcn_l, double adcn_b) {
    if (adcn_b <= 0.0) throw std::invalid_argument("compute_deltas: adcn_b must be positive");
    return {rec_l - rec_t, rec_b - rec_t, rec_l - rec_b, (-adcn_l + adcn_b) / adcn_b};
}

/// Five-branch reward: recall-driven until both the last and best
/// configurations reach the target, ADCN-driven afterwards.
inline double compute_reward(const Deltas& d) {
    const bool last_ok = d.rec_lt >= 0.0;
    const bool best_ok = d.rec_bt >= 0.0;
    if (!last_ok && !best_ok) return -(1.0 - d.rec_lt) * (1.0 - d.rec_lt) + 1.0;
    if (last_ok && !best_ok) return (1.0 + d.rec_lt) * (1.0 + d.rec_lt) * (1.0 + d.rec_lb);
    if (!last_ok && best_ok) return -(1.0 - d.rec_lt) * (1.0 - d.rec_lt) * (1.0 - d.rec_lb);
    if (d.adcn_lb >= 0.0) return (1.0 + d.adcn_lb) * (1.0 + d.adcn_lb) - 1.0;
    return -(1.0 - d.adcn_lb) * (1.0 - d.adcn_lb) + 1.0;
}

/// Which of the five reward conditions fires (1-based), for diagnostics and
/// partition checks.
inline int reward_condition(const Deltas& d) {
    const bool last_ok = d.rec_lt >= 0.0;
    const bool best_ok = d.rec_bt >= 0.0;
    if (!last_ok && !best_ok) return 1;
    if (last_ok && !best_ok) return 2;
    if (!last_ok && best_ok) return 3;
    return d.adcn_lb >= 0.0 ? 4 : 5;
}

/// Maps a continuous action in [-1,1]^3 onto the discrete grid: each
/// component moves through an affine transform on the log of the parameter
/// range and snaps to the nearest grid value. Componentwise monotone.
inline ParamConfig action_to_config(const Eigen::Vector3d& action, const ConfigSpace& space) {
    auto map_axis = [](double a, const std::vector<int>& grid) {
        double t = (std::clamp(a, -1.0, 1.0) + 1.0) / 2.0;
        double lo = std::log(static_cast<double>(grid.front()));
        double hi = std::log(static_cast<double>(grid.back()));
        double value = std::exp(lo + t * (hi - lo));
        return grid[snap_to_grid(grid, value)];
    };
    return ParamConfig{map_axis(action[0], space.efc_grid), map_axis(action[1], space.m_grid),
                       map_axis(action[2], space.efs_grid)};
}

/// Predicted performance of one configuration.
struct PerfPoint {
    double recall = 0.0;
    double adcn = 0.0;
};

using PerfOracle = std::function<PerfPoint(const ParamConfig&)>;

inline PerfOracle qpp_oracle(const QppModel& model, const DatasetFeatures& feats) {
    return [&model, feats](const ParamConfig& cfg) {
        auto p = model.predict(cfg, feats);
        return PerfPoint{p.recall, p.adcn};
    };
}

/// Tuning environment: the performance oracle (QPP-backed in production)
/// plus (theta_l, theta_b) bookkeeping. Pure given the oracle — identical
/// action sequences produce identical trajectories.
class TuningEnv {
public:
    TuningEnv(const ConfigSpace& space, PerfOracle oracle, Normalizer norm, double target_recall)
        : space_(&space), oracle_(std::move(oracle)), norm_(std::move(norm)), target_(target_recall) {
        if (target_recall <= 0.0 || target_recall >= 1.0) {
            throw std::invalid_argument("TuningEnv: target recall must lie in (0,1)");
        }
    }

    /// Both configurations start at the minimal grid values.
    Eigen::VectorXd reset() {
        ParamConfig lowest{space_->efc_grid.front(), space_->m_grid.front(), space_->efs_grid.front()};
        theta_l_ = lowest;
        perf_l_ = oracle_(lowest);
        theta_b_ = lowest;
        perf_b_ = perf_l_;
        best_feasible_ = perf_b_.recall >= target_;
        return make_state();
    }

    struct StepResult {
        Eigen::VectorXd state;
        double reward = 0.0;
        ParamConfig config;
        PerfPoint perf;
        bool became_best = false;
    };

    StepResult step(const Eigen::Vector3d& action) {
        StepResult out;
        out.config = action_to_config(action, *space_);
        out.perf = oracle_(out.config);

        // reward against the best configuration before this step
        Deltas d = compute_deltas(out.perf.recall, perf_b_.recall, target_, out.perf.adcn, perf_b_.adcn);
        out.reward = compute_reward(d);

        theta_l_ = out.config;
        perf_l_ = out.perf;
        out.became_best = consider_best(out.config, out.perf);
        out.state = make_state();
        return out;
    }

    double target() const { return target_; }
    const ParamConfig& best_config() const { return theta_b_; }
    const PerfPoint& best_perf() const { return perf_b_; }
    bool best_is_feasible() const { return best_feasible_; }
    const ConfigSpace& space() const { return *space_; }

private:
    /// Best = feasible with minimal ADCN; before any feasible visit, the
    /// maximal-recall configuration.
    bool consider_best(const ParamConfig& cfg, const PerfPoint& perf) {
        bool feasible = perf.recall >= target_;
        bool take = false;
        if (feasible && !best_feasible_) {
            take = true;
        } else if (feasible && best_feasible_) {
            take = perf.adcn < perf_b_.adcn;
        } else if (!feasible && !best_feasible_) {
            take = perf.recall > perf_b_.recall;
        }
        if (take) {
            theta_b_ = cfg;
            perf_b_ = perf;
            best_feasible_ = feasible;
        }
        return take;
    }

    Eigen::Vector3d normalize_config(const ParamConfig& cfg) const {
        return {norm_.input[0].to_unit(cfg.efC), norm_.input[1].to_unit(cfg.M), norm_.input[2].to_unit(cfg.efS)};
    }

    Eigen::VectorXd make_state() const {
        Deltas d = compute_deltas(perf_l_.recall, perf_b_.recall, target_, perf_l_.adcn, perf_b_.adcn);
        Eigen::VectorXd s(kStateDim);
        s.segment<3>(0) = normalize_config(theta_l_);
        s.segment<3>(3) = normalize_config(theta_b_);
        s[6] = perf_l_.recall;
        s[7] = norm_.normalize_adcn(perf_l_.adcn);
        s[8] = d.rec_lt;
        s[9] = d.rec_bt;
        s[10] = d.rec_lb;
        s[11] = d.adcn_lb;
        return s;
    }

    const ConfigSpace* space_;
    PerfOracle oracle_;
    Normalizer norm_;
    double target_;
    ParamConfig theta_l_, theta_b_;
    PerfPoint perf_l_, perf_b_;
    bool best_feasible_ = false;
};

// --- TD3 --------------------------------------------------------------------

struct Td3Params {
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double gamma = 0.99;
    double tau = 0.005;
    int policy_delay = 2;
    double target_noise = 0.2;
    double noise_clip = 0.5;
    double expl_noise = 0.1;
    int batch_size = 256;
    size_t buffer_capacity = 1'000'000;
    int warmup_steps = 1000;
    int episode_len = 50;
    uint64_t seed = 7;
};

struct Transition {
    Eigen::Matrix<double, kStateDim, 1> state;
    Eigen::Vector3d action;
    double reward = 0.0;
    Eigen::Matrix<double, kStateDim, 1> next_state;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    size_t size() const { return data_.size(); }
    const Transition& operator[](size_t i) const { return data_[i]; }

private:
    size_t capacity_;
    size_t head_ = 0;
    std::vector<Transition> data_;
};

/// Twin delayed deep deterministic policy gradient agent: twin critics,
/// delayed policy updates, target policy smoothing, soft target updates.
class Td3Agent {
public:
    explicit Td3Agent(const Td3Params& params = {})
        : params_(params),
          actor_({kStateDim, 128, 128, 64, kActionDim}, Activation::LeakyRelu,
                 {Activation::Tanh, Activation::Tanh, Activation::Tanh}, params.seed),
          critic1_({kStateDim + kActionDim, 128, 128, 64, 1}, Activation::LeakyRelu, {Activation::Identity},
                   params.seed + 1),
          critic2_({kStateDim + kActionDim, 128, 128, 64, 1}, Activation::LeakyRelu, {Activation::Identity},
                   params.seed + 2),
          target_actor_(actor_),
          target_critic1_(critic1_),
          target_critic2_(critic2_),
          adam_actor_(actor_),
          adam_critic1_(critic1_),
          adam_critic2_(critic2_),
          buffer_(params.buffer_capacity) {}

    const Td3Params& params() const { return params_; }

    Eigen::Vector3d act(const Eigen::VectorXd& state) const { return actor_.forward(state).output; }

    Eigen::Vector3d act_noisy(const Eigen::VectorXd& state, double sigma, std::mt19937_64& rng) const {
        std::normal_distribution<double> noise(0.0, sigma);
        Eigen::Vector3d a = act(state);
        for (int i = 0; i < kActionDim; ++i) a[i] = std::clamp(a[i] + noise(rng), -1.0, 1.0);
        return a;
    }

    static Eigen::Vector3d random_action(std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        return {u(rng), u(rng), u(rng)};
    }

    void observe(Transition t) { buffer_.push(std::move(t)); }
    size_t buffer_size() const { return buffer_.size(); }
    long update_count() const { return updates_; }

    /// One TD3 update from a sampled minibatch; no-op until the buffer can
    /// fill a batch.
    void update(std::mt19937_64& rng) {
        const long batch = params_.batch_size;
        if (buffer_.size() < static_cast<size_t>(batch)) return;
        std::uniform_int_distribution<size_t> pick(0, buffer_.size() - 1);

        Eigen::MatrixXd s(kStateDim, batch), s2(kStateDim, batch), sa(kStateDim + kActionDim, batch);
        Eigen::VectorXd r(batch);
        for (long i = 0; i < batch; ++i) {
            const Transition& t = buffer_[pick(rng)];
            s.col(i) = t.state;
            s2.col(i) = t.next_state;
            sa.col(i).head<kStateDim>() = t.state;
            sa.col(i).tail<kActionDim>() = t.action;
            r[i] = t.reward;
        }

        // target actions with clipped smoothing noise
        Eigen::MatrixXd a2 = target_actor_.forward_batch(s2).post[4];
        std::normal_distribution<double> noise(0.0, params_.target_noise);
        for (long c = 0; c < batch; ++c) {
            for (int k = 0; k < kActionDim; ++k) {
                double n = std::clamp(noise(rng), -params_.noise_clip, params_.noise_clip);
                a2(k, c) = std::clamp(a2(k, c) + n, -1.0, 1.0);
            }
        }
        Eigen::MatrixXd s2a2(kStateDim + kActionDim, batch);
        s2a2.topRows(kStateDim) = s2;
        s2a2.bottomRows(kActionDim) = a2;

        Eigen::MatrixXd q1t = target_critic1_.forward_batch(s2a2).post[4];
        Eigen::MatrixXd q2t = target_critic2_.forward_batch(s2a2).post[4];
        Eigen::MatrixXd y(1, batch);
        for (long c = 0; c < batch; ++c) y(0, c) = r[c] + params_.gamma * std::min(q1t(0, c), q2t(0, c));

        TrainSpec critic_spec;
        critic_spec.learning_rate = params_.critic_lr;
        auto update_critic = [&](DenseNet& critic, AdamState& adam) {
            auto cache = critic.forward_batch(sa);
            Eigen::MatrixXd grad;
            double loss = mse_loss(cache.post[4], y, &grad);
            if (!std::isfinite(loss)) throw std::runtime_error("td3: critic loss diverged (non-finite)");
            Gradients g = critic.backward(cache, grad);
            adam.step(critic, g, critic_spec);
        };
        update_critic(critic1_, adam_critic1_);
        update_critic(critic2_, adam_critic2_);

        ++updates_;
        if (updates_ % params_.policy_delay == 0) {
            // actor ascends Q1(s, pi(s))
            auto actor_cache = actor_.forward_batch(s);
            Eigen::MatrixXd spa(kStateDim + kActionDim, batch);
            spa.topRows(kStateDim) = s;
            spa.bottomRows(kActionDim) = actor_cache.post[4];
            auto critic_cache = critic1_.forward_batch(spa);
            Eigen::MatrixXd q_grad = Eigen::MatrixXd::Constant(1, batch, -1.0 / static_cast<double>(batch));
            Eigen::MatrixXd input_grad;
            critic1_.backward(critic_cache, q_grad, &input_grad);
            Gradients ag = actor_.backward(actor_cache, input_grad.bottomRows(kActionDim));
            TrainSpec actor_spec;
            actor_spec.learning_rate = params_.actor_lr;
            adam_actor_.step(actor_, ag, actor_spec);

            soft_update(target_actor_, actor_);
            soft_update(target_critic1_, critic1_);
            soft_update(target_critic2_, critic2_);
        }
    }

    DenseNet& actor() { return actor_; }
    const DenseNet& actor() const { return actor_; }
    const DenseNet& critic1() const { return critic1_; }
    const DenseNet& critic2() const { return critic2_; }
    const DenseNet& target_actor() const { return target_actor_; }

    void save(const std::string& prefix) const {
        actor_.save_checkpoint(prefix + ".actor.ckpt");
        critic1_.save_checkpoint(prefix + ".critic1.ckpt");
        critic2_.save_checkpoint(prefix + ".critic2.ckpt");
        target_actor_.save_checkpoint(prefix + ".target_actor.ckpt");
        target_critic1_.save_checkpoint(prefix + ".target_critic1.ckpt");
        target_critic2_.save_checkpoint(prefix + ".target_critic2.ckpt");
        nlohmann::json j{{"gamma", params_.gamma},
                         {"tau", params_.tau},
                         {"policy_delay", params_.policy_delay},
                         {"target_noise", params_.target_noise},
                         {"noise_clip", params_.noise_clip},
                         {"expl_noise", params_.expl_noise},
                         {"batch_size", params_.batch_size},
                         {"actor_lr", params_.actor_lr},
                         {"critic_lr", params_.critic_lr},
                         {"warmup_steps", params_.warmup_steps},
                         {"episode_len", params_.episode_len},
                         {"seed", params_.seed},
                         {"updates", updates_}};
        std::ofstream out(prefix + ".json");
        if (!out) throw std::runtime_error("cannot open " + prefix + ".json");
        out << j.dump(2) << '\n';
    }

    static Td3Agent load(const std::string& prefix) {
        std::ifstream in(prefix + ".json");
        if (!in) throw std::runtime_error("cannot open " + prefix + ".json");
        nlohmann::json j = nlohmann::json::parse(in);
        Td3Params p;
        p.gamma = j.at("gamma");
        p.tau = j.at("tau");
        p.policy_delay = j.at("policy_delay");
        p.target_noise = j.at("target_noise");
        p.noise_clip = j.at("noise_clip");
        p.expl_noise = j.at("expl_noise");
        p.batch_size = j.at("batch_size");
        p.actor_lr = j.at("actor_lr");
        p.critic_lr = j.at("critic_lr");
        p.warmup_steps = j.at("warmup_steps");
        p.episode_len = j.at("episode_len");
        p.seed = j.at("seed");
        Td3Agent agent(p);
        agent.actor_ = DenseNet::load_checkpoint(prefix + ".actor.ckpt");
        agent.critic1_ = DenseNet::load_checkpoint(prefix + ".critic1.ckpt");
        agent.critic2_ = DenseNet::load_checkpoint(prefix + ".critic2.ckpt");
        agent.target_actor_ = DenseNet::load_checkpoint(prefix + ".target_actor.ckpt");
        agent.target_critic1_ = DenseNet::load_checkpoint(prefix + ".target_critic1.ckpt");
        agent.target_critic2_ = DenseNet::load_checkpoint(prefix + ".target_critic2.ckpt");
        agent.updates_ = j.at("updates");
        return agent;
    }

private:
    void soft_update(DenseNet& target, const DenseNet& online) const {
        for (size_t l = 0; l < online.weights().size(); ++l) {
            target.weights()[l] = params_.tau * online.weights()[l] + (1.0 - params_.tau) * target.weights()[l];
            target.biases()[l] = params_.tau * online.biases()[l] + (1.0 - params_.tau) * target.biases()[l];
        }
    }

    Td3Params params_;
    DenseNet actor_, critic1_, critic2_;
    DenseNet target_actor_, target_critic1_, target_critic2_;
    AdamState adam_actor_, adam_critic1_, adam_critic2_;
    ReplayBuffer buffer_;
    long updates_ = 0;
};

/// Pre-trains the agent across environments (one per dataset/target pair),
/// sampling a pair uniformly per episode. Deterministic given the seed.
inline Td3Agent td3_pretrain(std::vector<TuningEnv>& envs, const Td3Params& params, int episodes) {
    if (envs.empty()) throw std::invalid_argument("td3_pretrain: no environments");
    Td3Agent agent(params);
    std::mt19937_64 rng(params.seed);
    std::uniform_int_distribution<size_t> pick_env(0, envs.size() - 1);

    long total_steps = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        TuningEnv& env = envs[pick_env(rng)];
        Eigen::VectorXd s = env.reset();
        for (int t = 0; t < params.episode_len; ++t) {
            Eigen::Vector3d a = total_steps < params.warmup_steps ? Td3Agent::random_action(rng)
                                                                  : agent.act_noisy(s, params.expl_noise, rng);
            auto res = env.step(a);
            agent.observe(Transition{s, a, res.reward, res.state});
            if (total_steps >= params.warmup_steps) agent.update(rng);
            s = res.state;
            ++total_steps;
        }
    }
    return agent;
}

struct TraceRow {
    int step = 0;
    ParamConfig config;
    double pred_recall = 0.0;
    double pred_adcn = 0.0;
    double reward = 0.0;
    bool is_best = false;
};

struct RecommendResult {
    ParamConfig config;
    PerfPoint predicted;
    bool feasible = false;  // predicted recall reached the target
    std::vector<TraceRow> trace;
};

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "step,efC,M,efS,pred_recall,pred_adcn,reward,is_best\n";
    out.precision(12);
    for (const auto& row : trace) {
        out << row.step << ',' << row.config.efC << ',' << row.config.M << ',' << row.config.efS << ','
            << row.pred_recall << ',' << row.pred_adcn << ',' << row.reward << ',' << (row.is_best ? 1 : 0) << '\n';
    }
}

/// Fine-tunes the agent against the environment with exploration enabled and
/// returns the best visited configuration: predicted-feasible with minimal
/// predicted ADCN, else the maximum-recall configuration (flagged).
inline RecommendResult recommend(Td3Agent& agent, TuningEnv& env, int max_rounds = 250, uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    Eigen::VectorXd s = env.reset();
    std::vector<TraceRow> trace;
    trace.reserve(max_rounds);
    for (int t = 0; t < max_rounds; ++t) {
        Eigen::Vector3d a = agent.act_noisy(s, agent.params().expl_noise, rng);
        auto res = env.step(a);
        agent.observe(Transition{s, a, res.reward, res.state});
        agent.update(rng);
        trace.push_back(TraceRow{t, res.config, res.perf.recall, res.perf.adcn, res.reward, res.became_best});
        s = res.state;
    }
    RecommendResult out;
    out.config = env.best_config();
    out.predicted = env.best_perf();
    out.feasible = env.best_is_feasible();
    out.trace = std::move(trace);
    return out;
}

/// Thrown when no efS on the grid reaches the target recall for the given
/// construction configuration.
class InfeasibleTargetError : public std::runtime_error {
public:
    InfeasibleTargetError(const std::string& msg, ParamConfig best, double recall)
        : std::runtime_error(msg), best_config(best), best_recall(recall) {}

    ParamConfig best_config;
    double best_recall = 0.0;
};

/// Mean measured recall of the index at one efS over the full query set.
inline double measured_recall(const HnswIndex& index, const VectorSet& queries, const NeighborTable& truth,
                              int efs) {
    double sum = 0.0;
    for (size_t q = 0; q < queries.count; ++q) {
        SearchResult sr = index.search(queries.row(q), truth.k, std::max<size_t>(efs, truth.k));
        sum += measure_recall(sr.ids, truth.row(q), truth.k);
    }
    return sum / static_cast<double>(queries.count);
}

/// efS walk on a prebuilt index: starting from config.efS, step up the grid
/// until the measured recall meets the target, or step down and return the
/// last configuration still meeting it. The returned configuration always
/// satisfies measured recall >= target (else InfeasibleTargetError).
inline ParamConfig post_process_on_index(const HnswIndex& index, const ParamConfig& config, double target_recall,
                                         const VectorSet& queries, const NeighborTable& truth,
                                         const ConfigSpace& space) {
    const auto& grid = space.efs_grid;
    size_t idx = grid_index_of(grid, config.efS);
    double recall = measured_recall(index, queries, truth, grid[idx]);

    if (recall < target_recall) {
        double best_recall = recall;
        size_t best_idx = idx;
        while (idx + 1 < grid.size()) {
            ++idx;
            recall = measured_recall(index, queries, truth, grid[idx]);
            if (recall > best_recall) {
                best_recall = recall;
                best_idx = idx;
            }
            if (recall >= target_recall) return ParamConfig{config.efC, config.M, grid[idx]};
        }
        throw InfeasibleTargetError("target recall infeasible for this construction",
                                    ParamConfig{config.efC, config.M, grid[best_idx]}, best_recall);
    }

    while (idx > 0) {
        double lower = measured_recall(index, queries, truth, grid[idx - 1]);
        if (lower < target_recall) break;
        --idx;
        recall = lower;
    }
    return ParamConfig{config.efC, config.M, grid[idx]};
}

/// Builds the real index once for (efC, M) and runs the efS walk on it.
inline ParamConfig post_process(const ParamConfig& config, double target_recall, const VectorSet& base,
                                const VectorSet& queries, const NeighborTable& truth, const ConfigSpace& space,
                                uint64_t seed = 42) {
    IndexParams params{config.efC, config.M, detail::mix_seed(seed, config.efC, config.M)};
    HnswIndex index = HnswIndex::build(base, params);
    return post_process_on_index(index, config, target_recall, queries, truth, space);
}

}  // namespace vectune
