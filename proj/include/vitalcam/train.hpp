#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "vitalcam/error.hpp"
#include "vitalcam/model.hpp"
#include "vitalcam/rng.hpp"
#include "vitalcam/tape.hpp"

namespace vitalcam {

struct LossConfig {
    double alpha = 0.5;  // respiration weight

    void validate() const {
        if (!(alpha >= 0.0)) throw ValidationError("alpha", "must be non-negative");
    }
};

template <typename T>
struct LossResult {
    T loss{0};
    std::vector<T> grad_bvp;
    std::vector<T> grad_resp;
};

namespace detail {

template <typename T>
T sign0(T v) {
    return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}

/// weight * mean|target - pred| and its gradient wrt pred. The subgradient at
/// a zero residual is 0.
template <typename T>
T l1_term(std::span<const T> pred, std::span<const T> target, double weight, std::vector<T>& grad) {
    if (pred.size() != target.size())
        throw DimensionError("loss: prediction and target lengths differ", target.size(), pred.size());
    if (pred.empty()) throw DimensionError("loss: empty waveform");
    const T n = static_cast<T>(pred.size());
    const T wt = static_cast<T>(weight);
    grad.assign(pred.size(), T{0});
    T sum{0};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T r = pred[i] - target[i];
        sum += std::abs(r);
        grad[i] = wt * sign0(r) / n;
    }
    return wt * sum / n;
}

}  // namespace detail

/// Multi-task L1 loss: mean|b - b'| + alpha * mean|r - r'|. Pass empty
/// respiration spans for a pulse-only loss.
template <typename T>
LossResult<T> multitask_loss(std::span<const T> bvp_pred, std::span<const T> bvp,
                             std::span<const T> resp_pred, std::span<const T> resp,
                             const LossConfig& cfg = {}) {
    cfg.validate();
    LossResult<T> r;
    r.loss = detail::l1_term(bvp_pred, bvp, 1.0, r.grad_bvp);
    if (!resp_pred.empty() || !resp.empty())
        r.loss += detail::l1_term(resp_pred, resp, cfg.alpha, r.grad_resp);
    return r;
}

template <typename T>
T multitask_loss_value(const std::vector<T>& bvp_pred, const std::vector<T>& bvp,
                       const std::vector<T>& resp_pred, const std::vector<T>& resp,
                       const LossConfig& cfg = {}) {
    return multitask_loss<T>(bvp_pred, bvp, resp_pred, resp, cfg).loss;
}

/// One training example: a model input window with its target waveforms.
template <typename T>
struct BasicSample {
    BasicWindowInput<T> input;
    std::vector<T> bvp;
    std::vector<T> resp;
};
using Sample = BasicSample<float>;

/// Loss over the heads a spec has. Multi-task weights the respiration head by
/// alpha; a single-task model weights its one head by 1.
template <typename T>
LossResult<T> spec_loss(const ModelSpec& spec, const std::map<std::string, std::vector<T>>& pred,
                        const BasicSample<T>& s, const LossConfig& cfg) {
    if (spec.multi_task)
        return multitask_loss<T>(pred.at("bvp"), s.bvp, pred.at("resp"), s.resp, cfg);
    LossResult<T> r;
    if (spec.task == Task::pulse) {
        r.loss = detail::l1_term<T>(pred.at("bvp"), s.bvp, 1.0, r.grad_bvp);
    } else {
        r.loss = detail::l1_term<T>(pred.at("resp"), s.resp, 1.0, r.grad_resp);
    }
    return r;
}

/// Mean batch loss with the same dropout replay as backward(), without
/// recording gradients.
template <typename T>
T batch_loss(const ModelSpec& spec, const BasicWeightSet<T>& weights,
             const std::vector<BasicSample<T>>& batch, const LossConfig& cfg, std::uint64_t seed) {
    if (batch.empty()) throw ValidationError("batch", "empty batch");
    T total{0};
    const T inv_n = T{1} / static_cast<T>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto pred = forward(spec, weights, batch[i].input, true, derive_seed(seed, i));
        total += spec_loss(spec, pred, batch[i], cfg).loss * inv_n;
    }
    return total;
}

template <typename T>
struct BatchGradients {
    T loss{0};  // mean over the batch
    BasicWeightSet<T> grads;
};

/// Exact reverse-mode gradients of the mean batch loss. Example i replays
/// dropout masks from derive_seed(seed, i); per-example gradients are summed
/// in ascending example order.
template <typename T>
BatchGradients<T> backward(const ModelSpec& spec, const BasicWeightSet<T>& weights,
                           std::span<const BasicSample<T>* const> batch, const LossConfig& cfg,
                           std::uint64_t seed) {
    if (batch.empty()) throw ValidationError("batch", "empty batch");
    BatchGradients<T> out;
    for (const auto& [name, w] : weights) out.grads.emplace(name, BasicTensor<T>(w.shape()));
    const T inv_n = T{1} / static_cast<T>(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const BasicSample<T>& s = *batch[i];
        Tape<T> tp(true);
        const auto heads = build_graph(tp, spec, weights, s.input, true, derive_seed(seed, i));
        std::map<std::string, std::vector<T>> pred;
        for (const auto& [h, v] : heads) {
            const auto d = tp.value(v).data();
            pred.emplace(h, std::vector<T>(d.begin(), d.end()));
        }
        const LossResult<T> l = spec_loss(spec, pred, s, cfg);
        if (!std::isfinite(static_cast<double>(l.loss))) throw NumericError("non-finite loss");
        out.loss += l.loss * inv_n;

        std::vector<std::pair<Var, BasicTensor<T>>> seeds;
        auto seed_head = [&](const char* h, const std::vector<T>& g) {
            auto it = heads.find(h);
            if (it == heads.end() || g.empty()) return;
            std::vector<T> scaled(g);
            for (auto& v : scaled) v *= inv_n;
            seeds.emplace_back(it->second, BasicTensor<T>(Shape{g.size(), 1}, std::move(scaled)));
        };
        seed_head("bvp", l.grad_bvp);
        seed_head("resp", l.grad_resp);
        tp.backward(seeds);

        // Parameters were registered in the order build_graph requested them;
        // map them back by identity of the referenced tensor.
        for (std::size_t id = 0; id < tp.size(); ++id) {
            const Var v{id};
            const BasicTensor<T>* g = tp.grad(v);
            if (!g) continue;
            const BasicTensor<T>* val = &tp.value(v);
            for (auto& [name, w] : weights) {
                if (&w != val) continue;
                auto& acc = out.grads.at(name);
                for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += (*g)[k];
                break;
            }
        }
    }
    return out;
}

template <typename T>
BatchGradients<T> backward(const ModelSpec& spec, const BasicWeightSet<T>& weights,
                           const std::vector<BasicSample<T>>& batch, const LossConfig& cfg,
                           std::uint64_t seed) {
    std::vector<const BasicSample<T>*> ptrs;
    for (const auto& s : batch) ptrs.push_back(&s);
    return backward<T>(spec, weights, std::span<const BasicSample<T>* const>(ptrs), cfg, seed);
}

template <typename T>
struct BasicAdadeltaState {
    double lr = 1.0;
    double rho = 0.95;
    double epsilon = 1e-7;
    BasicWeightSet<T> sq_grad;    // running E[g^2]
    BasicWeightSet<T> sq_update;  // running E[dx^2]
};
using AdadeltaState = BasicAdadeltaState<float>;

/// Adadelta with the update applied as w -= lr * dx:
///   E[g^2]  = rho E[g^2] + (1-rho) g^2
///   dx      = g * sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps)
///   E[dx^2] = rho E[dx^2] + (1-rho) dx^2
/// Accumulators are created as zeros on first use.
template <typename T>
void adadelta_step(BasicWeightSet<T>& weights, const BasicWeightSet<T>& grads,
                   BasicAdadeltaState<T>& state) {
    const T rho = static_cast<T>(state.rho), one_m_rho = static_cast<T>(1.0 - state.rho);
    const T eps = static_cast<T>(state.epsilon), lr = static_cast<T>(state.lr);
    for (auto& [name, w] : weights) {
        auto git = grads.find(name);
        if (git == grads.end()) throw MissingParameterError(name);
        const auto& g = git->second;
        if (!(g.shape() == w.shape()))
            throw DimensionError("adadelta: gradient shape for '" + name + "'", w.size(), g.size());
        auto& eg = state.sq_grad.try_emplace(name, w.shape()).first->second;
        auto& ed = state.sq_update.try_emplace(name, w.shape()).first->second;
        for (std::size_t i = 0; i < w.size(); ++i) {
            eg[i] = rho * eg[i] + one_m_rho * g[i] * g[i];
            const T dx = g[i] * std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps);
            ed[i] = rho * ed[i] + one_m_rho * dx * dx;
            w[i] -= lr * dx;
        }
    }
}

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    LossConfig loss;
    double lr = 1.0;
    double rho = 0.95;
    double epsilon = 1e-7;
};

template <typename T>
struct TrainResult {
    BasicWeightSet<T> weights;
    std::vector<double> loss_history;  // mean train-mode loss per epoch
};

/// Mini-batch training. Initial weights come from build_model(spec, seed);
/// epoch e visits examples in a Fisher-Yates order drawn from
/// derive_seed(seed, e + 1). `on_epoch` is called after every epoch.
template <typename T>
TrainResult<T> train(const ModelSpec& spec, const std::vector<BasicSample<T>>& dataset,
                     const TrainConfig& cfg,
                     const std::function<void(std::size_t, double)>& on_epoch = {}) {
    spec.validate();
    if (dataset.empty()) throw ValidationError("dataset", "empty dataset");
    if (cfg.batch_size == 0) throw ValidationError("batch_size", "must be positive");
    TrainResult<T> res{build_model<T>(spec, cfg.seed), {}};
    BasicAdadeltaState<T> state{cfg.lr, cfg.rho, cfg.epsilon, {}, {}};
    std::vector<std::size_t> order(dataset.size());
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Xoshiro256 rng(derive_seed(cfg.seed, epoch + 1));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double total = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            std::vector<const BasicSample<T>*> batch;
            for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k)
                batch.push_back(&dataset[order[k]]);
            const auto g = backward<T>(spec, res.weights,
                                       std::span<const BasicSample<T>* const>(batch), cfg.loss,
                                       derive_seed(cfg.seed ^ 0x5eedULL, ++step));
            total += static_cast<double>(g.loss) * static_cast<double>(batch.size());
            adadelta_step(res.weights, g.grads, state);
        }
        res.loss_history.push_back(total / static_cast<double>(dataset.size()));
        if (on_epoch) on_epoch(epoch, res.loss_history.back());
    }
    return res;
}

}  // namespace vitalcam
