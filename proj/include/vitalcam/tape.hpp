#pragma once

// Recording evaluator. Forward values are computed eagerly; when recording is
// on, each op also stores a closure that scatters its output gradient back to
// its operands. The same model code runs both inference (recording off) and
// training (recording on).

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vitalcam/attention.hpp"
#include "vitalcam/grad.hpp"
#include "vitalcam/ops.hpp"
#include "vitalcam/shift.hpp"
#include "vitalcam/tensor.hpp"

namespace vitalcam {

struct Var {
    std::size_t id = 0;
};

template <typename T>
class Tape {
public:
    using TensorT = BasicTensor<T>;

    explicit Tape(bool record) : record_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return record_; }

    /// Non-differentiable value owned by the tape.
    Var constant(TensorT value) { return push(std::move(value), nullptr, false); }

    /// External tensor referenced without copying. Gradients accumulate when
    /// `trainable` and recording.
    Var parameter(const TensorT& value, bool trainable = true) {
        Node n;
        n.ref = &value;
        n.needs_grad = record_ && trainable;
        nodes_.push_back(std::move(n));
        return {nodes_.size() - 1};
    }

    const TensorT& value(Var v) const {
        const Node& n = nodes_.at(v.id);
        return n.ref ? *n.ref : n.owned;
    }

    /// Accumulated gradient, or nullptr when none reached this node.
    const TensorT* grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        return n.grad ? &*n.grad : nullptr;
    }

    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

    Var conv2d(Var x, Var k, Var b) {
        return unary_conv(x, k, b, vitalcam::conv2d<T>(value(x), value(k), value(b)), false);
    }

    Var conv3d(Var x, Var k, Var b) {
        return unary_conv(x, k, b, vitalcam::conv3d<T>(value(x), value(k), value(b)), true);
    }

    Var avg_pool(Var x, PoolWindow win) {
        return push(vitalcam::avg_pool(value(x), win), [x, win](Tape& tp, const TensorT& g) {
            tp.accumulate(x, avg_pool_backward(tp.value(x).shape(), g, win));
        }, needs_grad(x));
    }

    Var dense(Var x, Var w, Var b) {
        return push(vitalcam::dense(value(x), value(w), value(b)),
                    [x, w, b](Tape& tp, const TensorT& g) {
                        auto d = dense_backward(tp.value(x), tp.value(w), g);
                        tp.accumulate(x, std::move(d.input));
                        tp.accumulate(w, std::move(d.weight));
                        tp.accumulate(b, std::move(d.bias));
                    },
                    any_grad({x, w, b}));
    }

    Var activation(Var x, Activation kind) {
        const std::size_t out_id = nodes_.size();
        return push(vitalcam::activation(value(x), kind), [x, kind, out_id](Tape& tp, const TensorT& g) {
            tp.accumulate(x, activation_backward(tp.value(Var{out_id}), g, kind));
        }, needs_grad(x));
    }

    Var temporal_shift(Var x, const ShiftSpec& spec) {
        return push(vitalcam::temporal_shift(value(x), spec), [x, spec](Tape& tp, const TensorT& g) {
            tp.accumulate(x, temporal_shift_adjoint(g, spec));
        }, needs_grad(x));
    }

    Var attention_mask(Var x, Var omega, Var b) {
        return push(vitalcam::attention_mask(value(x), value(omega), value(b)),
                    [x, omega, b](Tape& tp, const TensorT& g) {
                        auto d = attention_mask_backward(tp.value(x), tp.value(omega), tp.value(b), g);
                        tp.accumulate(x, std::move(d.input));
                        tp.accumulate(omega, std::move(d.omega));
                        tp.accumulate(b, std::move(d.bias));
                    },
                    any_grad({x, omega, b}));
    }

    Var apply_mask(Var x, Var mask) {
        return push(vitalcam::apply_mask(value(x), value(mask)), [x, mask](Tape& tp, const TensorT& g) {
            auto d = apply_mask_backward(tp.value(x), tp.value(mask), g);
            tp.accumulate(x, std::move(d.input));
            tp.accumulate(mask, std::move(d.mask));
        }, any_grad({x, mask}));
    }

    /// Inverted dropout with a mask drawn from `seed`. Identity when not
    /// training or when rate is zero.
    Var dropout(Var x, double rate, std::uint64_t seed, bool training) {
        if (!training || rate == 0.0) return x;
        auto mask = dropout_mask<T>(value(x).shape(), rate, seed);
        auto y = multiply(value(x), mask);
        return push(std::move(y), [x, mask = std::move(mask)](Tape& tp, const TensorT& g) {
            tp.accumulate(x, multiply(g, mask));
        }, needs_grad(x));
    }

    Var reshape(Var x, Shape shape) {
        const Shape in_shape = value(x).shape();
        return push(value(x).reshaped(std::move(shape)), [x, in_shape](Tape& tp, const TensorT& g) {
            tp.accumulate(x, g.reshaped(in_shape));
        }, needs_grad(x));
    }

    /// Seeds the given output gradients and runs all recorded closures in
    /// reverse creation order.
    void backward(const std::vector<std::pair<Var, TensorT>>& seeds) {
        if (!record_) throw std::logic_error("backward on a non-recording tape");
        for (const auto& [v, g] : seeds) accumulate(v, g);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || !n.grad) continue;
            n.backward(*this, *n.grad);
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    using Backward = std::function<void(Tape&, const TensorT&)>;

    struct Node {
        TensorT owned;
        const TensorT* ref = nullptr;
        std::optional<TensorT> grad;
        Backward backward;
        bool needs_grad = false;
    };

    bool any_grad(std::initializer_list<Var> vs) const {
        for (auto v : vs)
            if (needs_grad(v)) return true;
        return false;
    }

    Var push(TensorT value, Backward bw, bool needs) {
        Node n;
        n.owned = std::move(value);
        n.needs_grad = record_ && needs;
        if (n.needs_grad) n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return {nodes_.size() - 1};
    }

    void accumulate(Var v, TensorT g) {
        Node& n = nodes_.at(v.id);
        if (!n.needs_grad) return;
        if (!n.grad) {
            n.grad = std::move(g);
            return;
        }
        require_extent(n.grad->size(), g.size(), "gradient accumulation size");
        for (std::size_t i = 0; i < g.size(); ++i) (*n.grad)[i] += g[i];
    }

    Var unary_conv(Var x, Var k, Var b, TensorT y, bool is3d) {
        return push(std::move(y), [x, k, b, is3d](Tape& tp, const TensorT& g) {
            const bool want_x = tp.needs_grad(x);
            auto d = is3d ? conv3d_backward(tp.value(x), tp.value(k), g, want_x)
                          : conv2d_backward(tp.value(x), tp.value(k), g, want_x);
            if (d.input) tp.accumulate(x, std::move(*d.input));
            tp.accumulate(k, std::move(d.kernel));
            tp.accumulate(b, std::move(d.bias));
        }, any_grad({x, k, b}));
    }

    bool record_;
    std::vector<Node> nodes_;
};

}  // namespace vitalcam
