#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "camogen/tensor.hpp"

namespace camogen::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // undefined until something accumulates into it
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward;

    Tensor& ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

// Reverse-mode tape. Nodes are recorded in creation order, which is a valid
// topological order, so backward() is a single reverse sweep. One Graph per
// forward pass; graphs are cheap and never shared between threads.
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    Var leaf(Tensor v, bool requires_grad) {
        auto n = std::make_shared<Node>();
        n->value = std::move(v);
        n->requires_grad = requires_grad && grad_enabled_;
        order_.push_back(n);
        return n;
    }

    Var constant(Tensor v) { return leaf(std::move(v), false); }

    // shares the parameter's storage; gradient lives on the node
    Var param(const Tensor& v) { return leaf(v, true); }

    Var op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        for (const auto& p : parents)
            if (p->requires_grad) n->requires_grad = true;
        n->requires_grad = n->requires_grad && grad_enabled_;
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backward = std::move(bwd);
        }
        order_.push_back(n);
        return n;
    }

    // Seeds d(loss)/d(loss)=1 and sweeps the tape. `loss` must be scalar.
    void backward(const Var& loss);

private:
    std::vector<Var> order_;
    bool grad_enabled_;
};

// --- primitive ops -----------------------------------------------------
// Spatial tensors are (C,H,W); vectors are (F); scalars are (1).

Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad);
Var conv_transpose2d(Graph& g, Var x, Var w, Var b, int stride, int pad, int out_pad);
Var pad_reflect(Graph& g, Var x, int p);
Var instance_norm(Graph& g, Var x, Var gamma, Var beta, real eps = 1e-5);
Var relu(Graph& g, Var x);
Var leaky_relu(Graph& g, Var x, real slope);
Var tanh_act(Graph& g, Var x);
Var avg_pool(Graph& g, Var x, int k, int stride, int pad);  // excludes padding from counts
Var max_pool(Graph& g, Var x, int k, int stride);
Var global_avg_pool(Graph& g, Var x);                        // (C,H,W) -> (C)
Var linear(Graph& g, Var x, Var w, Var b);                   // (F),(O,F),(O) -> (O)
Var concat_channels(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, real s);

// --- scalar reductions --------------------------------------------------

Var mean_all(Graph& g, Var x);
Var mean_abs_diff(Graph& g, Var a, Var b);
Var mean_sq_diff(Graph& g, Var a, Var b);
Var mean_softplus(Graph& g, Var x);      // mean log(1+exp(x))
Var mean_softplus_neg(Graph& g, Var x);  // mean log(1+exp(-x))
Var weighted_sum(Graph& g, const std::vector<Var>& xs, const std::vector<real>& ws);

// -log(max(softmax(logits)[index], floor_eps)); gradient is zero once the
// floor engages
Var class_nll(Graph& g, Var logits, int index, real floor_eps);

// numerically safe helpers shared with the value-level loss API
real softplus(real x);
real sigmoid(real x);

}  // namespace camogen::ad
