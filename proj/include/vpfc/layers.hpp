#pragma once

#include <string>
#include <vector>

#include "vpfc/nd_array.hpp"
#include "vpfc/rng.hpp"

namespace vpfc::nn {

// A trainable tensor with its gradient and Adam moment accumulators.
struct Parameter {
    std::string name;
    NdArray value;
    NdArray grad;
    NdArray adam_m;
    NdArray adam_v;

    Parameter() = default;
    Parameter(std::string n, NdArray v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(value.shape()),
          adam_m(value.shape()),
          adam_v(value.shape()) {}

    void zero_grad() { grad.array().setZero(); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Adam with bias correction and decoupled weight decay (lr * decay * value per step).
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void step(const std::vector<Parameter*>& params);
    long steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    long t_ = 0;
};

// Uniform init scaled by fan-in/fan-out (limit sqrt(6 / (fan_in + fan_out))),
// filled in row-major order from the run RNG.
NdArray glorot_uniform(std::vector<Index> shape, Index fan_in, Index fan_out, Rng& rng);

// ---- elementwise / loss ----

NdArray relu_forward(const NdArray& x);
NdArray relu_backward(const NdArray& x, const NdArray& grad_out);

double mse_loss(const NdArray& pred, const NdArray& target);
NdArray mse_loss_backward(const NdArray& pred, const NdArray& target);

// ---- fully connected: y = x W^T + b ----
// x is [B, D] (or [D], treated as B = 1); w is [O, D]; b is [O].

NdArray fc_forward(const NdArray& x, const NdArray& w, const NdArray& b);

struct FcGrads {
    NdArray gx, gw, gb;
};
FcGrads fc_backward(const NdArray& x, const NdArray& w, const NdArray& grad_out);

// ---- 2-D convolution (cross-correlation), single sample ----
// x is [C, H, W]; w is [OC, IC, K, K]; b is [OC]. Zero padding, square stride.
// Output spatial size: floor((H + 2 pad - K) / stride) + 1.

NdArray conv2d_forward(const NdArray& x, const NdArray& w, const NdArray& b, int stride, int pad);

struct Conv2dGrads {
    NdArray gx, gw, gb;
};
Conv2dGrads conv2d_backward(const NdArray& x, const NdArray& w, int stride, int pad,
                            const NdArray& grad_out);

// ---- global average pool: [C, H, W] -> [C] ----

NdArray global_avg_pool_forward(const NdArray& x);
NdArray global_avg_pool_backward(const std::vector<Index>& x_shape, const NdArray& grad_out);

// ---- LSTM cell, batched ----
// x is [B, D]; h, c are [B, H]. Weight rows are gate blocks (input, forget,
// candidate, output): w_ih is [4H, D], w_hh is [4H, H], bias is [4H].
// Gates: i,f,o sigmoid, g tanh; c' = f.c + i.g; h' = o.tanh(c').

struct LstmCellState {
    NdArray h, c;

    static LstmCellState zeros(Index batch, Index hidden) {
        return {NdArray({batch, hidden}), NdArray({batch, hidden})};
    }
};

// Everything the backward pass needs from one forward step.
struct LstmCellCache {
    NdArray x, h_prev, c_prev;
    NdArray i, f, g, o;  // post-activation gates, [B, H]
    NdArray c_new, tanh_c_new, h_new;
};

LstmCellCache lstm_cell_forward(const NdArray& x, const LstmCellState& state, const NdArray& w_ih,
                                const NdArray& w_hh, const NdArray& bias);

struct LstmCellGrads {
    NdArray gx, gh_prev, gc_prev;
    NdArray gw_ih, gw_hh, gb;
};
LstmCellGrads lstm_cell_backward(const LstmCellCache& cache, const NdArray& w_ih,
                                 const NdArray& w_hh, const NdArray& grad_h,
                                 const NdArray& grad_c);

}  // namespace vpfc::nn
