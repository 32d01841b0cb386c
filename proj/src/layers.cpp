#include "vpfc/layers.hpp"

#include <cmath>

namespace vpfc::nn {

namespace {

// [B, D] view; a rank-1 array counts as one row.
ConstMatMap as_batch(const NdArray& x) {
    if (x.rank() == 1) return x.mat(1, x.dim(0));
    if (x.rank() == 2) return x.mat2d();
    throw ShapeMismatch("expected rank 1 or 2, got " + x.shape_string());
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& a) { return 1.0 / (1.0 + (-a).exp()); }

}  // namespace

void Adam::step(const std::vector<Parameter*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
        auto& m = p->adam_m.array();
        auto& v = p->adam_v.array();
        const auto& g = p->grad.array();
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
        const Eigen::ArrayXd m_hat = m / bc1;
        const Eigen::ArrayXd v_hat = v / bc2;
        auto& value = p->value.array();
        value -= cfg_.lr * m_hat / (v_hat.sqrt() + cfg_.eps);
        if (cfg_.weight_decay != 0.0) value -= cfg_.lr * cfg_.weight_decay * value;
    }
}

NdArray glorot_uniform(std::vector<Index> shape, Index fan_in, Index fan_out, Rng& rng) {
    NdArray a(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Index i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-limit, limit);
    return a;
}

NdArray relu_forward(const NdArray& x) {
    NdArray y = x;
    y.array() = y.array().max(0.0);
    return y;
}

NdArray relu_backward(const NdArray& x, const NdArray& grad_out) {
    require_same_shape(x, grad_out, "relu_backward");
    NdArray gx = grad_out;
    gx.array() *= (x.array() > 0.0).cast<double>();
    return gx;
}

double mse_loss(const NdArray& pred, const NdArray& target) {
    require_same_shape(pred, target, "mse_loss");
    return (pred.array() - target.array()).square().mean();
}

NdArray mse_loss_backward(const NdArray& pred, const NdArray& target) {
    require_same_shape(pred, target, "mse_loss_backward");
    NdArray g = pred;
    g.array() = 2.0 * (pred.array() - target.array()) / static_cast<double>(pred.numel());
    return g;
}

NdArray fc_forward(const NdArray& x, const NdArray& w, const NdArray& b) {
    const auto xm = as_batch(x);
    const auto wm = w.mat2d();  // [O, D]
    if (xm.cols() != wm.cols())
        throw ShapeMismatch("fc_forward: x " + x.shape_string() + " vs w " + w.shape_string());
    if (b.numel() != wm.rows()) throw ShapeMismatch("fc_forward: bias " + b.shape_string());
    NdArray y({xm.rows(), wm.rows()});
    y.mat2d() = xm * wm.transpose();
    y.mat2d().rowwise() += b.vec().transpose();
    if (x.rank() == 1) return y.reshaped({wm.rows()});
    return y;
}

FcGrads fc_backward(const NdArray& x, const NdArray& w, const NdArray& grad_out) {
    const auto xm = as_batch(x);
    const auto wm = w.mat2d();
    const auto gm = as_batch(grad_out);
    if (gm.rows() != xm.rows() || gm.cols() != wm.rows())
        throw ShapeMismatch("fc_backward: grad " + grad_out.shape_string());
    FcGrads grads{NdArray(x.shape()), NdArray(w.shape()), NdArray({wm.rows()})};
    grads.gx.mat(xm.rows(), xm.cols()) = gm * wm;
    grads.gw.mat2d() = gm.transpose() * xm;
    grads.gb.vec() = gm.colwise().sum().transpose();
    return grads;
}

namespace {

struct ConvDims {
    Index ic, h, w, oc, k, oh, ow;
};

ConvDims conv_dims(const NdArray& x, const NdArray& w, int stride, int pad) {
    if (x.rank() != 3) throw ShapeMismatch("conv2d: input " + x.shape_string());
    if (w.rank() != 4 || w.dim(2) != w.dim(3))
        throw ShapeMismatch("conv2d: weights " + w.shape_string());
    if (x.dim(0) != w.dim(1))
        throw ShapeMismatch("conv2d: channels " + x.shape_string() + " vs " + w.shape_string());
    if (stride < 1) throw ShapeMismatch("conv2d: stride must be >= 1");
    ConvDims d;
    d.ic = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.oc = w.dim(0);
    d.k = w.dim(2);
    if (d.h + 2 * pad < d.k || d.w + 2 * pad < d.k)
        throw ShapeMismatch("conv2d: kernel larger than padded input");
    d.oh = (d.h + 2 * pad - d.k) / stride + 1;
    d.ow = (d.w + 2 * pad - d.k) / stride + 1;
    return d;
}

// Patch matrix [IC*K*K, OH*OW]; out-of-bounds taps are zero.
Eigen::MatrixXd im2col(const NdArray& x, const ConvDims& d, int stride, int pad) {
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(d.ic * d.k * d.k, d.oh * d.ow);
    for (Index ic = 0; ic < d.ic; ++ic) {
        for (Index kh = 0; kh < d.k; ++kh) {
            for (Index kw = 0; kw < d.k; ++kw) {
                const Index row = (ic * d.k + kh) * d.k + kw;
                for (Index oh = 0; oh < d.oh; ++oh) {
                    const Index ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= d.h) continue;
                    for (Index ow = 0; ow < d.ow; ++ow) {
                        const Index iw = ow * stride - pad + kw;
                        if (iw < 0 || iw >= d.w) continue;
                        cols(row, oh * d.ow + ow) = x.at(ic, ih, iw);
                    }
                }
            }
        }
    }
    return cols;
}

}  // namespace

NdArray conv2d_forward(const NdArray& x, const NdArray& w, const NdArray& b, int stride, int pad) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (b.numel() != d.oc) throw ShapeMismatch("conv2d: bias " + b.shape_string());
    const Eigen::MatrixXd cols = im2col(x, d, stride, pad);
    NdArray y({d.oc, d.oh, d.ow});
    auto ym = y.mat(d.oc, d.oh * d.ow);
    ym = w.mat(d.oc, d.ic * d.k * d.k) * cols;
    ym.colwise() += b.vec();
    return y;
}

Conv2dGrads conv2d_backward(const NdArray& x, const NdArray& w, int stride, int pad,
                            const NdArray& grad_out) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (grad_out.rank() != 3 || grad_out.dim(0) != d.oc || grad_out.dim(1) != d.oh ||
        grad_out.dim(2) != d.ow)
        throw ShapeMismatch("conv2d_backward: grad " + grad_out.shape_string());

    const Eigen::MatrixXd cols = im2col(x, d, stride, pad);
    const auto gm = grad_out.mat(d.oc, d.oh * d.ow);

    Conv2dGrads grads{NdArray(x.shape()), NdArray(w.shape()), NdArray({d.oc})};
    grads.gw.mat(d.oc, d.ic * d.k * d.k) = gm * cols.transpose();
    grads.gb.vec() = gm.rowwise().sum();

    // col2im: scatter-add patch gradients back onto the input.
    const Eigen::MatrixXd gcols = w.mat(d.oc, d.ic * d.k * d.k).transpose() * gm;
    for (Index ic = 0; ic < d.ic; ++ic) {
        for (Index kh = 0; kh < d.k; ++kh) {
            for (Index kw = 0; kw < d.k; ++kw) {
                const Index row = (ic * d.k + kh) * d.k + kw;
                for (Index oh = 0; oh < d.oh; ++oh) {
                    const Index ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= d.h) continue;
                    for (Index ow = 0; ow < d.ow; ++ow) {
                        const Index iw = ow * stride - pad + kw;
                        if (iw < 0 || iw >= d.w) continue;
                        grads.gx.at(ic, ih, iw) += gcols(row, oh * d.ow + ow);
                    }
                }
            }
        }
    }
    return grads;
}

NdArray global_avg_pool_forward(const NdArray& x) {
    if (x.rank() != 3) throw ShapeMismatch("global_avg_pool: input " + x.shape_string());
    const Index c = x.dim(0), hw = x.dim(1) * x.dim(2);
    NdArray y({c});
    y.vec() = x.mat(c, hw).rowwise().mean();
    return y;
}

NdArray global_avg_pool_backward(const std::vector<Index>& x_shape, const NdArray& grad_out) {
    if (x_shape.size() != 3) throw ShapeMismatch("global_avg_pool_backward: shape");
    const Index c = x_shape[0], hw = x_shape[1] * x_shape[2];
    if (grad_out.numel() != c) throw ShapeMismatch("global_avg_pool_backward: grad");
    NdArray gx(x_shape);
    gx.mat(c, hw).colwise() = grad_out.vec() / static_cast<double>(hw);
    return gx;
}

LstmCellCache lstm_cell_forward(const NdArray& x, const LstmCellState& state, const NdArray& w_ih,
                                const NdArray& w_hh, const NdArray& bias) {
    const auto xm = as_batch(x);
    const Index batch = xm.rows();
    const Index hidden = w_hh.dim(1);
    if (w_ih.dim(0) != 4 * hidden || w_hh.dim(0) != 4 * hidden || bias.numel() != 4 * hidden)
        throw ShapeMismatch("lstm_cell: weights " + w_ih.shape_string() + " / " +
                            w_hh.shape_string());
    if (xm.cols() != w_ih.dim(1))
        throw ShapeMismatch("lstm_cell: x " + x.shape_string() + " vs w_ih " +
                            w_ih.shape_string());
    if (state.h.dim(0) != batch || state.h.dim(1) != hidden)
        throw ShapeMismatch("lstm_cell: state " + state.h.shape_string());

    Eigen::MatrixXd gates = xm * w_ih.mat2d().transpose() + state.h.mat2d() * w_hh.mat2d().transpose();
    gates.rowwise() += bias.vec().transpose();

    LstmCellCache cc;
    cc.x = x;
    cc.h_prev = state.h;
    cc.c_prev = state.c;
    cc.i = NdArray({batch, hidden});
    cc.f = NdArray({batch, hidden});
    cc.g = NdArray({batch, hidden});
    cc.o = NdArray({batch, hidden});
    cc.i.mat2d() = sigmoid(gates.leftCols(hidden).array()).matrix();
    cc.f.mat2d() = sigmoid(gates.middleCols(hidden, hidden).array()).matrix();
    cc.g.mat2d() = gates.middleCols(2 * hidden, hidden).array().tanh().matrix();
    cc.o.mat2d() = sigmoid(gates.rightCols(hidden).array()).matrix();

    cc.c_new = NdArray({batch, hidden});
    cc.c_new.array() = cc.f.array() * state.c.array() + cc.i.array() * cc.g.array();
    cc.tanh_c_new = NdArray({batch, hidden});
    cc.tanh_c_new.array() = cc.c_new.array().tanh();
    cc.h_new = NdArray({batch, hidden});
    cc.h_new.array() = cc.o.array() * cc.tanh_c_new.array();
    return cc;
}

LstmCellGrads lstm_cell_backward(const LstmCellCache& cache, const NdArray& w_ih,
                                 const NdArray& w_hh, const NdArray& grad_h,
                                 const NdArray& grad_c) {
    require_same_shape(cache.h_new, grad_h, "lstm_cell_backward grad_h");
    require_same_shape(cache.c_new, grad_c, "lstm_cell_backward grad_c");
    const Index batch = cache.h_new.dim(0);
    const Index hidden = cache.h_new.dim(1);

    const auto& i = cache.i.array();
    const auto& f = cache.f.array();
    const auto& g = cache.g.array();
    const auto& o = cache.o.array();
    const auto& tc = cache.tanh_c_new.array();

    const Eigen::ArrayXd dc_total =
        grad_c.array() + grad_h.array() * o * (1.0 - tc.square());

    // Pre-activation gate gradients, flat [B*H] then viewed [B, H] per block.
    const Eigen::ArrayXd di = (dc_total * g) * i * (1.0 - i);
    const Eigen::ArrayXd df = (dc_total * cache.c_prev.array()) * f * (1.0 - f);
    const Eigen::ArrayXd dg = (dc_total * i) * (1.0 - g.square());
    const Eigen::ArrayXd dout = (grad_h.array() * tc) * o * (1.0 - o);

    NdArray d_gates({batch, 4 * hidden});
    auto dg_mat = d_gates.mat2d();
    dg_mat.leftCols(hidden) = ConstMatMap(di.data(), batch, hidden);
    dg_mat.middleCols(hidden, hidden) = ConstMatMap(df.data(), batch, hidden);
    dg_mat.middleCols(2 * hidden, hidden) = ConstMatMap(dg.data(), batch, hidden);
    dg_mat.rightCols(hidden) = ConstMatMap(dout.data(), batch, hidden);

    LstmCellGrads grads;
    grads.gx = NdArray(cache.x.shape());
    grads.gx.mat(as_batch(cache.x).rows(), as_batch(cache.x).cols()) = dg_mat * w_ih.mat2d();
    grads.gh_prev = NdArray({batch, hidden});
    grads.gh_prev.mat2d() = dg_mat * w_hh.mat2d();
    grads.gc_prev = NdArray({batch, hidden});
    grads.gc_prev.array() = dc_total * f;
    grads.gw_ih = NdArray(w_ih.shape());
    grads.gw_ih.mat2d() = dg_mat.transpose() * as_batch(cache.x);
    grads.gw_hh = NdArray(w_hh.shape());
    grads.gw_hh.mat2d() = dg_mat.transpose() * cache.h_prev.mat2d();
    grads.gb = NdArray({4 * hidden});
    grads.gb.vec() = dg_mat.colwise().sum().transpose();
    return grads;
}

}  // namespace vpfc::nn
