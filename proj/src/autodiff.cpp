#include "camogen/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace camogen::ad {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

real softplus(real x) {
    if (x > 40.0) return x;
    if (x < -40.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

real sigmoid(real x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    real e = std::exp(x);
    return e / (1.0 + e);
}

void Graph::backward(const Var& loss) {
    if (loss->value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    if (!grad_enabled_) throw std::logic_error("backward: gradients disabled on this graph");
    loss->ensure_grad()[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node& n = **it;
        if (n.requires_grad && n.grad.defined() && n.backward) n.backward(n);
    }
}

namespace {

void check_rank3(const Tensor& t, const char* who) {
    if (t.rank() != 3) throw std::invalid_argument(std::string(who) + ": expected rank-3 tensor");
}

// Column buffer mapping between a (C,Hs,Ws) spatial tensor and the taps of a
// k*k window anchored on a (Hp,Wp) position grid: position (py,px) and tap
// (u,v) address source pixel (py*stride - pad + u, px*stride - pad + v).
// cols is row-major (C*k*k, Hp*Wp). Serves conv forward (gather from input),
// conv backward (scatter into input grad) and both directions of the
// transposed conv.
void gather_cols(const real* src, int C, int Hs, int Ws, int k, int stride, int pad, int Hp,
                 int Wp, real* cols) {
    const int64_t npos = static_cast<int64_t>(Hp) * Wp;
    for (int c = 0; c < C; ++c) {
        const real* plane = src + static_cast<int64_t>(c) * Hs * Ws;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                real* row = cols + ((static_cast<int64_t>(c) * k + u) * k + v) * npos;
                for (int py = 0; py < Hp; ++py) {
                    int sy = py * stride - pad + u;
                    real* out = row + static_cast<int64_t>(py) * Wp;
                    if (sy < 0 || sy >= Hs) {
                        std::fill(out, out + Wp, real(0));
                        continue;
                    }
                    const real* srow = plane + static_cast<int64_t>(sy) * Ws;
                    for (int px = 0; px < Wp; ++px) {
                        int sx = px * stride - pad + v;
                        out[px] = (sx >= 0 && sx < Ws) ? srow[sx] : real(0);
                    }
                }
            }
        }
    }
}

void scatter_cols_add(real* dst, int C, int Hs, int Ws, int k, int stride, int pad, int Hp,
                      int Wp, const real* cols) {
    const int64_t npos = static_cast<int64_t>(Hp) * Wp;
    for (int c = 0; c < C; ++c) {
        real* plane = dst + static_cast<int64_t>(c) * Hs * Ws;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                const real* row = cols + ((static_cast<int64_t>(c) * k + u) * k + v) * npos;
                for (int py = 0; py < Hp; ++py) {
                    int sy = py * stride - pad + u;
                    if (sy < 0 || sy >= Hs) continue;
                    real* srow = plane + static_cast<int64_t>(sy) * Ws;
                    const real* in = row + static_cast<int64_t>(py) * Wp;
                    for (int px = 0; px < Wp; ++px) {
                        int sx = px * stride - pad + v;
                        if (sx >= 0 && sx < Ws) srow[sx] += in[px];
                    }
                }
            }
        }
    }
}

int conv_out_size(int in, int k, int stride, int pad) {
    int out = (in + 2 * pad - k) / stride + 1;
    if (out <= 0) throw std::invalid_argument("conv: output size would be non-positive");
    return out;
}

}  // namespace

Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad) {
    check_rank3(x->value, "conv2d");
    if (w->value.rank() != 4) throw std::invalid_argument("conv2d: weight must be (Cout,Cin,k,k)");
    const int Cin = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int Cout = w->value.dim(0), k = w->value.dim(2);
    if (w->value.dim(1) != Cin) throw std::invalid_argument("conv2d: channel mismatch");
    if (b->value.numel() != Cout) throw std::invalid_argument("conv2d: bias size mismatch");
    const int Ho = conv_out_size(H, k, stride, pad);
    const int Wo = conv_out_size(W, k, stride, pad);
    const int64_t npos = static_cast<int64_t>(Ho) * Wo;
    const int ck2 = Cin * k * k;

    AlignedVec cols(static_cast<size_t>(ck2) * npos);
    gather_cols(x->value.data(), Cin, H, W, k, stride, pad, Ho, Wo, cols.data());

    Tensor out({Cout, Ho, Wo});
    {
        CMapM wm(w->value.data(), Cout, ck2);
        CMapM cm(cols.data(), ck2, npos);
        MapM om(out.data(), Cout, npos);
        om.noalias() = wm * cm;
        for (int co = 0; co < Cout; ++co) om.row(co).array() += b->value[co];
    }

    auto bwd = [stride, pad, Cin, H, W, Cout, k, Ho, Wo, ck2, npos](Node& n) {
        Var xv = n.parents[0], wv = n.parents[1], bv = n.parents[2];
        CMapM dy(n.grad.data(), Cout, npos);
        if (bv->requires_grad) {
            Tensor& db = bv->ensure_grad();
            for (int co = 0; co < Cout; ++co) db[co] += dy.row(co).sum();
        }
        if (wv->requires_grad) {
            AlignedVec cols(static_cast<size_t>(ck2) * npos);
            gather_cols(xv->value.data(), Cin, H, W, k, stride, pad, Ho, Wo, cols.data());
            CMapM cm(cols.data(), ck2, npos);
            MapM dw(wv->ensure_grad().data(), Cout, ck2);
            dw.noalias() += dy * cm.transpose();
        }
        if (xv->requires_grad) {
            AlignedVec dcols(static_cast<size_t>(ck2) * npos);
            MapM dc(dcols.data(), ck2, npos);
            CMapM wm(wv->value.data(), Cout, ck2);
            dc.noalias() = wm.transpose() * dy;
            scatter_cols_add(xv->ensure_grad().data(), Cin, H, W, k, stride, pad, Ho, Wo,
                             dcols.data());
        }
    };
    return g.op(std::move(out), {x, w, b}, bwd);
}

Var conv_transpose2d(Graph& g, Var x, Var w, Var b, int stride, int pad, int out_pad) {
    check_rank3(x->value, "conv_transpose2d");
    if (w->value.rank() != 4)
        throw std::invalid_argument("conv_transpose2d: weight must be (Cin,Cout,k,k)");
    const int Cin = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int Cout = w->value.dim(1), k = w->value.dim(2);
    if (w->value.dim(0) != Cin) throw std::invalid_argument("conv_transpose2d: channel mismatch");
    if (b->value.numel() != Cout)
        throw std::invalid_argument("conv_transpose2d: bias size mismatch");
    const int Ho = (H - 1) * stride - 2 * pad + k + out_pad;
    const int Wo = (W - 1) * stride - 2 * pad + k + out_pad;
    if (Ho <= 0 || Wo <= 0)
        throw std::invalid_argument("conv_transpose2d: output size would be non-positive");
    const int64_t npos = static_cast<int64_t>(H) * W;
    const int ck2 = Cout * k * k;

    // weight viewed as (Cout*k*k, Cin): rows keyed by (co,u,v)
    AlignedVec wmat(static_cast<size_t>(ck2) * Cin);
    {
        const real* wp = w->value.data();
        for (int ci = 0; ci < Cin; ++ci)
            for (int co = 0; co < Cout; ++co)
                for (int t = 0; t < k * k; ++t)
                    wmat[(static_cast<size_t>(co) * k * k + t) * Cin + ci] =
                        wp[(static_cast<size_t>(ci) * Cout + co) * k * k + t];
    }

    Tensor out({Cout, Ho, Wo});
    {
        AlignedVec cols(static_cast<size_t>(ck2) * npos);
        CMapM wm(wmat.data(), ck2, Cin);
        CMapM xm(x->value.data(), Cin, npos);
        MapM cm(cols.data(), ck2, npos);
        cm.noalias() = wm * xm;
        scatter_cols_add(out.data(), Cout, Ho, Wo, k, stride, pad, H, W, cols.data());
        real* op_ = out.data();
        for (int co = 0; co < Cout; ++co) {
            real bias = b->value[co];
            real* plane = op_ + static_cast<int64_t>(co) * Ho * Wo;
            for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) plane[i] += bias;
        }
    }

    auto bwd = [stride, pad, Cin, H, W, Cout, k, Ho, Wo, ck2, npos, wmat](Node& n) {
        Var xv = n.parents[0], wv = n.parents[1], bv = n.parents[2];
        if (bv->requires_grad) {
            Tensor& db = bv->ensure_grad();
            const real* dyp = n.grad.data();
            for (int co = 0; co < Cout; ++co) {
                real s = 0;
                const real* plane = dyp + static_cast<int64_t>(co) * Ho * Wo;
                for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) s += plane[i];
                db[co] += s;
            }
        }
        AlignedVec dycols(static_cast<size_t>(ck2) * npos);
        gather_cols(n.grad.data(), Cout, Ho, Wo, k, stride, pad, H, W, dycols.data());
        CMapM dyc(dycols.data(), ck2, npos);
        if (xv->requires_grad) {
            CMapM wm(wmat.data(), ck2, Cin);
            MapM dx(xv->ensure_grad().data(), Cin, npos);
            dx.noalias() += wm.transpose() * dyc;
        }
        if (wv->requires_grad) {
            MatRM dwm(ck2, Cin);
            CMapM xm(xv->value.data(), Cin, npos);
            dwm.noalias() = dyc * xm.transpose();
            real* dwp = wv->ensure_grad().data();
            for (int ci = 0; ci < Cin; ++ci)
                for (int co = 0; co < Cout; ++co)
                    for (int t = 0; t < k * k; ++t)
                        dwp[(static_cast<size_t>(ci) * Cout + co) * k * k + t] +=
                            dwm(co * k * k + t, ci);
        }
    };
    return g.op(std::move(out), {x, w, b}, bwd);
}

namespace {
inline int reflect_index(int t, int n) {
    // mirror tiling without repeating the edge sample; defined for any pad
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    t = ((t % period) + period) % period;
    return t < n ? t : period - t;
}
}  // namespace

Var pad_reflect(Graph& g, Var x, int p) {
    check_rank3(x->value, "pad_reflect");
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    if (p < 0) throw std::invalid_argument("pad_reflect: negative padding");
    Tensor out({C, H + 2 * p, W + 2 * p});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H + 2 * p; ++y) {
            int sy = reflect_index(y - p, H);
            for (int xx = 0; xx < W + 2 * p; ++xx)
                out.at(c, y, xx) = x->value.at(c, sy, reflect_index(xx - p, W));
        }
    auto bwd = [p, C, H, W](Node& n) {
        Var xv = n.parents[0];
        if (!xv->requires_grad) return;
        Tensor& dx = xv->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H + 2 * p; ++y) {
                int sy = reflect_index(y - p, H);
                for (int xx = 0; xx < W + 2 * p; ++xx)
                    dx.at(c, sy, reflect_index(xx - p, W)) += n.grad.at(c, y, xx);
            }
    };
    return g.op(std::move(out), {x}, bwd);
}

Var instance_norm(Graph& g, Var x, Var gamma, Var beta, real eps) {
    check_rank3(x->value, "instance_norm");
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    if (gamma->value.numel() != C || beta->value.numel() != C)
        throw std::invalid_argument("instance_norm: affine size mismatch");
    const int64_t m = static_cast<int64_t>(H) * W;
    Tensor out({C, H, W});
    std::vector<real> mean(C), istd(C);
    for (int c = 0; c < C; ++c) {
        const real* xp = x->value.data() + c * m;
        real mu = 0;
        for (int64_t i = 0; i < m; ++i) mu += xp[i];
        mu /= static_cast<real>(m);
        real var = 0;
        for (int64_t i = 0; i < m; ++i) {
            real d = xp[i] - mu;
            var += d * d;
        }
        var /= static_cast<real>(m);
        mean[c] = mu;
        istd[c] = 1.0 / std::sqrt(var + eps);
        real* op_ = out.data() + c * m;
        const real ga = gamma->value[c], be = beta->value[c];
        for (int64_t i = 0; i < m; ++i) op_[i] = ga * (xp[i] - mu) * istd[c] + be;
    }
    auto bwd = [C, m, mean, istd](Node& n) {
        Var xv = n.parents[0], gv = n.parents[1], bv = n.parents[2];
        for (int c = 0; c < C; ++c) {
            const real* xp = xv->value.data() + c * m;
            const real* dyp = n.grad.data() + c * m;
            const real mu = mean[c], is = istd[c];
            real sum_dy = 0, sum_dy_xhat = 0;
            for (int64_t i = 0; i < m; ++i) {
                real xhat = (xp[i] - mu) * is;
                sum_dy += dyp[i];
                sum_dy_xhat += dyp[i] * xhat;
            }
            if (gv->requires_grad) gv->ensure_grad()[c] += sum_dy_xhat;
            if (bv->requires_grad) bv->ensure_grad()[c] += sum_dy;
            if (xv->requires_grad) {
                real* dxp = xv->ensure_grad().data() + c * m;
                const real ga = gv->value[c];
                const real mdy = sum_dy / static_cast<real>(m);
                const real mdyx = sum_dy_xhat / static_cast<real>(m);
                for (int64_t i = 0; i < m; ++i) {
                    real xhat = (xp[i] - mu) * is;
                    dxp[i] += ga * is * (dyp[i] - mdy - xhat * mdyx);
                }
            }
        }
    };
    return g.op(std::move(out), {x, gamma, beta}, bwd);
}

namespace {
Var pointwise(Graph& g, Var x, real slope, bool is_tanh) {
    const int64_t n = x->value.numel();
    Tensor out(x->value.shape());
    const real* xp = x->value.data();
    real* op_ = out.data();
    if (is_tanh)
        for (int64_t i = 0; i < n; ++i) op_[i] = std::tanh(xp[i]);
    else
        for (int64_t i = 0; i < n; ++i) op_[i] = xp[i] > 0 ? xp[i] : slope * xp[i];
    auto bwd = [n, slope, is_tanh](Node& nd) {
        Var xv = nd.parents[0];
        if (!xv->requires_grad) return;
        real* dx = xv->ensure_grad().data();
        const real* dy = nd.grad.data();
        if (is_tanh) {
            const real* y = nd.value.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
        } else {
            const real* xp = xv->value.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (xp[i] > 0 ? 1.0 : slope);
        }
    };
    return g.op(std::move(out), {x}, bwd);
}
}  // namespace

Var relu(Graph& g, Var x) { return pointwise(g, x, 0.0, false); }
Var leaky_relu(Graph& g, Var x, real slope) { return pointwise(g, x, slope, false); }
Var tanh_act(Graph& g, Var x) { return pointwise(g, x, 0.0, true); }

Var avg_pool(Graph& g, Var x, int k, int stride, int pad) {
    check_rank3(x->value, "avg_pool");
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int Ho = conv_out_size(H, k, stride, pad);
    const int Wo = conv_out_size(W, k, stride, pad);
    Tensor out({C, Ho, Wo});
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                real s = 0;
                int cnt = 0;
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v) {
                        int sy = oy * stride - pad + u, sx = ox * stride - pad + v;
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                        s += x->value.at(c, sy, sx);
                        ++cnt;
                    }
                out.at(c, oy, ox) = s / static_cast<real>(cnt);
            }
    auto bwd = [k, stride, pad, C, H, W, Ho, Wo](Node& n) {
        Var xv = n.parents[0];
        if (!xv->requires_grad) return;
        Tensor& dx = xv->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    int cnt = 0;
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v) {
                            int sy = oy * stride - pad + u, sx = ox * stride - pad + v;
                            if (sy >= 0 && sy < H && sx >= 0 && sx < W) ++cnt;
                        }
                    real gshare = n.grad.at(c, oy, ox) / static_cast<real>(cnt);
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v) {
                            int sy = oy * stride - pad + u, sx = ox * stride - pad + v;
                            if (sy >= 0 && sy < H && sx >= 0 && sx < W)
                                dx.at(c, sy, sx) += gshare;
                        }
                }
    };
    return g.op(std::move(out), {x}, bwd);
}

Var max_pool(Graph& g, Var x, int k, int stride) {
    check_rank3(x->value, "max_pool");
    const int C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int Ho = (H - k) / stride + 1;
    const int Wo = (W - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("max_pool: input too small");
    Tensor out({C, Ho, Wo});
    std::vector<int64_t> argmax(static_cast<size_t>(C) * Ho * Wo);
    int64_t oi = 0;
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox, ++oi) {
                real best = -std::numeric_limits<real>::infinity();
                int64_t bidx = 0;
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v) {
                        int sy = oy * stride + u, sx = ox * stride + v;
                        real val = x->value.at(c, sy, sx);
                        if (val > best) {
                            best = val;
                            bidx = (static_cast<int64_t>(c) * H + sy) * W + sx;
                        }
                    }
                out.at(c, oy, ox) = best;
                argmax[oi] = bidx;
            }
    auto bwd = [argmax](Node& n) {
        Var xv = n.parents[0];
        if (!xv->requires_grad) return;
        Tensor& dx = xv->ensure_grad();
        const real* dy = n.grad.data();
        for (size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
    };
    return g.op(std::move(out), {x}, bwd);
}

Var global_avg_pool(Graph& g, Var x) {
    check_rank3(x->value, "global_avg_pool");
    const int C = x->value.dim(0);
    const int64_t m = static_cast<int64_t>(x->value.dim(1)) * x->value.dim(2);
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        const real* xp = x->value.data() + c * m;
        real s = 0;
        for (int64_t i = 0; i < m; ++i) s += xp[i];
        out[c] = s / static_cast<real>(m);
    }
    auto bwd = [C, m](Node& n) {
        Var xv = n.parents[0];
        if (!xv->requires_grad) return;
        real* dx = xv->ensure_grad().data();
        for (int c = 0; c < C; ++c) {
            real gshare = n.grad[c] / static_cast<real>(m);
            real* plane = dx + c * m;
            for (int64_t i = 0; i < m; ++i) plane[i] += gshare;
        }
    };
    return g.op(std::move(out), {x}, bwd);
}

Var linear(Graph& g, Var x, Var w, Var b) {
    if (x->value.rank() != 1 || w->value.rank() != 2)
        throw std::invalid_argument("linear: expected x (F) and w (O,F)");
    const int F = x->value.dim(0), O = w->value.dim(0);
    if (w->value.dim(1) != F || b->value.numel() != O)
        throw std::invalid_argument("linear: shape mismatch");
    Tensor out({O});
    CMapM wm(w->value.data(), O, F);
    Eigen::Map<const Eigen::VectorXd> xv(x->value.data(), F);
    Eigen::Map<Eigen::VectorXd> ov(out.data(), O);
    ov.noalias() = wm * xv;
    for (int o = 0; o < O; ++o) out[o] += b->value[o];
    auto bwd = [F, O](Node& n) {
        Var xv_ = n.parents[0], wv = n.parents[1], bv = n.parents[2];
        Eigen::Map<const Eigen::VectorXd> dy(n.grad.data(), O);
        if (bv->requires_grad) {
            Eigen::Map<Eigen::VectorXd> db(bv->ensure_grad().data(), O);
            db += dy;
        }
        if (wv->requires_grad) {
            MapM dw(wv->ensure_grad().data(), O, F);
            Eigen::Map<const Eigen::VectorXd> xval(xv_->value.data(), F);
            dw.noalias() += dy * xval.transpose();
        }
        if (xv_->requires_grad) {
            CMapM wm(wv->value.data(), O, F);
            Eigen::Map<Eigen::VectorXd> dx(xv_->ensure_grad().data(), F);
            dx.noalias() += wm.transpose() * dy;
        }
    };
    return g.op(std::move(out), {x, w, b}, bwd);
}

Var concat_channels(Graph& g, Var a, Var b) {
    check_rank3(a->value, "concat_channels");
    check_rank3(b->value, "concat_channels");
    if (a->value.dim(1) != b->value.dim(1) || a->value.dim(2) != b->value.dim(2))
        throw std::invalid_argument("concat_channels: spatial size mismatch");
    const int Ca = a->value.dim(0), Cb = b->value.dim(0);
    const int H = a->value.dim(1), W = a->value.dim(2);
    const int64_t na = a->value.numel(), nb = b->value.numel();
    Tensor out({Ca + Cb, H, W});
    std::copy(a->value.data(), a->value.data() + na, out.data());
    std::copy(b->value.data(), b->value.data() + nb, out.data() + na);
    auto bwd = [na, nb](Node& n) {
        Var av = n.parents[0], bv = n.parents[1];
        const real* dy = n.grad.data();
        if (av->requires_grad) {
            real* da = av->ensure_grad().data();
            for (int64_t i = 0; i < na; ++i) da[i] += dy[i];
        }
        if (bv->requires_grad) {
            real* db = bv->ensure_grad().data();
            for (int64_t i = 0; i < nb; ++i) db[i] += dy[na + i];
        }
    };
    return g.op(std::move(out), {a, b}, bwd);
}

namespace {
Var elementwise2(Graph& g, Var a, Var b, int mode) {  // 0 add, 1 sub, 2 mul
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("elementwise op: shape mismatch");
    const int64_t n = a->value.numel();
    Tensor out(a->value.shape());
    const real* ap = a->value.data();
    const real* bp = b->value.data();
    real* op_ = out.data();
    for (int64_t i = 0; i < n; ++i)
        op_[i] = mode == 0 ? ap[i] + bp[i] : mode == 1 ? ap[i] - bp[i] : ap[i] * bp[i];
    auto bwd = [n, mode](Node& nd) {
        Var av = nd.parents[0], bv = nd.parents[1];
        const real* dy = nd.grad.data();
        if (av->requires_grad) {
            real* da = av->ensure_grad().data();
            if (mode == 2) {
                const real* bp = bv->value.data();
                for (int64_t i = 0; i < n; ++i) da[i] += dy[i] * bp[i];
            } else
                for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
        }
        if (bv->requires_grad) {
            real* db = bv->ensure_grad().data();
            if (mode == 2) {
                const real* ap = av->value.data();
                for (int64_t i = 0; i < n; ++i) db[i] += dy[i] * ap[i];
            } else if (mode == 1)
                for (int64_t i = 0; i < n; ++i) db[i] -= dy[i];
            else
                for (int64_t i = 0; i < n; ++i) db[i] += dy[i];
        }
    };
    return g.op(std::move(out), {a, b}, bwd);
}
}  // namespace

Var add(Graph& g, Var a, Var b) { return elementwise2(g, a, b, 0); }
Var sub(Graph& g, Var a, Var b) { return elementwise2(g, a, b, 1); }
Var mul(Graph& g, Var a, Var b) { return elementwise2(g, a, b, 2); }

Var scale(Graph& g, Var x, real s) {
    const int64_t n = x->value.numel();
    Tensor out(x->value.shape());
    const real* xp = x->value.data();
    real* op_ = out.data();
    for (int64_t i = 0; i < n; ++i) op_[i] = xp[i] * s;
    auto bwd = [n, s](Node& nd) {
        Var xv = nd.parents[0];
        if (!xv->requires_grad) return;
        real* dx = xv->ensure_grad().data();
        const real* dy = nd.grad.data();
        for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * s;
    };
    return g.op(std::move(out), {x}, bwd);
}

Var mean_all(Graph& g, Var x) {
    const int64_t n = x->value.numel();
    real s = 0;
    const real* xp = x->value.data();
    for (int64_t i = 0; i < n; ++i) s += xp[i];
    auto bwd = [n](Node& nd) {
        Var xv = nd.parents[0];
        if (!xv->requires_grad) return;
        real gshare = nd.grad[0] / static_cast<real>(n);
        real* dx = xv->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) dx[i] += gshare;
    };
    return g.op(Tensor::scalar(s / static_cast<real>(n)), {x}, bwd);
}

Var mean_abs_diff(Graph& g, Var a, Var b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("mean_abs_diff: shape mismatch");
    const int64_t n = a->value.numel();
    real s = 0;
    const real* ap = a->value.data();
    const real* bp = b->value.data();
    for (int64_t i = 0; i < n; ++i) s += std::abs(ap[i] - bp[i]);
    auto bwd = [n](Node& nd) {
        Var av = nd.parents[0], bv = nd.parents[1];
        const real g0 = nd.grad[0] / static_cast<real>(n);
        const real* ap = av->value.data();
        const real* bp = bv->value.data();
        for (int64_t i = 0; i < n; ++i) {
            real d = ap[i] - bp[i];
            real sgn = d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0;
            if (av->requires_grad) av->ensure_grad()[i] += g0 * sgn;
            if (bv->requires_grad) bv->ensure_grad()[i] -= g0 * sgn;
        }
    };
    return g.op(Tensor::scalar(s / static_cast<real>(n)), {a, b}, bwd);
}

Var mean_sq_diff(Graph& g, Var a, Var b) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument("mean_sq_diff: shape mismatch");
    const int64_t n = a->value.numel();
    real s = 0;
    const real* ap = a->value.data();
    const real* bp = b->value.data();
    for (int64_t i = 0; i < n; ++i) {
        real d = ap[i] - bp[i];
        s += d * d;
    }
    auto bwd = [n](Node& nd) {
        Var av = nd.parents[0], bv = nd.parents[1];
        const real g0 = 2.0 * nd.grad[0] / static_cast<real>(n);
        const real* ap = av->value.data();
        const real* bp = bv->value.data();
        for (int64_t i = 0; i < n; ++i) {
            real d = ap[i] - bp[i];
            if (av->requires_grad) av->ensure_grad()[i] += g0 * d;
            if (bv->requires_grad) bv->ensure_grad()[i] -= g0 * d;
        }
    };
    return g.op(Tensor::scalar(s / static_cast<real>(n)), {a, b}, bwd);
}

namespace {
Var mean_softplus_impl(Graph& g, Var x, real sign) {
    const int64_t n = x->value.numel();
    real s = 0;
    const real* xp = x->value.data();
    for (int64_t i = 0; i < n; ++i) s += softplus(sign * xp[i]);
    auto bwd = [n, sign](Node& nd) {
        Var xv = nd.parents[0];
        if (!xv->requires_grad) return;
        const real g0 = nd.grad[0] / static_cast<real>(n);
        const real* xp = xv->value.data();
        real* dx = xv->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) dx[i] += g0 * sign * sigmoid(sign * xp[i]);
    };
    return g.op(Tensor::scalar(s / static_cast<real>(n)), {x}, bwd);
}
}  // namespace

Var mean_softplus(Graph& g, Var x) { return mean_softplus_impl(g, x, 1.0); }
Var mean_softplus_neg(Graph& g, Var x) { return mean_softplus_impl(g, x, -1.0); }

Var weighted_sum(Graph& g, const std::vector<Var>& xs, const std::vector<real>& ws) {
    if (xs.size() != ws.size() || xs.empty())
        throw std::invalid_argument("weighted_sum: size mismatch");
    real s = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i]->value.numel() != 1)
            throw std::invalid_argument("weighted_sum: inputs must be scalars");
        s += ws[i] * xs[i]->value[0];
    }
    auto wcopy = ws;
    auto bwd = [wcopy](Node& nd) {
        for (size_t i = 0; i < nd.parents.size(); ++i)
            if (nd.parents[i]->requires_grad)
                nd.parents[i]->ensure_grad()[0] += nd.grad[0] * wcopy[i];
    };
    return g.op(Tensor::scalar(s), xs, bwd);
}

Var class_nll(Graph& g, Var logits, int index, real floor_eps) {
    const int n = static_cast<int>(logits->value.numel());
    if (index < 0 || index >= n) throw std::invalid_argument("class_nll: index out of range");
    const real* zp = logits->value.data();
    real zmax = zp[0];
    for (int i = 1; i < n; ++i) zmax = std::max(zmax, zp[i]);
    real se = 0;
    for (int i = 0; i < n; ++i) se += std::exp(zp[i] - zmax);
    const real lse = zmax + std::log(se);
    std::vector<real> p(n);
    for (int i = 0; i < n; ++i) p[i] = std::exp(zp[i] - lse);
    const bool floored = p[index] < floor_eps;
    const real value = floored ? -std::log(floor_eps) : -(zp[index] - lse);
    auto bwd = [p, index, floored](Node& nd) {
        Var lv = nd.parents[0];
        if (!lv->requires_grad || floored) return;
        real* dz = lv->ensure_grad().data();
        const real g0 = nd.grad[0];
        for (size_t i = 0; i < p.size(); ++i)
            dz[i] += g0 * (p[i] - (static_cast<int>(i) == index ? 1.0 : 0.0));
    };
    return g.op(Tensor::scalar(value), {logits}, bwd);
}

}  // namespace camogen::ad
