#include "trd/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace trd {
namespace ops {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

namespace {

bool any_requires_grad(std::initializer_list<const Var*> vars) {
    if (!grad_enabled()) return false;
    for (const Var* v : vars)
        if (*v && (*v)->requires_grad) return true;
    return false;
}

// ---- im2col / col2im core ---------------------------------------------------

// col is (C*k*k) x (Ho*Wo), row-major.
void im2col(const double* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* col) {
    const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
                double* row = col + ((static_cast<std::int64_t>(c) * k + di) * k + dj) * plane;
                const double* src = x + static_cast<std::int64_t>(c) * H * W;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int hi = ho * stride + di - pad;
                    if (hi < 0 || hi >= H) {
                        std::memset(row + static_cast<std::int64_t>(ho) * Wo, 0, sizeof(double) * Wo);
                        continue;
                    }
                    const double* srow = src + static_cast<std::int64_t>(hi) * W;
                    double* drow = row + static_cast<std::int64_t>(ho) * Wo;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int wi = wo * stride + dj - pad;
                        drow[wo] = (wi >= 0 && wi < W) ? srow[wi] : 0.0;
                    }
                }
            }
        }
    }
}

// scatter-add inverse of im2col
void col2im(const double* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* x) {
    const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
                const double* row = col + ((static_cast<std::int64_t>(c) * k + di) * k + dj) * plane;
                double* dst = x + static_cast<std::int64_t>(c) * H * W;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int hi = ho * stride + di - pad;
                    if (hi < 0 || hi >= H) continue;
                    double* drow = dst + static_cast<std::int64_t>(hi) * W;
                    const double* srow = row + static_cast<std::int64_t>(ho) * Wo;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int wi = wo * stride + dj - pad;
                        if (wi >= 0 && wi < W) drow[wi] += srow[wo];
                    }
                }
            }
        }
    }
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace

// ---- elementwise / structural ----------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out(a->value.shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    bool ng = any_requires_grad({&a, &b});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = {a, b};
        Var av = a, bv = b;
        y->backward_fn = [av, bv](Node& node) {
            const std::int64_t m = node.grad.size();
            if (av->requires_grad) {
                av->ensure_grad();
                for (std::int64_t i = 0; i < m; ++i) av->grad[i] += node.grad[i];
            }
            if (bv->requires_grad) {
                bv->ensure_grad();
                for (std::int64_t i = 0; i < m; ++i) bv->grad[i] += node.grad[i];
            }
        };
    }
    return y;
}

Var affine(const Var& a, double k, double c) {
    Tensor out(a->value.shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = k * a->value[i] + c;
    bool ng = any_requires_grad({&a});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = {a};
        Var av = a;
        y->backward_fn = [av, k](Node& node) {
            av->ensure_grad();
            const std::int64_t m = node.grad.size();
            for (std::int64_t i = 0; i < m; ++i) av->grad[i] += k * node.grad[i];
        };
    }
    return y;
}

Var relu(const Var& a) {
    Tensor out(a->value.shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
    bool ng = any_requires_grad({&a});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = {a};
        Var av = a;
        y->backward_fn = [av](Node& node) {
            av->ensure_grad();
            const std::int64_t m = node.grad.size();
            for (std::int64_t i = 0; i < m; ++i)
                if (av->value[i] > 0.0) av->grad[i] += node.grad[i];
        };
    }
    return y;
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw DimensionError("concat_channels: empty input list");
    const Tensor& first = xs[0]->value;
    if (first.ndim() != 4) throw DimensionError("concat_channels: expected NCHW inputs");
    int N = first.dim(0), H = first.dim(2), W = first.dim(3);
    int C = 0;
    for (const Var& x : xs) {
        if (x->value.ndim() != 4 || x->value.dim(0) != N || x->value.dim(2) != H || x->value.dim(3) != W)
            throw DimensionError("concat_channels: incompatible shapes " + shape_str(first.shape()) + " vs " +
                                 shape_str(x->value.shape()));
        C += x->value.dim(1);
    }
    Tensor out({N, C, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::int64_t coff = 0;
        for (const Var& x : xs) {
            const int ci = x->value.dim(1);
            std::memcpy(out.data() + (static_cast<std::int64_t>(n) * C + coff) * hw,
                        x->value.data() + static_cast<std::int64_t>(n) * ci * hw, sizeof(double) * ci * hw);
            coff += ci;
        }
    }
    bool ng = false;
    for (const Var& x : xs) ng = ng || any_requires_grad({&x});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = xs;
        std::vector<Var> parts = xs;
        y->backward_fn = [parts, N, C, hw](Node& node) {
            for (int n = 0; n < N; ++n) {
                std::int64_t coff = 0;
                for (const Var& x : parts) {
                    const int ci = x->value.dim(1);
                    if (x->requires_grad) {
                        x->ensure_grad();
                        const double* g = node.grad.data() + (static_cast<std::int64_t>(n) * C + coff) * hw;
                        double* dst = x->grad.data() + static_cast<std::int64_t>(n) * ci * hw;
                        for (std::int64_t i = 0; i < ci * hw; ++i) dst[i] += g[i];
                    }
                    coff += ci;
                }
            }
        };
    }
    return y;
}

Var mean_all(const Var& a) {
    const std::int64_t n = a->value.size();
    Tensor out({1}, a->value.sum() / static_cast<double>(n));
    bool ng = any_requires_grad({&a});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = {a};
        Var av = a;
        y->backward_fn = [av, n](Node& node) {
            av->ensure_grad();
            const double g = node.grad[0] / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) av->grad[i] += g;
        };
    }
    return y;
}

Var add_scalars(const std::vector<Var>& xs) {
    double s = 0.0;
    bool ng = false;
    for (const Var& x : xs) {
        if (x->value.size() != 1) throw DimensionError("add_scalars: non-scalar input");
        s += x->value[0];
        ng = ng || any_requires_grad({&x});
    }
    Var y = make_var(Tensor::scalar(s), ng);
    if (ng) {
        y->parents = xs;
        std::vector<Var> parts = xs;
        y->backward_fn = [parts](Node& node) {
            for (const Var& x : parts) {
                if (!x->requires_grad) continue;
                x->ensure_grad();
                x->grad[0] += node.grad[0];
            }
        };
    }
    return y;
}

// ---- conv2d -----------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& X = x->value;
    const Tensor& W = w->value;
    if (X.ndim() != 4 || W.ndim() != 4) throw DimensionError("conv2d: expected 4-d input and weight");
    const int N = X.dim(0), Ci = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    const int Co = W.dim(0), k = W.dim(2);
    if (W.dim(1) != Ci || W.dim(3) != k)
        throw DimensionError("conv2d: weight " + shape_str(W.shape()) + " does not match input channels " +
                             std::to_string(Ci));
    const int Ho = conv_out(H, k, stride, pad), Wo = conv_out(Wd, k, stride, pad);
    if (Ho <= 0 || Wo <= 0) throw DimensionError("conv2d: output would be empty");
    const std::int64_t K = static_cast<std::int64_t>(Ci) * k * k;
    const std::int64_t P = static_cast<std::int64_t>(Ho) * Wo;

    const bool ng = any_requires_grad({&x, &w, &b});
    Tensor out({N, Co, Ho, Wo});
    // column buffers are kept for the backward pass only when needed
    auto cols = ng ? std::make_shared<AlignedVec>(static_cast<size_t>(N) * K * P)
                   : std::make_shared<AlignedVec>(static_cast<size_t>(K) * P);

    CMapRM Wm(W.data(), Co, K);
    for (int n = 0; n < N; ++n) {
        double* col = ng ? cols->data() + static_cast<std::int64_t>(n) * K * P : cols->data();
        im2col(X.data() + static_cast<std::int64_t>(n) * Ci * H * Wd, Ci, H, Wd, k, stride, pad, Ho, Wo, col);
        MapRM Y(out.data() + static_cast<std::int64_t>(n) * Co * P, Co, P);
        CMapRM C(col, K, P);
        Y.noalias() = Wm * C;
        if (b) {
            const double* bias = b->value.data();
            for (int co = 0; co < Co; ++co) Y.row(co).array() += bias[co];
        }
    }

    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
        Var xv = x, wv = w, bv = b;
        y->backward_fn = [xv, wv, bv, cols, N, Ci, H, Wd, Co, k, stride, pad, Ho, Wo, K, P](Node& node) {
            CMapRM Wm(wv->value.data(), Co, K);
            if (wv->requires_grad) wv->ensure_grad();
            if (xv->requires_grad) xv->ensure_grad();
            if (bv && bv->requires_grad) bv->ensure_grad();
            AlignedVec dcol;
            if (xv->requires_grad) dcol.resize(static_cast<size_t>(K) * P);
            for (int n = 0; n < N; ++n) {
                CMapRM dY(node.grad.data() + static_cast<std::int64_t>(n) * Co * P, Co, P);
                const double* col = cols->data() + static_cast<std::int64_t>(n) * K * P;
                if (wv->requires_grad) {
                    MapRM dW(wv->grad.data(), Co, K);
                    CMapRM C(col, K, P);
                    dW.noalias() += dY * C.transpose();
                }
                if (bv && bv->requires_grad) {
                    double* db = bv->grad.data();
                    for (int co = 0; co < Co; ++co) db[co] += dY.row(co).sum();
                }
                if (xv->requires_grad) {
                    MapRM dC(dcol.data(), K, P);
                    dC.noalias() = Wm.transpose() * dY;
                    col2im(dcol.data(), Ci, H, Wd, k, stride, pad, Ho, Wo,
                           xv->grad.data() + static_cast<std::int64_t>(n) * Ci * H * Wd);
                }
            }
        };
    }
    return y;
}

// ---- conv_transpose2d --------------------------------------------------------

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& X = x->value;
    const Tensor& W = w->value;
    if (X.ndim() != 4 || W.ndim() != 4) throw DimensionError("conv_transpose2d: expected 4-d input and weight");
    const int N = X.dim(0), Ci = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    const int Co = W.dim(1), k = W.dim(2);
    if (W.dim(0) != Ci || W.dim(3) != k)
        throw DimensionError("conv_transpose2d: weight " + shape_str(W.shape()) + " does not match input channels " +
                             std::to_string(Ci));
    const int Ho = (H - 1) * stride - 2 * pad + k;
    const int Wo = (Wd - 1) * stride - 2 * pad + k;
    if (Ho <= 0 || Wo <= 0) throw DimensionError("conv_transpose2d: output would be empty");
    const std::int64_t K = static_cast<std::int64_t>(Co) * k * k;  // column rows (output-side)
    const std::int64_t Pin = static_cast<std::int64_t>(H) * Wd;
    const std::int64_t Pout = static_cast<std::int64_t>(Ho) * Wo;

    const bool ng = any_requires_grad({&x, &w, &b});
    Tensor out({N, Co, Ho, Wo});
    AlignedVec col(static_cast<size_t>(K) * Pin);
    CMapRM Wm(W.data(), Ci, K);
    for (int n = 0; n < N; ++n) {
        CMapRM Xm(X.data() + static_cast<std::int64_t>(n) * Ci * Pin, Ci, Pin);
        MapRM C(col.data(), K, Pin);
        C.noalias() = Wm.transpose() * Xm;
        double* dst = out.data() + static_cast<std::int64_t>(n) * Co * Pout;
        col2im(col.data(), Co, Ho, Wo, k, stride, pad, H, Wd, dst);
        if (b) {
            const double* bias = b->value.data();
            for (int co = 0; co < Co; ++co) {
                double* plane = dst + static_cast<std::int64_t>(co) * Pout;
                for (std::int64_t i = 0; i < Pout; ++i) plane[i] += bias[co];
            }
        }
    }

    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
        Var xv = x, wv = w, bv = b;
        y->backward_fn = [xv, wv, bv, N, Ci, H, Wd, Co, k, stride, pad, Ho, Wo, K, Pin, Pout](Node& node) {
            CMapRM Wm(wv->value.data(), Ci, K);
            if (wv->requires_grad) wv->ensure_grad();
            if (xv->requires_grad) xv->ensure_grad();
            if (bv && bv->requires_grad) bv->ensure_grad();
            AlignedVec colg(static_cast<size_t>(K) * Pin);
            for (int n = 0; n < N; ++n) {
                // im2col over the output-space gradient, conv geometry mirrored
                im2col(node.grad.data() + static_cast<std::int64_t>(n) * Co * Pout, Co, Ho, Wo, k, stride, pad, H, Wd,
                       colg.data());
                CMapRM Cg(colg.data(), K, Pin);
                if (xv->requires_grad) {
                    MapRM dX(xv->grad.data() + static_cast<std::int64_t>(n) * Ci * Pin, Ci, Pin);
                    dX.noalias() += Wm * Cg;
                }
                if (wv->requires_grad) {
                    CMapRM Xm(xv->value.data() + static_cast<std::int64_t>(n) * Ci * Pin, Ci, Pin);
                    MapRM dW(wv->grad.data(), Ci, K);
                    dW.noalias() += Xm * Cg.transpose();
                }
                if (bv && bv->requires_grad) {
                    double* db = bv->grad.data();
                    const double* g = node.grad.data() + static_cast<std::int64_t>(n) * Co * Pout;
                    for (int co = 0; co < Co; ++co) {
                        double s = 0.0;
                        const double* plane = g + static_cast<std::int64_t>(co) * Pout;
                        for (std::int64_t i = 0; i < Pout; ++i) s += plane[i];
                        db[co] += s;
                    }
                }
            }
        };
    }
    return y;
}

// ---- group_norm ---------------------------------------------------------------

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    const Tensor& X = x->value;
    if (X.ndim() != 4) throw DimensionError("group_norm: expected NCHW input");
    const int N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    if (C % groups != 0) throw ConfigError("group_norm: channels " + std::to_string(C) + " not divisible by groups");
    if (gamma->value.size() != C || beta->value.size() != C)
        throw DimensionError("group_norm: affine parameter size mismatch");
    const int cpg = C / groups;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const std::int64_t gsize = cpg * hw;

    Tensor out({N, C, H, W});
    auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * groups * 2);  // mean, invstd
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const double* src = X.data() + (static_cast<std::int64_t>(n) * C + static_cast<std::int64_t>(g) * cpg) * hw;
            double mean = 0.0;
            for (std::int64_t i = 0; i < gsize; ++i) mean += src[i];
            mean /= static_cast<double>(gsize);
            double var = 0.0;
            for (std::int64_t i = 0; i < gsize; ++i) {
                const double d = src[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(gsize);
            const double invstd = 1.0 / std::sqrt(var + eps);
            (*stats)[(static_cast<size_t>(n) * groups + g) * 2] = mean;
            (*stats)[(static_cast<size_t>(n) * groups + g) * 2 + 1] = invstd;
            double* dst = out.data() + (static_cast<std::int64_t>(n) * C + static_cast<std::int64_t>(g) * cpg) * hw;
            for (int cc = 0; cc < cpg; ++cc) {
                const int c = g * cpg + cc;
                const double ga = gamma->value[c], be = beta->value[c];
                const double* s = src + static_cast<std::int64_t>(cc) * hw;
                double* d = dst + static_cast<std::int64_t>(cc) * hw;
                for (std::int64_t i = 0; i < hw; ++i) d[i] = ga * (s[i] - mean) * invstd + be;
            }
        }
    }

    const bool ng = any_requires_grad({&x, &gamma, &beta});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = {x, gamma, beta};
        Var xv = x, gv = gamma, bv = beta;
        y->backward_fn = [xv, gv, bv, stats, N, C, H, W, groups, cpg, hw, gsize](Node& node) {
            if (xv->requires_grad) xv->ensure_grad();
            if (gv->requires_grad) gv->ensure_grad();
            if (bv->requires_grad) bv->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int g = 0; g < groups; ++g) {
                    const double mean = (*stats)[(static_cast<size_t>(n) * groups + g) * 2];
                    const double invstd = (*stats)[(static_cast<size_t>(n) * groups + g) * 2 + 1];
                    const std::int64_t base = (static_cast<std::int64_t>(n) * C + static_cast<std::int64_t>(g) * cpg) * hw;
                    const double* xd = xv->value.data() + base;
                    const double* gd = node.grad.data() + base;

                    // accumulate affine grads; reduce dxhat terms for dx
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int cc = 0; cc < cpg; ++cc) {
                        const int c = g * cpg + cc;
                        const double ga = gv->value[c];
                        const double* xs = xd + static_cast<std::int64_t>(cc) * hw;
                        const double* gs = gd + static_cast<std::int64_t>(cc) * hw;
                        double dgamma = 0.0, dbeta = 0.0;
                        for (std::int64_t i = 0; i < hw; ++i) {
                            const double xhat = (xs[i] - mean) * invstd;
                            const double dxhat = gs[i] * ga;
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                            dgamma += gs[i] * xhat;
                            dbeta += gs[i];
                        }
                        if (gv->requires_grad) gv->grad[c] += dgamma;
                        if (bv->requires_grad) bv->grad[c] += dbeta;
                    }
                    if (xv->requires_grad) {
                        const double inv_m = 1.0 / static_cast<double>(gsize);
                        double* dxd = xv->grad.data() + base;
                        for (int cc = 0; cc < cpg; ++cc) {
                            const int c = g * cpg + cc;
                            const double ga = gv->value[c];
                            const double* xs = xd + static_cast<std::int64_t>(cc) * hw;
                            const double* gs = gd + static_cast<std::int64_t>(cc) * hw;
                            double* dx = dxd + static_cast<std::int64_t>(cc) * hw;
                            for (std::int64_t i = 0; i < hw; ++i) {
                                const double xhat = (xs[i] - mean) * invstd;
                                const double dxhat = gs[i] * ga;
                                dx[i] += invstd * (dxhat - inv_m * (sum_dxhat + xhat * sum_dxhat_xhat));
                            }
                        }
                    }
                }
            }
        };
    }
    return y;
}

// ---- cosine map -----------------------------------------------------------------

namespace {
constexpr double kNormGuard = 1e-8;
}

Tensor cosine_map_values(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "cosine_map");
    if (a.ndim() != 4) throw DimensionError("cosine_map: expected NCHW inputs");
    const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor out({N, 1, H, W});
    for (int n = 0; n < N; ++n) {
        const double* ad = a.data() + static_cast<std::int64_t>(n) * C * hw;
        const double* bd = b.data() + static_cast<std::int64_t>(n) * C * hw;
        double* od = out.data() + static_cast<std::int64_t>(n) * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
            double dot = 0.0, na2 = 0.0, nb2 = 0.0;
            for (int c = 0; c < C; ++c) {
                const double u = ad[static_cast<std::int64_t>(c) * hw + p];
                const double v = bd[static_cast<std::int64_t>(c) * hw + p];
                dot += u * v;
                na2 += u * u;
                nb2 += v * v;
            }
            const double na = std::sqrt(na2), nb = std::sqrt(nb2);
            od[p] = (na < kNormGuard || nb < kNormGuard) ? 0.0 : dot / (na * nb);
        }
    }
    return out;
}

Var cosine_map(const Var& a, const Var& b) {
    Tensor out = cosine_map_values(a->value, b->value);
    const bool ng = any_requires_grad({&a, &b});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = {a, b};
        Var av = a, bv = b;
        y->backward_fn = [av, bv](Node& node) {
            const int N = av->value.dim(0), C = av->value.dim(1), H = av->value.dim(2), W = av->value.dim(3);
            const std::int64_t hw = static_cast<std::int64_t>(H) * W;
            if (av->requires_grad) av->ensure_grad();
            if (bv->requires_grad) bv->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const double* ad = av->value.data() + static_cast<std::int64_t>(n) * C * hw;
                const double* bd = bv->value.data() + static_cast<std::int64_t>(n) * C * hw;
                const double* cosd = node.value.data() + static_cast<std::int64_t>(n) * hw;
                const double* gd = node.grad.data() + static_cast<std::int64_t>(n) * hw;
                for (std::int64_t p = 0; p < hw; ++p) {
                    const double g = gd[p];
                    if (g == 0.0) continue;
                    double na2 = 0.0, nb2 = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const double u = ad[static_cast<std::int64_t>(c) * hw + p];
                        const double v = bd[static_cast<std::int64_t>(c) * hw + p];
                        na2 += u * u;
                        nb2 += v * v;
                    }
                    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
                    if (na < kNormGuard || nb < kNormGuard) continue;  // guard: flat region
                    const double cosv = cosd[p];
                    const double inv_ab = 1.0 / (na * nb);
                    for (int c = 0; c < C; ++c) {
                        const std::int64_t idx = static_cast<std::int64_t>(c) * hw + p;
                        const double u = ad[idx], v = bd[idx];
                        if (av->requires_grad) av->grad[static_cast<std::int64_t>(n) * C * hw + idx] += g * (v * inv_ab - cosv * u / na2);
                        if (bv->requires_grad) bv->grad[static_cast<std::int64_t>(n) * C * hw + idx] += g * (u * inv_ab - cosv * v / nb2);
                    }
                }
            }
        };
    }
    return y;
}

// ---- softmax blend -----------------------------------------------------------------

Var softmax_blend(const Var& a, const Var& b, const Var& w1, const Var& w2) {
    check_same_shape(a->value, b->value, "softmax_blend");
    if (w1->value.size() != 1 || w2->value.size() != 1)
        throw DimensionError("softmax_blend: fusion weights must be scalars");
    const double d = w1->value[0] - w2->value[0];
    const double alpha = 1.0 / (1.0 + std::exp(-d));
    Tensor out(a->value.shape());
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = alpha * a->value[i] + (1.0 - alpha) * b->value[i];
    const bool ng = any_requires_grad({&a, &b, &w1, &w2});
    Var y = make_var(std::move(out), ng);
    if (ng) {
        y->parents = {a, b, w1, w2};
        Var av = a, bv = b, w1v = w1, w2v = w2;
        y->backward_fn = [av, bv, w1v, w2v, alpha, n](Node& node) {
            double s = 0.0;
            const bool need_w = w1v->requires_grad || w2v->requires_grad;
            if (av->requires_grad) av->ensure_grad();
            if (bv->requires_grad) bv->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) {
                const double g = node.grad[i];
                if (av->requires_grad) av->grad[i] += alpha * g;
                if (bv->requires_grad) bv->grad[i] += (1.0 - alpha) * g;
                if (need_w) s += g * (av->value[i] - bv->value[i]);
            }
            const double dw = alpha * (1.0 - alpha) * s;
            if (w1v->requires_grad) {
                w1v->ensure_grad();
                w1v->grad[0] += dw;
            }
            if (w2v->requires_grad) {
                w2v->ensure_grad();
                w2v->grad[0] -= dw;
            }
        };
    }
    return y;
}

// ---- value-level helpers -------------------------------------------------------

Tensor bilinear_resize_hw(const Tensor& m, int out_h, int out_w) {
    if (m.ndim() != 2) throw DimensionError("bilinear_resize_hw: expected HxW input");
    const int H = m.dim(0), W = m.dim(1);
    Tensor out({out_h, out_w});
    const double sh = static_cast<double>(H) / out_h;
    const double sw = static_cast<double>(W) / out_w;
    for (int i = 0; i < out_h; ++i) {
        double y = (i + 0.5) * sh - 0.5;
        y = std::clamp(y, 0.0, static_cast<double>(H - 1));
        const int y0 = static_cast<int>(y);
        const int y1 = std::min(y0 + 1, H - 1);
        const double fy = y - y0;
        for (int j = 0; j < out_w; ++j) {
            double x = (j + 0.5) * sw - 0.5;
            x = std::clamp(x, 0.0, static_cast<double>(W - 1));
            const int x0 = static_cast<int>(x);
            const int x1 = std::min(x0 + 1, W - 1);
            const double fx = x - x0;
            out.at(i, j) = (1 - fy) * ((1 - fx) * m.at(y0, x0) + fx * m.at(y0, x1)) +
                           fy * ((1 - fx) * m.at(y1, x0) + fx * m.at(y1, x1));
        }
    }
    return out;
}

namespace {
int reflect101(int idx, int n) {
    if (n == 1) return 0;
    while (idx < 0 || idx >= n) {
        if (idx < 0) idx = -idx;
        if (idx >= n) idx = 2 * n - 2 - idx;
    }
    return idx;
}
}  // namespace

Tensor gaussian_blur_hw(const Tensor& m, double sigma) {
    if (m.ndim() != 2) throw DimensionError("gaussian_blur_hw: expected HxW input");
    if (!(sigma > 0.0)) throw ConfigError("gaussian_blur_hw: sigma must be positive");
    const int H = m.dim(0), W = m.dim(1);
    const int R = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> kern(static_cast<size_t>(2 * R + 1));
    double norm = 0.0;
    for (int i = -R; i <= R; ++i) {
        kern[static_cast<size_t>(i + R)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += kern[static_cast<size_t>(i + R)];
    }
    for (double& k : kern) k /= norm;

    Tensor tmp({H, W});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double s = 0.0;
            for (int t = -R; t <= R; ++t) s += kern[static_cast<size_t>(t + R)] * m.at(i, reflect101(j + t, W));
            tmp.at(i, j) = s;
        }
    Tensor out({H, W});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double s = 0.0;
            for (int t = -R; t <= R; ++t) s += kern[static_cast<size_t>(t + R)] * tmp.at(reflect101(i + t, H), j);
            out.at(i, j) = s;
        }
    return out;
}

}  // namespace ops
}  // namespace trd
