#include "tape.hpp"

#include <cmath>

namespace fading {

Tape::NodeId Tape::push(Tensor val, bool requires_grad, std::function<void(Tape&, Node&)> back) {
    Node n;
    n.val = std::move(val);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::grad_ref(NodeId id) {
    Node& n = node(id);
    if (n.grad.numel() == 0) n.grad = Tensor(n.val.shape);
    return n.grad;
}

Tape::NodeId Tape::input(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

Tape::NodeId Tape::add(NodeId a, NodeId b) { return axpby(1.0f, a, 1.0f, b); }

Tape::NodeId Tape::axpby(float alpha, NodeId a, float beta, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "axpby");
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = alpha * av[i] + beta * bv[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, alpha, beta](Tape& t, Node& self) {
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += alpha * self.grad[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_ref(b);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += beta * self.grad[i];
        }
    });
}

Tape::NodeId Tape::scale(NodeId a, float s) {
    const Tensor& av = value(a);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = s * av[i];
    return push(std::move(out), requires_grad(a), [a, s](Tape& t, Node& self) {
        if (!t.requires_grad(a)) return;
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += s * self.grad[i];
    });
}

Tape::NodeId Tape::silu(NodeId a) {
    const Tensor& av = value(a);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        float x = av[i];
        out[i] = x / (1.0f + std::exp(-x));
    }
    return push(std::move(out), requires_grad(a), [a](Tape& t, Node& self) {
        if (!t.requires_grad(a)) return;
        const Tensor& av = t.value(a);
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < ga.numel(); ++i) {
            float x = av[i];
            float sig = 1.0f / (1.0f + std::exp(-x));
            ga[i] += self.grad[i] * sig * (1.0f + x * (1.0f - sig));
        }
    });
}

Tape::NodeId Tape::add_channel_bias(NodeId x, NodeId bias) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(bias);
    if (xv.shape.size() != 3 || bv.shape.size() != 1 || bv.shape[0] != xv.shape[0])
        throw_data("add_channel_bias: expected (C,H,W) and (C)");
    int C = xv.shape[0];
    std::size_t hw = xv.numel() / static_cast<std::size_t>(C);
    Tensor out(xv.shape);
    for (int c = 0; c < C; ++c) {
        float b = bv[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = xv[c * hw + i] + b;
    }
    bool rg = requires_grad(x) || requires_grad(bias);
    return push(std::move(out), rg, [x, bias, C, hw](Tape& t, Node& self) {
        if (t.requires_grad(x)) {
            Tensor& gx = t.grad_ref(x);
            for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
        }
        if (t.requires_grad(bias)) {
            Tensor& gb = t.grad_ref(bias);
            for (int c = 0; c < C; ++c) {
                float acc = 0.0f;
                for (std::size_t i = 0; i < hw; ++i) acc += self.grad[c * hw + i];
                gb[static_cast<std::size_t>(c)] += acc;
            }
        }
    });
}

Tape::NodeId Tape::conv3x3(NodeId x, NodeId w, NodeId b, int stride) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.shape.size() != 3 || wv.shape.size() != 4 || wv.shape[2] != 3 || wv.shape[3] != 3)
        throw_data("conv3x3: bad shapes");
    int cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2];
    int cout = wv.shape[0];
    if (wv.shape[1] != cin || bv.shape != std::vector<int>{cout}) throw_data("conv3x3: channel mismatch");
    if (stride != 1 && stride != 2) throw_data("conv3x3: stride must be 1 or 2");
    int ho = (h + 2 - 3) / stride + 1;
    int wo = (wd + 2 - 3) / stride + 1;
    Tensor out({cout, ho, wo});
    const float* xp = xv.ptr();
    const float* wp = wv.ptr();
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                float acc = bv[static_cast<std::size_t>(co)];
                for (int ci = 0; ci < cin; ++ci) {
                    const float* xc = xp + static_cast<std::size_t>(ci) * h * wd;
                    const float* wc = wp + (static_cast<std::size_t>(co) * cin + ci) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            int ix = ox * stride + kx - 1;
                            if (ix < 0 || ix >= wd) continue;
                            acc += xc[iy * wd + ix] * wc[ky * 3 + kx];
                        }
                    }
                }
                out[(static_cast<std::size_t>(co) * ho + oy) * wo + ox] = acc;
            }
        }
    }
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    return push(std::move(out), rg, [x, w, b, stride, cin, h, wd, cout, ho, wo](Tape& t, Node& self) {
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(w);
        const float* gp = self.grad.ptr();
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_ref(b);
            for (int co = 0; co < cout; ++co) {
                float acc = 0.0f;
                const float* gc = gp + static_cast<std::size_t>(co) * ho * wo;
                for (int i = 0; i < ho * wo; ++i) acc += gc[i];
                gb[static_cast<std::size_t>(co)] += acc;
            }
        }
        bool need_x = t.requires_grad(x);
        bool need_w = t.requires_grad(w);
        if (!need_x && !need_w) return;
        float* gxp = need_x ? t.grad_ref(x).ptr() : nullptr;
        float* gwp = need_w ? t.grad_ref(w).ptr() : nullptr;
        for (int co = 0; co < cout; ++co) {
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    float g = gp[(static_cast<std::size_t>(co) * ho + oy) * wo + ox];
                    if (g == 0.0f) continue;
                    for (int ci = 0; ci < cin; ++ci) {
                        const float* xc = xv.ptr() + static_cast<std::size_t>(ci) * h * wd;
                        const float* wc = wv.ptr() + (static_cast<std::size_t>(co) * cin + ci) * 9;
                        float* gxc = need_x ? gxp + static_cast<std::size_t>(ci) * h * wd : nullptr;
                        float* gwc = need_w ? gwp + (static_cast<std::size_t>(co) * cin + ci) * 9 : nullptr;
                        for (int ky = 0; ky < 3; ++ky) {
                            int iy = oy * stride + ky - 1;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                int ix = ox * stride + kx - 1;
                                if (ix < 0 || ix >= wd) continue;
                                if (need_x) gxc[iy * wd + ix] += g * wc[ky * 3 + kx];
                                if (need_w) gwc[ky * 3 + kx] += g * xc[iy * wd + ix];
                            }
                        }
                    }
                }
            }
        }
    });
}

Tape::NodeId Tape::upsample_nearest2(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.shape.size() != 3) throw_data("upsample_nearest2: expected (C,H,W)");
    int C = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
    Tensor out({C, 2 * h, 2 * w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * h; ++y)
            for (int xcol = 0; xcol < 2 * w; ++xcol)
                out[(static_cast<std::size_t>(c) * 2 * h + y) * 2 * w + xcol] =
                    xv[(static_cast<std::size_t>(c) * h + y / 2) * w + xcol / 2];
    return push(std::move(out), requires_grad(x), [x, C, h, w](Tape& t, Node& self) {
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_ref(x);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * h; ++y)
                for (int xcol = 0; xcol < 2 * w; ++xcol)
                    gx[(static_cast<std::size_t>(c) * h + y / 2) * w + xcol / 2] +=
                        self.grad[(static_cast<std::size_t>(c) * 2 * h + y) * 2 * w + xcol];
    });
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[0])
        throw_data("matmul: bad shapes");
    int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
            float aik = av[static_cast<std::size_t>(i) * k + kk];
            if (aik == 0.0f) continue;
            for (int j = 0; j < n; ++j)
                out[static_cast<std::size_t>(i) * n + j] += aik * bv[static_cast<std::size_t>(kk) * n + j];
        }
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, m, k, n](Tape& t, Node& self) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {  // dA = dC * B^T
            Tensor& ga = t.grad_ref(a);
            for (int i = 0; i < m; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    float acc = 0.0f;
                    for (int j = 0; j < n; ++j)
                        acc += self.grad[static_cast<std::size_t>(i) * n + j] * bv[static_cast<std::size_t>(kk) * n + j];
                    ga[static_cast<std::size_t>(i) * k + kk] += acc;
                }
        }
        if (t.requires_grad(b)) {  // dB = A^T * dC
            Tensor& gb = t.grad_ref(b);
            for (int kk = 0; kk < k; ++kk)
                for (int i = 0; i < m; ++i) {
                    float aik = av[static_cast<std::size_t>(i) * k + kk];
                    if (aik == 0.0f) continue;
                    for (int j = 0; j < n; ++j)
                        gb[static_cast<std::size_t>(kk) * n + j] += aik * self.grad[static_cast<std::size_t>(i) * n + j];
                }
        }
    });
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[1])
        throw_data("matmul_nt: bad shapes");
    int m = av.shape[0], k = av.shape[1], n = bv.shape[0];
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (int kk = 0; kk < k; ++kk)
                acc += av[static_cast<std::size_t>(i) * k + kk] * bv[static_cast<std::size_t>(j) * k + kk];
            out[static_cast<std::size_t>(i) * n + j] = acc;
        }
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, m, k, n](Tape& t, Node& self) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {  // dA = dC * B
            Tensor& ga = t.grad_ref(a);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    float g = self.grad[static_cast<std::size_t>(i) * n + j];
                    if (g == 0.0f) continue;
                    for (int kk = 0; kk < k; ++kk)
                        ga[static_cast<std::size_t>(i) * k + kk] += g * bv[static_cast<std::size_t>(j) * k + kk];
                }
        }
        if (t.requires_grad(b)) {  // dB = dC^T * A
            Tensor& gb = t.grad_ref(b);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i) {
                    float g = self.grad[static_cast<std::size_t>(i) * n + j];
                    if (g == 0.0f) continue;
                    for (int kk = 0; kk < k; ++kk)
                        gb[static_cast<std::size_t>(j) * k + kk] += g * av[static_cast<std::size_t>(i) * k + kk];
                }
        }
    });
}

Tape::NodeId Tape::chw_to_pixc(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.shape.size() != 3) throw_data("chw_to_pixc: expected (C,H,W)");
    int C = xv.shape[0];
    int p = xv.shape[1] * xv.shape[2];
    Tensor out({p, C});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < p; ++i)
            out[static_cast<std::size_t>(i) * C + c] = xv[static_cast<std::size_t>(c) * p + i];
    return push(std::move(out), requires_grad(x), [x, C, p](Tape& t, Node& self) {
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_ref(x);
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < p; ++i)
                gx[static_cast<std::size_t>(c) * p + i] += self.grad[static_cast<std::size_t>(i) * C + c];
    });
}

Tape::NodeId Tape::pixc_to_chw(NodeId x, int h, int w) {
    const Tensor& xv = value(x);
    if (xv.shape.size() != 2 || xv.shape[0] != h * w) throw_data("pixc_to_chw: bad shapes");
    int C = xv.shape[1];
    int p = h * w;
    Tensor out({C, h, w});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < p; ++i)
            out[static_cast<std::size_t>(c) * p + i] = xv[static_cast<std::size_t>(i) * C + c];
    return push(std::move(out), requires_grad(x), [x, C, p](Tape& t, Node& self) {
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_ref(x);
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < p; ++i)
                gx[static_cast<std::size_t>(i) * C + c] += self.grad[static_cast<std::size_t>(c) * p + i];
    });
}

Tape::NodeId Tape::softmax_rows(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.shape.size() != 2) throw_data("softmax_rows: expected 2-D");
    int m = xv.shape[0], n = xv.shape[1];
    Tensor out(xv.shape);
    for (int i = 0; i < m; ++i) {
        const float* row = xv.ptr() + static_cast<std::size_t>(i) * n;
        float* orow = out.ptr() + static_cast<std::size_t>(i) * n;
        float mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        float sum = 0.0f;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= sum;
    }
    return push(std::move(out), requires_grad(x), [x, m, n](Tape& t, Node& self) {
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_ref(x);
        for (int i = 0; i < m; ++i) {
            const float* p = self.val.ptr() + static_cast<std::size_t>(i) * n;
            const float* gy = self.grad.ptr() + static_cast<std::size_t>(i) * n;
            float dot = 0.0f;
            for (int j = 0; j < n; ++j) dot += gy[j] * p[j];
            float* gr = gx.ptr() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) gr[j] += p[j] * (gy[j] - dot);
        }
    });
}

Tape::NodeId Tape::reshape(NodeId x, std::vector<int> shape) {
    const Tensor& xv = value(x);
    Tensor out(shape);
    if (out.numel() != xv.numel()) throw_data("reshape: numel mismatch");
    out.data = xv.data;
    return push(std::move(out), requires_grad(x), [x](Tape& t, Node& self) {
        if (!t.requires_grad(x)) return;
        Tensor& gx = t.grad_ref(x);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
    });
}

Tape::NodeId Tape::mse_loss(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape(av, bv, "mse_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) {
        double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        acc += d * d;
    }
    Tensor out({1});
    out[0] = static_cast<float>(acc / static_cast<double>(av.numel()));
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, Node& self) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        float g = self.grad[0] * 2.0f / static_cast<float>(av.numel());
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_ref(a);
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g * (av[i] - bv[i]);
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_ref(b);
            for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] -= g * (av[i] - bv[i]);
        }
    });
}

void Tape::backward(NodeId root) {
    Node& r = node(root);
    if (r.val.numel() != 1) throw_compute("backward: root must be scalar");
    for (auto& n : nodes_)
        if (n.requires_grad && n.grad.numel() == 0) n.grad = Tensor(n.val.shape);
    r.grad[0] = 1.0f;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.back) n.back(*this, n);
    }
}

}  // namespace fading
