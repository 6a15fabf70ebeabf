#include "coseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coseg {

Graph::NodeId Graph::add_input(Tensor value, bool needs_grad) {
    auto n = std::make_unique<Node>();
    n->grad = Tensor(value.shape);
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::backward(NodeId loss) {
    if (nodes_.empty() || loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
        throw std::runtime_error("backward: no recorded forward pass for this node");
    Node& l = node(loss);
    if (l.value.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    l.grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id)
        if (nodes_[id]->backprop) nodes_[id]->backprop(*this);
}

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

namespace {

template <typename Backward>
Graph::NodeId make_op(Graph& g, Tensor value, Backward&& bw) {
    const Graph::NodeId id = g.add_input(std::move(value), true);
    g.node(id).backprop = [id, bw = std::forward<Backward>(bw)](Graph& gr) { bw(gr, id); };
    return id;
}

}  // namespace

Graph::NodeId op_conv2d(Graph& g, Graph::NodeId x, Graph::NodeId w, Graph::NodeId b,
                        const ConvGeom& geom) {
    Tensor out = kernels::conv2d_forward(g.value(x), g.value(w), g.value(b), geom);
    std::vector<int> in_shape = g.value(x).shape;
    std::vector<int> w_shape = g.value(w).shape;
    return make_op(g, std::move(out), [x, w, b, geom, in_shape, w_shape](Graph& gr,
                                                                         Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        accumulate(gr.node(x).grad,
                   kernels::conv2d_backward_input(go, gr.value(w), in_shape, geom));
        accumulate(gr.node(w).grad,
                   kernels::conv2d_backward_weights(go, gr.value(x), w_shape, geom));
        accumulate(gr.node(b).grad, kernels::conv2d_backward_bias(go));
    });
}

Graph::NodeId op_relu(Graph& g, Graph::NodeId x) {
    Tensor out = g.value(x);
    for (double& v : out.data) v = std::max(v, 0.0);
    return make_op(g, std::move(out), [x](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        const Tensor& xv = gr.value(x);
        Tensor& gx = gr.node(x).grad;
        for (std::size_t i = 0; i < go.size(); ++i)
            if (xv.data[i] > 0.0) gx.data[i] += go.data[i];
    });
}

Graph::NodeId op_sigmoid(Graph& g, Graph::NodeId x) {
    Tensor out = g.value(x);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_op(g, std::move(out), [x](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        const Tensor& y = gr.value(id);
        Tensor& gx = gr.node(x).grad;
        for (std::size_t i = 0; i < go.size(); ++i)
            gx.data[i] += go.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
}

Graph::NodeId op_max_pool2x2(Graph& g, Graph::NodeId x) {
    auto argmax = std::make_shared<std::vector<int>>();
    Tensor out = kernels::maxpool2x2_forward(g.value(x), *argmax);
    std::vector<int> in_shape = g.value(x).shape;
    return make_op(g, std::move(out),
                   [x, argmax, in_shape](Graph& gr, Graph::NodeId id) {
                       accumulate(gr.node(x).grad,
                                  kernels::maxpool2x2_backward(gr.grad(id), *argmax, in_shape));
                   });
}

Graph::NodeId op_global_avg_pool(Graph& g, Graph::NodeId x) {
    const Tensor& in = g.value(x);
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    Tensor out({N, C, 1, 1});
    const double inv = 1.0 / (static_cast<double>(H) * W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) acc += in.at4(n, c, y, xx);
            out.at4(n, c, 0, 0) = acc * inv;
        }
    return make_op(g, std::move(out), [x, N, C, H, W, inv](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        Tensor& gx = gr.node(x).grad;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double v = go.at4(n, c, 0, 0) * inv;
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) gx.at4(n, c, y, xx) += v;
            }
    });
}

Graph::NodeId op_fully_connected(Graph& g, Graph::NodeId x, Graph::NodeId w, Graph::NodeId b) {
    const Tensor& in = g.value(x);
    const Tensor& wv = g.value(w);
    const Tensor& bv = g.value(b);
    if (in.rank() != 4 || in.dim(2) != 1 || in.dim(3) != 1)
        throw std::invalid_argument("fully_connected: input must be [N,Cin,1,1]");
    const int N = in.dim(0), Cin = in.dim(1);
    if (wv.rank() != 2 || wv.dim(1) != Cin)
        throw std::invalid_argument("fully_connected: weight Cin mismatch (" + wv.shape_str() +
                                    " vs input " + in.shape_str() + ")");
    const int Cout = wv.dim(0);
    if (bv.rank() != 1 || bv.dim(0) != Cout)
        throw std::invalid_argument("fully_connected: bias extent must equal Cout");
    Tensor out({N, Cout, 1, 1});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co) {
            double acc = bv.data[co];
            for (int ci = 0; ci < Cin; ++ci)
                acc += wv.data[static_cast<std::size_t>(co) * Cin + ci] * in.at4(n, ci, 0, 0);
            out.at4(n, co, 0, 0) = acc;
        }
    return make_op(g, std::move(out), [x, w, b, N, Cin, Cout](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        const Tensor& in = gr.value(x);
        const Tensor& wv = gr.value(w);
        Tensor& gx = gr.node(x).grad;
        Tensor& gw = gr.node(w).grad;
        Tensor& gb = gr.node(b).grad;
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co) {
                const double gv = go.at4(n, co, 0, 0);
                gb.data[co] += gv;
                for (int ci = 0; ci < Cin; ++ci) {
                    gw.data[static_cast<std::size_t>(co) * Cin + ci] += gv * in.at4(n, ci, 0, 0);
                    gx.at4(n, ci, 0, 0) += gv * wv.data[static_cast<std::size_t>(co) * Cin + ci];
                }
            }
    });
}

namespace {

// Broadcast helper: b may have extent 1 where a doesn't.
void check_broadcast(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank()) throw std::invalid_argument("mul: rank mismatch");
    for (int i = 0; i < a.rank(); ++i)
        if (b.dim(i) != a.dim(i) && b.dim(i) != 1)
            throw std::invalid_argument("mul: shapes not broadcastable, " + a.shape_str() +
                                        " vs " + b.shape_str());
}

inline std::size_t broadcast_index(const Tensor& b, int n, int c, int y, int x) {
    const int bn = b.dim(0) == 1 ? 0 : n;
    const int bc = b.dim(1) == 1 ? 0 : c;
    const int by = b.dim(2) == 1 ? 0 : y;
    const int bx = b.dim(3) == 1 ? 0 : x;
    return ((static_cast<std::size_t>(bn) * b.dim(1) + bc) * b.dim(2) + by) * b.dim(3) + bx;
}

}  // namespace

Graph::NodeId op_mul(Graph& g, Graph::NodeId a, Graph::NodeId b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    check_broadcast(av, bv);
    const int N = av.dim(0), C = av.dim(1), H = av.dim(2), W = av.dim(3);
    Tensor out(av.shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    out.at4(n, c, y, x) = av.at4(n, c, y, x) * bv.data[broadcast_index(bv, n, c, y, x)];
    return make_op(g, std::move(out), [a, b, N, C, H, W](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        const Tensor& av = gr.value(a);
        const Tensor& bv = gr.value(b);
        Tensor& ga = gr.node(a).grad;
        Tensor& gb = gr.node(b).grad;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        const std::size_t bi = broadcast_index(bv, n, c, y, x);
                        const double gv = go.at4(n, c, y, x);
                        ga.at4(n, c, y, x) += gv * bv.data[bi];
                        gb.data[bi] += gv * av.at4(n, c, y, x);
                    }
    });
}

Graph::NodeId op_add(Graph& g, Graph::NodeId a, Graph::NodeId b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (!av.same_shape(bv))
        throw std::invalid_argument("add: shape mismatch " + av.shape_str() + " vs " +
                                    bv.shape_str());
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
    return make_op(g, std::move(out), [a, b](Graph& gr, Graph::NodeId id) {
        accumulate(gr.node(a).grad, gr.grad(id));
        accumulate(gr.node(b).grad, gr.grad(id));
    });
}

Graph::NodeId op_concat_channels(Graph& g, Graph::NodeId a, Graph::NodeId b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw std::invalid_argument("concat: non-channel dims must match");
    const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
    Tensor out({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < Ca; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) out.at4(n, c, y, x) = av.at4(n, c, y, x);
        for (int c = 0; c < Cb; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) out.at4(n, Ca + c, y, x) = bv.at4(n, c, y, x);
    }
    return make_op(g, std::move(out), [a, b, N, Ca, Cb, H, W](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        Tensor& ga = gr.node(a).grad;
        Tensor& gb = gr.node(b).grad;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < Ca; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) ga.at4(n, c, y, x) += go.at4(n, c, y, x);
            for (int c = 0; c < Cb; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) gb.at4(n, c, y, x) += go.at4(n, Ca + c, y, x);
        }
    });
}

Graph::NodeId op_channel_mean(Graph& g, Graph::NodeId x) {
    const Tensor& in = g.value(x);
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    Tensor out({N, 1, H, W});
    const double inv = 1.0 / C;
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double acc = 0.0;
                for (int c = 0; c < C; ++c) acc += in.at4(n, c, y, xx);
                out.at4(n, 0, y, xx) = acc * inv;
            }
    return make_op(g, std::move(out), [x, N, C, H, W, inv](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        Tensor& gx = gr.node(x).grad;
        for (int n = 0; n < N; ++n)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    const double v = go.at4(n, 0, y, xx) * inv;
                    for (int c = 0; c < C; ++c) gx.at4(n, c, y, xx) += v;
                }
    });
}

Graph::NodeId op_channel_max(Graph& g, Graph::NodeId x) {
    const Tensor& in = g.value(x);
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    Tensor out({N, 1, H, W});
    auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(N) * H * W);
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double best = in.at4(n, 0, y, xx);
                int bc = 0;
                for (int c = 1; c < C; ++c) {
                    const double v = in.at4(n, c, y, xx);
                    if (v > best) {
                        best = v;
                        bc = c;
                    }
                }
                out.at4(n, 0, y, xx) = best;
                (*arg)[(static_cast<std::size_t>(n) * H + y) * W + xx] = bc;
            }
    return make_op(g, std::move(out), [x, arg, N, H, W](Graph& gr, Graph::NodeId id) {
        const Tensor& go = gr.grad(id);
        Tensor& gx = gr.node(x).grad;
        for (int n = 0; n < N; ++n)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    gx.at4(n, (*arg)[(static_cast<std::size_t>(n) * H + y) * W + xx], y, xx) +=
                        go.at4(n, 0, y, xx);
    });
}

Graph::NodeId op_upsample_bilinear(Graph& g, Graph::NodeId x, int out_h, int out_w) {
    Tensor out = kernels::upsample_bilinear_forward(g.value(x), out_h, out_w);
    std::vector<int> in_shape = g.value(x).shape;
    return make_op(g, std::move(out), [x, in_shape](Graph& gr, Graph::NodeId id) {
        accumulate(gr.node(x).grad,
                   kernels::upsample_bilinear_backward(gr.grad(id), in_shape));
    });
}

Graph::NodeId op_softmax_cross_entropy(Graph& g, Graph::NodeId logits,
                                       const std::vector<BinaryMask>& targets) {
    const Tensor& lv = g.value(logits);
    if (lv.rank() != 4 || lv.dim(1) != 2)
        throw std::invalid_argument("cross_entropy: logits must be [N,2,H,W], got " +
                                    lv.shape_str());
    const int N = lv.dim(0), H = lv.dim(2), W = lv.dim(3);
    if (static_cast<int>(targets.size()) != N)
        throw std::invalid_argument("cross_entropy: target batch size mismatch");
    for (const auto& m : targets)
        if (m.width != W || m.height != H)
            throw std::invalid_argument("cross_entropy: target mask dimension mismatch");

    auto probs = std::make_shared<Tensor>(softmax_channels(lv));
    double loss = 0.0;
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const int cls = targets[n].at(x, y) ? 1 : 0;
                loss -= std::log(std::max(probs->at4(n, cls, y, x), 1e-300));
            }
    const double inv = 1.0 / (static_cast<double>(N) * H * W);
    loss *= inv;
    auto tgt = std::make_shared<std::vector<BinaryMask>>(targets);
    return make_op(g, Tensor({1}, loss), [logits, probs, tgt, N, H, W, inv](Graph& gr,
                                                                            Graph::NodeId id) {
        const double seed = gr.grad(id).data[0];
        Tensor& gx = gr.node(logits).grad;
        for (int n = 0; n < N; ++n)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const int cls = (*tgt)[n].at(x, y) ? 1 : 0;
                    for (int c = 0; c < 2; ++c) {
                        const double p = probs->at4(n, c, y, x);
                        gx.at4(n, c, y, x) += seed * inv * (p - (c == cls ? 1.0 : 0.0));
                    }
                }
    });
}

Graph::NodeId op_mean2(Graph& g, Graph::NodeId a, Graph::NodeId b) {
    const double v = 0.5 * (g.value(a).data[0] + g.value(b).data[0]);
    return make_op(g, Tensor({1}, v), [a, b](Graph& gr, Graph::NodeId id) {
        const double seed = gr.grad(id).data[0];
        gr.node(a).grad.data[0] += 0.5 * seed;
        gr.node(b).grad.data[0] += 0.5 * seed;
    });
}

Tensor softmax_channels(const Tensor& logits) {
    if (logits.rank() != 4) throw std::invalid_argument("softmax_channels: expected NCHW");
    const int N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    Tensor out(logits.shape);
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double m = logits.at4(n, 0, y, x);
                for (int c = 1; c < C; ++c) m = std::max(m, logits.at4(n, c, y, x));
                double s = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double e = std::exp(logits.at4(n, c, y, x) - m);
                    out.at4(n, c, y, x) = e;
                    s += e;
                }
                for (int c = 0; c < C; ++c) out.at4(n, c, y, x) /= s;
            }
    return out;
}

}  // namespace coseg
