#include "unetsurv/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unetsurv::ad {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

struct ConvDims {
    int cin, cout, k, r, x, y, z;
    std::size_t spatial;  // x*y*z
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b) {
    require(in.shape.size() == 4, "conv3d: input must be [C,X,Y,Z]");
    require(w.shape.size() == 5, "conv3d: weight must be [Cout,Cin,k,k,k]");
    require(b.shape.size() == 1, "conv3d: bias must be [Cout]");
    ConvDims d;
    d.cout = w.shape[0];
    d.cin = w.shape[1];
    d.k = w.shape[2];
    require(w.shape[3] == d.k && w.shape[4] == d.k, "conv3d: kernel must be cubic");
    require(d.k % 2 == 1, "conv3d: kernel size must be odd");
    require(in.shape[0] == d.cin, "conv3d: channel mismatch between input and weight");
    require(b.shape[0] == d.cout, "conv3d: channel mismatch between bias and weight");
    d.r = d.k / 2;
    d.x = in.shape[1];
    d.y = in.shape[2];
    d.z = in.shape[3];
    d.spatial = static_cast<std::size_t>(d.x) * d.y * d.z;
    return d;
}

}  // namespace

template <typename T>
typename Graph<T>::NodeId Graph<T>::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::invalid_argument("graph: node id out of range");
    return id;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
void Graph<T>::ensure_grad(Node& n) {
    if (n.grad.size() != n.out.size()) n.grad.assign(n.out.size(), T(0));
}

template <typename T>
const std::vector<T>& Graph<T>::grad(NodeId id) const {
    const Node& n = nodes_[check(id)];
    if (n.grad.size() != n.out.size())
        throw std::logic_error("graph: gradient not computed for this node");
    return n.grad;
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::leaf(Tensor<T> t) {
    Node n;
    n.op = Op::leaf;
    n.needs_grad = t.requires_grad;
    n.out = std::move(t);
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::conv3d(NodeId input, NodeId weight, NodeId bias) {
    const Tensor<T>& in = value(input);
    const Tensor<T>& w = value(weight);
    const Tensor<T>& b = value(bias);
    const ConvDims d = conv_dims(in, w, b);

    Node n;
    n.op = Op::conv3d;
    n.in = {input, weight, bias};
    n.needs_grad = nodes_[input].needs_grad || nodes_[weight].needs_grad || nodes_[bias].needs_grad;
    n.out = Tensor<T>::zeros({d.cout, d.x, d.y, d.z});

    const int yz = d.y * d.z;
    for (int co = 0; co < d.cout; ++co) {
        T* outp = n.out.data.data() + static_cast<std::size_t>(co) * d.spatial;
        std::fill(outp, outp + d.spatial, b.data[co]);
        for (int ci = 0; ci < d.cin; ++ci) {
            const T* inp = in.data.data() + static_cast<std::size_t>(ci) * d.spatial;
            const T* wp = w.data.data() +
                          (static_cast<std::size_t>(co) * d.cin + ci) * d.k * d.k * d.k;
            for (int kx = 0; kx < d.k; ++kx) {
                const int dx = kx - d.r;
                const int x0 = std::max(0, -dx), x1 = std::min(d.x, d.x - dx);
                for (int ky = 0; ky < d.k; ++ky) {
                    const int dy = ky - d.r;
                    const int y0 = std::max(0, -dy), y1 = std::min(d.y, d.y - dy);
                    for (int kz = 0; kz < d.k; ++kz) {
                        const int dz = kz - d.r;
                        const int z0 = std::max(0, -dz), z1 = std::min(d.z, d.z - dz);
                        const T wv = wp[(kx * d.k + ky) * d.k + kz];
                        for (int x = x0; x < x1; ++x)
                            for (int y = y0; y < y1; ++y) {
                                T* orow = outp + x * yz + y * d.z;
                                const T* irow = inp + (x + dx) * yz + (y + dy) * d.z + dz;
                                for (int z = z0; z < z1; ++z) orow[z] += wv * irow[z];
                            }
                    }
                }
            }
        }
    }
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::maxpool3d(NodeId x) {
    const Tensor<T>& in = value(x);
    require(in.shape.size() == 4, "maxpool3d: input must be [C,X,Y,Z]");
    require(in.shape[1] % 2 == 0 && in.shape[2] % 2 == 0 && in.shape[3] % 2 == 0,
            "maxpool3d: spatial dims must be even");

    const int c = in.shape[0], xi = in.shape[1], yi = in.shape[2], zi = in.shape[3];
    const int xo = xi / 2, yo = yi / 2, zo = zi / 2;
    Node n;
    n.op = Op::maxpool3d;
    n.in = {x, -1, -1};
    n.needs_grad = nodes_[x].needs_grad;
    n.out = Tensor<T>::zeros({c, xo, yo, zo});
    n.arg.resize(n.out.size());

    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int px = 0; px < xo; ++px)
            for (int py = 0; py < yo; ++py)
                for (int pz = 0; pz < zo; ++pz, ++o) {
                    T best{};
                    std::int32_t best_idx = -1;
                    for (int dx = 0; dx < 2; ++dx)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dz = 0; dz < 2; ++dz) {
                                const std::size_t idx =
                                    ((static_cast<std::size_t>(ch) * xi + 2 * px + dx) * yi +
                                     2 * py + dy) *
                                        zi +
                                    2 * pz + dz;
                                const T v = in.data[idx];
                                if (best_idx < 0 || v > best) {
                                    best = v;
                                    best_idx = static_cast<std::int32_t>(idx);
                                }
                            }
                    n.out.data[o] = best;
                    n.arg[o] = best_idx;
                }
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::upsample3d_nn(NodeId x) {
    const Tensor<T>& in = value(x);
    require(in.shape.size() == 4, "upsample3d_nn: input must be [C,X,Y,Z]");
    const int c = in.shape[0], xi = in.shape[1], yi = in.shape[2], zi = in.shape[3];
    Node n;
    n.op = Op::upsample3d_nn;
    n.in = {x, -1, -1};
    n.needs_grad = nodes_[x].needs_grad;
    n.out = Tensor<T>::zeros({c, 2 * xi, 2 * yi, 2 * zi});

    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int px = 0; px < 2 * xi; ++px)
            for (int py = 0; py < 2 * yi; ++py) {
                const T* irow =
                    in.data.data() + ((static_cast<std::size_t>(ch) * xi + px / 2) * yi + py / 2) * zi;
                for (int pz = 0; pz < 2 * zi; ++pz, ++o) n.out.data[o] = irow[pz / 2];
            }
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::relu(NodeId x) {
    const Tensor<T>& in = value(x);
    Node n;
    n.op = Op::relu;
    n.in = {x, -1, -1};
    n.needs_grad = nodes_[x].needs_grad;
    n.out = in;
    for (T& v : n.out.data) v = v > T(0) ? v : T(0);
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::sigmoid(NodeId x) {
    const Tensor<T>& in = value(x);
    Node n;
    n.op = Op::sigmoid;
    n.in = {x, -1, -1};
    n.needs_grad = nodes_[x].needs_grad;
    n.out = in;
    for (T& v : n.out.data) v = T(1) / (T(1) + std::exp(-v));
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::concat_channels(NodeId a, NodeId b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    require(ta.shape.size() == 4 && tb.shape.size() == 4, "concat: inputs must be [C,X,Y,Z]");
    require(ta.shape[1] == tb.shape[1] && ta.shape[2] == tb.shape[2] && ta.shape[3] == tb.shape[3],
            "concat: spatial dims differ");
    Node n;
    n.op = Op::concat_channels;
    n.in = {a, b, -1};
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.out = Tensor<T>::zeros({ta.shape[0] + tb.shape[0], ta.shape[1], ta.shape[2], ta.shape[3]});
    std::copy(ta.data.begin(), ta.data.end(), n.out.data.begin());
    std::copy(tb.data.begin(), tb.data.end(), n.out.data.begin() + ta.data.size());
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::add(NodeId a, NodeId b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    require(ta.shape == tb.shape, "add: shape mismatch");
    Node n;
    n.op = Op::add;
    n.in = {a, b, -1};
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.out = ta;
    for (std::size_t i = 0; i < tb.data.size(); ++i) n.out.data[i] += tb.data[i];
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::mul(NodeId a, NodeId b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    require(ta.shape == tb.shape, "mul: shape mismatch");
    Node n;
    n.op = Op::mul;
    n.in = {a, b, -1};
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.out = ta;
    for (std::size_t i = 0; i < tb.data.size(); ++i) n.out.data[i] *= tb.data[i];
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::affine(NodeId x, T scale, T shift) {
    const Tensor<T>& in = value(x);
    Node n;
    n.op = Op::affine;
    n.in = {x, -1, -1};
    n.needs_grad = nodes_[x].needs_grad;
    n.scale = scale;
    n.shift = shift;
    n.out = in;
    for (T& v : n.out.data) v = scale * v + shift;
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::sum(NodeId x) {
    const Tensor<T>& in = value(x);
    Node n;
    n.op = Op::sum;
    n.in = {x, -1, -1};
    n.needs_grad = nodes_[x].needs_grad;
    T acc = T(0);
    for (T v : in.data) acc += v;
    n.out = Tensor<T>({1}, {acc});
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::select(NodeId x, std::size_t flat_index) {
    const Tensor<T>& in = value(x);
    require(flat_index < in.size(), "select: index out of range");
    Node n;
    n.op = Op::select;
    n.in = {x, -1, -1};
    n.needs_grad = nodes_[x].needs_grad;
    n.index = flat_index;
    n.out = Tensor<T>({1}, {in.data[flat_index]});
    return push(std::move(n));
}

template <typename T>
typename Graph<T>::NodeId Graph<T>::soft_dice_bce_loss(NodeId pred, NodeId target) {
    const Tensor<T>& p = value(pred);
    const Tensor<T>& t = value(target);
    require(p.shape == t.shape, "dice_bce: shape mismatch");
    for (T v : t.data)
        require(v == T(0) || v == T(1), "dice_bce: target must be binary");

    const double eps = 1.0;
    const double tiny = 1e-12;
    double sum_pt = 0, sum_p = 0, sum_t = 0, bce = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double pv = static_cast<double>(p.data[i]);
        const double tv = static_cast<double>(t.data[i]);
        sum_pt += pv * tv;
        sum_p += pv;
        sum_t += tv;
        bce -= tv * std::log(std::max(pv, tiny)) + (1 - tv) * std::log(std::max(1 - pv, tiny));
    }
    bce /= static_cast<double>(p.data.size());
    const double soft_dice = (2 * sum_pt + eps) / (sum_p + sum_t + eps);
    const double loss = 0.5 * (1 - soft_dice) + 0.5 * bce;

    Node n;
    n.op = Op::dice_bce;
    n.in = {pred, target, -1};
    n.needs_grad = nodes_[pred].needs_grad;
    n.out = Tensor<T>({1}, {static_cast<T>(loss)});
    return push(std::move(n));
}

template <typename T>
void Graph<T>::backward(NodeId root) {
    check(root);
    if (nodes_[root].out.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    for (Node& n : nodes_)
        if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), T(0));
    ensure_grad(nodes_[root]);
    nodes_[root].grad[0] = T(1);
    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.empty() || n.op == Op::leaf) continue;
        backward_node(id);
    }
}

template <typename T>
void Graph<T>::backward_node(NodeId id) {
    Node& n = nodes_[id];
    const std::vector<T>& g = n.grad;

    const auto wants = [&](int slot) {
        return n.in[slot] >= 0 && nodes_[n.in[slot]].needs_grad;
    };
    const auto input_grad = [&](int slot) -> std::vector<T>& {
        Node& src = nodes_[n.in[slot]];
        ensure_grad(src);
        return src.grad;
    };

    switch (n.op) {
        case Op::leaf:
            break;

        case Op::conv3d: {
            const Tensor<T>& in = nodes_[n.in[0]].out;
            const Tensor<T>& w = nodes_[n.in[1]].out;
            const Tensor<T>& b = nodes_[n.in[2]].out;
            const ConvDims d = conv_dims(in, w, b);
            const int yz = d.y * d.z;

            if (wants(2)) {
                std::vector<T>& gb = input_grad(2);
                for (int co = 0; co < d.cout; ++co) {
                    const T* gp = g.data() + static_cast<std::size_t>(co) * d.spatial;
                    T acc = T(0);
                    for (std::size_t i = 0; i < d.spatial; ++i) acc += gp[i];
                    gb[co] += acc;
                }
            }
            const bool want_in = wants(0), want_w = wants(1);
            if (!want_in && !want_w) break;
            std::vector<T>* gin = want_in ? &input_grad(0) : nullptr;
            std::vector<T>* gw = want_w ? &input_grad(1) : nullptr;

            for (int co = 0; co < d.cout; ++co) {
                const T* gp = g.data() + static_cast<std::size_t>(co) * d.spatial;
                for (int ci = 0; ci < d.cin; ++ci) {
                    const T* inp = in.data.data() + static_cast<std::size_t>(ci) * d.spatial;
                    const std::size_t wbase =
                        (static_cast<std::size_t>(co) * d.cin + ci) * d.k * d.k * d.k;
                    for (int kx = 0; kx < d.k; ++kx) {
                        const int dx = kx - d.r;
                        const int x0 = std::max(0, -dx), x1 = std::min(d.x, d.x - dx);
                        for (int ky = 0; ky < d.k; ++ky) {
                            const int dy = ky - d.r;
                            const int y0 = std::max(0, -dy), y1 = std::min(d.y, d.y - dy);
                            for (int kz = 0; kz < d.k; ++kz) {
                                const int dz = kz - d.r;
                                const int z0 = std::max(0, -dz), z1 = std::min(d.z, d.z - dz);
                                const std::size_t wi = wbase + (kx * d.k + ky) * d.k + kz;
                                const T wv = w.data[wi];
                                T wacc = T(0);
                                for (int x = x0; x < x1; ++x)
                                    for (int y = y0; y < y1; ++y) {
                                        const T* grow = gp + x * yz + y * d.z;
                                        const std::size_t ibase =
                                            static_cast<std::size_t>(ci) * d.spatial +
                                            (x + dx) * yz + (y + dy) * d.z + dz;
                                        if (want_in) {
                                            T* irow = gin->data() + ibase;
                                            for (int z = z0; z < z1; ++z) irow[z] += wv * grow[z];
                                        }
                                        if (want_w) {
                                            const T* irow = inp + (x + dx) * yz + (y + dy) * d.z + dz;
                                            for (int z = z0; z < z1; ++z) wacc += irow[z] * grow[z];
                                        }
                                    }
                                if (want_w) (*gw)[wi] += wacc;
                            }
                        }
                    }
                }
            }
            break;
        }

        case Op::maxpool3d: {
            if (!wants(0)) break;
            std::vector<T>& gin = input_grad(0);
            for (std::size_t o = 0; o < g.size(); ++o) gin[n.arg[o]] += g[o];
            break;
        }

        case Op::upsample3d_nn: {
            if (!wants(0)) break;
            std::vector<T>& gin = input_grad(0);
            const Tensor<T>& in = nodes_[n.in[0]].out;
            const int c = in.shape[0], xi = in.shape[1], yi = in.shape[2], zi = in.shape[3];
            std::size_t o = 0;
            for (int ch = 0; ch < c; ++ch)
                for (int px = 0; px < 2 * xi; ++px)
                    for (int py = 0; py < 2 * yi; ++py) {
                        T* grow =
                            gin.data() + ((static_cast<std::size_t>(ch) * xi + px / 2) * yi + py / 2) * zi;
                        for (int pz = 0; pz < 2 * zi; ++pz, ++o) grow[pz / 2] += g[o];
                    }
            break;
        }

        case Op::relu: {
            if (!wants(0)) break;
            std::vector<T>& gin = input_grad(0);
            const Tensor<T>& in = nodes_[n.in[0]].out;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (in.data[i] > T(0)) gin[i] += g[i];
            break;
        }

        case Op::sigmoid: {
            if (!wants(0)) break;
            std::vector<T>& gin = input_grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T s = n.out.data[i];
                gin[i] += g[i] * s * (T(1) - s);
            }
            break;
        }

        case Op::concat_channels: {
            const std::size_t na = nodes_[n.in[0]].out.size();
            if (wants(0)) {
                std::vector<T>& ga = input_grad(0);
                for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
            }
            if (wants(1)) {
                std::vector<T>& gb = input_grad(1);
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
            }
            break;
        }

        case Op::add: {
            for (int slot = 0; slot < 2; ++slot)
                if (wants(slot)) {
                    std::vector<T>& gi = input_grad(slot);
                    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                }
            break;
        }

        case Op::mul: {
            if (wants(0)) {
                std::vector<T>& ga = input_grad(0);
                const Tensor<T>& tb = nodes_[n.in[1]].out;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * tb.data[i];
            }
            if (wants(1)) {
                std::vector<T>& gb = input_grad(1);
                const Tensor<T>& ta = nodes_[n.in[0]].out;
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ta.data[i];
            }
            break;
        }

        case Op::affine: {
            if (!wants(0)) break;
            std::vector<T>& gin = input_grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) gin[i] += g[i] * n.scale;
            break;
        }

        case Op::sum: {
            if (!wants(0)) break;
            std::vector<T>& gin = input_grad(0);
            for (T& v : gin) v += g[0];
            break;
        }

        case Op::select: {
            if (!wants(0)) break;
            input_grad(0)[n.index] += g[0];
            break;
        }

        case Op::dice_bce: {
            if (!wants(0)) break;
            std::vector<T>& gin = input_grad(0);
            const Tensor<T>& p = nodes_[n.in[0]].out;
            const Tensor<T>& t = nodes_[n.in[1]].out;
            const double eps = 1.0, tiny = 1e-12;
            double sum_pt = 0, sum_p = 0, sum_t = 0;
            for (std::size_t i = 0; i < p.data.size(); ++i) {
                sum_pt += static_cast<double>(p.data[i]) * t.data[i];
                sum_p += p.data[i];
                sum_t += t.data[i];
            }
            const double denom = sum_p + sum_t + eps;
            const double num = 2 * sum_pt + eps;
            const double inv_n = 1.0 / static_cast<double>(p.data.size());
            for (std::size_t i = 0; i < p.data.size(); ++i) {
                const double pv = p.data[i], tv = t.data[i];
                // d(0.5*(1 - softDice))/dp = -0.5 * (2*t*denom - num) / denom^2
                const double d_dice = -0.5 * (2 * tv * denom - num) / (denom * denom);
                const double d_bce =
                    0.5 * inv_n * (-tv / std::max(pv, tiny) + (1 - tv) / std::max(1 - pv, tiny));
                gin[i] += static_cast<T>(g[0] * static_cast<T>(d_dice + d_bce));
            }
            break;
        }
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace unetsurv::ad
