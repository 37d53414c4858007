#ifndef UNETSURV_GRAPH_HPP
#define UNETSURV_GRAPH_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "unetsurv/tensor.hpp"

namespace unetsurv::ad {

enum class Op {
    leaf,
    conv3d,
    maxpool3d,
    upsample3d_nn,
    relu,
    sigmoid,
    concat_channels,
    add,
    mul,
    affine,
    sum,
    select,
    dice_bce,
};

// Reverse-mode tape. Every operation appends a node holding its output value;
// node ids only ever reference earlier nodes, so the tape order is already
// topological and backward() is a single reverse sweep.
template <typename T>
class Graph {
public:
    using NodeId = int;

    NodeId leaf(Tensor<T> t);

    // input [C_in,X,Y,Z] (*) weight [C_out,C_in,k,k,k] + bias [C_out], zero
    // 'same' padding, odd k. Cross-correlation, spatial dims preserved.
    NodeId conv3d(NodeId input, NodeId weight, NodeId bias);
    // 2x2x2 window, stride 2; gradient routed to the first maximum in scan order.
    NodeId maxpool3d(NodeId x);
    // Nearest-neighbor x2 per spatial dim; gradient sums over repeated blocks.
    NodeId upsample3d_nn(NodeId x);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId concat_channels(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId affine(NodeId x, T scale, T shift);
    NodeId sum(NodeId x);
    // Scalar view of one element, by flat index.
    NodeId select(NodeId x, std::size_t flat_index);
    // 0.5*(1 - softDice) + 0.5*BCE with softDice = (2*sum(p*t)+1)/(sum(p)+sum(t)+1).
    // pred values must lie in (0,1); target must be binary.
    NodeId soft_dice_bce_loss(NodeId pred, NodeId target);

    const Tensor<T>& value(NodeId id) const { return nodes_[check(id)].out; }
    // Gradient of the last backward() root w.r.t. node id.
    const std::vector<T>& grad(NodeId id) const;

    // root must be scalar. Clears previous gradients, seeds d(root)/d(root)=1
    // and sweeps the tape once in reverse.
    void backward(NodeId root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Op op = Op::leaf;
        std::array<NodeId, 3> in{-1, -1, -1};
        Tensor<T> out;
        bool needs_grad = false;
        std::vector<T> grad;            // lazily sized to out.size()
        std::vector<std::int32_t> arg;  // maxpool argmax (flat input indices)
        T scale = T(0), shift = T(0);   // affine
        std::size_t index = 0;          // select
    };

    NodeId check(NodeId id) const;
    NodeId push(Node n);
    void ensure_grad(Node& n);
    void backward_node(NodeId id);

    std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace unetsurv::ad

#endif
