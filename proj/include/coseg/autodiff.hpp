#pragma once

#include <functional>
#include <memory>

#include "coseg/grid.hpp"
#include "coseg/kernels.hpp"
#include "coseg/tensor.hpp"

namespace coseg {

// Define-by-run reverse-mode graph. Nodes are created in topological order;
// backward() walks them in reverse, accumulating exact analytic gradients.
// A parameter node used twice (shared Siamese weights) accumulates both
// contributions naturally.
class Graph {
public:
    using NodeId = int;

    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Graph&)> backprop;  // adds into parents' grads
    };

    NodeId add_input(Tensor value, bool needs_grad);
    Node& node(NodeId id) { return *nodes_[id]; }
    const Tensor& value(NodeId id) const { return nodes_[id]->value; }
    const Tensor& grad(NodeId id) const { return nodes_[id]->grad; }

    // Seeds d(loss)/d(loss) = 1 and runs the reverse sweep. The loss node
    // must be a scalar. Throws if called before any forward op exists.
    void backward(NodeId loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    friend NodeId detail_add_op(Graph&, Tensor, std::vector<NodeId>,
                                std::function<void(Graph&)>);
    std::vector<std::unique_ptr<Node>> nodes_;
};

// --- differentiable operators ---

Graph::NodeId op_conv2d(Graph& g, Graph::NodeId x, Graph::NodeId w, Graph::NodeId b,
                        const ConvGeom& geom);
Graph::NodeId op_relu(Graph& g, Graph::NodeId x);
Graph::NodeId op_sigmoid(Graph& g, Graph::NodeId x);
Graph::NodeId op_max_pool2x2(Graph& g, Graph::NodeId x);
// [N,C,H,W] -> [N,C,1,1]
Graph::NodeId op_global_avg_pool(Graph& g, Graph::NodeId x);
// x [N,Cin,1,1], w [Cout,Cin], b [Cout] -> [N,Cout,1,1]
Graph::NodeId op_fully_connected(Graph& g, Graph::NodeId x, Graph::NodeId w, Graph::NodeId b);
// Elementwise product with broadcasting over dims where b's extent is 1.
Graph::NodeId op_mul(Graph& g, Graph::NodeId a, Graph::NodeId b);
Graph::NodeId op_add(Graph& g, Graph::NodeId a, Graph::NodeId b);
Graph::NodeId op_concat_channels(Graph& g, Graph::NodeId a, Graph::NodeId b);
// [N,C,H,W] -> [N,1,H,W]
Graph::NodeId op_channel_mean(Graph& g, Graph::NodeId x);
Graph::NodeId op_channel_max(Graph& g, Graph::NodeId x);
Graph::NodeId op_upsample_bilinear(Graph& g, Graph::NodeId x, int out_h, int out_w);

// Mean over batch and pixels of -log softmax(target class); logits [N,2,H,W].
Graph::NodeId op_softmax_cross_entropy(Graph& g, Graph::NodeId logits,
                                       const std::vector<BinaryMask>& targets);
// 0.5*(a+b) for averaging the two branch losses.
Graph::NodeId op_mean2(Graph& g, Graph::NodeId a, Graph::NodeId b);

// Pure (non-graph) helpers.
// Per-pixel softmax across the 2 class channels; returns [N,2,H,W].
Tensor softmax_channels(const Tensor& logits);

}  // namespace coseg
