#pragma once

#include <functional>
#include <vector>

#include "tensor.hpp"

namespace fading {

// Reverse-mode autodiff over a per-pass tape. A fresh Tape is built for
// every forward pass; weights are registered as grad-carrying inputs and
// their gradients read back after backward(). Single-threaded and fully
// deterministic: node order fixes the reduction order.
class Tape {
public:
    using NodeId = int;

    NodeId input(Tensor value, bool requires_grad = false);

    NodeId add(NodeId a, NodeId b);
    // out = alpha * a + beta * b
    NodeId axpby(float alpha, NodeId a, float beta, NodeId b);
    NodeId scale(NodeId a, float s);
    NodeId silu(NodeId a);
    // x: (C,H,W) + bias (C), broadcast over spatial positions
    NodeId add_channel_bias(NodeId x, NodeId bias);
    // x: (Cin,H,W), w: (Cout,Cin,3,3), b: (Cout); pad 1, stride 1 or 2
    NodeId conv3x3(NodeId x, NodeId w, NodeId b, int stride = 1);
    // (C,H,W) -> (C,2H,2W)
    NodeId upsample_nearest2(NodeId x);
    // (m,k) x (k,n) -> (m,n)
    NodeId matmul(NodeId a, NodeId b);
    // (m,k) x (n,k)^T -> (m,n)
    NodeId matmul_nt(NodeId a, NodeId b);
    // (C,H,W) -> (H*W, C)
    NodeId chw_to_pixc(NodeId x);
    // (P,C) -> (C,H,W) with P == H*W
    NodeId pixc_to_chw(NodeId x, int h, int w);
    NodeId softmax_rows(NodeId x);
    // same data, new shape (numel must match)
    NodeId reshape(NodeId x, std::vector<int> shape);
    // scalar mean squared error
    NodeId mse_loss(NodeId a, NodeId b);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // root must be scalar (numel == 1); seeds d(root)/d(root) = 1.
    void backward(NodeId root);

private:
    struct Node {
        Tensor val;
        Tensor grad;  // allocated lazily in backward()
        bool requires_grad = false;
        std::function<void(Tape&, Node&)> back;  // empty for leaves
    };

    NodeId push(Tensor val, bool requires_grad, std::function<void(Tape&, Node&)> back);
    Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
    Tensor& grad_ref(NodeId id);

    std::vector<Node> nodes_;
};

}  // namespace fading
