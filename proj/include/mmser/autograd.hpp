// Copyright 2026 The mmser Authors
// Minimal reverse-mode tape. Every op records its parents and a closure
// that routes the output gradient backwards; nodes are created in
// topological order so one reverse sweep settles all gradients.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "mmser/params.hpp"
#include "mmser/tensor.hpp"

namespace mmser::ag {

struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

class Graph {
 public:
  // Constant leaf; gradients are not tracked through it.
  Value input(Tensor t);
  // Parameter leaf; backward() accumulates into the store's grad buffer.
  // Repeated calls for the same entry return the same node.
  Value param(ParamStore& store, int index);

  // C = op(A) . op(B) for 2-D tensors.
  Value matmul(Value a, Value b, bool trans_a = false, bool trans_b = false);
  // Batched matmul for rank-3 tensors (batch, r, c).
  Value bmm(Value a, Value b, bool trans_a = false, bool trans_b = false);
  Value add(Value a, Value b);             // same shape
  Value add_rowvec(Value a, Value v);      // (r,c) + (c,) broadcast over rows
  Value scale(Value a, double s);
  Value mul(Value a, Value b);             // elementwise
  Value mul_const(Value a, Tensor mask);   // elementwise by a constant
  Value reshape(Value a, std::vector<int64_t> shape);
  // out[i] = idx[i] < 0 ? 0 : a.data[idx[i]]
  Value gather(Value a, IndexMap idx, std::vector<int64_t> out_shape);
  Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
  Value gelu(Value x);
  Value softmax_lastdim(Value x);
  // scores (batch, m, n) with batch = windows*heads, head fastest:
  // out[b] = scores[b] + bias[b % heads] (+ mask[b / heads] when given).
  Value attn_bias(Value scores, Value bias, int heads,
                  std::shared_ptr<const Tensor> window_mask = nullptr);
  Value mean_rows(Value a);                // (r,c) -> (c,)
  // loss = -log softmax(logits)[label]; logits is rank-1.
  Value cross_entropy(Value logits, int label);

  const Tensor& value(Value v) const { return node(v.id).value; }
  const std::vector<int64_t>& shape(Value v) const { return node(v.id).value.shape; }

  // Reverse sweep from a scalar root. `seed` is the incoming gradient
  // (1/batch for batch-mean losses). Raises "state" when no forward pass
  // has been recorded.
  void backward(Value root, double seed = 1.0);

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    int param_index = -1;
    ParamStore* store = nullptr;
    std::function<void(Graph&, int)> backprop;
  };

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  Value push(Tensor value, std::initializer_list<Value> parents,
             std::function<void(Graph&, int)> backprop);
  // Returns nullptr when the target does not track gradients.
  Tensor* grad_buf(int id);

  std::deque<Node> nodes_;
  std::vector<std::pair<ParamStore*, int>> param_keys_;
  std::vector<int> param_nodes_;
};

}  // namespace mmser::ag
