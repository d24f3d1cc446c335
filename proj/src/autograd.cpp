// Copyright 2026 The mmser Authors
//
// Licensed under the Apache License, Version 2.0

#include "mmser/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "mmser/kernels.hpp"

namespace mmser::ag {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// dst += src, optionally transposed; src is (r, c).
void acc_matrix(Tensor& dst, const Tensor& src, bool transpose, int64_t r, int64_t c) {
  if (!transpose) {
    for (int64_t i = 0; i < r * c; ++i) dst.data[static_cast<size_t>(i)] += src.data[static_cast<size_t>(i)];
  } else {
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j)
        dst.data[static_cast<size_t>(j * r + i)] += src.data[static_cast<size_t>(i * c + j)];
  }
}
}  // namespace

Value Graph::push(Tensor value, std::initializer_list<Value> parents,
                  std::function<void(Graph&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  for (Value p : parents)
    if (p.valid() && node(p.id).needs_grad) n.needs_grad = true;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Tensor* Graph::grad_buf(int id) {
  Node& nd = node(id);
  if (!nd.needs_grad) return nullptr;
  if (!nd.has_grad) {
    nd.grad = Tensor(nd.value.shape);
    nd.has_grad = true;
  }
  return &nd.grad;
}

Value Graph::input(Tensor t) { return push(std::move(t), {}, nullptr); }

Value Graph::param(ParamStore& store, int index) {
  for (size_t i = 0; i < param_keys_.size(); ++i)
    if (param_keys_[i].first == &store && param_keys_[i].second == index)
      return {param_nodes_[i]};
  Node n;
  n.value = store.at(index).value;
  n.needs_grad = true;
  n.param_index = index;
  n.store = &store;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_keys_.emplace_back(&store, index);
  param_nodes_.push_back(id);
  return {id};
}

Value Graph::matmul(Value a, Value b, bool trans_a, bool trans_b) {
  const Tensor& ta = node(a.id).value;
  const Tensor& tb = node(b.id).value;
  if (ta.rank() != 2 || tb.rank() != 2) raise("shape_mismatch", "matmul needs rank-2");
  const int64_t m = trans_a ? ta.shape[1] : ta.shape[0];
  const int64_t k = trans_a ? ta.shape[0] : ta.shape[1];
  const int64_t kb = trans_b ? tb.shape[1] : tb.shape[0];
  const int64_t n = trans_b ? tb.shape[0] : tb.shape[1];
  if (k != kb) raise("shape_mismatch", "matmul inner dims differ");

  Tensor out({m, n});
  kernels::matmul(ta.data.data(), tb.data.data(), out.data.data(), m, k, n, trans_a,
                  trans_b);
  return push(std::move(out), {a, b},
              [a, b, trans_a, trans_b, m, k, n](Graph& g, int self) {
                const Tensor& grad = g.node(self).grad;
                const Tensor& av = g.node(a.id).value;
                const Tensor& bv = g.node(b.id).value;
                if (Tensor* da = g.grad_buf(a.id)) {
                  Tensor tmp({m, k});
                  kernels::matmul(grad.data.data(), bv.data.data(), tmp.data.data(), m,
                                  n, k, false, !trans_b);
                  acc_matrix(*da, tmp, trans_a, m, k);
                }
                if (Tensor* db = g.grad_buf(b.id)) {
                  Tensor tmp({k, n});
                  kernels::matmul(av.data.data(), grad.data.data(), tmp.data.data(), k,
                                  m, n, !trans_a, false);
                  acc_matrix(*db, tmp, trans_b, k, n);
                }
              });
}

Value Graph::bmm(Value a, Value b, bool trans_a, bool trans_b) {
  const Tensor& ta = node(a.id).value;
  const Tensor& tb = node(b.id).value;
  if (ta.rank() != 3 || tb.rank() != 3) raise("shape_mismatch", "bmm needs rank-3");
  if (ta.shape[0] != tb.shape[0]) raise("shape_mismatch", "bmm batch dims differ");
  const int64_t batch = ta.shape[0];
  const int64_t m = trans_a ? ta.shape[2] : ta.shape[1];
  const int64_t k = trans_a ? ta.shape[1] : ta.shape[2];
  const int64_t kb = trans_b ? tb.shape[2] : tb.shape[1];
  const int64_t n = trans_b ? tb.shape[1] : tb.shape[2];
  if (k != kb) raise("shape_mismatch", "bmm inner dims differ");

  Tensor out({batch, m, n});
  kernels::bmm(ta.data.data(), tb.data.data(), out.data.data(), batch, m, k, n,
               trans_a, trans_b);
  return push(std::move(out), {a, b},
              [a, b, trans_a, trans_b, batch, m, k, n](Graph& g, int self) {
                const Tensor& grad = g.node(self).grad;
                const Tensor& av = g.node(a.id).value;
                const Tensor& bv = g.node(b.id).value;
                // dst (+)= src item, transposed when the stored operand was.
                auto acc_item = [](Tensor& dst, const Tensor& src, bool transpose,
                                   int64_t t, int64_t r, int64_t c) {
                  const double* s = src.data.data() + t * r * c;
                  double* d = dst.data.data() + t * r * c;
                  if (!transpose) {
                    for (int64_t i = 0; i < r * c; ++i) d[i] += s[i];
                  } else {
                    for (int64_t i = 0; i < r; ++i)
                      for (int64_t j = 0; j < c; ++j) d[j * r + i] += s[i * c + j];
                  }
                };
                if (Tensor* da = g.grad_buf(a.id)) {
                  Tensor tmp({batch, m, k});
                  kernels::bmm(grad.data.data(), bv.data.data(), tmp.data.data(), batch,
                               m, n, k, false, !trans_b);
                  for (int64_t t = 0; t < batch; ++t) acc_item(*da, tmp, trans_a, t, m, k);
                }
                if (Tensor* db = g.grad_buf(b.id)) {
                  Tensor tmp({batch, k, n});
                  kernels::bmm(av.data.data(), grad.data.data(), tmp.data.data(), batch,
                               k, m, n, !trans_a, false);
                  for (int64_t t = 0; t < batch; ++t) acc_item(*db, tmp, trans_b, t, k, n);
                }
              });
}

Value Graph::add(Value a, Value b) {
  const Tensor& ta = node(a.id).value;
  const Tensor& tb = node(b.id).value;
  if (!ta.same_shape(tb)) raise("shape_mismatch", "add shapes differ");
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] += tb.data[static_cast<size_t>(i)];
  return push(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    for (Value p : {a, b})
      if (Tensor* dp = g.grad_buf(p.id))
        for (int64_t i = 0; i < grad.numel(); ++i) dp->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)];
  });
}

Value Graph::add_rowvec(Value a, Value v) {
  const Tensor& ta = node(a.id).value;
  const Tensor& tv = node(v.id).value;
  const int64_t c = tv.numel();
  if (ta.numel() % c != 0) raise("shape_mismatch", "add_rowvec width mismatch");
  const int64_t r = ta.numel() / c;
  Tensor out = ta;
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data[static_cast<size_t>(i * c + j)] += tv.data[static_cast<size_t>(j)];
  return push(std::move(out), {a, v}, [a, v, r, c](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    if (Tensor* da = g.grad_buf(a.id))
      for (int64_t i = 0; i < grad.numel(); ++i) da->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)];
    if (Tensor* dv = g.grad_buf(v.id))
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) dv->data[static_cast<size_t>(j)] += grad.data[static_cast<size_t>(i * c + j)];
  });
}

Value Graph::scale(Value a, double s) {
  Tensor out = node(a.id).value;
  for (auto& x : out.data) x *= s;
  return push(std::move(out), {a}, [a, s](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    if (Tensor* da = g.grad_buf(a.id))
      for (int64_t i = 0; i < grad.numel(); ++i) da->data[static_cast<size_t>(i)] += s * grad.data[static_cast<size_t>(i)];
  });
}

Value Graph::mul(Value a, Value b) {
  const Tensor& ta = node(a.id).value;
  const Tensor& tb = node(b.id).value;
  if (!ta.same_shape(tb)) raise("shape_mismatch", "mul shapes differ");
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] *= tb.data[static_cast<size_t>(i)];
  return push(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    const Tensor& av = g.node(a.id).value;
    const Tensor& bv = g.node(b.id).value;
    if (Tensor* da = g.grad_buf(a.id))
      for (int64_t i = 0; i < grad.numel(); ++i) da->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)] * bv.data[static_cast<size_t>(i)];
    if (Tensor* db = g.grad_buf(b.id))
      for (int64_t i = 0; i < grad.numel(); ++i) db->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)] * av.data[static_cast<size_t>(i)];
  });
}

Value Graph::mul_const(Value a, Tensor mask) {
  const Tensor& ta = node(a.id).value;
  if (!ta.same_shape(mask)) raise("shape_mismatch", "mul_const shapes differ");
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] *= mask.data[static_cast<size_t>(i)];
  auto shared = std::make_shared<Tensor>(std::move(mask));
  return push(std::move(out), {a}, [a, shared](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    if (Tensor* da = g.grad_buf(a.id))
      for (int64_t i = 0; i < grad.numel(); ++i)
        da->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)] * shared->data[static_cast<size_t>(i)];
  });
}

Value Graph::reshape(Value a, std::vector<int64_t> shape) {
  const Tensor& ta = node(a.id).value;
  if (Tensor::numel_of(shape) != ta.numel()) raise("shape_mismatch", "reshape numel");
  Tensor out(std::move(shape), ta.data);
  return push(std::move(out), {a}, [a](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    if (Tensor* da = g.grad_buf(a.id))
      for (int64_t i = 0; i < grad.numel(); ++i) da->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)];
  });
}

Value Graph::gather(Value a, IndexMap idx, std::vector<int64_t> out_shape) {
  const Tensor& ta = node(a.id).value;
  if (static_cast<int64_t>(idx->size()) != Tensor::numel_of(out_shape))
    raise("shape_mismatch", "gather index size mismatch");
  Tensor out(std::move(out_shape));
  const auto& map = *idx;
  for (size_t i = 0; i < map.size(); ++i)
    out.data[i] = map[i] < 0 ? 0.0 : ta.data[static_cast<size_t>(map[i])];
  return push(std::move(out), {a}, [a, idx](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    if (Tensor* da = g.grad_buf(a.id)) {
      const auto& map = *idx;
      for (size_t i = 0; i < map.size(); ++i)
        if (map[i] >= 0) da->data[static_cast<size_t>(map[i])] += grad.data[i];
    }
  });
}

Value Graph::layer_norm(Value x, Value gamma, Value beta, double eps) {
  const Tensor& tx = node(x.id).value;
  const int64_t c = node(gamma.id).value.numel();
  if (tx.numel() % c != 0 || node(beta.id).value.numel() != c)
    raise("shape_mismatch", "layer_norm width mismatch");
  const int64_t r = tx.numel() / c;
  const Tensor& tg = node(gamma.id).value;
  const Tensor& tb = node(beta.id).value;

  Tensor out(tx.shape);
  Tensor xhat(tx.shape);
  Tensor istd({r});
  for (int64_t i = 0; i < r; ++i) {
    const double* row = tx.data.data() + i * c;
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    istd.data[static_cast<size_t>(i)] = is;
    for (int64_t j = 0; j < c; ++j) {
      const double xh = (row[j] - mu) * is;
      xhat.data[static_cast<size_t>(i * c + j)] = xh;
      out.data[static_cast<size_t>(i * c + j)] = xh * tg.data[static_cast<size_t>(j)] + tb.data[static_cast<size_t>(j)];
    }
  }
  return push(std::move(out), {x, gamma, beta},
              [x, gamma, beta, r, c, xh = std::move(xhat),
               is = std::move(istd)](Graph& g, int self) {
                const Tensor& grad = g.node(self).grad;
                const Tensor& tg = g.node(gamma.id).value;
                Tensor* dx = g.grad_buf(x.id);
                Tensor* dgamma = g.grad_buf(gamma.id);
                Tensor* dbeta = g.grad_buf(beta.id);
                for (int64_t i = 0; i < r; ++i) {
                  const double* grow = grad.data.data() + i * c;
                  const double* xrow = xh.data.data() + i * c;
                  if (dx) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int64_t j = 0; j < c; ++j) {
                      const double dxh = grow[j] * tg.data[static_cast<size_t>(j)];
                      m1 += dxh;
                      m2 += dxh * xrow[j];
                    }
                    m1 /= static_cast<double>(c);
                    m2 /= static_cast<double>(c);
                    const double s = is.data[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < c; ++j) {
                      const double dxh = grow[j] * tg.data[static_cast<size_t>(j)];
                      dx->data[static_cast<size_t>(i * c + j)] += s * (dxh - m1 - xrow[j] * m2);
                    }
                  }
                  if (dgamma)
                    for (int64_t j = 0; j < c; ++j)
                      dgamma->data[static_cast<size_t>(j)] += grow[j] * xrow[j];
                  if (dbeta)
                    for (int64_t j = 0; j < c; ++j) dbeta->data[static_cast<size_t>(j)] += grow[j];
                }
              });
}

Value Graph::gelu(Value x) {
  const Tensor& tx = node(x.id).value;
  Tensor out(tx.shape);
  for (int64_t i = 0; i < tx.numel(); ++i) {
    const double v = tx.data[static_cast<size_t>(i)];
    out.data[static_cast<size_t>(i)] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return push(std::move(out), {x}, [x](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    const Tensor& tx = g.node(x.id).value;
    if (Tensor* dx = g.grad_buf(x.id))
      for (int64_t i = 0; i < grad.numel(); ++i) {
        const double v = tx.data[static_cast<size_t>(i)];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)] * (cdf + v * pdf);
      }
  });
}

Value Graph::softmax_lastdim(Value x) {
  const Tensor& tx = node(x.id).value;
  const int64_t c = tx.shape.back();
  const int64_t r = tx.numel() / c;
  Tensor out(tx.shape);
  for (int64_t i = 0; i < r; ++i) {
    const double* row = tx.data.data() + i * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      out.data[static_cast<size_t>(i * c + j)] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < c; ++j) out.data[static_cast<size_t>(i * c + j)] *= inv;
  }
  return push(std::move(out), {x}, [x, r, c](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    const Tensor& y = g.node(self).value;
    if (Tensor* dx = g.grad_buf(x.id))
      for (int64_t i = 0; i < r; ++i) {
        const double* grow = grad.data.data() + i * c;
        const double* yrow = y.data.data() + i * c;
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += grow[j] * yrow[j];
        for (int64_t j = 0; j < c; ++j)
          dx->data[static_cast<size_t>(i * c + j)] += yrow[j] * (grow[j] - dot);
      }
  });
}

Value Graph::attn_bias(Value scores, Value bias, int heads,
                       std::shared_ptr<const Tensor> window_mask) {
  const Tensor& ts = node(scores.id).value;
  const Tensor& tb = node(bias.id).value;
  if (ts.rank() != 3 || tb.rank() != 3) raise("shape_mismatch", "attn_bias rank");
  const int64_t batch = ts.shape[0];
  const int64_t mn = ts.shape[1] * ts.shape[2];
  if (tb.shape[0] != heads || tb.shape[1] != ts.shape[1] || tb.shape[2] != ts.shape[2])
    raise("shape_mismatch", "attn_bias bias shape");
  Tensor out = ts;
  for (int64_t b = 0; b < batch; ++b) {
    const double* brow = tb.data.data() + (b % heads) * mn;
    double* orow = out.data.data() + b * mn;
    for (int64_t i = 0; i < mn; ++i) orow[i] += brow[i];
    if (window_mask) {
      const double* mrow = window_mask->data.data() + (b / heads) * mn;
      for (int64_t i = 0; i < mn; ++i) orow[i] += mrow[i];
    }
  }
  return push(std::move(out), {scores, bias},
              [scores, bias, heads, batch, mn](Graph& g, int self) {
                const Tensor& grad = g.node(self).grad;
                if (Tensor* ds = g.grad_buf(scores.id))
                  for (int64_t i = 0; i < grad.numel(); ++i) ds->data[static_cast<size_t>(i)] += grad.data[static_cast<size_t>(i)];
                if (Tensor* db = g.grad_buf(bias.id))
                  for (int64_t b = 0; b < batch; ++b) {
                    double* brow = db->data.data() + (b % heads) * mn;
                    const double* grow = grad.data.data() + b * mn;
                    for (int64_t i = 0; i < mn; ++i) brow[i] += grow[i];
                  }
              });
}

Value Graph::mean_rows(Value a) {
  const Tensor& ta = node(a.id).value;
  if (ta.rank() != 2) raise("shape_mismatch", "mean_rows needs rank-2");
  const int64_t r = ta.shape[0];
  const int64_t c = ta.shape[1];
  Tensor out({c});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data[static_cast<size_t>(j)] += ta.at(i, j);
  const double inv = 1.0 / static_cast<double>(r);
  for (auto& v : out.data) v *= inv;
  return push(std::move(out), {a}, [a, r, c, inv](Graph& g, int self) {
    const Tensor& grad = g.node(self).grad;
    if (Tensor* da = g.grad_buf(a.id))
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) da->data[static_cast<size_t>(i * c + j)] += grad.data[static_cast<size_t>(j)] * inv;
  });
}

Value Graph::cross_entropy(Value logits, int label) {
  const Tensor& tl = node(logits.id).value;
  const int64_t c = tl.numel();
  if (label < 0 || label >= c) raise("format", "label out of range");
  double mx = tl.data[0];
  for (int64_t j = 1; j < c; ++j) mx = std::max(mx, tl.data[static_cast<size_t>(j)]);
  double sum = 0.0;
  Tensor probs({c});
  for (int64_t j = 0; j < c; ++j) {
    probs.data[static_cast<size_t>(j)] = std::exp(tl.data[static_cast<size_t>(j)] - mx);
    sum += probs.data[static_cast<size_t>(j)];
  }
  for (auto& p : probs.data) p /= sum;
  const double loss = std::log(sum) + mx - tl.data[static_cast<size_t>(label)];
  Tensor out({1});
  out.data[0] = loss;
  return push(std::move(out), {logits},
              [logits, label, c, p = std::move(probs)](Graph& g, int self) {
                const double gscale = g.node(self).grad.data[0];
                if (Tensor* dl = g.grad_buf(logits.id))
                  for (int64_t j = 0; j < c; ++j)
                    dl->data[static_cast<size_t>(j)] +=
                        gscale * (p.data[static_cast<size_t>(j)] - (j == label ? 1.0 : 0.0));
              });
}

void Graph::backward(Value root, double seed) {
  if (nodes_.empty() || !root.valid() || root.id >= static_cast<int>(nodes_.size()))
    raise("state", "backward without forward");
  Node& rn = node(root.id);
  if (rn.value.numel() != 1) raise("shape_mismatch", "backward root must be scalar");
  if (rn.needs_grad) {
    Tensor* rg = grad_buf(root.id);
    rg->data[0] += seed;
    for (int id = root.id; id >= 0; --id) {
      Node& nd = node(id);
      if (nd.has_grad && nd.backprop) nd.backprop(*this, id);
    }
  }
  for (int pid : param_nodes_) {
    Node& nd = node(pid);
    if (nd.has_grad && nd.store) {
      Tensor& dst = nd.store->at(nd.param_index).grad;
      for (int64_t i = 0; i < nd.grad.numel(); ++i) dst.data[static_cast<size_t>(i)] += nd.grad.data[static_cast<size_t>(i)];
    }
  }
}

}  // namespace mmser::ag
