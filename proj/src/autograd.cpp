#include "pcmar/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "pcmar/kernels.hpp"

namespace pcmar::ag {
namespace {

template <typename T>
Var<T> make_node(BasicTensor<T> value, std::string op, std::vector<Var<T>> parents) {
  value.require_finite(op.c_str());
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = std::move(op);
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const Var<T>& p) { return p && p->requires_grad; });
  node->parents = std::move(parents);
  return node;
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a->value.shape() != b->value.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape()) + " vs " +
                     shape_str(b->value.shape()));
  }
}

template <typename T>
void require_4d(const BasicTensor<T>& t, const char* op) {
  if (t.ndim() != 4) throw ShapeError(std::string(op) + ": expected [N,C,H,W], got " + shape_str(t.shape()));
}

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
Parameter<T>::Parameter(std::string name, BasicTensor<T> value) : name_(std::move(name)), leaf_(std::make_shared<Node<T>>()) {
  leaf_->param_grad = BasicTensor<T>::zeros_like(value);
  leaf_->value = std::move(value);
  leaf_->op = "parameter";
  leaf_->requires_grad = true;
  leaf_->is_parameter = true;
}

template <typename T>
Var<T> constant(BasicTensor<T> value) {
  return make_node(std::move(value), "constant", {});
}

template <typename T>
Var<T> variable(BasicTensor<T> value) {
  auto node = make_node(std::move(value), "variable", {});
  node->requires_grad = true;
  return node;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride, std::size_t pad) {
  const auto g = conv_geometry(x->value.shape(), w->value.shape(), stride, pad);
  if (bias && (bias->value.ndim() != 1 || bias->value.dim(0) != g.filters)) {
    throw ShapeError("conv2d bias must be [" + std::to_string(g.filters) + "], got " + shape_str(bias->value.shape()));
  }
  BasicTensor<T> out({g.batch, g.filters, g.out_height, g.out_width});
  kernels::parallel::conv2d_forward(g, x->value.ptr(), w->value.ptr(), bias ? bias->value.ptr() : nullptr, out.ptr());
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(bias);
  auto node = make_node(std::move(out), "conv2d", std::move(parents));
  node->backward_fn = [g](Node<T>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    if (x.requires_grad) {
      BasicTensor<T> dx = BasicTensor<T>::zeros_like(x.value);
      kernels::parallel::conv2d_backward_input(g, self.grad.ptr(), w.value.ptr(), dx.ptr());
      add_into(x.grad, dx);
    }
    if (w.requires_grad) {
      BasicTensor<T> dw = BasicTensor<T>::zeros_like(w.value);
      kernels::parallel::conv2d_backward_weight(g, self.grad.ptr(), x.value.ptr(), dw.ptr());
      add_into(w.grad, dw);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& b = *self.parents[2];
      BasicTensor<T> db = BasicTensor<T>::zeros_like(b.value);
      kernels::parallel::conv2d_backward_bias(g, self.grad.ptr(), db.ptr());
      add_into(b.grad, db);
    }
  };
  return node;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, Parameter<T>& w, Parameter<T>* bias, std::size_t stride, std::size_t pad) {
  return conv2d(x, w.var(), bias ? bias->var() : Var<T>{}, stride, pad);
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T{0});
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  BasicTensor<T> out = x->value;
  for (auto& v : out.data()) v = v > 0 ? v : slope * v;
  auto node = make_node(std::move(out), slope == T{0} ? "relu" : "leaky_relu", {x});
  node->backward_fn = [slope](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += p.value[i] > 0 ? self.grad[i] : slope * self.grad[i];
  };
  return node;
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  require_4d(x->value, "upsample_nearest2x");
  const auto& s = x->value.shape();
  const auto N = s[0], C = s[1], H = s[2], W = s[3];
  BasicTensor<T> out({N, C, 2 * H, 2 * W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx) out.at(n, c, y, xx) = x->value.at(n, c, y / 2, xx / 2);
  auto node = make_node(std::move(out), "upsample_nearest2x", {x});
  node->backward_fn = [N, C, H, W](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t xx = 0; xx < W; ++xx) {
            const auto& g = self.grad;
            p.grad.at(n, c, y, xx) += g.at(n, c, 2 * y, 2 * xx) + g.at(n, c, 2 * y, 2 * xx + 1) +
                                      g.at(n, c, 2 * y + 1, 2 * xx) + g.at(n, c, 2 * y + 1, 2 * xx + 1);
          }
  };
  return node;
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  require_4d(a->value, "concat_channels");
  require_4d(b->value, "concat_channels");
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  }
  const auto N = sa[0], C1 = sa[1], C2 = sb[1], P = sa[2] * sa[3];
  BasicTensor<T> out({N, C1 + C2, sa[2], sa[3]});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a->value.ptr() + n * C1 * P, C1 * P, out.ptr() + n * (C1 + C2) * P);
    std::copy_n(b->value.ptr() + n * C2 * P, C2 * P, out.ptr() + n * (C1 + C2) * P + C1 * P);
  }
  auto node = make_node(std::move(out), "concat_channels", {a, b});
  node->backward_fn = [N, C1, C2, P](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t n = 0; n < N; ++n) {
      const T* g = self.grad.ptr() + n * (C1 + C2) * P;
      if (pa.requires_grad)
        for (std::size_t i = 0; i < C1 * P; ++i) pa.grad[n * C1 * P + i] += g[i];
      if (pb.requires_grad)
        for (std::size_t i = 0; i < C2 * P; ++i) pb.grad[n * C2 * P + i] += g[C1 * P + i];
    }
  };
  return node;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  auto node = make_node(std::move(out), "add", {a, b});
  node->backward_fn = [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) add_into(p->grad, self.grad);
  };
  return node;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  BasicTensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  auto node = make_node(std::move(out), "sub", {a, b});
  node->backward_fn = [](Node<T>& self) {
    if (self.parents[0]->requires_grad) add_into(self.parents[0]->grad, self.grad);
    if (self.parents[1]->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[1]->grad[i] -= self.grad[i];
  };
  return node;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  BasicTensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  auto node = make_node(std::move(out), "mul", {a, b});
  node->backward_fn = [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  };
  return node;
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  BasicTensor<T> out = x->value;
  for (auto& v : out.data()) v *= factor;
  auto node = make_node(std::move(out), "scale", {x});
  node->backward_fn = [factor](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += factor * self.grad[i];
  };
  return node;
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  BasicTensor<T> out = x->value;
  for (auto& v : out.data()) v = std::abs(v);
  auto node = make_node(std::move(out), "abs", {x});
  node->backward_fn = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = p.value[i];
      p.grad[i] += v > 0 ? self.grad[i] : (v < 0 ? -self.grad[i] : T{0});
    }
  };
  return node;
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x->value.data()) s += v;
  auto node = make_node(BasicTensor<T>({1}, s), "sum", {x});
  node->backward_fn = [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const T g = self.grad[0];
    for (auto& v : p.grad.data()) v += g;
  };
  return node;
}

template <typename T>
Var<T> mask_multiply(const Var<T>& x, const BasicTensor<T>& mask) {
  require_4d(x->value, "mask_multiply");
  const auto& s = x->value.shape();
  if (mask.ndim() != 4 || mask.dim(0) != s[0] || mask.dim(1) != 1 || mask.dim(2) != s[2] || mask.dim(3) != s[3]) {
    throw ShapeError("mask_multiply: mask " + shape_str(mask.shape()) + " does not fit input " + shape_str(s));
  }
  const auto N = s[0], C = s[1], P = s[2] * s[3];
  BasicTensor<T> out = x->value;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) out[(n * C + c) * P + p] *= mask[n * P + p];
  auto node = make_node(std::move(out), "mask_multiply", {x});
  node->backward_fn = [mask, N, C, P](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) px.grad[(n * C + c) * P + p] += self.grad[(n * C + c) * P + p] * mask[n * P + p];
  };
  return node;
}

template <typename T>
Var<T> renorm_bias(const Var<T>& raw, const BasicTensor<T>& ratio, const Var<T>& bias) {
  require_4d(raw->value, "renorm_bias");
  const auto& s = raw->value.shape();
  const auto N = s[0], F = s[1], P = s[2] * s[3];
  if (ratio.ndim() != 4 || ratio.dim(0) != N || ratio.dim(1) != 1 || ratio.dim(2) != s[2] || ratio.dim(3) != s[3]) {
    throw ShapeError("renorm_bias: ratio " + shape_str(ratio.shape()) + " does not fit " + shape_str(s));
  }
  if (bias && (bias->value.ndim() != 1 || bias->value.dim(0) != F)) {
    throw ShapeError("renorm_bias: bias must be [" + std::to_string(F) + "], got " + shape_str(bias->value.shape()));
  }
  BasicTensor<T> out(s);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      const T b = bias ? bias->value[f] : T{0};
      for (std::size_t p = 0; p < P; ++p) {
        const T r = ratio[n * P + p];
        out[(n * F + f) * P + p] = r > 0 ? raw->value[(n * F + f) * P + p] * r + b : T{0};
      }
    }
  std::vector<Var<T>> parents{raw};
  if (bias) parents.push_back(bias);
  auto node = make_node(std::move(out), "renorm_bias", std::move(parents));
  node->backward_fn = [ratio, N, F, P](Node<T>& self) {
    auto& pr = *self.parents[0];
    Node<T>* pb = self.parents.size() > 1 ? self.parents[1].get() : nullptr;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t f = 0; f < F; ++f) {
        T db = 0;
        for (std::size_t p = 0; p < P; ++p) {
          const T r = ratio[n * P + p];
          if (r <= 0) continue;
          const T g = self.grad[(n * F + f) * P + p];
          if (pr.requires_grad) pr.grad[(n * F + f) * P + p] += g * r;
          db += g;
        }
        if (pb && pb->requires_grad) pb->grad[f] += db;
      }
  };
  return node;
}

template <typename T>
Var<T> total_variation(const Var<T>& x, const BasicTensor<T>& region) {
  require_4d(x->value, "total_variation");
  if (x->value.dim(1) != 1 || region.shape() != x->value.shape()) {
    throw ShapeError("total_variation: expects matching [N,1,H,W] input and region");
  }
  const auto N = x->value.dim(0), H = x->value.dim(2), W = x->value.dim(3);
  const auto& v = x->value;
  T s = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        if (region.at(n, 0, i, j) == 0) continue;
        if (j + 1 < W && region.at(n, 0, i, j + 1) != 0) s += std::abs(v.at(n, 0, i, j + 1) - v.at(n, 0, i, j));
        if (i + 1 < H && region.at(n, 0, i + 1, j) != 0) s += std::abs(v.at(n, 0, i + 1, j) - v.at(n, 0, i, j));
      }
  auto node = make_node(BasicTensor<T>({1}, s), "total_variation", {x});
  node->backward_fn = [region, N, H, W](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const T g = self.grad[0];
    auto sgn = [](T d) { return d > 0 ? T{1} : (d < 0 ? T{-1} : T{0}); };
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          if (region.at(n, 0, i, j) == 0) continue;
          if (j + 1 < W && region.at(n, 0, i, j + 1) != 0) {
            const T d = sgn(p.value.at(n, 0, i, j + 1) - p.value.at(n, 0, i, j)) * g;
            p.grad.at(n, 0, i, j + 1) += d;
            p.grad.at(n, 0, i, j) -= d;
          }
          if (i + 1 < H && region.at(n, 0, i + 1, j) != 0) {
            const T d = sgn(p.value.at(n, 0, i + 1, j) - p.value.at(n, 0, i, j)) * g;
            p.grad.at(n, 0, i + 1, j) += d;
            p.grad.at(n, 0, i, j) -= d;
          }
        }
  };
  return node;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) throw ValueError("backward: null loss");
  if (loss->value.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss->value.shape()));

  // Iterative post-order DFS; parents visited in recorded order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) n->grad = BasicTensor<T>::zeros_like(n->value);
  loss->grad[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
  for (auto* n : order) {
    if (!n->is_parameter) continue;
    n->grad.require_finite("backward");
    add_into(n->param_grad, n->grad);
  }
}

template <typename T>
AdamState<T> adam_init(const std::vector<Parameter<T>*>& params) {
  AdamState<T> st;
  for (auto* p : params) {
    st.m.push_back(BasicTensor<T>::zeros_like(p->value()));
    st.v.push_back(BasicTensor<T>::zeros_like(p->value()));
  }
  return st;
}

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) throw ValueError("adam_step: state does not match parameter list");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value();
    const auto& grad = params[k]->grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      value[i] = static_cast<T>(value[i] - update);
    }
  }
}

#define PCMAR_INSTANTIATE(T)                                                                                   \
  template class Parameter<T>;                                                                                 \
  template Var<T> constant<T>(BasicTensor<T>);                                                                 \
  template Var<T> variable<T>(BasicTensor<T>);                                                                 \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);           \
  template Var<T> conv2d<T>(const Var<T>&, Parameter<T>&, Parameter<T>*, std::size_t, std::size_t);           \
  template Var<T> relu<T>(const Var<T>&);                                                                      \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                             \
  template Var<T> upsample_nearest2x<T>(const Var<T>&);                                                        \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                                            \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                                  \
  template Var<T> abs<T>(const Var<T>&);                                                                       \
  template Var<T> sum<T>(const Var<T>&);                                                                       \
  template Var<T> mask_multiply<T>(const Var<T>&, const BasicTensor<T>&);                                      \
  template Var<T> renorm_bias<T>(const Var<T>&, const BasicTensor<T>&, const Var<T>&);                         \
  template Var<T> total_variation<T>(const Var<T>&, const BasicTensor<T>&);                                    \
  template void backward<T>(const Var<T>&);                                                                    \
  template AdamState<T> adam_init<T>(const std::vector<Parameter<T>*>&);                                       \
  template void adam_step<T>(const std::vector<Parameter<T>*>&, AdamState<T>&, const AdamConfig&);

PCMAR_INSTANTIATE(float)
PCMAR_INSTANTIATE(double)
#undef PCMAR_INSTANTIATE

}  // namespace pcmar::ag
