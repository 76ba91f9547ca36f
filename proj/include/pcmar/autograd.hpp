#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pcmar/tensor.hpp"

namespace pcmar::ag {

template <typename T>
struct Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

/// One value in the computation graph.
///
/// `grad` holds the gradient of the current backward pass and is reset at the
/// start of every pass. Parameter leaves additionally carry `param_grad`,
/// which accumulates across passes until zeroed.
template <typename T>
struct Node {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  std::string op;
  std::vector<Var<T>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool is_parameter = false;
  BasicTensor<T> param_grad;
};

/// Trainable tensor with a unique name. Owns a leaf node shared with every
/// graph that uses it.
template <typename T>
class Parameter {
 public:
  Parameter(std::string name, BasicTensor<T> value);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;
  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;

  const std::string& name() const noexcept { return name_; }
  BasicTensor<T>& value() noexcept { return leaf_->value; }
  const BasicTensor<T>& value() const noexcept { return leaf_->value; }
  BasicTensor<T>& grad() noexcept { return leaf_->param_grad; }
  const BasicTensor<T>& grad() const noexcept { return leaf_->param_grad; }
  const Var<T>& var() const noexcept { return leaf_; }
  void zero_grad() { leaf_->param_grad.fill(T{0}); }

 private:
  std::string name_;
  Var<T> leaf_;
};

/// Leaf that never receives gradient.
template <typename T>
Var<T> constant(BasicTensor<T> value);

/// Leaf that receives gradient in `node->grad` (used to differentiate with
/// respect to inputs).
template <typename T>
Var<T> variable(BasicTensor<T> value);

// Primitives. Each checks shapes, evaluates eagerly, and records its
// backward closure when any input requires grad.

/// Cross-correlation with zero padding; bias may be null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride, std::size_t pad);
template <typename T>
Var<T> conv2d(const Var<T>& x, Parameter<T>& w, Parameter<T>* bias, std::size_t stride, std::size_t pad);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x);
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& x, T factor);
template <typename T>
Var<T> abs(const Var<T>& x);
template <typename T>
Var<T> sum(const Var<T>& x);

/// x[N,C,H,W] times a constant single-channel mask [N,1,H,W], broadcast over C.
template <typename T>
Var<T> mask_multiply(const Var<T>& x, const BasicTensor<T>& mask);

/// Partial-convolution renormalization: out = raw * ratio + b where ratio > 0,
/// and exactly 0 where ratio == 0. `ratio` is a constant [N,1,H,W].
template <typename T>
Var<T> renorm_bias(const Var<T>& raw, const BasicTensor<T>& ratio, const Var<T>& bias);

/// Anisotropic total variation of x[N,1,H,W] over neighbor pairs whose both
/// pixels lie in the constant `region` mask.
template <typename T>
Var<T> total_variation(const Var<T>& x, const BasicTensor<T>& region);

/// Accumulates d(loss)/d(param) into every reachable Parameter. The loss
/// must hold exactly one element.
template <typename T>
void backward(const Var<T>& loss);

/// Adam moments for one parameter list.
template <typename T>
struct AdamState {
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
  long step = 0;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
AdamState<T> adam_init(const std::vector<Parameter<T>*>& params);

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace pcmar::ag
