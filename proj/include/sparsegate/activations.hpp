#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "sparsegate/tensor.hpp"

namespace sparsegate {

enum class ActivationTag { swiglu, reglu, shifted_relu, drelu };

/// Gate/up combination rule of a gated feed-forward block.
///
///   swiglu:          silu(g) * u
///   reglu:           relu(g) * u
///   shifted_relu(T): (g > T ? g : 0) * u     (threshold on the gate only)
///   drelu:           relu(g) * relu(u)
class ActivationKind {
 public:
  static ActivationKind swiglu() { return ActivationKind(ActivationTag::swiglu, 0.0); }
  static ActivationKind reglu() { return ActivationKind(ActivationTag::reglu, 0.0); }
  static ActivationKind drelu() { return ActivationKind(ActivationTag::drelu, 0.0); }
  static ActivationKind shifted_relu(double threshold);

  /// Accepts "swiglu", "reglu", "drelu", "shifted_relu" (threshold 0) and
  /// "shifted_relu:<T>".
  static ActivationKind parse(std::string_view text);

  ActivationTag tag() const { return tag_; }
  double threshold() const { return threshold_; }

  /// True when inactive neurons produce an exact 0 in the combined signal.
  bool has_exact_zeros() const { return tag_ != ActivationTag::swiglu; }

  std::string name() const;
  std::string to_string() const;

  friend bool operator==(const ActivationKind&, const ActivationKind&) = default;

 private:
  ActivationKind(ActivationTag tag, double threshold) : tag_(tag), threshold_(threshold) {}

  ActivationTag tag_;
  double threshold_;
};

/// Logistic function, evaluated on the branch that cannot overflow.
template <typename T>
T sigmoid(T t) {
  if (t >= T{0}) return T{1} / (T{1} + std::exp(-t));
  const T e = std::exp(t);
  return e / (T{1} + e);
}

template <typename T>
T silu(T t) {
  return t * sigmoid(t);
}

template <typename T>
T relu(T t) {
  return t > T{0} ? t : T{0};
}

template <typename T>
T combine(const ActivationKind& kind, T gate, T up) {
  switch (kind.tag()) {
    case ActivationTag::swiglu:
      return silu(gate) * up;
    case ActivationTag::reglu:
      return gate > T{0} ? gate * up : T{0};
    case ActivationTag::shifted_relu:
      return gate > static_cast<T>(kind.threshold()) ? gate * up : T{0};
    case ActivationTag::drelu:
      return (gate > T{0} && up > T{0}) ? gate * up : T{0};
  }
  return T{0};
}

template <typename T>
struct CombineGrad {
  T d_gate;
  T d_up;
};

/// Partial derivatives of combine(). The ReLU kink takes subgradient 0.
template <typename T>
CombineGrad<T> combine_grad(const ActivationKind& kind, T gate, T up) {
  switch (kind.tag()) {
    case ActivationTag::swiglu: {
      const T s = sigmoid(gate);
      return {s * (T{1} + gate * (T{1} - s)) * up, gate * s};
    }
    case ActivationTag::reglu:
      return gate > T{0} ? CombineGrad<T>{up, gate} : CombineGrad<T>{T{0}, T{0}};
    case ActivationTag::shifted_relu:
      return gate > static_cast<T>(kind.threshold()) ? CombineGrad<T>{up, gate} : CombineGrad<T>{T{0}, T{0}};
    case ActivationTag::drelu:
      return {gate > T{0} ? relu(up) : T{0}, up > T{0} ? relu(gate) : T{0}};
  }
  return {T{0}, T{0}};
}

template <typename T>
BasicVector<T> combined(const ActivationKind& kind, std::span<const T> gate_pre, std::span<const T> up_pre) {
  if (gate_pre.size() != up_pre.size()) throw ShapeError("combined: gate and up lengths differ");
  BasicVector<T> out(gate_pre.size());
  for (std::size_t j = 0; j < gate_pre.size(); ++j) out[j] = combine(kind, gate_pre[j], up_pre[j]);
  return out;
}

/// Bias-free gated feed-forward block: d = hidden size, n = intermediate size.
template <typename T>
class BasicFfnWeights {
 public:
  BasicFfnWeights(BasicMatrix<T> w_gate, BasicMatrix<T> w_up, BasicMatrix<T> w_down, ActivationKind kind)
      : w_gate_(std::move(w_gate)), w_up_(std::move(w_up)), w_down_(std::move(w_down)), kind_(kind) {
    const std::size_t n = w_gate_.rows();
    const std::size_t d = w_gate_.cols();
    if (n == 0 || d == 0) throw ShapeError("ffn: empty weights");
    if (w_up_.rows() != n || w_up_.cols() != d) throw ShapeError("ffn: w_up must be n x d like w_gate");
    if (w_down_.rows() != d || w_down_.cols() != n) throw ShapeError("ffn: w_down must be d x n");
  }

  std::size_t d() const { return w_gate_.cols(); }
  std::size_t n() const { return w_gate_.rows(); }
  const BasicMatrix<T>& w_gate() const { return w_gate_; }
  const BasicMatrix<T>& w_up() const { return w_up_; }
  const BasicMatrix<T>& w_down() const { return w_down_; }
  const ActivationKind& kind() const { return kind_; }

 private:
  BasicMatrix<T> w_gate_;
  BasicMatrix<T> w_up_;
  BasicMatrix<T> w_down_;
  ActivationKind kind_;
};

template <typename T>
struct BasicFfnTrace {
  BasicVector<T> gate_pre;
  BasicVector<T> up_pre;
  BasicVector<T> combined;
  BasicVector<T> output;
};

template <typename T>
struct FfnResult {
  BasicVector<T> output;
  std::optional<BasicFfnTrace<T>> trace;
};

template <typename T>
FfnResult<T> ffn_forward(const BasicFfnWeights<T>& w, std::span<const T> x, bool capture = false) {
  if (x.size() != w.d()) throw ShapeError("ffn_forward: input length does not match hidden size");
  BasicVector<T> gate_pre = matvec(w.w_gate(), x);
  BasicVector<T> up_pre = matvec(w.w_up(), x);
  BasicVector<T> comb = combined<T>(w.kind(), gate_pre.span(), up_pre.span());
  BasicVector<T> output = matvec(w.w_down(), comb.span());
  FfnResult<T> result{output, std::nullopt};
  if (capture) {
    result.trace = BasicFfnTrace<T>{std::move(gate_pre), std::move(up_pre), std::move(comb), std::move(output)};
  }
  return result;
}

template <typename T>
struct FfnGradients {
  BasicVector<T> grad_x;
  BasicMatrix<T> grad_w_gate;
  BasicMatrix<T> grad_w_up;
  BasicMatrix<T> grad_w_down;
};

/// Gradients of <grad_out, ffn_forward(w, x)> with respect to x and weights.
template <typename T>
FfnGradients<T> ffn_backward(const BasicFfnWeights<T>& w, std::span<const T> x, std::span<const T> grad_out) {
  if (x.size() != w.d()) throw ShapeError("ffn_backward: input length does not match hidden size");
  if (grad_out.size() != w.d()) throw ShapeError("ffn_backward: grad_out length does not match hidden size");
  const auto gate_pre = matvec(w.w_gate(), x);
  const auto up_pre = matvec(w.w_up(), x);
  const auto comb = combined<T>(w.kind(), gate_pre.span(), up_pre.span());

  const auto grad_comb = matvec_transposed(w.w_down(), grad_out);
  BasicVector<T> grad_gate(w.n());
  BasicVector<T> grad_up(w.n());
  for (std::size_t j = 0; j < w.n(); ++j) {
    const auto g = combine_grad(w.kind(), gate_pre[j], up_pre[j]);
    grad_gate[j] = grad_comb[j] * g.d_gate;
    grad_up[j] = grad_comb[j] * g.d_up;
  }

  auto grad_x = matvec_transposed(w.w_gate(), grad_gate.span());
  const auto grad_x_up = matvec_transposed(w.w_up(), grad_up.span());
  for (std::size_t k = 0; k < w.d(); ++k) grad_x[k] += grad_x_up[k];

  return FfnGradients<T>{std::move(grad_x), outer<T>(grad_gate.span(), x), outer<T>(grad_up.span(), x),
                         outer<T>(grad_out, comb.span())};
}

using FfnWeights = BasicFfnWeights<float>;
using FfnWeightsF64 = BasicFfnWeights<double>;
using FfnTrace = BasicFfnTrace<float>;

/// Gaussian-initialized block with all three projections drawn from
/// normal(0, std^2), in the order gate, up, down.
template <typename T>
BasicFfnWeights<T> gaussian_ffn(std::size_t d, std::size_t n, ActivationKind kind, double std, Rng& rng) {
  auto gate = gaussian_matrix<T>(n, d, std, rng);
  auto up = gaussian_matrix<T>(n, d, std, rng);
  auto down = gaussian_matrix<T>(d, n, std, rng);
  return BasicFfnWeights<T>(std::move(gate), std::move(up), std::move(down), kind);
}

}  // namespace sparsegate
