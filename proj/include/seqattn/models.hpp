#pragma once

// Masked predictors with hand-derived gradients.
//
// Every model sees its input as X o (1_n m^T), where m = mask_values(w, S,
// scheme): selected features pass through with multiplier 1 and unselected
// ones are scaled by the scheme's function of the attention logits w.
//
//   linear:        Z = Xm W1                      (no bias)
//   glm_logistic:  P = softmax(Xm W1 + b1)        (outputs are probabilities)
//   mlp_relu:      Z = relu(Xm W1 + b1) W2 + b2
//
// Losses are sums over examples, not means: squared_error is ||Z - T||_F^2
// and cross_entropy is -sum log p_{y_n}. Targets T are y itself for a single
// output, one-hot class ids otherwise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqattn/data.hpp"
#include "seqattn/errors.hpp"
#include "seqattn/linalg.hpp"

namespace seqattn {

enum class Scheme { softmax, l1, l2, l1_normalized, l2_normalized, none };
enum class ModelKind { linear, glm_logistic, mlp_relu };
enum class LossKind { squared_error, cross_entropy };

inline constexpr std::array<Scheme, 6> kAllSchemes = {Scheme::softmax,       Scheme::l1,
                                                      Scheme::l2,            Scheme::l1_normalized,
                                                      Scheme::l2_normalized, Scheme::none};

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::softmax: return "softmax";
    case Scheme::l1: return "l1";
    case Scheme::l2: return "l2";
    case Scheme::l1_normalized: return "l1_normalized";
    case Scheme::l2_normalized: return "l2_normalized";
    case Scheme::none: return "none";
  }
  return "?";
}

inline Scheme scheme_from_string(std::string_view s) {
  for (Scheme sc : kAllSchemes)
    if (s == to_string(sc)) return sc;
  throw ContractError("unknown scheme '" + std::string(s) + "'");
}

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::linear: return "linear";
    case ModelKind::glm_logistic: return "glm_logistic";
    case ModelKind::mlp_relu: return "mlp_relu";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  for (ModelKind k : {ModelKind::linear, ModelKind::glm_logistic, ModelKind::mlp_relu})
    if (s == to_string(k)) return k;
  throw ContractError("unknown model kind '" + std::string(s) + "'");
}

inline const char* to_string(LossKind k) {
  return k == LossKind::squared_error ? "squared_error" : "cross_entropy";
}

struct ModelSpec {
  ModelKind kind = ModelKind::linear;
  Index hidden_width = 67;  // mlp_relu only
  Index output_dim = 1;
};

/// Natural loss for a spec/task pair: cross-entropy for classification,
/// squared error otherwise.
inline LossKind default_loss(const Dataset& ds) {
  return ds.task == Task::classification ? LossKind::cross_entropy : LossKind::squared_error;
}

/// Output dimension follows the task: one output for regression, one per class.
inline ModelSpec make_spec(ModelKind kind, const Dataset& ds, Index hidden_width = 67) {
  ModelSpec spec{kind, hidden_width, 1};
  if (ds.task == Task::classification) spec.output_dim = std::max(2, ds.num_classes);
  return spec;
}

struct Params {
  Matrix w1;  // d x hidden (mlp) or d x out
  Vector b1;  // hidden (mlp), out (glm), empty (linear)
  Matrix w2;  // hidden x out, mlp only
  Vector b2;  // out, mlp only

  /// Contiguous views over every block, in a fixed order.
  std::array<std::span<double>, 4> blocks() {
    return {std::span<double>(w1.data(), static_cast<std::size_t>(w1.size())),
            std::span<double>(b1.data(), static_cast<std::size_t>(b1.size())),
            std::span<double>(w2.data(), static_cast<std::size_t>(w2.size())),
            std::span<double>(b2.data(), static_cast<std::size_t>(b2.size()))};
  }
  std::array<std::span<const double>, 4> blocks() const {
    return {std::span<const double>(w1.data(), static_cast<std::size_t>(w1.size())),
            std::span<const double>(b1.data(), static_cast<std::size_t>(b1.size())),
            std::span<const double>(w2.data(), static_cast<std::size_t>(w2.size())),
            std::span<const double>(b2.data(), static_cast<std::size_t>(b2.size()))};
  }

  Params zeros_like() const {
    return {Matrix::Zero(w1.rows(), w1.cols()), Vector::Zero(b1.size()), Matrix::Zero(w2.rows(), w2.cols()),
            Vector::Zero(b2.size())};
  }
};

struct AttentionModel {
  Params theta;
  Vector logits;               // w, length d
  Scheme scheme = Scheme::softmax;
  std::vector<bool> selected;  // S as a membership mask of length d

  Index d() const { return logits.size(); }
};

/// Penalties added to the data loss. l2 follows the regularized linear
/// attention objective: (l2 / 2) * (||w_Sbar||^2 + ||W1 rows in Sbar||^2).
/// l1_mask adds l1_mask * sum_{i in Sbar} |m_i|.
struct Penalty {
  double l2 = 0.0;
  double l1_mask = 0.0;
};

struct LossAndGrads {
  double loss = 0.0;
  Params grad_theta;
  Vector grad_logits;
};

// ---------------------------------------------------------------------------
// Masks

namespace detail {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void require_mask_shape(const Vector& w, const std::vector<bool>& selected) {
  require(static_cast<std::size_t>(w.size()) == selected.size(), "mask: logits and selected set differ in length");
  require(w.allFinite(), "mask: attention logits must be finite");
}

}  // namespace detail

/// m_i = 1 for i in S; otherwise the scheme applied over the unselected set.
/// Scheme none passes S through and zeroes every unselected feature.
inline Vector mask_values(const Vector& w, const std::vector<bool>& selected, Scheme scheme) {
  detail::require_mask_shape(w, selected);
  const Index d = w.size();
  Vector m = Vector::Ones(d);
  auto unsel = [&](Index i) { return !selected[static_cast<std::size_t>(i)]; };
  bool any_unselected = false;
  for (Index i = 0; i < d; ++i) any_unselected = any_unselected || unsel(i);
  if (!any_unselected) return m;

  switch (scheme) {
    case Scheme::none:
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) m[i] = 0.0;
      break;
    case Scheme::softmax: {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) mx = std::max(mx, w[i]);
      double z = 0.0;
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) z += std::exp(w[i] - mx);
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) m[i] = std::exp(w[i] - mx) / z;
      break;
    }
    case Scheme::l1:
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) m[i] = std::abs(w[i]);
      break;
    case Scheme::l2:
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) m[i] = w[i] * w[i];
      break;
    case Scheme::l1_normalized:
    case Scheme::l2_normalized: {
      const bool sq = scheme == Scheme::l2_normalized;
      double z = 0.0;
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) z += sq ? w[i] * w[i] : std::abs(w[i]);
      if (!(z > 0.0)) throw DegenerateMaskError(std::string(to_string(scheme)) + " mask: all unselected logits are zero");
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) m[i] = (sq ? w[i] * w[i] : std::abs(w[i])) / z;
      break;
    }
  }
  return m;
}

/// Vector-Jacobian product: given dL/dm, returns dL/dw for the scheme.
inline Vector mask_vjp(const Vector& w, const std::vector<bool>& selected, Scheme scheme, const Vector& m,
                       const Vector& grad_mask) {
  const Index d = w.size();
  Vector gw = Vector::Zero(d);
  auto unsel = [&](Index i) { return !selected[static_cast<std::size_t>(i)]; };
  switch (scheme) {
    case Scheme::none:
      break;
    case Scheme::l1:
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) gw[i] = grad_mask[i] * detail::sgn(w[i]);
      break;
    case Scheme::l2:
      for (Index i = 0; i < d; ++i)
        if (unsel(i)) gw[i] = grad_mask[i] * 2.0 * w[i];
      break;
    case Scheme::softmax:
    case Scheme::l1_normalized:
    case Scheme::l2_normalized: {
      // All three are m_i = g(w_i) / sum_j g(w_j); for softmax g = exp and
      // g'/Z = m, so the common form is dL/dw_j = (g'(w_j)/Z) (gm_j - <gm, m>).
      double inner = 0.0;
      double z = 0.0;
      for (Index i = 0; i < d; ++i) {
        if (!unsel(i)) continue;
        inner += grad_mask[i] * m[i];
        if (scheme == Scheme::l1_normalized) z += std::abs(w[i]);
        if (scheme == Scheme::l2_normalized) z += w[i] * w[i];
      }
      for (Index j = 0; j < d; ++j) {
        if (!unsel(j)) continue;
        double dg_over_z = m[j];
        if (scheme == Scheme::l1_normalized) dg_over_z = detail::sgn(w[j]) / z;
        if (scheme == Scheme::l2_normalized) dg_over_z = 2.0 * w[j] / z;
        gw[j] = dg_over_z * (grad_mask[j] - inner);
      }
      break;
    }
  }
  return gw;
}

// ---------------------------------------------------------------------------
// Construction

/// Glorot-uniform weights per layer, zero biases. Logits start at 0 for
/// softmax (uniform mask) and at 1 for the other schemes, whose masks would
/// otherwise start at a zero-gradient point.
inline AttentionModel init_model(const ModelSpec& spec, Index d, Scheme scheme, std::vector<bool> selected,
                                 std::uint64_t seed) {
  detail::require(d >= 1, "init_model: d must be positive");
  detail::require(spec.output_dim >= 1, "init_model: output_dim must be positive");
  detail::require(spec.kind != ModelKind::mlp_relu || spec.hidden_width >= 1, "init_model: hidden_width must be >= 1");
  if (selected.empty()) selected.assign(static_cast<std::size_t>(d), false);
  detail::require(selected.size() == static_cast<std::size_t>(d), "init_model: selected set has wrong length");

  std::mt19937_64 rng(seed);
  auto glorot = [&rng](Index fan_in, Index fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    Matrix m(fan_in, fan_out);
    for (Index j = 0; j < fan_out; ++j)
      for (Index i = 0; i < fan_in; ++i) m(i, j) = u(rng);
    return m;
  };

  AttentionModel model;
  model.scheme = scheme;
  model.selected = std::move(selected);
  model.logits = scheme == Scheme::softmax || scheme == Scheme::none ? Vector::Zero(d) : Vector::Ones(d);
  switch (spec.kind) {
    case ModelKind::linear:
      model.theta.w1 = glorot(d, spec.output_dim);
      break;
    case ModelKind::glm_logistic:
      model.theta.w1 = glorot(d, spec.output_dim);
      model.theta.b1 = Vector::Zero(spec.output_dim);
      break;
    case ModelKind::mlp_relu:
      model.theta.w1 = glorot(d, spec.hidden_width);
      model.theta.b1 = Vector::Zero(spec.hidden_width);
      model.theta.w2 = glorot(spec.hidden_width, spec.output_dim);
      model.theta.b2 = Vector::Zero(spec.output_dim);
      break;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

inline void check_model(const AttentionModel& model, const ModelSpec& spec, const Matrix& x) {
  require(x.cols() == model.d(), "model: X has " + std::to_string(x.cols()) + " columns, model expects " +
                                     std::to_string(model.d()));
  require(model.theta.w1.rows() == model.d(), "model: first-layer weights do not match d");
  if (spec.kind == ModelKind::mlp_relu) {
    require(model.theta.w2.rows() == model.theta.w1.cols(), "model: hidden layer shapes disagree");
  }
}

inline Matrix apply_mask(const Matrix& x, const Vector& m, bool clamp) {
  Vector mm = m;
  if (clamp)
    for (Index i = 0; i < mm.size(); ++i)
      if (std::abs(mm[i]) < 1e-30) mm[i] = 0.0;
  return x * mm.asDiagonal();
}

inline Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    p.row(r) = (z.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

inline Matrix log_softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    out.row(r) = z.row(r).array() - lse;
  }
  return out;
}

inline Matrix targets(const Vector& y, Index out_dim) {
  if (out_dim == 1) return y;
  Matrix t = Matrix::Zero(y.size(), out_dim);
  for (Index i = 0; i < y.size(); ++i) {
    const auto c = static_cast<Index>(std::llround(y[i]));
    require(c >= 0 && c < out_dim, "class label " + std::to_string(c) + " outside [0, output_dim)");
    t(i, c) = 1.0;
  }
  return t;
}

struct ForwardCache {
  Vector mask;
  Matrix xm;   // masked input
  Matrix pre;  // first-layer pre-activation (mlp)
  Matrix hid;  // relu(pre)
  Matrix z;    // final affine output (logits for glm)
  Matrix out;  // model outputs (probabilities for glm)
};

inline ForwardCache forward_cached(const AttentionModel& model, const ModelSpec& spec, const Matrix& x, bool clamp) {
  check_model(model, spec, x);
  ForwardCache c;
  c.mask = mask_values(model.logits, model.selected, model.scheme);
  c.xm = apply_mask(x, c.mask, clamp);
  const Params& th = model.theta;
  switch (spec.kind) {
    case ModelKind::linear:
      c.z = c.xm * th.w1;
      c.out = c.z;
      break;
    case ModelKind::glm_logistic:
      c.z = (c.xm * th.w1).rowwise() + th.b1.transpose();
      c.out = softmax_rows(c.z);
      break;
    case ModelKind::mlp_relu:
      c.pre = (c.xm * th.w1).rowwise() + th.b1.transpose();
      c.hid = c.pre.cwiseMax(0.0);
      c.z = (c.hid * th.w2).rowwise() + th.b2.transpose();
      c.out = c.z;
      break;
  }
  return c;
}

}  // namespace detail

/// Model outputs on X o mask (probabilities for glm_logistic, raw outputs otherwise).
inline Matrix forward(const AttentionModel& model, const ModelSpec& spec, const Matrix& x) {
  return detail::forward_cached(model, spec, x, /*clamp=*/true).out;
}

/// Class probabilities for classification losses, regardless of kind.
inline Matrix predict_proba(const AttentionModel& model, const ModelSpec& spec, const Matrix& x) {
  const Matrix out = forward(model, spec, x);
  return spec.kind == ModelKind::glm_logistic ? out : detail::softmax_rows(out);
}

namespace detail {

/// Data loss and dL/dZ for the final affine output Z.
inline double output_loss(const ModelSpec& spec, const ForwardCache& c, const Vector& y, LossKind loss,
                          Matrix& grad_z) {
  const Matrix t = targets(y, spec.output_dim);
  const bool probs = spec.kind == ModelKind::glm_logistic;
  if (loss == LossKind::cross_entropy) {
    require(spec.output_dim >= 2, "cross_entropy needs output_dim >= 2");
    const Matrix logp = log_softmax_rows(c.z);
    grad_z = logp.array().exp().matrix() - t;
    return -(t.array() * logp.array()).sum();
  }
  const Matrix diff = c.out - t;
  if (!probs) {
    grad_z = 2.0 * diff;
  } else {
    // Through the softmax: dL/dz = p o (g - <g, p>) row-wise.
    const Matrix g = 2.0 * diff;
    grad_z.resize(g.rows(), g.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      const double inner = g.row(r).dot(c.out.row(r));
      grad_z.row(r) = c.out.row(r).array() * (g.row(r).array() - inner);
    }
  }
  return diff.squaredNorm();
}

}  // namespace detail

/// Loss = data_scale * data_loss + penalty, with exact gradients for theta
/// and the attention logits.
inline LossAndGrads loss_and_grads(const AttentionModel& model, const ModelSpec& spec, const Matrix& x,
                                   const Vector& y, LossKind loss, const Penalty& penalty = {},
                                   double data_scale = 1.0) {
  detail::require(x.rows() == y.size(), "loss_and_grads: X rows and y length differ");
  const auto c = detail::forward_cached(model, spec, x, /*clamp=*/false);
  const Params& th = model.theta;

  Matrix gz;
  LossAndGrads r;
  r.loss = data_scale * detail::output_loss(spec, c, y, loss, gz);
  gz *= data_scale;

  r.grad_theta = th.zeros_like();
  Matrix g_xm;  // dL/d(masked input)
  if (spec.kind == ModelKind::mlp_relu) {
    r.grad_theta.w2 = c.hid.transpose() * gz;
    r.grad_theta.b2 = gz.colwise().sum().transpose();
    Matrix gpre = gz * th.w2.transpose();
    gpre.array() *= (c.pre.array() > 0.0).cast<double>();
    r.grad_theta.w1 = c.xm.transpose() * gpre;
    r.grad_theta.b1 = gpre.colwise().sum().transpose();
    g_xm = gpre * th.w1.transpose();
  } else {
    r.grad_theta.w1 = c.xm.transpose() * gz;
    if (spec.kind == ModelKind::glm_logistic) r.grad_theta.b1 = gz.colwise().sum().transpose();
    g_xm = gz * th.w1.transpose();
  }
  // dL/dm_i = sum_n X_ni * dL/dXm_ni
  Vector g_mask = (x.array() * g_xm.array()).colwise().sum().transpose();

  const Index d = model.d();
  if (penalty.l2 > 0.0 || penalty.l1_mask > 0.0) {
    double reg = 0.0;
    for (Index i = 0; i < d; ++i) {
      if (model.selected[static_cast<std::size_t>(i)]) continue;
      if (penalty.l1_mask > 0.0) {
        reg += penalty.l1_mask * std::abs(c.mask[i]);
        g_mask[i] += penalty.l1_mask * detail::sgn(c.mask[i]);
      }
      if (penalty.l2 > 0.0) {
        reg += 0.5 * penalty.l2 * th.w1.row(i).squaredNorm();
        r.grad_theta.w1.row(i) += penalty.l2 * th.w1.row(i);
      }
    }
    r.loss += reg;
  }
  r.grad_logits = mask_vjp(model.logits, model.selected, model.scheme, c.mask, g_mask);
  if (penalty.l2 > 0.0 && model.scheme != Scheme::none) {
    for (Index i = 0; i < d; ++i) {
      if (model.selected[static_cast<std::size_t>(i)]) continue;
      r.loss += 0.5 * penalty.l2 * model.logits[i] * model.logits[i];
      r.grad_logits[i] += penalty.l2 * model.logits[i];
    }
  }
  return r;
}

/// Loss value only (same conventions as loss_and_grads).
inline double loss_value(const AttentionModel& model, const ModelSpec& spec, const Matrix& x, const Vector& y,
                         LossKind loss, const Penalty& penalty = {}, double data_scale = 1.0) {
  return loss_and_grads(model, spec, x, y, loss, penalty, data_scale).loss;
}

/// OMP criterion generalized through the GLM view of the network: with every
/// layer above the first frozen, the network is a GLM in the first-layer
/// weights, and feature i's score is the l2 norm of the loss gradient with
/// respect to its first-layer weight row, X_i^T (dL/d pre-activation). Masked
/// (unselected) features carry no signal into the forward pass but are scored
/// against the raw column. For the linear model under squared loss this is
/// 2 |<X_i, y - X theta>|.
inline Vector glm_input_gradient_scores(const AttentionModel& model, const ModelSpec& spec, const Matrix& x,
                                        const Vector& y, LossKind loss) {
  detail::require(x.rows() == y.size(), "glm_input_gradient_scores: X rows and y length differ");
  const auto c = detail::forward_cached(model, spec, x, /*clamp=*/false);
  Matrix gz;
  detail::output_loss(spec, c, y, loss, gz);
  Matrix gpre = gz;
  if (spec.kind == ModelKind::mlp_relu) {
    gpre = gz * model.theta.w2.transpose();
    gpre.array() *= (c.pre.array() > 0.0).cast<double>();
  }
  const Matrix per_feature = x.transpose() * gpre;  // d x width
  return per_feature.rowwise().norm();
}

}  // namespace seqattn
