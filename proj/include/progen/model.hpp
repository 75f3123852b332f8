#ifndef PROGEN_MODEL_HPP_
#define PROGEN_MODEL_HPP_

// Task model: hashed bag-of-n-grams features feeding an L2-regularized
// softmax classifier. Provides the losses, gradients and Hessian-vector
// products used by influence scoring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "progen/common.hpp"

namespace progen {

struct Example {
  std::int64_t id = 0;
  std::string text;
  int label = 0;
  int iteration = 0;  // 0 marks validation / seed data
  bool used_feedback = false;
  std::optional<double> influence_score;

  bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

// ---------------------------------------------------------------------------
// Featurization

struct FeatureConfig {
  std::uint64_t hash_seed = 0;
  int ngram_min = 1;
  int ngram_max = 2;
  std::size_t dims = std::size_t{1} << 16;
  bool fit_bias = true;

  void validate() const {
    if (dims == 0) throw ConfigError("feature dims must be positive");
    if (ngram_min < 1 || ngram_max < ngram_min)
      throw ConfigError("invalid n-gram range");
  }
  bool operator==(const FeatureConfig&) const = default;
};

/// Sparse vector; entries sorted by index, indices unique.
struct FeatureVector {
  std::size_t dims = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& [i, v] : entries) s += v * v;
    return s;
  }
  bool operator==(const FeatureVector&) const = default;
};

namespace detail {

inline std::uint32_t hash_ngram(std::string_view gram, const FeatureConfig& cfg) {
  std::uint64_t h = fnv1a(gram, kFnvOffset ^ splitmix64(cfg.hash_seed));
  return static_cast<std::uint32_t>(h % cfg.dims);
}

inline FeatureVector from_index_list(std::vector<std::uint32_t> idx,
                                     std::size_t dims) {
  std::sort(idx.begin(), idx.end());
  FeatureVector fv;
  fv.dims = dims;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && idx[j] == idx[i]) ++j;
    fv.entries.emplace_back(idx[i], static_cast<double>(j - i));
    i = j;
  }
  return fv;
}

}  // namespace detail

/// Raw hashed n-gram counts before normalization.
inline FeatureVector featurize_counts(std::string_view text,
                                      const FeatureConfig& cfg) {
  cfg.validate();
  const auto tokens = tokenize(text);
  std::vector<std::uint32_t> idx;
  for (int n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    const auto un = static_cast<std::size_t>(n);
    if (tokens.size() < un) break;
    for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
      std::string gram = tokens[i];
      for (std::size_t k = 1; k < un; ++k) {
        gram += ' ';
        gram += tokens[i + k];
      }
      idx.push_back(detail::hash_ngram(gram, cfg));
    }
  }
  return detail::from_index_list(std::move(idx), cfg.dims);
}

inline FeatureVector featurize(std::string_view text, const FeatureConfig& cfg) {
  FeatureVector fv = featurize_counts(text, cfg);
  const double n = std::sqrt(fv.squared_norm());
  if (n > 0.0)
    for (auto& e : fv.entries) e.second /= n;
  return fv;
}

// ---------------------------------------------------------------------------
// Parameters and losses

enum class LossKind { kCE, kRCE };

struct LossSpec {
  LossKind kind = LossKind::kCE;
  double rce_constant_A = -4.0;  // stands in for log(0)

  static LossSpec ce() { return {LossKind::kCE, -4.0}; }
  static LossSpec rce(double a = -4.0) { return {LossKind::kRCE, a}; }

  void validate() const {
    if (kind == LossKind::kRCE && !(rce_constant_A < 0.0))
      throw ConfigError("RCE constant A must be strictly negative");
  }
  bool operator==(const LossSpec&) const = default;
};

inline const char* to_string(LossKind k) { return k == LossKind::kCE ? "CE" : "RCE"; }

/// Weight layout: class-major block `weights[c * dims + j]`, followed by one
/// bias per class when `features.fit_bias` is set.
struct ModelParams {
  FeatureConfig features;
  int num_classes = 2;
  double l2_lambda = 1e-3;
  Vector weights;

  ModelParams() = default;
  ModelParams(FeatureConfig f, int classes, double lambda)
      : features(f), num_classes(classes), l2_lambda(lambda) {
    validate_shape();
    weights.assign(num_params(), 0.0);
  }

  std::size_t num_params() const {
    const auto c = static_cast<std::size_t>(num_classes);
    return features.dims * c + (features.fit_bias ? c : 0);
  }
  std::size_t bias_offset() const {
    return features.dims * static_cast<std::size_t>(num_classes);
  }

  void validate_shape() const {
    features.validate();
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be >= 0");
  }

  void validate() const {
    validate_shape();
    if (weights.size() != num_params())
      throw DimensionError("weight vector has wrong length");
    if (!all_finite(weights)) throw Error("non-finite model weights");
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = kFnvOffset;
    h = fnv1a_bytes(&features.hash_seed, sizeof features.hash_seed, h);
    const std::int64_t meta[] = {features.ngram_min, features.ngram_max,
                                 static_cast<std::int64_t>(features.dims),
                                 features.fit_bias ? 1 : 0, num_classes};
    h = fnv1a_bytes(meta, sizeof meta, h);
    h = fnv1a_bytes(&l2_lambda, sizeof l2_lambda, h);
    return fnv1a_bytes(weights.data(), weights.size() * sizeof(double), h);
  }

  bool operator==(const ModelParams&) const = default;
};

/// Featurized, labeled examples sharing one feature configuration.
struct FeaturizedSet {
  FeatureConfig config;
  int num_classes = 2;
  std::vector<FeatureVector> x;
  std::vector<int> y;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }

  void push_back(FeatureVector fv, int label, std::int64_t id) {
    x.push_back(std::move(fv));
    y.push_back(label);
    ids.push_back(id);
  }

  FeaturizedSet without_index(std::size_t skip) const {
    FeaturizedSet out{config, num_classes, {}, {}, {}};
    for (std::size_t i = 0; i < size(); ++i)
      if (i != skip) out.push_back(x[i], y[i], ids[i]);
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int l : y) ++counts[static_cast<std::size_t>(l)];
    return counts;
  }
};

inline FeaturizedSet featurize_dataset(std::span<const Example> examples,
                                       const FeatureConfig& cfg,
                                       int num_classes) {
  FeaturizedSet out{cfg, num_classes, {}, {}, {}};
  out.x.reserve(examples.size());
  for (const auto& e : examples) {
    if (e.label < 0 || e.label >= num_classes)
      throw DatasetError("example " + std::to_string(e.id) +
                         " has label outside [0, C)");
    out.push_back(featurize(e.text, cfg), e.label, e.id);
  }
  return out;
}

inline FeaturizedSet featurize_dataset(std::span<const Example> examples,
                                       const ModelParams& params) {
  return featurize_dataset(examples, params.features, params.num_classes);
}

namespace detail {

inline void check_dims(const ModelParams& params, const FeatureVector& fv) {
  if (fv.dims != params.features.dims)
    throw DimensionError("feature vector dims do not match model");
}

inline Vector logits(const ModelParams& params, const FeatureVector& fv) {
  const auto C = static_cast<std::size_t>(params.num_classes);
  const std::size_t D = params.features.dims;
  Vector z(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* w = params.weights.data() + c * D;
    double s = 0.0;
    for (const auto& [j, v] : fv.entries) s += w[j] * v;
    if (params.features.fit_bias) s += params.weights[params.bias_offset() + c];
    z[c] = s;
  }
  return z;
}

inline Vector softmax(const Vector& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vector p(z.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) sum += (p[c] = std::exp(z[c] - m));
  for (auto& v : p) v /= sum;
  return p;
}

inline double log_softmax_at(const Vector& z, std::size_t k) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return z[k] - m - std::log(sum);
}

/// d loss / d logits for one example.
inline Vector logit_residual(const Vector& p, int label, const LossSpec& spec) {
  const auto y = static_cast<std::size_t>(label);
  Vector r(p.size());
  if (spec.kind == LossKind::kCE) {
    for (std::size_t c = 0; c < p.size(); ++c) r[c] = p[c] - (c == y ? 1.0 : 0.0);
  } else {
    // loss = -A (1 - p_y);  d/dz_c = A p_y (delta_cy - p_c)
    const double a = spec.rce_constant_A;
    for (std::size_t c = 0; c < p.size(); ++c)
      r[c] = a * p[y] * ((c == y ? 1.0 : 0.0) - p[c]);
  }
  return r;
}

/// out += scale * (r outer [x; 1])
inline void scatter_outer(const ModelParams& params, const FeatureVector& fv,
                          const Vector& r, double scale, std::span<double> out) {
  const std::size_t D = params.features.dims;
  for (std::size_t c = 0; c < r.size(); ++c) {
    const double rc = scale * r[c];
    if (rc == 0.0) continue;
    double* o = out.data() + c * D;
    for (const auto& [j, v] : fv.entries) o[j] += rc * v;
    if (params.features.fit_bias) out[params.bias_offset() + c] += rc;
  }
}

/// Per-class projections u_c = <v_c, [x; 1]>.
inline Vector gather_inner(const ModelParams& params, const FeatureVector& fv,
                           std::span<const double> v) {
  const auto C = static_cast<std::size_t>(params.num_classes);
  const std::size_t D = params.features.dims;
  Vector u(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* vc = v.data() + c * D;
    double s = 0.0;
    for (const auto& [j, val] : fv.entries) s += vc[j] * val;
    if (params.features.fit_bias) s += v[params.bias_offset() + c];
    u[c] = s;
  }
  return u;
}

}  // namespace detail

inline Vector predict(const ModelParams& params, const FeatureVector& fv) {
  detail::check_dims(params, fv);
  return detail::softmax(detail::logits(params, fv));
}

/// Lowest index wins ties.
inline int argmax(std::span<const double> p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

/// RCE with one-hot labels: -sum_c yhat^c log(y^c) where log(1) = 0 and
/// log(0) := A, which collapses to -A (1 - yhat^label).
inline double rce_from_probs(std::span<const double> p, int label, double a) {
  return -a * (1.0 - p[static_cast<std::size_t>(label)]);
}

inline double loss(const ModelParams& params, const FeatureVector& fv, int label,
                   const LossSpec& spec) {
  detail::check_dims(params, fv);
  const Vector z = detail::logits(params, fv);
  if (spec.kind == LossKind::kCE)
    return -detail::log_softmax_at(z, static_cast<std::size_t>(label));
  spec.validate();
  const Vector p = detail::softmax(z);
  return rce_from_probs(p, label, spec.rce_constant_A);
}

inline double loss(const ModelParams& params, const Example& ex,
                   const LossSpec& spec) {
  return loss(params, featurize(ex.text, params.features), ex.label, spec);
}

/// Gradient of the per-example loss (no L2 term).
inline Vector grad_loss(const ModelParams& params, const FeatureVector& fv,
                        int label, const LossSpec& spec) {
  detail::check_dims(params, fv);
  const Vector p = predict(params, fv);
  Vector g(params.num_params(), 0.0);
  detail::scatter_outer(params, fv, detail::logit_residual(p, label, spec), 1.0, g);
  return g;
}

inline Vector grad_loss(const ModelParams& params, const Example& ex,
                        const LossSpec& spec) {
  return grad_loss(params, featurize(ex.text, params.features), ex.label, spec);
}

/// <grad_loss(x, label), v> without materializing the dense gradient.
inline double grad_loss_dot(const ModelParams& params, const FeatureVector& fv,
                            int label, const LossSpec& spec,
                            std::span<const double> v) {
  detail::check_dims(params, fv);
  if (v.size() != params.num_params()) throw DimensionError("grad_loss_dot: size");
  const Vector p = predict(params, fv);
  const Vector r = detail::logit_residual(p, label, spec);
  const Vector u = detail::gather_inner(params, fv, v);
  return dot(r, u);
}

// ---------------------------------------------------------------------------
// Hessian of the training objective

/// Hessian of  mean_i CE_i + (lambda/2)|theta|^2  at fixed params. Softmax
/// probabilities are cached on construction; `apply` is exact.
class CeHessian {
 public:
  CeHessian(const ModelParams& params, const FeaturizedSet& data)
      : params_(params), data_(data) {
    if (data.empty()) throw DatasetError("Hessian of an empty dataset");
    probs_.reserve(data.size());
    for (const auto& fv : data.x) probs_.push_back(predict(params, fv));
  }

  std::size_t dim() const { return params_.num_params(); }
  std::size_t num_examples() const { return data_.size(); }

  /// (H + damping I) v over the full dataset.
  Vector apply(std::span<const double> v, double damping) const {
    check(v);
    Vector out(v.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) accumulate(i, v, inv_n, out);
    axpy(params_.l2_lambda + damping, v, out);
    return out;
  }

  /// (diag(p) - p p^T) J_i v for example i, i.e. the logit-space factor of
  /// the per-example Hessian applied to v.
  Vector curvature_coeffs(std::size_t i, std::span<const double> v) const {
    const auto& p = probs_[i];
    const Vector u = detail::gather_inner(params_, data_.x[i], v);
    double pu = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) pu += p[c] * u[c];
    Vector s(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) s[c] = p[c] * (u[c] - pu);
    return s;
  }

  /// Same operator with the data term averaged over `batch` only.
  Vector apply_batch(std::span<const std::size_t> batch,
                     std::span<const double> v, double damping) const {
    check(v);
    Vector out(v.size(), 0.0);
    if (!batch.empty()) {
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      for (auto i : batch) accumulate(i, v, inv_b, out);
    }
    axpy(params_.l2_lambda + damping, v, out);
    return out;
  }

 private:
  void check(std::span<const double> v) const {
    if (v.size() != params_.num_params())
      throw DimensionError("hvp: vector length does not match params");
  }

  void accumulate(std::size_t i, std::span<const double> v, double w,
                  std::span<double> out) const {
    detail::scatter_outer(params_, data_.x[i], curvature_coeffs(i, v), w, out);
  }

  const ModelParams& params_;
  const FeaturizedSet& data_;
  std::vector<Vector> probs_;
};

/// (H + damping I) v with H the CE training Hessian plus lambda I.
inline Vector hvp(const ModelParams& params, const FeaturizedSet& data,
                  std::span<const double> v, double damping) {
  return CeHessian(params, data).apply(v, damping);
}

// ---------------------------------------------------------------------------
// Training

struct TrainHyper {
  double l2_lambda = 1e-3;
  int max_iters = 1000;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  int lbfgs_memory = 10;
};

struct TrainTrace {
  std::vector<double> objective;  // value after each accepted step (index 0 = start)
  double final_grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// mean CE + (lambda/2)|w|^2 and its gradient.
inline double objective(const ModelParams& params, const FeaturizedSet& data,
                        Vector* grad) {
  const double inv_n = 1.0 / static_cast<double>(data.size());
  double f = 0.0;
  if (grad) grad->assign(params.num_params(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector z = logits(params, data.x[i]);
    const auto yi = static_cast<std::size_t>(data.y[i]);
    f -= log_softmax_at(z, yi) * inv_n;
    if (grad) {
      Vector p = softmax(z);
      p[yi] -= 1.0;
      scatter_outer(params, data.x[i], p, inv_n, *grad);
    }
  }
  f += 0.5 * params.l2_lambda * dot(params.weights, params.weights);
  if (grad) axpy(params.l2_lambda, params.weights, *grad);
  return f;
}

inline void require_trainable(const FeaturizedSet& data) {
  if (data.empty()) throw DatasetError("cannot train on an empty dataset");
  const auto counts = data.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0)
      throw DatasetError("class " + std::to_string(c) +
                         " has no training examples");
}

}  // namespace detail

/// Full-batch L-BFGS with Armijo backtracking from the zero vector. The
/// objective is strictly convex for lambda > 0, so the result is independent
/// of `hyper.seed`; the seed is carried for bookkeeping only.
inline ModelParams train(const FeaturizedSet& data, const TrainHyper& hyper,
                         TrainTrace* trace = nullptr) {
  detail::require_trainable(data);
  ModelParams params(data.config, data.num_classes, hyper.l2_lambda);
  const std::size_t P = params.num_params();
  const auto m = static_cast<std::size_t>(std::max(1, hyper.lbfgs_memory));

  Vector g;
  double f = detail::objective(params, data, &g);
  std::vector<Vector> s_hist, y_hist;
  std::vector<double> rho_hist;
  TrainTrace local;
  local.objective.push_back(f);

  int it = 0;
  for (; it < hyper.max_iters; ++it) {
    if (norm2(g) <= hyper.tol) break;

    // Two-loop recursion.
    Vector d(g.begin(), g.end());
    const std::size_t k = s_hist.size();
    std::vector<double> alpha(k);
    for (std::size_t ii = k; ii-- > 0;) {
      alpha[ii] = rho_hist[ii] * dot(s_hist[ii], d);
      axpy(-alpha[ii], y_hist[ii], d);
    }
    if (k > 0) {
      const double gamma = dot(s_hist[k - 1], y_hist[k - 1]) /
                           dot(y_hist[k - 1], y_hist[k - 1]);
      scale_in_place(gamma, d);
    }
    for (std::size_t ii = 0; ii < k; ++ii) {
      const double beta = rho_hist[ii] * dot(y_hist[ii], d);
      axpy(alpha[ii] - beta, s_hist[ii], d);
    }
    scale_in_place(-1.0, d);

    double gd = dot(g, d);
    if (!(gd < 0.0)) {
      s_hist.clear(), y_hist.clear(), rho_hist.clear();
      d.assign(g.begin(), g.end());
      scale_in_place(-1.0, d);
      gd = -dot(g, g);
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / norm2(g)) : 1.0;
    ModelParams trial = params;
    Vector g_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < P; ++i)
        trial.weights[i] = params.weights[i] + step * d[i];
      f_new = detail::objective(trial, data, &g_new);
      if (f_new <= f + 1e-4 * step * gd) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Vector s(P), y(P);
    for (std::size_t i = 0; i < P; ++i) {
      s[i] = trial.weights[i] - params.weights[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-16) {
      if (s_hist.size() == m) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    params.weights.swap(trial.weights);
    g.swap(g_new);
    f = f_new;
    local.objective.push_back(f);
  }
  local.iterations = it;
  local.final_grad_norm = norm2(g);
  local.converged = local.final_grad_norm <= hyper.tol;
  if (trace) *trace = std::move(local);
  return params;
}

struct ModelSpec {
  FeatureConfig features;
  int num_classes = 2;
};

inline ModelParams train(std::span<const Example> examples, const ModelSpec& spec,
                         const TrainHyper& hyper, TrainTrace* trace = nullptr) {
  return train(featurize_dataset(examples, spec.features, spec.num_classes),
               hyper, trace);
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  double accuracy = 0.0;
  double mean_ce_loss = 0.0;
  double mean_rce_loss = 0.0;
  bool operator==(const EvalResult&) const = default;
};

inline EvalResult evaluate(const ModelParams& params, const FeaturizedSet& data,
                           double rce_constant_A = -4.0) {
  if (data.empty()) throw DatasetError("cannot evaluate on an empty dataset");
  EvalResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::check_dims(params, data.x[i]);
    const Vector z = detail::logits(params, data.x[i]);
    const Vector p = detail::softmax(z);
    const auto yi = static_cast<std::size_t>(data.y[i]);
    if (argmax(p) == data.y[i]) r.accuracy += 1.0;
    r.mean_ce_loss -= detail::log_softmax_at(z, yi);
    r.mean_rce_loss += rce_from_probs(p, data.y[i], rce_constant_A);
  }
  const auto n = static_cast<double>(data.size());
  r.accuracy /= n;
  r.mean_ce_loss /= n;
  r.mean_rce_loss /= n;
  return r;
}

inline EvalResult evaluate(const ModelParams& params,
                           std::span<const Example> examples,
                           double rce_constant_A = -4.0) {
  return evaluate(params, featurize_dataset(examples, params), rce_constant_A);
}

}  // namespace progen

#endif  // PROGEN_MODEL_HPP_
