#ifndef PROGEN_INFLUENCE_HPP_
#define PROGEN_INFLUENCE_HPP_

// Validation-set influence of training points:
//
//   score(z) = -grad L'(D_val)^T (H + damping I)^{-1} grad L(z)
//
// with L the training loss (CE) and L' the validation objective (RCE by
// default). The inverse-HVP is applied once to the validation gradient and
// then dotted with every candidate gradient; H is symmetric so this equals the
// per-candidate form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "progen/common.hpp"
#include "progen/model.hpp"

namespace progen {

enum class IhvpMethod { kExact, kStochastic };

inline const char* to_string(IhvpMethod m) {
  return m == IhvpMethod::kExact ? "exact" : "stochastic";
}

struct StochasticConfig {
  int recursion_depth = 5000;
  int num_repeats = 10;
  double scale = 0.1;
  int batch_size = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (recursion_depth < 1) throw ConfigError("recursion_depth must be >= 1");
    if (num_repeats < 1) throw ConfigError("num_repeats must be >= 1");
    if (!(scale > 0.0)) throw ConfigError("scale must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }
  bool operator==(const StochasticConfig&) const = default;
};

struct InfluenceConfig {
  IhvpMethod method = IhvpMethod::kStochastic;
  double damping = 0.01;
  LossSpec val_loss = LossSpec::rce();
  StochasticConfig stochastic;
  int cg_max_iters = 5000;
  double cg_rel_tol = 1e-8;

  void validate() const {
    if (!(damping >= 0.0)) throw ConfigError("damping must be >= 0");
    val_loss.validate();
    stochastic.validate();
    if (cg_max_iters < 1) throw ConfigError("cg_max_iters must be >= 1");
  }
  bool operator==(const InfluenceConfig&) const = default;
};

struct InfluenceReport {
  std::map<std::int64_t, double> scores;
  InfluenceConfig config;
  std::uint64_t model_fingerprint = 0;

  bool operator==(const InfluenceReport&) const = default;
};

/// Sum over the validation set of per-example loss gradients.
inline Vector val_grad(const ModelParams& params, const FeaturizedSet& val,
                       const LossSpec& spec) {
  if (val.empty()) throw DatasetError("validation set is empty");
  spec.validate();
  Vector g(params.num_params(), 0.0);
  for (std::size_t i = 0; i < val.size(); ++i) {
    detail::check_dims(params, val.x[i]);
    const Vector p = predict(params, val.x[i]);
    detail::scatter_outer(params, val.x[i],
                          detail::logit_residual(p, val.y[i], spec), 1.0, g);
  }
  return g;
}

/// Solves (H + damping I) u = v by conjugate gradients.
inline Vector ihvp_exact(const ModelParams& params, const FeaturizedSet& train_set,
                         std::span<const double> v, double damping,
                         int max_iters = 5000, double rel_tol = 1e-8) {
  if (!(damping + params.l2_lambda > 0.0))
    throw ConfigError("ihvp_exact needs damping + l2_lambda > 0");
  if (v.size() != params.num_params()) throw DimensionError("ihvp: size mismatch");
  const CeHessian H(params, train_set);
  const std::size_t P = v.size();
  Vector x(P, 0.0);
  const double vnorm = norm2(v);
  if (vnorm == 0.0) return x;
  Vector r(v.begin(), v.end());
  Vector p = r;
  double rr = dot(r, r);
  const double target = rel_tol * vnorm;
  for (int it = 0; it < max_iters; ++it) {
    if (std::sqrt(rr) <= target) return x;
    const Vector Ap = H.apply(p, damping);
    const double alpha = rr / dot(p, Ap);
    axpy(alpha, p, x);
    axpy(-alpha, Ap, r);
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < P; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  // Recompute the true residual before deciding.
  Vector res(v.begin(), v.end());
  axpy(-1.0, H.apply(x, damping), res);
  const double final_res = norm2(res);
  if (final_res <= target) return x;
  throw ConvergenceError("conjugate gradient did not converge, residual " +
                             std::to_string(final_res),
                         final_res);
}

/// Averaged final iterate of the truncated Neumann recursion
///   u_0 = v,  u_{j+1} = v + (I - scale (H_batch + damping I)) u_j
/// whose fixed point is (scale (H + damping I))^{-1} v.
inline Vector neumann_recursion(const ModelParams& params,
                                const FeaturizedSet& train_set,
                                std::span<const double> v, double damping,
                                const StochasticConfig& cfg) {
  cfg.validate();
  if (v.size() != params.num_params()) throw DimensionError("ihvp: size mismatch");
  const CeHessian H(params, train_set);
  const std::size_t P = v.size();
  const std::size_t n = train_set.size();
  const double vnorm = norm2(v);
  const double limit = 1e6 * vnorm;
  const double shrink = 1.0 - cfg.scale * (params.l2_lambda + damping);
  const double batch_w =
      -cfg.scale / static_cast<double>(cfg.batch_size);

  Vector sum(P, 0.0);
  std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
  std::vector<Vector> coeffs(batch.size());
  for (int rep = 0; rep < cfg.num_repeats; ++rep) {
    std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(rep)}));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    Vector u(v.begin(), v.end());
    for (int j = 0; j < cfg.recursion_depth; ++j) {
      for (std::size_t b = 0; b < batch.size(); ++b) {
        batch[b] = pick(rng);
        coeffs[b] = H.curvature_coeffs(batch[b], u);
      }
      double sq = 0.0;
      for (std::size_t i = 0; i < P; ++i) u[i] = v[i] + shrink * u[i];
      for (std::size_t b = 0; b < batch.size(); ++b)
        detail::scatter_outer(params, train_set.x[batch[b]], coeffs[b], batch_w, u);
      for (double x : u) sq += x * x;
      if (!std::isfinite(sq) || std::sqrt(sq) > limit)
        throw ScaleTooLargeError(
            "Neumann recursion diverged at depth " + std::to_string(j + 1) +
            "; reduce the scale");
    }
    axpy(1.0, u, sum);
  }
  scale_in_place(1.0 / cfg.num_repeats, sum);
  return sum;
}

/// Stochastic estimate of (H + damping I)^{-1} v: scale times the Neumann
/// fixed-point iterate.
inline Vector ihvp_stochastic(const ModelParams& params,
                              const FeaturizedSet& train_set,
                              std::span<const double> v, double damping,
                              const StochasticConfig& cfg) {
  Vector u = neumann_recursion(params, train_set, v, damping, cfg);
  scale_in_place(cfg.scale, u);
  return u;
}

inline Vector ihvp(const ModelParams& params, const FeaturizedSet& train_set,
                   std::span<const double> v, const InfluenceConfig& cfg) {
  if (cfg.method == IhvpMethod::kExact)
    return ihvp_exact(params, train_set, v, cfg.damping, cfg.cg_max_iters,
                      cfg.cg_rel_tol);
  return ihvp_stochastic(params, train_set, v, cfg.damping, cfg.stochastic);
}

/// One score per candidate; negative means upweighting the candidate lowers
/// the validation objective.
inline InfluenceReport influence_scores(const ModelParams& params,
                                        const FeaturizedSet& candidates,
                                        const FeaturizedSet& train_set,
                                        const FeaturizedSet& val_set,
                                        const InfluenceConfig& cfg) {
  cfg.validate();
  InfluenceReport report;
  report.config = cfg;
  report.model_fingerprint = params.fingerprint();
  const Vector g_val = val_grad(params, val_set, cfg.val_loss);
  const Vector u = ihvp(params, train_set, g_val, cfg);
  const LossSpec ce = LossSpec::ce();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = -grad_loss_dot(params, candidates.x[i], candidates.y[i], ce, u);
    if (!std::isfinite(s))
      throw Error("non-finite influence score for id " +
                  std::to_string(candidates.ids[i]));
    report.scores[candidates.ids[i]] = s;
  }
  return report;
}

inline InfluenceReport influence_scores(const ModelParams& params,
                                        std::span<const Example> candidates,
                                        std::span<const Example> train_set,
                                        std::span<const Example> val_set,
                                        const InfluenceConfig& cfg) {
  return influence_scores(params, featurize_dataset(candidates, params),
                          featurize_dataset(train_set, params),
                          featurize_dataset(val_set, params), cfg);
}

/// The M most helpful examples (smallest scores first, ties by ascending id).
/// Examples without a score are skipped.
inline Dataset select_helpful(const InfluenceReport& report,
                              std::span<const Example> examples, int M) {
  if (M < 1) throw ConfigError("M must be >= 1");
  Dataset scored;
  for (const auto& e : examples) {
    auto it = report.scores.find(e.id);
    if (it == report.scores.end()) continue;
    Example copy = e;
    copy.influence_score = it->second;
    scored.push_back(std::move(copy));
  }
  std::sort(scored.begin(), scored.end(), [](const Example& a, const Example& b) {
    if (*a.influence_score != *b.influence_score)
      return *a.influence_score < *b.influence_score;
    return a.id < b.id;
  });
  if (scored.size() > static_cast<std::size_t>(M))
    scored.resize(static_cast<std::size_t>(M));
  return scored;
}

inline double summed_loss(const ModelParams& params, const FeaturizedSet& data,
                          const LossSpec& spec) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    s += loss(params, data.x[i], data.y[i], spec);
  return s;
}

/// Leave-one-out oracle: L(val; theta without z) - L(val; theta full), with
/// L summed over the validation set.
inline double loo_oracle(const FeaturizedSet& train_set, std::int64_t held_out_id,
                         const FeaturizedSet& val_set, const LossSpec& spec,
                         const TrainHyper& hyper,
                         const ModelParams* full_model = nullptr) {
  auto it = std::find(train_set.ids.begin(), train_set.ids.end(), held_out_id);
  if (it == train_set.ids.end())
    throw DatasetError("held-out id " + std::to_string(held_out_id) +
                       " not in training set");
  if (train_set.size() < 2) throw DatasetError("LOO needs at least two points");
  const auto idx = static_cast<std::size_t>(it - train_set.ids.begin());
  const FeaturizedSet reduced = train_set.without_index(idx);
  for (auto c : reduced.class_counts())
    if (c == 0) throw DatasetError("removing the point empties a class");

  std::optional<ModelParams> owned;
  if (!full_model) {
    owned = train(train_set, hyper);
    full_model = &*owned;
  }
  const ModelParams without = train(reduced, hyper);
  return summed_loss(without, val_set, spec) - summed_loss(*full_model, val_set, spec);
}

}  // namespace progen

#endif  // PROGEN_INFLUENCE_HPP_
