#include "sgp/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace sgp {

namespace {

constexpr double kVarFloor = 1e-12;

double entropy(const Eigen::VectorXd& beta) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < beta.size(); ++i)
    if (beta[i] > 0.0) h -= beta[i] * std::log(beta[i]);
  return h;
}

Eigen::VectorXd beta_from_r(const Eigen::VectorXd& r) {
  const double total = r.sum();
  if (!(total > 0.0))
    throw std::invalid_argument("qp: degenerate weight normalization");
  return r / total;
}

// Projection onto { r >= 0, b^T r = 1 } in the |.|_2 metric: r = (v - t b)_+
// with t chosen by walking the sorted breakpoints v_i / b_i.
Eigen::VectorXd project_weighted_simplex(const Eigen::VectorXd& v,
                                         const Eigen::VectorXd& b) {
  const Eigen::Index k = v.size();
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return v[i] / b[i] > v[j] / b[j];
  });
  double sum_bv = 0.0, sum_bb = 0.0;
  double t = 0.0;
  for (Eigen::Index m = 0; m < k; ++m) {
    const int idx = order[m];
    sum_bv += b[idx] * v[idx];
    sum_bb += b[idx] * b[idx];
    t = (sum_bv - 1.0) / sum_bb;
    const double next_bp =
        m + 1 < k ? v[order[m + 1]] / b[order[m + 1]]
                  : -std::numeric_limits<double>::infinity();
    if (t >= next_bp) break;
  }
  Eigen::VectorXd r(k);
  for (Eigen::Index i = 0; i < k; ++i) r[i] = std::max(0.0, v[i] - t * b[i]);
  return r;
}

}  // namespace

LocalPredictionSet LocalPredictionSet::make(Eigen::MatrixXd mean,
                                            Eigen::MatrixXd variance) {
  if (mean.rows() != variance.rows() || mean.cols() != variance.cols())
    throw std::invalid_argument("LocalPredictionSet: shape mismatch");
  if (mean.rows() == 0 || mean.cols() == 0)
    throw std::invalid_argument("LocalPredictionSet: empty");
  LocalPredictionSet s;
  s.clamped = (variance.array() < kVarFloor).any();
  s.mean = std::move(mean);
  s.variance = variance.cwiseMax(kVarFloor);
  return s;
}

LocalPredictionSet LocalPredictionSet::column(int m) const {
  LocalPredictionSet s;
  s.mean = mean.col(m);
  s.variance = variance.col(m);
  s.clamped = clamped;
  return s;
}

void FusionWeights::validate() const {
  if (beta.size() == 0)
    throw std::invalid_argument("FusionWeights: empty");
  if ((beta.array() < -1e-12).any())
    throw std::invalid_argument("FusionWeights: negative component");
  if (std::abs(beta.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("FusionWeights: not normalized");
}

FusionWeights uniform_weights(int k) {
  return FusionWeights{Eigen::VectorXd::Constant(k, 1.0 / k)};
}

FusedPrediction fuse(const LocalPredictionSet& locals,
                     const FusionWeights& weights) {
  weights.validate();
  const int k = locals.experts();
  const int m = locals.points();
  if (weights.beta.size() != k)
    throw std::invalid_argument("fuse: weight/expert count mismatch");

  FusedPrediction out;
  out.mean.resize(m);
  out.variance.resize(m);
  out.beta = weights.beta.replicate(1, m);
  out.expert_mean = locals.mean;
  out.expert_variance = locals.variance;
  out.expert_ids.resize(k);
  std::iota(out.expert_ids.begin(), out.expert_ids.end(), 0);
  if (locals.clamped)
    out.warnings.push_back("degenerate expert variance clamped to 1e-12");

  for (int j = 0; j < m; ++j) {
    double sb = 0.0, sa = 0.0;
    for (int i = 0; i < k; ++i) {
      sb += weights.beta[i] * locals.b(i, j);
      sa += weights.beta[i] * locals.a(i, j);
    }
    out.variance[j] = 1.0 / sb;
    out.mean[j] = sa / sb;
  }
  return out;
}

double fusion_objective(const LocalPredictionSet& locals,
                        const Eigen::VectorXd& truths,
                        const Eigen::VectorXd& beta) {
  const int m = locals.points();
  double f = 0.0;
  for (int j = 0; j < m; ++j) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < locals.experts(); ++i) {
      num += locals.a(i, j) * beta[i];
      den += locals.b(i, j) * beta[i];
    }
    const double r = truths[j] - num / den;
    f += r * r;
  }
  return f;
}

Eigen::VectorXd fusion_gradient(const LocalPredictionSet& locals,
                                const Eigen::VectorXd& truths,
                                const Eigen::VectorXd& beta) {
  const int k = locals.experts();
  const int m = locals.points();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
  for (int j = 0; j < m; ++j) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < k; ++i) {
      num += locals.a(i, j) * beta[i];
      den += locals.b(i, j) * beta[i];
    }
    const double res = truths[j] - num / den;
    for (int i = 0; i < k; ++i) {
      const double dpred =
          (locals.a(i, j) * den - num * locals.b(i, j)) / (den * den);
      g[i] += -2.0 * res * dpred;
    }
  }
  return g;
}

FusionWeights solve_qp_single(const LocalPredictionSet& at_point,
                              double truth) {
  if (at_point.points() != 1)
    throw std::invalid_argument("solve_qp_single: exactly one point required");
  const int k = at_point.experts();
  if (k == 1) return FusionWeights{Eigen::VectorXd::Ones(1)};

  Eigen::VectorXd a(k), b(k), mu(k);
  for (int i = 0; i < k; ++i) {
    a[i] = at_point.a(i, 0);
    b[i] = at_point.b(i, 0);
    mu[i] = at_point.mean(i, 0);
  }
  auto objective_r = [&](const Eigen::VectorXd& r) {
    const double d = truth - a.dot(r);
    return d * d;
  };

  std::vector<Eigen::VectorXd> candidates;

  // uniform-beta feasible start: equal r on b^T r = 1
  Eigen::VectorXd r = Eigen::VectorXd::Constant(k, 1.0 / b.sum());
  candidates.push_back(r);

  // projected gradient with exact line search on each projected direction
  const double lips = 2.0 * a.squaredNorm();
  const double step0 = lips > 0.0 ? 1.0 / lips : 1.0;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd grad = -2.0 * (truth - a.dot(r)) * a;
    const Eigen::VectorXd d =
        project_weighted_simplex(r - step0 * grad, b) - r;
    if (d.norm() <= 1e-14 * std::max(1.0, r.norm())) break;
    const double ad = a.dot(d);
    double t = 1.0;
    if (ad * ad > 0.0) t = std::clamp((truth - a.dot(r)) / ad, 0.0, 1.0);
    if (t <= 0.0) break;
    r += t * d;
  }
  candidates.push_back(r);

  // exact polish: the objective depends on r only through a^T r, whose range
  // over the feasible set is [min mu, max mu]; the clamped target is
  // attained by a vertex or a two-vertex interpolation.
  int lo = -1, hi = -1;
  for (int i = 0; i < k; ++i) {
    if (mu[i] <= truth && (lo < 0 || mu[i] > mu[lo])) lo = i;
    if (mu[i] >= truth && (hi < 0 || mu[i] < mu[hi])) hi = i;
  }
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd vert = Eigen::VectorXd::Zero(k);
    vert[i] = 1.0 / b[i];
    candidates.push_back(vert);
  }
  if (lo >= 0 && hi >= 0) {
    Eigen::VectorXd interp = Eigen::VectorXd::Zero(k);
    if (lo == hi) {
      interp[lo] = 1.0 / b[lo];
    } else {
      const double t = (truth - mu[hi]) / (mu[lo] - mu[hi]);
      interp[lo] = t / b[lo];
      interp[hi] = (1.0 - t) / b[hi];
    }
    candidates.push_back(interp);
  }

  double best_obj = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) best_obj = std::min(best_obj, objective_r(c));
  const double tol = 1e-9 * std::max(1.0, truth * truth) + 1e-300;

  // among the optima found prefer the most uniform weights
  int pick = 0;
  double best_entropy = -std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> betas;
  betas.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    betas.push_back(beta_from_r(candidates[c]));
    if (objective_r(candidates[c]) <= best_obj + tol) {
      const double h = entropy(betas.back());
      if (h > best_entropy + 1e-15) {
        best_entropy = h;
        pick = static_cast<int>(c);
      }
    }
  }
  FusionWeights w{betas[pick]};
  w.validate();
  return w;
}

Eigen::VectorXd mirror_step(const Eigen::VectorXd& beta,
                            const Eigen::VectorXd& grad, double eta) {
  Eigen::VectorXd next(beta.size());
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    const double x = std::clamp(eta * grad[i], -50.0, 50.0);
    next[i] = beta[i] * std::exp(-x);
  }
  return next / next.sum();
}

FusionWeights mirror_descent(const LocalPredictionSet& validation,
                             const Eigen::VectorXd& truths,
                             const MirrorOptions& opts, MirrorTrace* trace) {
  const int k = validation.experts();
  if (truths.size() != validation.points())
    throw std::invalid_argument("mirror_descent: truth/point count mismatch");
  if (k == 1) {
    if (trace) *trace = MirrorTrace{};
    return FusionWeights{Eigen::VectorXd::Ones(1)};
  }

  const double radius = std::sqrt(std::log(static_cast<double>(k)));
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(k, 1.0 / k);
  Eigen::VectorXd best = beta;
  double best_f = fusion_objective(validation, truths, beta);

  MirrorTrace tr;
  tr.objective.push_back(best_f);

  double gmax = 0.0;
  double eta = opts.step;
  for (int r = 0; r < opts.iterations; ++r) {
    const Eigen::VectorXd g = fusion_gradient(validation, truths, beta);
    const double gnorm = g.norm();
    tr.max_grad_norm = std::max(tr.max_grad_norm, gnorm);
    if (opts.step <= 0.0) {
      if (r < 10) gmax = std::max(gmax, gnorm);
      eta = radius / std::max(gmax, 1e-12) *
            std::sqrt(2.0 / opts.iterations);
    }
    Eigen::VectorXd clipped_g = g;
    for (Eigen::Index i = 0; i < k; ++i)
      clipped_g[i] = std::clamp(eta * g[i], -opts.step_clip, opts.step_clip);
    Eigen::VectorXd next(k);
    for (Eigen::Index i = 0; i < k; ++i)
      next[i] = beta[i] * std::exp(-clipped_g[i]);
    beta = next / next.sum();

    const double f = fusion_objective(validation, truths, beta);
    tr.objective.push_back(f);
    if (f < best_f) {
      best_f = f;
      best = beta;
    }
  }
  tr.step_used = eta;
  tr.best_objective = best_f;
  if (trace) *trace = std::move(tr);
  FusionWeights w{best};
  w.validate();
  return w;
}

FusionWeights softmax_weights(const Eigen::VectorXd& errors) {
  if (errors.size() == 0)
    throw std::invalid_argument("softmax_weights: empty errors");
  const double shift = errors.minCoeff();
  Eigen::VectorXd w = (-(errors.array() - shift)).exp();
  FusionWeights out{w / w.sum()};
  out.validate();
  return out;
}

std::pair<Series, Series> split_validation(const Series& training,
                                           int validation_points) {
  if (validation_points < 0)
    throw std::invalid_argument("split_validation: negative size");
  const Eigen::Index n = training.size();
  if (validation_points > n)
    throw std::invalid_argument("split_validation: more points than series");
  const Eigen::Index keep = n - validation_points;
  Series fit{training.times.head(keep), training.values.head(keep)};
  Series val{training.times.tail(validation_points),
             training.values.tail(validation_points)};
  return {std::move(fit), std::move(val)};
}

std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kQp: return "qp";
    case FusionStrategy::kMirror: return "mirror";
    case FusionStrategy::kSoftmax: return "softmax";
    case FusionStrategy::kEntropy: return "entropy";
  }
  return "?";
}

namespace {

// Strips any validation times out of a shard (exact time match).
Shard without_times(const Shard& shard, const Eigen::VectorXd& times) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < shard.size(); ++i) {
    bool drop = false;
    for (Eigen::Index j = 0; j < times.size(); ++j)
      if (shard.times[i] == times[j]) {
        drop = true;
        break;
      }
    if (!drop) keep.push_back(i);
  }
  if (static_cast<Eigen::Index>(keep.size()) == shard.size()) return shard;
  Eigen::VectorXd t(keep.size()), v(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    t[i] = shard.times[keep[i]];
    v[i] = shard.values[keep[i]];
  }
  return make_shard(std::move(t), std::move(v));
}

Shard with_series(const Shard& shard, const Series& extra) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(shard.size() + extra.size());
  for (Eigen::Index i = 0; i < shard.size(); ++i)
    pts.emplace_back(shard.times[i], shard.values[i]);
  for (Eigen::Index i = 0; i < extra.size(); ++i)
    pts.emplace_back(extra.times[i], extra.values[i]);
  std::sort(pts.begin(), pts.end());
  Eigen::VectorXd t(pts.size()), v(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t[i] = pts[i].first;
    v[i] = pts[i].second;
  }
  return make_shard(std::move(t), std::move(v));
}

struct ExpertPredictions {
  std::vector<int> ids;                  // original shard indices
  Eigen::MatrixXd val_mean, val_var;     // survivors x M
  Eigen::MatrixXd test_mean, test_var;   // survivors x Mt
};

ExpertPredictions predict_experts(const std::vector<Shard>& shards,
                                  const HyperParams& z, const KernelSpec& spec,
                                  const Series& validation,
                                  const Eigen::VectorXd& test_times,
                                  const GpOptions& gp,
                                  std::vector<std::string>& warnings,
                                  bool strip_validation) {
  const Eigen::Index mv = validation.size();
  const Eigen::Index mt = test_times.size();
  Eigen::VectorXd query(mv + mt);
  query << validation.times, test_times;

  ExpertPredictions out;
  std::vector<Eigen::VectorXd> means, vars;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    try {
      const Shard s = strip_validation
                          ? without_times(shards[i], validation.times)
                          : shards[i];
      LocalModel model(s, z, spec, gp);
      PosteriorPrediction p = model.predict(query);
      out.ids.push_back(static_cast<int>(i));
      means.push_back(std::move(p.mean));
      vars.push_back(std::move(p.variance));
    } catch (const std::exception& e) {
      warnings.push_back("expert " + std::to_string(i) +
                         " dropped: " + e.what());
    }
  }
  const int ks = static_cast<int>(out.ids.size());
  if (ks == 0) throw std::runtime_error("predict_fused: all experts failed");
  out.val_mean.resize(ks, mv);
  out.val_var.resize(ks, mv);
  out.test_mean.resize(ks, mt);
  out.test_var.resize(ks, mt);
  for (int i = 0; i < ks; ++i) {
    out.val_mean.row(i) = means[i].head(mv).transpose();
    out.val_var.row(i) = vars[i].head(mv).transpose();
    out.test_mean.row(i) = means[i].tail(mt).transpose();
    out.test_var.row(i) = vars[i].tail(mt).transpose();
  }
  return out;
}

FusedPrediction fuse_per_point(const LocalPredictionSet& locals,
                               const Eigen::MatrixXd& beta_cols) {
  const int k = locals.experts();
  const int m = locals.points();
  FusedPrediction out;
  out.mean.resize(m);
  out.variance.resize(m);
  out.beta = beta_cols;
  out.expert_mean = locals.mean;
  out.expert_variance = locals.variance;
  for (int j = 0; j < m; ++j) {
    double sb = 0.0, sa = 0.0;
    for (int i = 0; i < k; ++i) {
      sb += beta_cols(i, j) * locals.b(i, j);
      sa += beta_cols(i, j) * locals.a(i, j);
    }
    out.variance[j] = 1.0 / sb;
    out.mean[j] = sa / sb;
  }
  return out;
}

}  // namespace

FusedPrediction predict_fused(const HyperParams& z,
                              const std::vector<Shard>& shards,
                              const Series& validation,
                              const Eigen::VectorXd& test_times,
                              const KernelSpec& spec,
                              const FusionOptions& opts) {
  if (shards.empty())
    throw std::invalid_argument("predict_fused: no shards");
  std::vector<std::string> warnings;
  ExpertPredictions ep =
      predict_experts(shards, z, spec, validation, test_times, opts.gp,
                      warnings, /*strip_validation=*/true);
  const int ks = static_cast<int>(ep.ids.size());
  const int mv = static_cast<int>(validation.size());
  const int mt = static_cast<int>(test_times.size());

  // weights from the validation set
  Eigen::MatrixXd beta_cols(ks, mt);
  bool per_point = false;
  FusionWeights w = uniform_weights(ks);
  if (opts.strategy == FusionStrategy::kEntropy) {
    per_point = true;
    const double prior = eval_composite(0.0, z, spec);
    for (int j = 0; j < mt; ++j) {
      Eigen::VectorXd wcol(ks);
      for (int i = 0; i < ks; ++i) {
        const double gain =
            0.5 * (std::log(prior) - std::log(ep.test_var(i, j)));
        wcol[i] = std::max(gain, 1e-12);
      }
      beta_cols.col(j) = wcol / wcol.sum();
    }
  } else if (mv == 0) {
    warnings.push_back("no validation points: uniform fusion weights");
  } else {
    const LocalPredictionSet val_set =
        LocalPredictionSet::make(ep.val_mean, ep.val_var);
    switch (opts.strategy) {
      case FusionStrategy::kQp:
        if (mv != 1)
          throw std::invalid_argument(
              "fusion strategy qp requires exactly one validation point");
        w = solve_qp_single(val_set, validation.values[0]);
        break;
      case FusionStrategy::kMirror:
        w = mirror_descent(val_set, validation.values, opts.mirror);
        break;
      case FusionStrategy::kSoftmax: {
        Eigen::VectorXd errors(ks);
        for (int i = 0; i < ks; ++i) {
          double sq = 0.0;
          for (int j = 0; j < mv; ++j) {
            const double d = ep.val_mean(i, j) - validation.values[j];
            sq += d * d;
          }
          errors[i] = std::sqrt(sq / mv);
        }
        w = softmax_weights(errors);
        break;
      }
      default:
        break;
    }
  }
  if (!per_point) beta_cols = w.beta.replicate(1, mt);

  // concatenating scheme: re-predict the test points with the validation
  // points appended to each shard, keeping the weights already computed
  Eigen::MatrixXd test_mean = ep.test_mean;
  Eigen::MatrixXd test_var = ep.test_var;
  std::vector<int> ids = ep.ids;
  if (opts.concatenate && mv > 0) {
    std::vector<Shard> extended;
    extended.reserve(ep.ids.size());
    for (int id : ep.ids)
      extended.push_back(
          with_series(without_times(shards[id], validation.times),
                      validation));
    std::vector<std::string> concat_warnings;
    Series no_validation{Eigen::VectorXd(0), Eigen::VectorXd(0)};
    ExpertPredictions ep2 =
        predict_experts(extended, z, spec, no_validation, test_times, opts.gp,
                        concat_warnings, /*strip_validation=*/false);
    for (auto& m : concat_warnings) warnings.push_back(std::move(m));
    if (ep2.ids.size() != ep.ids.size()) {
      // survivors shrank after concatenation; renormalize the weights
      Eigen::MatrixXd kept(ep2.ids.size(), mt);
      std::vector<int> new_ids;
      for (std::size_t r2 = 0; r2 < ep2.ids.size(); ++r2) {
        kept.row(r2) = beta_cols.row(ep2.ids[r2]);
        new_ids.push_back(ids[ep2.ids[r2]]);
      }
      for (int j = 0; j < mt; ++j) kept.col(j) /= kept.col(j).sum();
      beta_cols = std::move(kept);
      ids = std::move(new_ids);
      warnings.push_back("weights renormalized over surviving experts");
    } else {
      std::vector<int> new_ids;
      for (std::size_t r2 = 0; r2 < ep2.ids.size(); ++r2)
        new_ids.push_back(ids[ep2.ids[r2]]);
      ids = std::move(new_ids);
    }
    test_mean = ep2.test_mean;
    test_var = ep2.test_var;
  }

  const LocalPredictionSet test_set =
      LocalPredictionSet::make(test_mean, test_var);
  FusedPrediction fused = fuse_per_point(test_set, beta_cols);
  if (test_set.clamped)
    warnings.push_back("degenerate expert variance clamped to 1e-12");
  fused.expert_ids = std::move(ids);
  fused.warnings = std::move(warnings);
  return fused;
}

}  // namespace sgp
