#include "sgp/admm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace sgp {

void AdmmConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("admm: workers must be >= 1");
  if (!(rho > 0.0)) throw std::invalid_argument("admm: rho must be > 0");
  if (!(eps_abs > 0.0) || !(eps_rel > 0.0))
    throw std::invalid_argument("admm: tolerances must be > 0");
  if (max_rounds < 1)
    throw std::invalid_argument("admm: max_rounds must be >= 1");
}

std::vector<Shard> partition(const Eigen::VectorXd& times,
                             const Eigen::VectorXd& values,
                             const AdmmConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = times.size();
  const int k = cfg.workers;
  if (times.size() != values.size())
    throw std::invalid_argument("partition: times/values length mismatch");
  if (n < 2 * static_cast<Eigen::Index>(k))
    throw TooFewPoints("partition: need at least 2 points per worker");

  // index assignment per mode; shards keep ascending time order
  std::vector<std::vector<Eigen::Index>> groups(k);
  switch (cfg.partition) {
    case PartitionMode::kContiguous: {
      const Eigen::Index base = n / k;
      const Eigen::Index extra = n % k;
      Eigen::Index pos = 0;
      for (int i = 0; i < k; ++i) {
        const Eigen::Index len = base + (i < extra ? 1 : 0);
        for (Eigen::Index j = 0; j < len; ++j) groups[i].push_back(pos++);
      }
      break;
    }
    case PartitionMode::kStrided: {
      for (Eigen::Index j = 0; j < n; ++j) groups[j % k].push_back(j);
      break;
    }
    case PartitionMode::kRandom: {
      std::vector<Eigen::Index> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(cfg.seed);
      for (Eigen::Index i = n - 1; i > 0; --i) {
        const Eigen::Index j =
            static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[i], perm[j]);
      }
      const Eigen::Index base = n / k;
      const Eigen::Index extra = n % k;
      Eigen::Index pos = 0;
      for (int i = 0; i < k; ++i) {
        const Eigen::Index len = base + (i < extra ? 1 : 0);
        for (Eigen::Index j = 0; j < len; ++j) groups[i].push_back(perm[pos++]);
        std::sort(groups[i].begin(), groups[i].end());
      }
      break;
    }
  }

  std::vector<Shard> shards;
  shards.reserve(k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd t(groups[i].size()), v(groups[i].size());
    for (std::size_t j = 0; j < groups[i].size(); ++j) {
      t[j] = times[groups[i][j]];
      v[j] = values[groups[i][j]];
    }
    shards.push_back(make_shard(std::move(t), std::move(v)));
    shards.back().validate();
  }
  return shards;
}

AdmmState init_state(int workers, const Eigen::VectorXd& theta0_log,
                     double rho) {
  if (workers < 1) throw std::invalid_argument("init_state: workers >= 1");
  const Eigen::Index p = theta0_log.size();
  AdmmState st;
  st.theta = theta0_log.transpose().replicate(workers, 1);
  st.zeta = Eigen::MatrixXd::Zero(workers, p);
  // z^0 = (1/K) sum_i (theta_i^0 + zeta_i^0 / rho)
  Eigen::VectorXd z = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < workers; ++i)
    z += st.theta.row(i).transpose() + st.zeta.row(i).transpose() / rho;
  st.z = z / static_cast<double>(workers);
  st.z_prev = st.z;
  return st;
}

void run_round(AdmmState& state, const std::vector<Shard>& shards,
               const KernelSpec& spec, const AdmmConfig& cfg,
               const GpOptions& gp_opts) {
  cfg.validate();
  const int k = static_cast<int>(shards.size());
  if (state.theta.rows() != k)
    throw std::invalid_argument("run_round: state/shards worker mismatch");
  const Eigen::Index p = state.z.size();

  std::vector<FitResult> results(k);
  auto worker = [&](int i) {
    const HyperParams init =
        HyperParams::from_log_vector(state.theta.row(i).transpose());
    Proximal prox{state.z, state.zeta.row(i).transpose(), cfg.rho};
    results[i] = fit_local(shards[i], init, spec, prox, gp_opts);
  };

  int max_threads = cfg.threads > 0
                        ? cfg.threads
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (max_threads < 1) max_threads = 1;
  for (int start = 0; start < k; start += max_threads) {
    const int end = std::min(k, start + max_threads);
    std::vector<std::thread> pool;
    for (int i = start; i < end; ++i) pool.emplace_back(worker, i);
    for (auto& t : pool) t.join();
  }

  RoundRecord rec;
  rec.round = state.round + 1;
  rec.zeta_prev = state.zeta;
  rec.z_prev = state.z;

  // theta^{r+1}: a failed worker keeps its best iterate (already in FitResult)
  for (int i = 0; i < k; ++i)
    state.theta.row(i) = results[i].hp.log_vector().transpose();

  // z^{r+1} = (1/K) sum_i (theta_i^{r+1} + zeta_i^r / rho), fixed order
  Eigen::VectorXd z = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < k; ++i)
    z += state.theta.row(i).transpose() + state.zeta.row(i).transpose() / cfg.rho;
  z /= static_cast<double>(k);
  state.z_prev = state.z;
  state.z = z;

  // zeta_i^{r+1} = zeta_i^r + rho (theta_i^{r+1} - z^{r+1})
  for (int i = 0; i < k; ++i)
    state.zeta.row(i) +=
        cfg.rho * (state.theta.row(i) - state.z.transpose());

  rec.theta = state.theta;
  rec.z = state.z;
  rec.zeta = state.zeta;
  rec.primal_norms.resize(k);
  for (int i = 0; i < k; ++i)
    rec.primal_norms[i] =
        (state.theta.row(i).transpose() - state.z).norm();
  rec.dual_norm = (cfg.rho * (state.z - state.z_prev)).norm();
  rec.nll.resize(k);
  rec.inner_iterations.resize(k);
  rec.fit_converged.resize(k);
  rec.fit_failed.resize(k);
  for (int i = 0; i < k; ++i) {
    rec.nll[i] = results[i].nll_value;
    rec.inner_iterations[i] = results[i].iterations;
    rec.fit_converged[i] = results[i].converged;
    rec.fit_failed[i] = results[i].failed;
  }

  state.round += 1;
  state.rounds_completed += 1;
  state.scalars_exchanged += 2 * static_cast<long long>(p) + 1;

  rec.eps_pri = eps_primal(state, cfg);
  rec.eps_dual = eps_dual(state, cfg);
  state.history.push_back(std::move(rec));
}

double eps_primal(const AdmmState& state, const AdmmConfig& cfg) {
  const Eigen::Index p = state.z.size();
  double scale = state.z.norm();
  for (Eigen::Index i = 0; i < state.theta.rows(); ++i)
    scale = std::max(scale, state.theta.row(i).norm());
  return std::sqrt(static_cast<double>(p)) * cfg.eps_abs +
         cfg.eps_rel * scale;
}

double eps_dual(const AdmmState& state, const AdmmConfig& cfg) {
  const Eigen::Index p = state.z.size();
  const double zeta_norm = (cfg.rho * state.zeta).norm();  // stacked duals
  return std::sqrt(static_cast<double>(p)) * cfg.eps_abs +
         cfg.eps_rel * zeta_norm;
}

StopStatus check_stop(const AdmmState& state, const AdmmConfig& cfg) {
  if (state.history.empty()) return StopStatus::kContinue;
  const RoundRecord& last = state.history.back();
  const bool primal_ok = last.primal_norms.maxCoeff() <= last.eps_pri;
  const bool dual_ok = last.dual_norm <= last.eps_dual;
  if (primal_ok && dual_ok) return StopStatus::kConverged;
  if (state.round >= cfg.max_rounds) return StopStatus::kCapped;
  return StopStatus::kContinue;
}

TrainResult train(const Eigen::VectorXd& times, const Eigen::VectorXd& values,
                  const AdmmConfig& cfg, const KernelSpec& spec,
                  const GpOptions& gp_opts,
                  const std::optional<HyperParams>& init) {
  cfg.validate();
  spec.validate();

  TrainResult out;
  out.shards = partition(times, values, cfg);
  out.sigma2_e =
      init ? init->sigma2_e : estimate_noise_variance(values);
  const HyperParams hp0 =
      init ? *init : default_init(values, out.sigma2_e);

  AdmmState state = init_state(cfg.workers, hp0.log_vector(), cfg.rho);
  StopStatus status = StopStatus::kContinue;
  while (status == StopStatus::kContinue) {
    run_round(state, out.shards, spec, cfg, gp_opts);
    status = check_stop(state, cfg);
  }
  out.z = HyperParams::from_log_vector(state.z);
  out.state = std::move(state);
  out.status = status;
  return out;
}

std::string format_trace(const AdmmState& state) {
  std::ostringstream os;
  const int k = static_cast<int>(state.theta.rows());
  os << "round";
  for (int i = 0; i < k; ++i) os << " primal_" << i;
  os << " dual eps_pri eps_dual";
  for (int i = 0; i < k; ++i) os << " nll_" << i;
  os << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), " %.9e", v);
    os << buf;
  };
  for (const RoundRecord& r : state.history) {
    os << r.round;
    for (int i = 0; i < k; ++i) put(r.primal_norms[i]);
    put(r.dual_norm);
    put(r.eps_pri);
    put(r.eps_dual);
    for (int i = 0; i < k; ++i) put(r.nll[i]);
    os << "\n";
  }
  return os.str();
}

}  // namespace sgp
