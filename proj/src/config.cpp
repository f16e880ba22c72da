#include "sgp/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sgp {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (trim(v.substr(used)).empty()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (trim(v.substr(used)).empty()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

unsigned parse_terms(const std::string& key, const std::string& v) {
  unsigned terms = 0;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part == "weekly") terms |= kTermWeekly;
    else if (part == "daily") terms |= kTermDaily;
    else if (part == "se") terms |= kTermSe;
    else if (!part.empty())
      throw ConfigError(key + ": unknown term '" + part + "'");
  }
  if (terms == 0) throw ConfigError(key + ": no terms given");
  return terms;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    out.push_back(static_cast<int>(parse_int(key, part)));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

void assign(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "data.csv") c.csv_path = value;
  else if (key == "data.impute") {
    if (value == "none") c.impute = ImputePolicy::kReject;
    else if (value == "linear") c.impute = ImputePolicy::kLinear;
    else throw ConfigError("data.impute: expected none|linear");
  } else if (key == "synth.weekly_amplitude")
    c.synth.weekly_amplitude = parse_double(key, value);
  else if (key == "synth.daily_amplitude")
    c.synth.daily_amplitude = parse_double(key, value);
  else if (key == "synth.deviation_scale")
    c.synth.deviation_scale = parse_double(key, value);
  else if (key == "synth.noise_scale")
    c.synth.noise_scale = parse_double(key, value);
  else if (key == "synth.length")
    c.synth.length = static_cast<int>(parse_int(key, value));
  else if (key == "synth.seed") c.synth.seed = parse_u64(key, value);
  else if (key == "kernel.lambda1") c.kernel.lambda1 = parse_double(key, value);
  else if (key == "kernel.lambda2") c.kernel.lambda2 = parse_double(key, value);
  else if (key == "kernel.terms") c.kernel.active_terms = parse_terms(key, value);
  else if (key == "noise.policy") {
    if (value != "diff" && value != "fixed")
      throw ConfigError("noise.policy: expected diff|fixed");
    c.noise_policy = value;
  } else if (key == "noise.value") c.noise_value = parse_double(key, value);
  else if (key == "gp.toeplitz") c.gp.use_toeplitz = parse_bool(key, value);
  else if (key == "gp.trace_cutoff")
    c.gp.trace_cutoff = static_cast<int>(parse_int(key, value));
  else if (key == "gp.probes")
    c.gp.hutchinson_probes = static_cast<int>(parse_int(key, value));
  else if (key == "gp.max_iters")
    c.gp.max_iterations = static_cast<int>(parse_int(key, value));
  else if (key == "gp.grad_tol")
    c.gp.gradient_tolerance = parse_double(key, value);
  else if (key == "gp.jitter_scale")
    c.gp.jitter_scale = parse_double(key, value);
  else if (key == "admm.workers")
    c.admm.workers = static_cast<int>(parse_int(key, value));
  else if (key == "admm.rho") c.admm.rho = parse_double(key, value);
  else if (key == "admm.eps_abs") c.admm.eps_abs = parse_double(key, value);
  else if (key == "admm.eps_rel") c.admm.eps_rel = parse_double(key, value);
  else if (key == "admm.max_rounds")
    c.admm.max_rounds = static_cast<int>(parse_int(key, value));
  else if (key == "admm.partition") {
    if (value == "contiguous") c.admm.partition = PartitionMode::kContiguous;
    else if (value == "strided") c.admm.partition = PartitionMode::kStrided;
    else if (value == "random") c.admm.partition = PartitionMode::kRandom;
    else throw ConfigError("admm.partition: expected contiguous|strided|random");
  } else if (key == "fusion.strategy") {
    if (value == "qp") c.strategy = FusionStrategy::kQp;
    else if (value == "mirror") c.strategy = FusionStrategy::kMirror;
    else if (value == "softmax") c.strategy = FusionStrategy::kSoftmax;
    else if (value == "entropy") c.strategy = FusionStrategy::kEntropy;
    else throw ConfigError("fusion.strategy: expected qp|mirror|softmax|entropy");
  } else if (key == "fusion.validation_points")
    c.validation_points = static_cast<int>(parse_int(key, value));
  else if (key == "fusion.concatenate")
    c.concatenate = parse_bool(key, value);
  else if (key == "fusion.mirror_iters")
    c.mirror_iterations = static_cast<int>(parse_int(key, value));
  else if (key == "window.train_len")
    c.train_len = static_cast<int>(parse_int(key, value));
  else if (key == "window.horizon")
    c.horizon = static_cast<int>(parse_int(key, value));
  else if (key == "window.repeats")
    c.repeats = static_cast<int>(parse_int(key, value));
  else if (key == "window.step")
    c.step = static_cast<int>(parse_int(key, value));
  else if (key == "run.out") c.out_dir = value;
  else if (key == "run.seed") c.seed = parse_u64(key, value);
  else if (key == "run.threads")
    c.threads = static_cast<int>(parse_int(key, value));
  else if (key == "bench.k_sweep") c.k_sweep = parse_int_list(key, value);
  else if (key == "bench.rounds")
    c.bench_rounds = static_cast<int>(parse_int(key, value));
  else if (key == "bench.inner_iters")
    c.bench_inner_iterations = static_cast<int>(parse_int(key, value));
  else if (key == "bench.toeplitz_compare")
    c.bench_toeplitz_compare = parse_bool(key, value);
  else
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    kernel.validate();
    admm.validate();
    if (use_synth()) synth.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (noise_policy == "fixed" && !(noise_value > 0.0))
    throw ConfigError("noise.value must be > 0 under noise.policy = fixed");
  if (train_len < 2) throw ConfigError("window.train_len must be >= 2");
  if (horizon < 1) throw ConfigError("window.horizon must be >= 1");
  if (repeats < 1) throw ConfigError("window.repeats must be >= 1");
  if (step < 1) throw ConfigError("window.step must be >= 1");
  if (validation_points < 0)
    throw ConfigError("fusion.validation_points must be >= 0");
  if (validation_points >= train_len)
    throw ConfigError("fusion.validation_points must be < window.train_len");
  if (strategy == FusionStrategy::kQp && validation_points != 1)
    throw ConfigError("fusion.strategy qp requires exactly one validation point");
  if (train_len - validation_points < 2 * admm.workers)
    throw ConfigError(
        "window.train_len minus validation points leaves fewer than two "
        "points per worker");
  if (mirror_iterations < 1)
    throw ConfigError("fusion.mirror_iters must be >= 1");
  if (gp.hutchinson_probes < 1) throw ConfigError("gp.probes must be >= 1");
  if (use_synth() && synth.length < train_len + horizon)
    throw ConfigError("synth.length too short for the window plan");
  if (k_sweep.empty()) throw ConfigError("bench.k_sweep must not be empty");
  for (int k : k_sweep)
    if (k < 1) throw ConfigError("bench.k_sweep entries must be >= 1");
  if (bench_rounds < 1) throw ConfigError("bench.rounds must be >= 1");
  if (bench_inner_iterations < 1)
    throw ConfigError("bench.inner_iters must be >= 1");
}

bool RunConfig::operator==(const RunConfig& o) const {
  return csv_path == o.csv_path && impute == o.impute &&
         synth.weekly_amplitude == o.synth.weekly_amplitude &&
         synth.daily_amplitude == o.synth.daily_amplitude &&
         synth.deviation_scale == o.synth.deviation_scale &&
         synth.noise_scale == o.synth.noise_scale &&
         synth.length == o.synth.length && synth.seed == o.synth.seed &&
         kernel.lambda1 == o.kernel.lambda1 &&
         kernel.lambda2 == o.kernel.lambda2 &&
         kernel.active_terms == o.kernel.active_terms &&
         noise_policy == o.noise_policy && noise_value == o.noise_value &&
         gp.use_toeplitz == o.gp.use_toeplitz &&
         gp.trace_cutoff == o.gp.trace_cutoff &&
         gp.hutchinson_probes == o.gp.hutchinson_probes &&
         gp.max_iterations == o.gp.max_iterations &&
         gp.gradient_tolerance == o.gp.gradient_tolerance &&
         gp.jitter_scale == o.gp.jitter_scale &&
         admm.workers == o.admm.workers && admm.rho == o.admm.rho &&
         admm.eps_abs == o.admm.eps_abs && admm.eps_rel == o.admm.eps_rel &&
         admm.max_rounds == o.admm.max_rounds &&
         admm.partition == o.admm.partition && strategy == o.strategy &&
         validation_points == o.validation_points &&
         concatenate == o.concatenate &&
         mirror_iterations == o.mirror_iterations &&
         train_len == o.train_len && horizon == o.horizon &&
         repeats == o.repeats && step == o.step && out_dir == o.out_dir &&
         seed == o.seed && threads == o.threads && k_sweep == o.k_sweep &&
         bench_rounds == o.bench_rounds &&
         bench_inner_iterations == o.bench_inner_iterations &&
         bench_toeplitz_compare == o.bench_toeplitz_compare;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    assign(cfg, key, value);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "': expected key=value");
  assign(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = parse_config_text(buf.str());
  }
  for (const auto& ov : overrides) apply_override(cfg, ov);
  cfg.validate();
  return cfg;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string terms_to_string(unsigned terms) {
  std::string out;
  auto add = [&](const char* name) {
    if (!out.empty()) out += ",";
    out += name;
  };
  if (terms & kTermWeekly) add("weekly");
  if (terms & kTermDaily) add("daily");
  if (terms & kTermSe) add("se");
  return out;
}

}  // namespace

std::string canonical_text(const RunConfig& c) {
  std::ostringstream os;
  os << "data.csv = " << c.csv_path << "\n";
  os << "data.impute = "
     << (c.impute == ImputePolicy::kLinear ? "linear" : "none") << "\n";
  os << "synth.weekly_amplitude = " << fmt(c.synth.weekly_amplitude) << "\n";
  os << "synth.daily_amplitude = " << fmt(c.synth.daily_amplitude) << "\n";
  os << "synth.deviation_scale = " << fmt(c.synth.deviation_scale) << "\n";
  os << "synth.noise_scale = " << fmt(c.synth.noise_scale) << "\n";
  os << "synth.length = " << c.synth.length << "\n";
  os << "synth.seed = " << c.synth.seed << "\n";
  os << "kernel.lambda1 = " << fmt(c.kernel.lambda1) << "\n";
  os << "kernel.lambda2 = " << fmt(c.kernel.lambda2) << "\n";
  os << "kernel.terms = " << terms_to_string(c.kernel.active_terms) << "\n";
  os << "noise.policy = " << c.noise_policy << "\n";
  os << "noise.value = " << fmt(c.noise_value) << "\n";
  os << "gp.toeplitz = " << (c.gp.use_toeplitz ? "true" : "false") << "\n";
  os << "gp.trace_cutoff = " << c.gp.trace_cutoff << "\n";
  os << "gp.probes = " << c.gp.hutchinson_probes << "\n";
  os << "gp.max_iters = " << c.gp.max_iterations << "\n";
  os << "gp.grad_tol = " << fmt(c.gp.gradient_tolerance) << "\n";
  os << "gp.jitter_scale = " << fmt(c.gp.jitter_scale) << "\n";
  os << "admm.workers = " << c.admm.workers << "\n";
  os << "admm.rho = " << fmt(c.admm.rho) << "\n";
  os << "admm.eps_abs = " << fmt(c.admm.eps_abs) << "\n";
  os << "admm.eps_rel = " << fmt(c.admm.eps_rel) << "\n";
  os << "admm.max_rounds = " << c.admm.max_rounds << "\n";
  os << "admm.partition = "
     << (c.admm.partition == PartitionMode::kContiguous ? "contiguous"
         : c.admm.partition == PartitionMode::kStrided  ? "strided"
                                                        : "random")
     << "\n";
  os << "fusion.strategy = " << to_string(c.strategy) << "\n";
  os << "fusion.validation_points = " << c.validation_points << "\n";
  os << "fusion.concatenate = " << (c.concatenate ? "true" : "false") << "\n";
  os << "fusion.mirror_iters = " << c.mirror_iterations << "\n";
  os << "window.train_len = " << c.train_len << "\n";
  os << "window.horizon = " << c.horizon << "\n";
  os << "window.repeats = " << c.repeats << "\n";
  os << "window.step = " << c.step << "\n";
  os << "run.out = " << c.out_dir << "\n";
  os << "run.seed = " << c.seed << "\n";
  os << "run.threads = " << c.threads << "\n";
  os << "bench.k_sweep = ";
  for (std::size_t i = 0; i < c.k_sweep.size(); ++i)
    os << (i ? "," : "") << c.k_sweep[i];
  os << "\n";
  os << "bench.rounds = " << c.bench_rounds << "\n";
  os << "bench.inner_iters = " << c.bench_inner_iterations << "\n";
  os << "bench.toeplitz_compare = "
     << (c.bench_toeplitz_compare ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace sgp
