#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "curaloop/error.hpp"
#include "curaloop/experiment.hpp"
#include "curaloop/rng.hpp"

namespace curaloop {
namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& field, const std::string& what) {
  fail(ErrorCode::ParseError, "field '" + field + "': " + what);
}

[[noreturn]] void invalid(const std::string& field, const std::string& what) {
  fail(ErrorCode::ValidationError, field + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad_field(where, "expected an object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (known.count(item.key()) == 0) {
      bad_field(where.empty() ? item.key() : where + "." + item.key(), "unknown key");
    }
  }
}

std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

const json& required(const json& obj, const std::string& where, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) bad_field(join(where, key), "missing");
  return *it;
}

double read_number(const json& value, const std::string& field) {
  if (!value.is_number()) bad_field(field, "expected a number");
  const double v = value.get<double>();
  if (!std::isfinite(v)) bad_field(field, "expected a finite number");
  return v;
}

std::uint64_t read_unsigned(const json& value, const std::string& field) {
  if (!value.is_number_integer() || (value.is_number_integer() && !value.is_number_unsigned() && value.get<std::int64_t>() < 0)) {
    bad_field(field, "expected a non-negative integer");
  }
  return value.get<std::uint64_t>();
}

std::vector<double> read_array(const json& value, const std::string& field) {
  if (!value.is_array()) bad_field(field, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) out.push_back(read_number(value[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

void require_size(const std::vector<double>& v, std::size_t n, const std::string& field) {
  if (v.size() != n) {
    invalid(field, "has " + std::to_string(v.size()) + " entries, the space has " + std::to_string(n));
  }
}

SpacePtr read_space(const json& root) {
  const json& node = required(root, "", "space");
  reject_unknown(node, "space", {"labels", "pi"});
  const json& labels_node = required(node, "space", "labels");
  if (!labels_node.is_array() || labels_node.empty()) bad_field("space.labels", "expected a non-empty array of strings");
  std::vector<std::string> labels;
  for (const auto& l : labels_node) {
    if (!l.is_string()) bad_field("space.labels", "expected strings");
    labels.push_back(l.get<std::string>());
  }
  std::vector<double> pi(labels.size(), 1.0);
  if (node.contains("pi")) {
    pi = read_array(node["pi"], "space.pi");
    require_size(pi, labels.size(), "space.pi");
  }
  try {
    return StateSpace::make(std::move(labels), std::move(pi));
  } catch (const Error& e) {
    invalid("space", e.what());
  }
}

NoiseModel read_noise(const json& root, std::size_t n) {
  if (!root.contains("noise")) return NoiseModel::zero();
  const json& node = root["noise"];
  if (!node.is_object()) bad_field("noise", "expected an object");
  const json& kind = required(node, "noise", "kind");
  if (!kind.is_string()) bad_field("noise.kind", "expected a string");
  const std::string k = kind.get<std::string>();
  try {
    if (k == "zero") {
      reject_unknown(node, "noise", {"kind"});
      return NoiseModel::zero();
    }
    if (k == "stationary_discrete") {
      reject_unknown(node, "noise", {"kind", "support", "probs"});
      auto support = read_array(required(node, "noise", "support"), "noise.support");
      auto probs = read_array(required(node, "noise", "probs"), "noise.probs");
      return NoiseModel::stationary(std::move(support), std::move(probs));
    }
    if (k == "direct_q") {
      reject_unknown(node, "noise", {"kind", "q"});
      auto q = read_array(required(node, "noise", "q"), "noise.q");
      require_size(q, n, "noise.q");
      return NoiseModel::direct_q(std::move(q));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError || e.code() == ErrorCode::ValidationError) throw;
    invalid("noise", e.what());
  }
  bad_field("noise.kind", "expected \"zero\", \"stationary_discrete\" or \"direct_q\"");
}

PerturbationBlock read_perturbation(const json& node, std::size_t n) {
  reject_unknown(node, "perturbation", {"mode", "eta", "delta", "delta_r"});
  const json& mode = required(node, "perturbation", "mode");
  if (!mode.is_string()) bad_field("perturbation.mode", "expected a string");
  const std::string m = mode.get<std::string>();
  PerturbationBlock block;
  if (m == "adversarial") {
    block.mode = PerturbationBlock::Mode::Adversarial;
    block.eta = read_number(required(node, "perturbation", "eta"), "perturbation.eta");
    block.delta = read_number(required(node, "perturbation", "delta"), "perturbation.delta");
    if (!(block.eta > 0.0)) invalid("perturbation.eta", "must be > 0");
    if (!(block.delta > 0.0)) invalid("perturbation.delta", "must be > 0");
    if (node.contains("delta_r")) invalid("perturbation.delta_r", "only allowed in explicit mode");
  } else if (m == "random") {
    block.mode = PerturbationBlock::Mode::Random;
    block.eta = read_number(required(node, "perturbation", "eta"), "perturbation.eta");
    if (!(block.eta >= 0.0)) invalid("perturbation.eta", "must be >= 0");
    if (node.contains("delta") || node.contains("delta_r")) {
      invalid("perturbation", "random mode takes only eta");
    }
  } else if (m == "explicit") {
    block.mode = PerturbationBlock::Mode::Explicit;
    block.delta_r = read_array(required(node, "perturbation", "delta_r"), "perturbation.delta_r");
    require_size(block.delta_r, n, "perturbation.delta_r");
    if (node.contains("eta") || node.contains("delta")) invalid("perturbation", "explicit mode takes only delta_r");
    for (double d : block.delta_r) block.eta = std::max(block.eta, std::abs(d));
  } else {
    bad_field("perturbation.mode", "expected \"adversarial\", \"random\" or \"explicit\"");
  }
  return block;
}

MonteCarloBlock read_montecarlo(const json& node) {
  reject_unknown(node, "montecarlo", {"n_per_round", "T", "n_rounds"});
  MonteCarloBlock block;
  block.n_per_round = read_unsigned(required(node, "montecarlo", "n_per_round"), "montecarlo.n_per_round");
  block.steps = read_unsigned(required(node, "montecarlo", "T"), "montecarlo.T");
  block.n_rounds = read_unsigned(required(node, "montecarlo", "n_rounds"), "montecarlo.n_rounds");
  if (block.n_per_round < 1) invalid("montecarlo.n_per_round", "must be >= 1");
  if (block.steps < 1) invalid("montecarlo.T", "must be >= 1");
  if (block.n_rounds < 1) invalid("montecarlo.n_rounds", "must be >= 1");
  return block;
}

std::vector<double> read_density(const json& value, const std::string& field, const SpacePtr& space) {
  std::vector<double> raw = read_array(value, field);
  require_size(raw, space->size(), field);
  try {
    (void)make_density(space, raw);
  } catch (const Error& e) {
    invalid(field, e.what());
  }
  return raw;
}

ExperimentConfig from_json(const json& root) {
  reject_unknown(root, "",
                 {"schema_version", "name", "space", "reward", "noise", "regime", "p0", "p_ref", "t_max", "stop_tol",
                  "seed", "workers", "perturbation", "montecarlo"});
  const json& version = required(root, "", "schema_version");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    bad_field("schema_version", "expected " + std::to_string(kSchemaVersion));
  }

  ExperimentConfig cfg;
  if (root.contains("name")) {
    if (!root["name"].is_string()) bad_field("name", "expected a string");
    cfg.name = root["name"].get<std::string>();
  }
  cfg.space = read_space(root);
  const std::size_t n = cfg.space->size();
  cfg.reward = read_array(required(root, "", "reward"), "reward");
  require_size(cfg.reward, n, "reward");
  cfg.noise = read_noise(root, n);

  const json& regime = required(root, "", "regime");
  reject_unknown(regime, "regime", {"alpha", "K", "kernel", "mc_samples"});
  cfg.alpha = read_number(required(regime, "regime", "alpha"), "regime.alpha");
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) invalid("regime.alpha", "alpha must be in [0,1)");
  const json& k = required(regime, "regime", "K");
  if (k.is_string() && k.get<std::string>() == "inf") {
    cfg.pool = PoolSize::infinite();
  } else if (k.is_number_integer()) {
    const auto value = k.get<std::int64_t>();
    if (value < 1 || value > 1'000'000) invalid("regime.K", "K must be in [1, 1000000] or \"inf\"");
    cfg.pool = PoolSize::finite(static_cast<int>(value));
  } else {
    bad_field("regime.K", "expected a positive integer or \"inf\"");
  }
  std::string kernel = "exact";
  if (regime.contains("kernel")) {
    if (!regime["kernel"].is_string()) bad_field("regime.kernel", "expected a string");
    kernel = regime["kernel"].get<std::string>();
  }
  if (kernel == "exact") {
    cfg.kernel = KernelChoice::exact();
    if (regime.contains("mc_samples")) invalid("regime.mc_samples", "only used with kernel \"mc\"");
  } else if (kernel == "mc") {
    const std::uint64_t samples = read_unsigned(required(regime, "regime", "mc_samples"), "regime.mc_samples");
    if (samples < 100) invalid("regime.mc_samples", "must be >= 100");
    if (cfg.pool.is_infinite()) invalid("regime.kernel", "the infinite-pool kernel has no Monte Carlo estimator");
    cfg.kernel = KernelChoice::monte_carlo(samples);
  } else {
    bad_field("regime.kernel", "expected \"exact\" or \"mc\"");
  }

  cfg.p0 = read_density(required(root, "", "p0"), "p0", cfg.space);
  if (root.contains("p_ref")) {
    const json& ref = root["p_ref"];
    if (ref.is_string()) {
      if (ref.get<std::string>() != "p0") bad_field("p_ref", "expected an array or \"p0\"");
      cfg.p_ref = cfg.p0;
    } else {
      cfg.p_ref = read_density(ref, "p_ref", cfg.space);
    }
  }
  if (cfg.alpha > 0.0 && !cfg.p_ref) invalid("p_ref", "required when alpha > 0");

  cfg.t_max = read_unsigned(required(root, "", "t_max"), "t_max");
  if (cfg.t_max < 1) invalid("t_max", "must be >= 1");
  if (root.contains("stop_tol")) {
    cfg.stop_tol = read_number(root["stop_tol"], "stop_tol");
    if (!(cfg.stop_tol > 0.0)) invalid("stop_tol", "must be > 0");
  }
  cfg.seed = read_unsigned(required(root, "", "seed"), "seed");
  if (root.contains("workers")) {
    const std::uint64_t w = read_unsigned(root["workers"], "workers");
    if (w < 1 || w > 1024) invalid("workers", "must be in [1,1024]");
    cfg.workers = static_cast<unsigned>(w);
  }
  if (root.contains("perturbation")) cfg.perturbation = read_perturbation(root["perturbation"], n);
  if (root.contains("montecarlo")) {
    cfg.montecarlo = read_montecarlo(root["montecarlo"]);
    if (cfg.pool.is_infinite()) invalid("montecarlo", "no finite-sample simulator for the infinite pool");
    if (!cfg.noise.is_stationary()) invalid("montecarlo", "finite-sample curation needs a noise law, not direct_q");
  }

  if (!cfg.noise.is_stationary() && cfg.pool.is_finite() && cfg.pool.k() > 1) {
    invalid("noise", "direct_q only supports K = 1 or the infinite pool");
  }

  try {
    (void)cfg.model();
    (void)cfg.regime_config();
  } catch (const Error& e) {
    invalid("config", e.what());
  }
  return cfg;
}

// 1-based line and column of a byte offset.
std::pair<std::size_t, std::size_t> locate(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

PreferenceModel ExperimentConfig::model() const { return build_preference(space, reward, noise); }

Density ExperimentConfig::initial_density() const { return make_density(space, p0); }

std::optional<Density> ExperimentConfig::reference_density() const {
  if (!p_ref) return std::nullopt;
  return make_density(space, *p_ref);
}

RegimeConfig ExperimentConfig::regime_config() const {
  return RegimeConfig::make(alpha, pool, reference_density(), kernel, seed, workers);
}

bool ExperimentConfig::reference_is_initial() const { return p_ref && *p_ref == p0; }

std::optional<PerturbationSpec> ExperimentConfig::perturbation_spec() const {
  if (!perturbation) return std::nullopt;
  switch (perturbation->mode) {
    case PerturbationBlock::Mode::Adversarial:
      return adversarial_delta_r(model(), initial_density(), perturbation->eta, perturbation->delta);
    case PerturbationBlock::Mode::Random:
      return random_perturbation(space->size(), perturbation->eta, mix64(seed ^ 0xd17a5eedull));
    case PerturbationBlock::Mode::Explicit:
      return PerturbationSpec(perturbation->delta_r);
  }
  return std::nullopt;
}

ExperimentConfig parse_experiment(std::string_view json_text, std::string_view source) {
  json root;
  try {
    root = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = locate(json_text, e.byte);
    std::ostringstream os;
    os << source << ":" << line << ":" << col << ": malformed JSON";
    fail(ErrorCode::ParseError, os.str());
  }
  try {
    return from_json(root);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError || e.code() == ErrorCode::ValidationError) {
      fail(e.code(), std::string(source) + ": " + e.message());
    }
    throw;
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string(source) + ": " + e.what());
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment(buf.str(), path.string());
}

}  // namespace curaloop
