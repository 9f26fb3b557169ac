#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curaloop/choice_kernel.hpp"
#include "curaloop/measure_space.hpp"
#include "curaloop/montecarlo.hpp"
#include "curaloop/perturbation_lab.hpp"
#include "curaloop/preference_model.hpp"
#include "curaloop/retraining_dynamics.hpp"

namespace curaloop {

inline constexpr int kSchemaVersion = 1;

struct PerturbationBlock {
  enum class Mode { Adversarial, Random, Explicit };
  Mode mode = Mode::Random;
  double eta = 0.0;
  double delta = 0.0;
  std::vector<double> delta_r;
};

struct MonteCarloBlock {
  std::size_t n_per_round = 0;
  std::size_t steps = 0;
  std::size_t n_rounds = 0;
};

/// A validated experiment. Holds the raw inputs; the derived objects are
/// rebuilt on demand so that sweeps can edit alpha, K and eta in place.
struct ExperimentConfig {
  std::string name;
  SpacePtr space;
  std::vector<double> reward;
  NoiseModel noise = NoiseModel::zero();
  double alpha = 0.0;
  PoolSize pool = PoolSize::infinite();
  KernelChoice kernel = KernelChoice::exact();
  std::vector<double> p0;
  /// Absent when alpha == 0 and no reference was given.
  std::optional<std::vector<double>> p_ref;
  std::size_t t_max = 1;
  double stop_tol = 1e-12;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::optional<PerturbationBlock> perturbation;
  std::optional<MonteCarloBlock> montecarlo;

  [[nodiscard]] PreferenceModel model() const;
  [[nodiscard]] Density initial_density() const;
  [[nodiscard]] std::optional<Density> reference_density() const;
  [[nodiscard]] RegimeConfig regime_config() const;
  /// The configured reward perturbation, if any. Adversarial mode runs the
  /// explicit instability construction and may throw HypothesisViolated.
  [[nodiscard]] std::optional<PerturbationSpec> perturbation_spec() const;
  /// Whether p_ref and p0 are the same density.
  [[nodiscard]] bool reference_is_initial() const;
};

/// Reads and validates a config file. Throws ParseError (with line and
/// column), ValidationError (naming the offending field) or IoError.
ExperimentConfig load_experiment(const std::filesystem::path& path);
ExperimentConfig parse_experiment(std::string_view json_text, std::string_view source = "<config>");

/// Locale-independent shortest round-trip formatting; "inf" for +infinity.
std::string format_number(double value);

/// Writes content to path through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct RunOutputs {
  std::filesystem::path trajectory_csv;
  std::filesystem::path summary_json;
  std::optional<std::filesystem::path> stability_csv;
};

/// trajectory.csv, summary.json and (with a perturbation block)
/// stability.csv under out_dir.
RunOutputs run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// The CSV text run_experiment writes for a trajectory.
std::string trajectory_csv(const std::vector<TrajectoryRecord>& records);

enum class CheckStatus { Pass, Fail, Skipped };
std::string to_string(CheckStatus status);

struct VerifyCheck {
  std::string id;
  /// The claim being checked, in words.
  std::string claim;
  CheckStatus status = CheckStatus::Skipped;
  double measured = 0.0;
  double bound = 0.0;
  double slack = 0.0;
  /// Heuristic checks are reported but excluded from `overall`.
  bool heuristic = false;
  std::string note;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool overall = true;
  /// "superaligned", "not-superaligned" or "undetermined".
  std::string superalignment = "undetermined";

  [[nodiscard]] const VerifyCheck* find(std::string_view id) const;
};

VerifyReport verify_theorems(const ExperimentConfig& config);
std::string verify_report_json(const VerifyReport& report);

struct SweepGrid {
  std::vector<double> alphas;
  std::vector<PoolSize> pools;
  std::vector<double> etas;
};

struct SweepRow {
  std::size_t point = 0;
  double alpha = 0.0;
  PoolSize pool = PoolSize::infinite();
  std::optional<double> eta;
  std::string status;
  bool converged = false;
  std::size_t iterations = 0;
  double final_exp_reward = 0.0;
  double final_step_tv = 0.0;
  std::optional<MetricValue> tv_to_limit;
  std::optional<double> stability_sup;
};

/// One row per grid point (alpha x K x eta, empty axes take the template's
/// value). Failures become rows with the error code as status.
std::vector<SweepRow> sweep(const ExperimentConfig& base, const SweepGrid& grid,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct McCheckResult {
  /// Goodness of fit of one curation round at p0 against p0 * H.
  ChiSquareResult round_fit;
  /// d_TV between the sampled loop and the population loop, t = 0..T.
  std::vector<double> loop_tv;
  double tv_tolerance = 0.0;
  bool passed = false;
};

/// Needs a montecarlo block and a finite pool. Optionally writes
/// mc_check.csv under out_dir.
McCheckResult mc_check(const ExperimentConfig& config, double tv_tolerance = 0.01,
                       const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace curaloop
