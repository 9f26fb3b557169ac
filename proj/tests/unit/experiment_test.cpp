#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "curaloop/error.hpp"
#include "curaloop/experiment.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace curaloop;
using testing_support::kNoEarlyStop;
using testing_support::fixture;
using testing_support::scratch_dir;
using testing_support::slurp;

namespace {

const char* kMinimal = R"({
  "schema_version": 1,
  "space": {"labels": ["a", "b"]},
  "reward": [0.6931471805599453, 0.0],
  "regime": {"alpha": 0.0, "K": "inf"},
  "p0": [0.5, 0.5],
  "t_max": 10,
  "seed": 1
})";

std::string with(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return text.replace(pos, from.size(), to);
}

Error parse_error(const std::string& text) {
  try {
    parse_experiment(text, "test.json");
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "config was accepted";
  return Error(ErrorCode::InvalidArgument, "");
}

std::vector<std::string> csv_column(const std::string& csv, const std::string& name) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
  const auto col = std::find(header.begin(), header.end(), name) - header.begin();
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    for (long i = 0; i <= col; ++i) {
      cell.clear();
      std::getline(ls, cell, ',');
    }
    out.push_back(cell);
  }
  return out;
}

std::vector<std::string> bundled_fixtures() {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(CURALOOP_EXPERIMENTS_DIR)) {
    if (entry.path().extension() == ".json") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

TEST(Config, MinimalLoads) {
  const ExperimentConfig cfg = parse_experiment(kMinimal);
  EXPECT_EQ(cfg.space->size(), 2u);
  EXPECT_TRUE(cfg.pool.is_infinite());
  EXPECT_EQ(cfg.regime_config().regime(), Regime::PureInfinite);
  EXPECT_EQ(cfg.workers, 1u);
  EXPECT_NO_THROW(load_experiment(fixture("two_state_regime2.json")));
}

TEST(Config, AlphaOutOfRange) {
  const Error e = parse_error(with(kMinimal, "\"alpha\": 0.0", "\"alpha\": 1.0"));
  EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  EXPECT_NE(e.message().find("alpha must be in [0,1)"), std::string::npos);
}

TEST(Config, MonteCarloNeedsFinitePool) {
  const Error e = parse_error(
      with(kMinimal, "\"seed\": 1", "\"seed\": 1, \"montecarlo\": {\"n_per_round\": 100, \"T\": 1, \"n_rounds\": 100}"));
  EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  EXPECT_NE(e.message().find("infinite pool"), std::string::npos);
}

TEST(Config, FieldErrors) {
  EXPECT_EQ(parse_error(with(kMinimal, "\"seed\": 1", "\"seed\": 1, \"colour\": 3")).code(), ErrorCode::ParseError);
  EXPECT_EQ(parse_error(with(kMinimal, "\"schema_version\": 1", "\"schema_version\": 2")).code(), ErrorCode::ParseError);
  EXPECT_EQ(parse_error(with(kMinimal, "\"alpha\": 0.0", "\"alpha\": 0.5")).code(), ErrorCode::ValidationError);
  EXPECT_EQ(parse_error(with(kMinimal, "\"p0\": [0.5, 0.5]", "\"p0\": [0.5]")).code(), ErrorCode::ValidationError);
  EXPECT_EQ(parse_error(with(kMinimal, "\"K\": \"inf\"", "\"K\": 0")).code(), ErrorCode::ValidationError);
  EXPECT_EQ(parse_error(with(kMinimal, "\"t_max\": 10", "\"t_max\": 0")).code(), ErrorCode::ValidationError);
  EXPECT_EQ(parse_error(with(kMinimal, "\"K\": \"inf\"", "\"K\": \"many\"")).code(), ErrorCode::ParseError);
}

TEST(Config, SyntaxErrorHasPosition) {
  const Error e = parse_error("{\n  \"schema_version\": 1,\n  oops\n}");
  EXPECT_EQ(e.code(), ErrorCode::ParseError);
  EXPECT_NE(e.message().find("test.json:3:"), std::string::npos) << e.message();
}

TEST(Config, MissingFileIsIoError) {
  try {
    load_experiment("/nonexistent/curaloop.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}

TEST(FormatNumber, RoundTrips) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(INFINITY), "inf");
  EXPECT_EQ(format_number(-INFINITY), "-inf");
  const double x = 1.6403882032022075;
  EXPECT_EQ(std::stod(format_number(x)), x);
}

TEST(RunExperiment, RegimeIVSummaryHasCStar) {
  const auto dir = scratch_dir("run_iv");
  const auto out = run_experiment(load_experiment(fixture("regime4_two_state.json")), dir);
  const std::string summary = slurp(out.summary_json);
  const auto pos = summary.find("\"c_star\": ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(summary.substr(pos + 10)), oracles::two_state_c_star(), 1e-9);
  EXPECT_TRUE(out.stability_csv.has_value());
}

TEST(RunExperiment, PureKlColumnStrictlyDecreasing) {
  const auto dir = scratch_dir("run_ii");
  const auto out = run_experiment(load_experiment(fixture("two_state_regime2.json")), dir);
  const auto kl = csv_column(slurp(out.trajectory_csv), "kl_star_to_pt");
  ASSERT_GT(kl.size(), 10u);
  double last = INFINITY;
  for (const auto& cell : kl) {
    const double v = std::stod(cell);
    if (last > 0.0) EXPECT_LT(v, last);
    last = v;
  }
  EXPECT_LT(last, 1e-8);
}

TEST(RunExperiment, AdversarialPerturbationSeparatesLimits) {
  const auto dir = scratch_dir("run_instability");
  const auto out = run_experiment(load_experiment(fixture("instability.json")), dir);
  const std::string summary = slurp(out.summary_json);
  const auto pos = summary.find("\"sup_d_tv\": ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(summary.substr(pos + 12)), 1.0, 1e-12);
  const std::string stability = slurp(*out.stability_csv);
  EXPECT_EQ(stability.rfind("t,d_tv_pair\n", 0), 0u);
  EXPECT_NE(stability.find("\ninf,1"), std::string::npos);
}

TEST(RunExperiment, ByteIdenticalAcrossWorkerCounts) {
  for (const auto& name : bundled_fixtures()) {
    ExperimentConfig cfg = load_experiment(fixture(name));
    cfg.workers = 1;
    const auto a = run_experiment(cfg, scratch_dir("det_a"));
    const std::string traj_a = slurp(a.trajectory_csv);
    const std::string sum_a = slurp(a.summary_json);
    cfg.workers = 4;
    const auto b = run_experiment(cfg, scratch_dir("det_b"));
    EXPECT_EQ(traj_a, slurp(b.trajectory_csv)) << name;
    EXPECT_EQ(sum_a, slurp(b.summary_json)) << name;
  }
}

TEST(Sweep, IterationsFallAsAlphaGrows) {
  ExperimentConfig base = load_experiment(fixture("regime3_two_state.json"));
  base.perturbation.reset();
  base.montecarlo.reset();
  base.t_max = 5000;
  SweepGrid grid;
  for (int i = 51; i <= 90; i += 3) grid.alphas.push_back(i / 100.0);
  const auto rows = sweep(base, grid);
  ASSERT_EQ(rows.size(), grid.alphas.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].status, "ok");
    EXPECT_TRUE(rows[i].converged);
    if (i > 0) EXPECT_LE(rows[i].iterations, rows[i - 1].iterations);
  }
  EXPECT_LT(rows.back().iterations, rows.front().iterations);
}

TEST(Sweep, SinglePointAndNotContractive) {
  const ExperimentConfig base = load_experiment(fixture("regime3_two_state.json"));
  EXPECT_EQ(sweep(base, SweepGrid{}).size(), 1u);
  const auto rows = sweep(base, SweepGrid{{0.4, 0.6}, {PoolSize::finite(2)}, {}});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].status, "NotContractive");
  EXPECT_EQ(rows[1].status, "ok");
}

TEST(Sweep, CsvWrittenAndWorkerIndependent) {
  ExperimentConfig base = load_experiment(fixture("regime3_two_state.json"));
  const SweepGrid grid{{0.6, 0.7}, {PoolSize::finite(2), PoolSize::finite(3)}, {0.01, 0.1}};
  base.workers = 1;
  const auto dir = scratch_dir("sweep");
  const std::string one = sweep_csv(sweep(base, grid, dir));
  base.workers = 3;
  EXPECT_EQ(one, sweep_csv(sweep(base, grid)));
  EXPECT_EQ(one, slurp(dir / "sweep.csv"));
}

TEST(McCheck, RegimeIIIFixture) {
  const auto result = mc_check(load_experiment(fixture("regime3_two_state.json")));
  EXPECT_FALSE(result.round_fit.reject_at_1pct);
  ASSERT_EQ(result.loop_tv.size(), 4u);
  for (double tv : result.loop_tv) EXPECT_LT(tv, 0.01);
  EXPECT_TRUE(result.passed);
}

class VerifyFixture : public ::testing::TestWithParam<std::string> {};

TEST_P(VerifyFixture, OnlyTheDocumentedBoundFails) {
  const VerifyReport report = verify_theorems(load_experiment(fixture(GetParam())));
  for (const auto& c : report.checks) {
    if (c.status != CheckStatus::Fail) continue;
    // The stated reward lower bounds are false in general; see
    // RewardBound.CounterexampleToStatedBound.
    EXPECT_TRUE(c.id == "dynamics.reward_lower_bound_finite" || c.id == "dynamics.reward_lower_bound_infinite")
        << GetParam() << ": " << c.id << " " << c.note;
  }
  EXPECT_FALSE(report.checks.empty());
}

INSTANTIATE_TEST_SUITE_P(Bundled, VerifyFixture, ::testing::ValuesIn(bundled_fixtures()),
                         [](const auto& info) { return info.param.substr(0, info.param.size() - 5); });

TEST(Verify, TwoStateRegimeIIPasses) {
  const VerifyReport report = verify_theorems(load_experiment(fixture("two_state_regime2.json")));
  EXPECT_TRUE(report.overall);
  EXPECT_EQ(report.find("dynamics.closed_form")->status, CheckStatus::Pass);
}

TEST(Verify, InstabilityIsNotSuperaligned) {
  const VerifyReport report = verify_theorems(load_experiment(fixture("instability.json")));
  EXPECT_EQ(report.superalignment, "not-superaligned");
  const VerifyCheck* c = report.find("perturbation.instability");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->status, CheckStatus::Pass);
  EXPECT_NEAR(c->measured, 1.0, 1e-12);
}

TEST(Verify, BoundaryContractionIsSkipped) {
  const VerifyReport report = verify_theorems(load_experiment(fixture("regime3_boundary.json")));
  for (const char* id : {"fixed_point.operator_contraction", "fixed_point.geometric_envelope",
                         "fixed_point.start_independence"}) {
    const VerifyCheck* c = report.find(id);
    ASSERT_NE(c, nullptr) << id;
    EXPECT_EQ(c->status, CheckStatus::Skipped);
    EXPECT_NE(c->note.find("boundary"), std::string::npos);
  }
}

TEST(Verify, ReportJsonIsDeterministic) {
  const ExperimentConfig cfg = load_experiment(fixture("regime3_noisy.json"));
  EXPECT_EQ(verify_report_json(verify_theorems(cfg)), verify_report_json(verify_theorems(cfg)));
}

TEST(Verify, EveryCheckRunsOnSomeFixture) {
  std::ifstream manifest(std::filesystem::path(CURALOOP_TESTS_DIR) / "data" / "verify_checks.txt");
  ASSERT_TRUE(manifest.good());
  std::set<std::string> listed;
  for (std::string line; std::getline(manifest, line);) {
    if (!line.empty() && line[0] != '#') listed.insert(line);
  }
  std::set<std::string> seen;
  std::set<std::string> exercised;
  for (const auto& name : bundled_fixtures()) {
    for (const auto& c : verify_theorems(load_experiment(fixture(name))).checks) {
      seen.insert(c.id);
      if (c.status != CheckStatus::Skipped) exercised.insert(c.id);
    }
  }
  EXPECT_EQ(seen, listed);
  for (const auto& id : listed) EXPECT_TRUE(exercised.count(id)) << id << " is skipped on every fixture";
}

// Two states, Q = (2, 1), alpha = 0.5, p_ref = p0 uniform, infinite pool.
// Exact rationals: p1 = (7/12, 5/12), C1 = 19/12; p2 = (47/76, 29/76),
// C2 = 123/76. The stated bound at t = 2 is C0 + (1 - 0.25) / 0.5 * (C1 - C0)
// = 1.625 > C2.
TEST(RewardBound, CounterexampleToStatedBound) {
  const ExperimentConfig cfg = load_experiment(fixture("regime4_two_state.json"));
  const auto recs = run_trajectory(cfg.initial_density(), cfg.regime_config(), cfg.model(), 5, kNoEarlyStop);
  EXPECT_NEAR(recs[1].exp_reward, 19.0 / 12.0, 1e-14);
  EXPECT_NEAR(recs[2].exp_reward, 123.0 / 76.0, 1e-14);
  const double alpha = 0.5;
  const double d1 = recs[1].exp_reward - recs[0].exp_reward;
  const double stated = recs[0].exp_reward + (1 - std::pow(1 - alpha, 2)) / alpha * d1;
  EXPECT_NEAR(stated, 1.625, 1e-14);
  EXPECT_LT(recs[2].exp_reward, stated - 6e-3);

  // What does hold: strict growth, and the floor C0 + (1 - alpha)^(t-1) D1.
  for (std::size_t t = 1; t < recs.size(); ++t) {
    EXPECT_GT(recs[t].exp_reward, recs[t - 1].exp_reward);
    EXPECT_GE(recs[t].exp_reward, recs[0].exp_reward + std::pow(1 - alpha, double(t - 1)) * d1 - 1e-15);
  }
}
