#pragma once

// Seeded simulation sweeps: generate a crowd, split responses per user,
// train every method on growing prefixes and score it on held-out pairs.

#include "crowdmetric/estimation.hpp"
#include "crowdmetric/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace crowdmetric {

// Method names accepted in ExperimentConfig::schemes: the five constraint
// schemes, "single_user", "identity_metric", and "oracle" (the true
// parameters scored on the same test split).
struct ExperimentConfig {
  std::size_t d = 5;
  std::size_t r = 1;
  std::size_t n = 60;
  std::size_t K = 10;
  double beta = 4.0;
  std::string link = "logistic";  // logistic | probit
  std::string loss = "logistic";  // logistic | hinge | nll
  MetricMode metric_mode = MetricMode::low_rank;
  std::vector<std::string> schemes = {"frobenius_metric", "nuclear_full", "nuclear_metric", "nuclear_split",
                                      "psd_only",         "single_user",  "identity_metric", "oracle"};
  std::vector<std::size_t> pairs_per_user = {10, 50, 100, 200};
  std::size_t test_per_user = 300;
  std::size_t trials = 5;
  std::uint64_t master_seed = 1;
  std::size_t threads = 1;
  SolverConfig solver = {.step_scale = 50.0};

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
  LinkFunction make_link() const;
  Loss make_loss() const;
};

struct TrialRow {
  std::size_t trial = 0;
  std::string scheme;
  std::size_t pairs_per_user = 0;
  double test_accuracy = 0.0;
  std::optional<double> rel_metric_error;
  std::optional<double> rel_ideal_point_error;
  std::optional<double> rel_pseudo_error;
  double wall_time = 0.0;
};

CrowdModel generate_model(const ExperimentConfig& cfg, Rng& rng);

std::vector<TrialRow> run_trial(const ExperimentConfig& cfg, std::size_t trial);
// Rows sorted by (trial, scheme, pairs_per_user) whatever the thread count.
std::vector<TrialRow> run_experiment(const ExperimentConfig& cfg);

struct SummaryRow {
  std::string scheme;
  std::size_t pairs_per_user = 0;
  std::size_t trials = 0;
  double accuracy_mean = 0.0;
  double accuracy_se = 0.0;
  // Means and standard errors over the trials where the ratio is defined.
  std::optional<double> metric_mean, metric_se;
  std::optional<double> ideal_mean, ideal_se;
  std::optional<double> pseudo_mean, pseudo_se;
};

// Order-independent: rows are keyed by (scheme, pairs_per_user) and sorted.
std::vector<SummaryRow> summarize(std::vector<TrialRow> rows);
void write_trial_csv(std::ostream& os, const std::vector<TrialRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);

// Numerical checks of the recovery-theory identities on random instances.
// Each entry reports the worst observed value and whether it passed.
nlohmann::json validate_theory(const nlohmann::json& cfg);

}  // namespace crowdmetric
