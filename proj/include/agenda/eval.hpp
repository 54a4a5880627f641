#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agenda/classifier.hpp"
#include "agenda/dataset.hpp"
#include "agenda/model.hpp"
#include "agenda/selection.hpp"

namespace agenda {

enum class Strategy { incfbc, fbc, maxgap, entropy, random, pointest_fbc, pointest_logistic };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& s);

enum class StopReason { budget, confidence, exhausted };
std::string stop_reason_name(StopReason r);

struct QuestionRecord {
  int index = 0;  // 1-based
  ItemId item = -1;
  double rating = 0.0;
  double posterior_plus = 0.5;
  UserType predicted = UserType::plus;
};

struct SessionTrace {
  UserId user = 0;
  UserType true_type = UserType::plus;
  std::vector<QuestionRecord> records;
  StopReason stop = StopReason::exhausted;
};

struct SessionConfig {
  int budget = 100;
  /// Stop once the FBC posterior of the predicted type reaches tau; tau = 1
  /// disables confidence stopping even when the posterior rounds to 1.
  double tau = 0.99;
  /// PointEst only: stop on 1 - L_{j*} > tau instead of the FBC posterior.
  bool pointest_literal_stop = false;
};

/// Everything a strategy needs beyond the model.
struct StrategyContext {
  Strategy strategy = Strategy::incfbc;
  const std::vector<ItemId>* passive_order = nullptr;  // maxgap / entropy / random
  const LogisticModel* logistic = nullptr;             // pointest_logistic
};

/// Interrogates one user over their rated items (holdout already removed),
/// answering with the recorded ratings.
SessionTrace simulate_user(UserId user, UserType true_type,
                           const std::vector<std::pair<ItemId, double>>& candidates,
                           const ItemModel& model, const StrategyContext& ctx,
                           const SessionConfig& cfg);

struct RmseContribution {
  int question = 0;
  double sum_sq = 0.0;
  int count = 0;
};

/// Squared held-out errors of the ridge profile fitted after every
/// `stride`-th answer, using the type predicted at that point.
std::vector<RmseContribution> rmse_checkpoint(const SessionTrace& trace, const ItemModel& model,
                                              const std::vector<std::pair<ItemId, double>>& heldout,
                                              int stride);

struct ExperimentConfig {
  HyperParams hp;
  std::vector<Strategy> strategies{Strategy::incfbc, Strategy::maxgap, Strategy::entropy,
                                   Strategy::random};
  SessionConfig session;
  int holdout = 10;
  int rmse_stride = 10;
  int folds = 10;
  std::uint64_t seed = 1;
  int jobs = 1;
  LogisticConfig logistic;
  int max_test_users_per_fold = 0;  // 0 = all
  /// Restrict to these folds (empty = all).
  std::vector<int> only_folds;

  void validate() const;
};

struct ReportRow {
  std::string strategy;
  int fold = -1;  // -1: mean over folds
  int question = 0;
  std::optional<double> auc;
  double accuracy = 0.0;
  std::optional<double> rmse;
  int n_users = 0;
};

struct TimingRow {
  std::string mode;
  int a_size = 0;
  double mean_s = 0.0;
  double ci95_s = 0.0;
  double median_s = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<TimingRow> timing;
  std::uint64_t seed = 0;

  /// Row lookup; fold -1 selects the fold mean.
  const ReportRow* find(const std::string& strategy, int question, int fold = -1) const;
};

EvalReport run_experiment(const Dataset& data, const ExperimentConfig& cfg);

/// Evaluates a fixed model on every user of `users` (no cross-validation).
EvalReport evaluate_model(const Dataset& users, const ItemModel& model, const Dataset* train,
                          const ExperimentConfig& cfg);

/// Per-fold AUC of the FBC posterior given each test user's full history.
double full_history_auc(const ItemModel& model, const Dataset& test);
double full_history_auc(const LogisticModel& model, const Dataset& test);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path);

struct BenchConfig {
  int d = 20;
  int n_candidates = 200;
  std::vector<int> a_sizes{1, 5, 10, 20, 40, 60, 80, 100};
  int repetitions = 30;
  int warmup = 3;
  double lambda = 100.0;
  std::uint64_t seed = 1;
};

/// Mean per-question selection time for direct and incremental caches.
std::vector<TimingRow> bench_selection(const BenchConfig& cfg);

}  // namespace agenda
