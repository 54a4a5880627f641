#include "agenda/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "agenda/metrics.hpp"
#include "agenda/mf.hpp"

namespace agenda {

namespace {

const std::map<Strategy, std::string>& strategy_names() {
  static const std::map<Strategy, std::string> names{
      {Strategy::incfbc, "incfbc"},
      {Strategy::fbc, "fbc"},
      {Strategy::maxgap, "maxgap"},
      {Strategy::entropy, "entropy"},
      {Strategy::random, "random"},
      {Strategy::pointest_fbc, "pointest-fbc"},
      {Strategy::pointest_logistic, "pointest-logistic"},
  };
  return names;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  // splitmix64 finalizer over a simple combination
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL ^ (b + 0x632BE59BD9B4E019ULL) * 0xBF58476D1CE4E5B9ULL ^
                    (c + 0x85157AF5ULL) * 0x94D049BB133111EBULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool is_passive(Strategy s) {
  return s == Strategy::maxgap || s == Strategy::entropy || s == Strategy::random;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first error.
template <class Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string fmt_num(double x) { return fmt::format("{:.10g}", x); }

}  // namespace

std::string strategy_name(Strategy s) { return strategy_names().at(s); }

Strategy parse_strategy(const std::string& s) {
  for (const auto& [k, v] : strategy_names()) {
    if (v == s) return k;
  }
  throw Error(fmt::format("unknown strategy '{}'", s));
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::budget: return "budget";
    case StopReason::confidence: return "confidence";
    case StopReason::exhausted: return "exhausted";
  }
  return "?";
}

SessionTrace simulate_user(UserId user, UserType true_type,
                           const std::vector<std::pair<ItemId, double>>& candidates,
                           const ItemModel& model, const StrategyContext& ctx,
                           const SessionConfig& cfg) {
  if (candidates.empty()) throw Error(fmt::format("simulate: user {} has no usable candidates", user));
  if (cfg.budget < 1) throw Error("simulate: budget must be >= 1");

  std::map<ItemId, double> answer;
  std::vector<ItemId> items;
  for (const auto& [j, r] : candidates) {
    if (j < 0 || j >= model.n_items()) throw Error("model/dataset mismatch");
    if (!answer.emplace(j, r).second) throw Error(fmt::format("simulate: user {} rated item {} twice", user, j));
    items.push_back(j);
  }

  const UpdateMode mode = ctx.strategy == Strategy::fbc ? UpdateMode::direct : UpdateMode::incremental;
  SessionState state(model, items, mode);

  std::vector<ItemId> order;
  if (is_passive(ctx.strategy)) {
    if (!ctx.passive_order) throw Error("simulate: passive strategy without an order");
    for (const ItemId j : *ctx.passive_order) {
      if (answer.count(j)) order.push_back(j);
    }
  }

  PosteriorFn posterior_plus;
  if (ctx.strategy == Strategy::pointest_logistic) {
    if (!ctx.logistic) throw Error("simulate: pointest-logistic without a logistic model");
    posterior_plus = logistic_posterior_fn(*ctx.logistic);
  } else {
    posterior_plus = fbc_posterior_fn(model);
  }

  SessionTrace trace;
  trace.user = user;
  trace.true_type = true_type;
  trace.stop = StopReason::exhausted;
  std::size_t passive_pos = 0;

  while (!state.candidates().empty()) {
    if (static_cast<int>(trace.records.size()) >= cfg.budget) {
      trace.stop = StopReason::budget;
      break;
    }
    ItemId j = -1;
    switch (ctx.strategy) {
      case Strategy::incfbc:
      case Strategy::fbc:
        j = select_next_fbc(state);
        break;
      case Strategy::pointest_fbc:
      case Strategy::pointest_logistic: {
        const auto choice = select_next_pointest(state, posterior_plus);
        if (cfg.pointest_literal_stop && !trace.records.empty() && 1.0 - choice.score > cfg.tau) {
          trace.stop = StopReason::confidence;
          return trace;
        }
        j = choice.item;
        break;
      }
      default:
        j = order[passive_pos++];
        break;
    }
    state.extend(j, answer.at(j));

    QuestionRecord rec;
    rec.index = static_cast<int>(trace.records.size()) + 1;
    rec.item = j;
    rec.rating = answer.at(j);
    rec.posterior_plus = posterior_plus(state.query());
    rec.predicted = rec.posterior_plus >= 0.5 ? UserType::plus : UserType::minus;
    trace.records.push_back(rec);

    const bool literal = cfg.pointest_literal_stop && (ctx.strategy == Strategy::pointest_fbc ||
                                                       ctx.strategy == Strategy::pointest_logistic);
    if (!literal && cfg.tau < 1.0 && std::max(rec.posterior_plus, 1.0 - rec.posterior_plus) >= cfg.tau) {
      trace.stop = StopReason::confidence;
      break;
    }
  }
  return trace;
}

std::vector<RmseContribution> rmse_checkpoint(const SessionTrace& trace, const ItemModel& model,
                                              const std::vector<std::pair<ItemId, double>>& heldout,
                                              int stride) {
  if (stride < 1) throw Error("rmse: stride must be >= 1");
  std::vector<RmseContribution> out;
  if (heldout.empty()) return out;
  for (const auto& rec : trace.records) {
    for (const auto& [j, r] : heldout) {
      if (j == rec.item) throw Error(fmt::format("rmse: held-out item {} was asked", j));
    }
  }
  Query q;
  for (const auto& rec : trace.records) {
    q.push_back(rec.item, rec.rating);
    if (rec.index % stride != 0) continue;
    const Eigen::VectorXd u = ridge_profile(model, q, rec.predicted);
    RmseContribution c;
    c.question = rec.index;
    for (const auto& [j, r] : heldout) {
      const double e = predict_rating(model, u, j, rec.predicted) - r;
      c.sum_sq += e * e;
      ++c.count;
    }
    out.push_back(c);
  }
  return out;
}

void ExperimentConfig::validate() const {
  hp.validate();
  if (strategies.empty()) throw Error("experiment: empty strategy list");
  if (session.budget < 1) throw Error("experiment: budget must be >= 1");
  if (!(session.tau >= 0.5 && session.tau <= 1.0)) throw Error("experiment: tau must be in [0.5, 1]");
  if (holdout < 0) throw Error("experiment: holdout must be >= 0");
  if (rmse_stride < 1) throw Error("experiment: rmse stride must be >= 1");
  if (folds < 2) throw Error("experiment: folds must be >= 2");
  if (jobs < 1) throw Error("experiment: jobs must be >= 1");
  if (max_test_users_per_fold < 0) throw Error("experiment: max users must be >= 0");
}

const ReportRow* EvalReport::find(const std::string& strategy, int question, int fold) const {
  for (const auto& r : rows) {
    if (r.strategy == strategy && r.question == question && r.fold == fold) return &r;
  }
  return nullptr;
}

namespace {

struct UserResult {
  bool skipped = true;
  UserType true_type = UserType::plus;
  std::vector<SessionTrace> traces;                    // one per strategy
  std::vector<std::vector<RmseContribution>> rmse;     // one per strategy
};

/// Simulates every user of `test` under every strategy and returns per-fold rows.
std::vector<ReportRow> evaluate_fold(const Dataset& test, const ItemModel& model, const Dataset* train,
                                     const ExperimentConfig& cfg, int fold) {
  if (test.n_items != model.n_items()) throw Error("model/dataset mismatch");

  const bool needs_logistic =
      std::find(cfg.strategies.begin(), cfg.strategies.end(), Strategy::pointest_logistic) !=
      cfg.strategies.end();
  LogisticModel logistic;
  if (needs_logistic) {
    if (!train) throw Error("experiment: pointest-logistic needs training ratings");
    logistic = train_logistic(*train, cfg.logistic);
  }
  std::map<Strategy, std::vector<ItemId>> fixed_orders;
  for (const auto s : cfg.strategies) {
    if (s == Strategy::maxgap) fixed_orders[s] = passive_order(model, nullptr, PassiveKind::maxgap, 0);
    if (s == Strategy::entropy) fixed_orders[s] = passive_order(model, train, PassiveKind::entropy, 0);
  }

  const auto users = test.by_user();
  int n_users = test.n_users;
  if (cfg.max_test_users_per_fold > 0) n_users = std::min(n_users, cfg.max_test_users_per_fold);

  std::vector<UserResult> results(n_users);
  parallel_for(n_users, cfg.jobs, [&](int i) {
    auto ratings = users[i];
    if (ratings.empty()) return;
    std::vector<std::pair<ItemId, double>> heldout;
    if (cfg.holdout > 0 && static_cast<int>(ratings.size()) >= cfg.holdout + 1) {
      std::mt19937_64 rng(mix_seed(cfg.seed, fold + 1, i));
      std::shuffle(ratings.begin(), ratings.end(), rng);
      heldout.assign(ratings.end() - cfg.holdout, ratings.end());
      ratings.resize(ratings.size() - cfg.holdout);
      std::sort(ratings.begin(), ratings.end());
      std::sort(heldout.begin(), heldout.end());
    }

    UserResult& res = results[i];
    res.skipped = false;
    res.true_type = test.types[i];
    for (const auto s : cfg.strategies) {
      StrategyContext ctx;
      ctx.strategy = s;
      ctx.logistic = needs_logistic ? &logistic : nullptr;
      std::vector<ItemId> own_order;
      if (s == Strategy::random) {
        own_order = passive_order(model, nullptr, PassiveKind::random, mix_seed(cfg.seed, fold + 1, i) ^ 0x5bd1e995ULL);
        ctx.passive_order = &own_order;
      } else if (fixed_orders.count(s)) {
        ctx.passive_order = &fixed_orders.at(s);
      }
      res.traces.push_back(simulate_user(i, res.true_type, ratings, model, ctx, cfg.session));
      res.rmse.push_back(rmse_checkpoint(res.traces.back(), model, heldout, cfg.rmse_stride));
    }
  });

  std::vector<ReportRow> rows;
  for (std::size_t k = 0; k < cfg.strategies.size(); ++k) {
    int max_q = 0;
    for (const auto& r : results) {
      if (!r.skipped) max_q = std::max(max_q, static_cast<int>(r.traces[k].records.size()));
    }
    for (int q = 1; q <= max_q; ++q) {
      std::vector<double> scores;
      std::vector<UserType> labels, predicted;
      double sse = 0.0;
      int n_sq = 0;
      for (const auto& r : results) {
        if (r.skipped) continue;
        const auto& tr = r.traces[k];
        if (static_cast<int>(tr.records.size()) < q) continue;
        scores.push_back(tr.records[q - 1].posterior_plus);
        predicted.push_back(tr.records[q - 1].predicted);
        labels.push_back(r.true_type);
        for (const auto& c : r.rmse[k]) {
          if (c.question == q) {
            sse += c.sum_sq;
            n_sq += c.count;
          }
        }
      }
      ReportRow row;
      row.strategy = strategy_name(cfg.strategies[k]);
      row.fold = fold;
      row.question = q;
      row.n_users = static_cast<int>(labels.size());
      row.accuracy = accuracy(predicted, labels);
      const bool both = std::find(labels.begin(), labels.end(), UserType::plus) != labels.end() &&
                        std::find(labels.begin(), labels.end(), UserType::minus) != labels.end();
      if (both) row.auc = auc(scores, labels);
      if (n_sq > 0) row.rmse = std::sqrt(sse / n_sq);
      rows.push_back(row);
    }
  }
  return rows;
}

/// Appends fold-mean rows (fold = -1) for every (strategy, question).
void add_mean_rows(EvalReport& report, const ExperimentConfig& cfg) {
  std::vector<ReportRow> means;
  for (const auto s : cfg.strategies) {
    const std::string name = strategy_name(s);
    std::map<int, std::vector<const ReportRow*>> by_q;
    for (const auto& r : report.rows) {
      if (r.strategy == name && r.fold >= 0) by_q[r.question].push_back(&r);
    }
    for (const auto& [q, rs] : by_q) {
      ReportRow m;
      m.strategy = name;
      m.fold = -1;
      m.question = q;
      double auc_sum = 0, rmse_sum = 0, acc_sum = 0;
      int auc_n = 0, rmse_n = 0;
      for (const auto* r : rs) {
        acc_sum += r->accuracy;
        m.n_users += r->n_users;
        if (r->auc) auc_sum += *r->auc, ++auc_n;
        if (r->rmse) rmse_sum += *r->rmse, ++rmse_n;
      }
      m.accuracy = acc_sum / rs.size();
      if (auc_n) m.auc = auc_sum / auc_n;
      if (rmse_n) m.rmse = rmse_sum / rmse_n;
      means.push_back(m);
    }
  }
  report.rows.insert(report.rows.end(), means.begin(), means.end());
}

}  // namespace

EvalReport run_experiment(const Dataset& data, const ExperimentConfig& cfg) {
  cfg.validate();
  data.validate();
  const auto folds = split_folds(data, cfg.folds, cfg.seed);
  EvalReport report;
  report.seed = cfg.seed;
  for (int f = 0; f < cfg.folds; ++f) {
    if (!cfg.only_folds.empty() &&
        std::find(cfg.only_folds.begin(), cfg.only_folds.end(), f) == cfg.only_folds.end()) {
      continue;
    }
    const auto trained = train_mf(folds[f].train, cfg.hp);
    auto rows = evaluate_fold(folds[f].test, trained.model, &folds[f].train, cfg, f);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  add_mean_rows(report, cfg);
  return report;
}

EvalReport evaluate_model(const Dataset& users, const ItemModel& model, const Dataset* train,
                          const ExperimentConfig& cfg) {
  cfg.validate();
  EvalReport report;
  report.seed = cfg.seed;
  report.rows = evaluate_fold(users, model, train, cfg, 0);
  add_mean_rows(report, cfg);
  return report;
}

double full_history_auc(const ItemModel& model, const Dataset& test) {
  if (test.n_items != model.n_items()) throw Error("model/dataset mismatch");
  const auto users = test.by_user();
  std::vector<double> scores;
  std::vector<UserType> labels;
  for (int i = 0; i < test.n_users; ++i) {
    Query q;
    for (const auto& [j, r] : users[i]) q.push_back(j, r);
    scores.push_back(posterior(model, q).plus);
    labels.push_back(test.types[i]);
  }
  return auc(scores, labels);
}

double full_history_auc(const LogisticModel& model, const Dataset& test) {
  const auto users = test.by_user();
  std::vector<double> scores;
  std::vector<UserType> labels;
  for (int i = 0; i < test.n_users; ++i) {
    Query q;
    for (const auto& [j, r] : users[i]) q.push_back(j, r);
    scores.push_back(model.posterior(q));
    labels.push_back(test.types[i]);
  }
  return auc(scores, labels);
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << "strategy,fold,question,auc,accuracy,rmse,n_users\n";
  for (const auto& r : report.rows) {
    out << r.strategy << ',' << (r.fold < 0 ? std::string("mean") : std::to_string(r.fold)) << ','
        << r.question << ',' << (r.auc ? fmt_num(*r.auc) : "NA") << ',' << fmt_num(r.accuracy) << ','
        << (r.rmse ? fmt_num(*r.rmse) : "NA") << ',' << r.n_users << '\n';
  }
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << "mode,a_size,mean_s,ci95_s\n";
  for (const auto& r : rows) {
    out << r.mode << ',' << r.a_size << ',' << fmt::format("{:.6e}", r.mean_s) << ','
        << fmt::format("{:.6e}", r.ci95_s) << '\n';
  }
}

std::vector<TimingRow> bench_selection(const BenchConfig& cfg) {
  if (cfg.repetitions < 30) throw Error("bench: at least 30 repetitions are required");
  if (cfg.warmup < 1) throw Error("bench: at least one warm-up iteration is required");
  if (cfg.d < 1 || cfg.n_candidates < 1 || cfg.a_sizes.empty()) throw Error("bench: invalid configuration");
  const int a_max = *std::max_element(cfg.a_sizes.begin(), cfg.a_sizes.end());
  if (*std::min_element(cfg.a_sizes.begin(), cfg.a_sizes.end()) < 0) throw Error("bench: |A| must be >= 0");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ItemModel model;
  model.hp.d = cfg.d;
  model.hp.classifier_lambda = cfg.lambda;
  const int n_items = a_max + cfg.n_candidates;
  model.V.resize(n_items, cfg.d);
  model.Z.resize(n_items, 2);
  for (Eigen::Index k = 0; k < model.V.size(); ++k) model.V.data()[k] = normal(rng) / std::sqrt(cfg.d);
  for (Eigen::Index k = 0; k < model.Z.size(); ++k) model.Z.data()[k] = 3.5 + 0.5 * normal(rng);
  Eigen::VectorXd u(cfg.d);
  for (int k = 0; k < cfg.d; ++k) u(k) = normal(rng);

  std::vector<ItemId> all(n_items);
  std::iota(all.begin(), all.end(), 0);

  const double t_crit = boost::math::quantile(boost::math::students_t(cfg.repetitions - 1), 0.975);
  std::vector<TimingRow> rows;
  for (const UpdateMode mode : {UpdateMode::direct, UpdateMode::incremental}) {
    for (const int a : cfg.a_sizes) {
      std::vector<ItemId> cands(all.begin(), all.begin() + a);
      cands.insert(cands.end(), all.end() - cfg.n_candidates, all.end());
      SessionState s(model, cands, mode);
      for (int j = 0; j < a; ++j) s.extend(j, predict_rating(model, u, j, UserType::plus) + normal(rng));

      std::vector<double> times;
      volatile ItemId sink = 0;
      for (int rep = 0; rep < cfg.warmup + cfg.repetitions; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        sink = select_next_fbc(s);
        const auto t1 = std::chrono::steady_clock::now();
        if (rep >= cfg.warmup) times.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
      (void)sink;
      TimingRow row;
      row.mode = mode == UpdateMode::direct ? "direct" : "incremental";
      row.a_size = a;
      const double n = static_cast<double>(times.size());
      row.mean_s = std::accumulate(times.begin(), times.end(), 0.0) / n;
      double var = 0;
      for (const double t : times) var += (t - row.mean_s) * (t - row.mean_s);
      var /= n - 1;
      row.ci95_s = t_crit * std::sqrt(var / n);
      std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
      row.median_s = times[times.size() / 2];
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace agenda
