#include <doctest.h>

#include <map>
#include <set>

#include <fstream>
#include <sstream>

#include "agenda/eval.hpp"
#include "agenda/synthetic.hpp"
#include "helpers.hpp"

using namespace agenda;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticData strong_bias(int n_users, int n_items, std::uint64_t seed, double sigma_0 = 0.0) {
  SyntheticConfig c;
  c.n_users = n_users;
  c.n_items = n_items;
  c.d = 3;
  c.sigma_0 = sigma_0;
  c.bias_scale = 2.0;
  c.seed = seed;
  return generate_synthetic(c);
}

ExperimentConfig small_experiment() {
  ExperimentConfig cfg;
  cfg.hp.d = 3;
  cfg.hp.epochs = 10;
  cfg.hp.classifier_lambda = 1;
  cfg.folds = 3;
  cfg.session.budget = 15;
  cfg.session.tau = 1.0;
  cfg.holdout = 5;
  cfg.rmse_stride = 5;
  return cfg;
}

}  // namespace

TEST_CASE("session stops on exhaustion, budget and confidence") {
  const auto m = testutil::random_model(10, 2, 1.0, 1);
  const std::vector<std::pair<ItemId, double>> three{{1, 4.0}, {4, 2.0}, {7, 5.0}};
  StrategyContext ctx;
  SessionConfig cfg;
  cfg.tau = 1.0;
  auto t = simulate_user(0, UserType::plus, three, m, ctx, cfg);
  CHECK(t.records.size() == 3);
  CHECK(t.stop == StopReason::exhausted);
  for (std::size_t k = 0; k < t.records.size(); ++k) CHECK(t.records[k].index == static_cast<int>(k) + 1);

  cfg.budget = 2;
  t = simulate_user(0, UserType::plus, three, m, ctx, cfg);
  CHECK(t.records.size() == 2);
  CHECK(t.stop == StopReason::budget);

  cfg.budget = 100;
  cfg.tau = 0.5;
  t = simulate_user(0, UserType::plus, three, m, ctx, cfg);
  CHECK(t.records.size() == 1);
  CHECK(t.stop == StopReason::confidence);

  CHECK_THROWS_AS(simulate_user(0, UserType::plus, {}, m, ctx, cfg), Error);
  CHECK_THROWS_WITH_AS(simulate_user(0, UserType::plus, {{12, 1.0}}, m, ctx, cfg),
                       doctest::Contains("model/dataset mismatch"), Error);
}

TEST_CASE("maxgap asks the most discriminative item first") {
  auto g = strong_bias(1, 20, 3);
  const int big = 13;
  g.truth.Z(big, 0) += 40;
  g.truth.Z(big, 1) -= 40;
  const auto t0 = g.dataset.types[0];
  std::vector<std::pair<ItemId, double>> cands;
  for (const auto& r : g.dataset.ratings) {
    const double bump = r.item == big ? (t0 == UserType::plus ? 40.0 : -40.0) : 0.0;
    cands.emplace_back(r.item, r.rating + bump);
  }
  const auto order = passive_order(g.truth, nullptr, PassiveKind::maxgap, 0);
  StrategyContext ctx;
  ctx.strategy = Strategy::maxgap;
  ctx.passive_order = &order;
  SessionConfig cfg;
  cfg.tau = 1.0;
  cfg.budget = 1;
  const auto t = simulate_user(0, t0, cands, g.truth, ctx, cfg);
  CHECK(t.records[0].item == big);
  CHECK(t.records[0].predicted == t0);
}

TEST_CASE("rmse checkpoints") {
  const auto g = strong_bias(1, 30, 8);
  auto cands = g.dataset.by_user()[0];
  const std::vector<std::pair<ItemId, double>> held(cands.end() - 5, cands.end());
  cands.resize(cands.size() - 5);

  SessionTrace exact;
  for (int k = 0; k < 20; ++k) {
    exact.records.push_back({k + 1, cands[k].first, cands[k].second, 0.5, g.dataset.types[0]});
  }
  ItemModel m = g.truth;
  m.hp.classifier_lambda = 1e-8;
  for (const auto& c : rmse_checkpoint(exact, m, held, 10)) {
    CHECK(c.count == 5);
    CHECK(std::sqrt(c.sum_sq / c.count) < 1e-5);
  }
  CHECK(rmse_checkpoint(exact, m, held, 10).size() == 2);

  // zero profiles and zero biases predict 0
  ItemModel null = g.truth;
  null.V.setZero();
  null.Z.setZero();
  const auto c = rmse_checkpoint(exact, null, held, 20).at(0);
  double ss = 0;
  for (const auto& [j, r] : held) ss += r * r;
  CHECK(c.sum_sq == doctest::Approx(ss));

  auto leaky = held;
  leaky[0].first = cands[3].first;
  CHECK_THROWS_AS(rmse_checkpoint(exact, m, leaky, 10), Error);
}

TEST_CASE("noiseless user with every question asked predicts held-out ratings") {
  const auto g = strong_bias(1, 60, 19);
  auto all = g.dataset.by_user()[0];
  const std::vector<std::pair<ItemId, double>> held(all.end() - 10, all.end());
  all.resize(all.size() - 10);
  ItemModel m = g.truth;
  m.hp.classifier_lambda = 0.01;
  StrategyContext ctx;
  SessionConfig cfg;
  cfg.tau = 1.0;
  const auto t = simulate_user(0, g.dataset.types[0], all, m, ctx, cfg);
  const auto cps = rmse_checkpoint(t, m, held, 10);
  REQUIRE(!cps.empty());
  CHECK(std::sqrt(cps.back().sum_sq / cps.back().count) < 0.1);
}

TEST_CASE("experiment report invariants") {
  const auto g = strong_bias(60, 30, 5, 0.3);
  auto cfg = small_experiment();
  cfg.strategies = {Strategy::random, Strategy::random, Strategy::incfbc, Strategy::maxgap, Strategy::entropy,
                    Strategy::fbc, Strategy::pointest_fbc, Strategy::pointest_logistic};
  const auto rep = run_experiment(g.dataset, cfg);

  for (int q = 1; q <= 15; ++q) {
    for (int f = -1; f < 3; ++f) {
      const auto* a = rep.find("random", q, f);
      REQUIRE(a != nullptr);
      int seen = 0;
      for (const auto& r : rep.rows) {
        if (r.strategy != "random" || r.question != q || r.fold != f) continue;
        ++seen;
        CHECK(r.auc == a->auc);
        CHECK(r.accuracy == a->accuracy);
        CHECK(r.rmse == a->rmse);
      }
      CHECK(seen == 2);
    }
    // incremental and direct caches give the same sessions
    CHECK(rep.find("incfbc", q)->auc == rep.find("fbc", q)->auc);
  }

  for (const auto& r : rep.rows) {
    if (r.auc) CHECK((*r.auc >= 0 && *r.auc <= 1));
    if (r.rmse) CHECK(*r.rmse >= 0);
    CHECK((r.question % cfg.rmse_stride == 0) == r.rmse.has_value());
    const auto* next = rep.find(r.strategy, r.question + 1, r.fold);
    if (next) CHECK(next->n_users <= r.n_users);
  }
  CHECK(rep.find("incfbc", 5)->auc.value() >= rep.find("random", 5)->auc.value());
}

TEST_CASE("posterior confidence and holdout hygiene in sessions") {
  const auto g = strong_bias(10, 30, 6, 0.5);
  const auto users = g.dataset.by_user();
  for (int i = 0; i < 10; ++i) {
    auto cands = users[i];
    cands.resize(cands.size() - 10);
    StrategyContext ctx;
    SessionConfig cfg;
    cfg.tau = 1.0;
    const auto t = simulate_user(i, g.dataset.types[i], cands, g.truth, ctx, cfg);
    std::set<ItemId> asked;
    for (const auto& r : t.records) {
      CHECK(std::max(r.posterior_plus, 1 - r.posterior_plus) >= 0.5);
      CHECK(asked.insert(r.item).second);
      for (std::size_t k = cands.size(); k < users[i].size(); ++k) CHECK(r.item != users[i][k].first);
    }
  }
}

TEST_CASE("report CSV is byte-identical across runs and worker counts") {
  const auto g = strong_bias(40, 25, 7, 0.3);
  auto cfg = small_experiment();
  cfg.strategies = {Strategy::incfbc, Strategy::random};
  const auto dir = testutil::temp_dir("eval_det");
  write_report_csv(run_experiment(g.dataset, cfg), dir / "a.csv");
  cfg.jobs = 4;
  write_report_csv(run_experiment(g.dataset, cfg), dir / "b.csv");
  const auto a = slurp(dir / "a.csv");
  CHECK(a == slurp(dir / "b.csv"));
  CHECK(a.rfind("strategy,fold,question,auc,accuracy,rmse,n_users\n", 0) == 0);
  CHECK(a.find(",NA,") != std::string::npos);
}

TEST_CASE("strategy names round trip") {
  for (const auto s : {Strategy::incfbc, Strategy::fbc, Strategy::maxgap, Strategy::entropy, Strategy::random,
                       Strategy::pointest_fbc, Strategy::pointest_logistic}) {
    CHECK(parse_strategy(strategy_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("greedy"), Error);
}

TEST_CASE("full-history auc on separable synthetic data") {
  const auto g = strong_bias(80, 40, 9, 0.2);
  CHECK(full_history_auc(g.truth, g.dataset) > 0.95);
}

TEST_CASE("bench rows") {
  BenchConfig cfg;
  cfg.d = 5;
  cfg.n_candidates = 20;
  cfg.a_sizes = {1, 10};
  const auto rows = bench_selection(cfg);
  CHECK(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.mean_s > 0);
    CHECK(r.ci95_s >= 0);
  }
  cfg.repetitions = 10;
  CHECK_THROWS_AS(bench_selection(cfg), Error);
  const auto dir = testutil::temp_dir("bench_csv");
  write_timing_csv(rows, dir / "t.csv");
  CHECK(slurp(dir / "t.csv").rfind("mode,a_size,mean_s,ci95_s\n", 0) == 0);
}

TEST_CASE("selection timing shape") {
  BenchConfig cfg;
  cfg.d = 20;
  cfg.n_candidates = 60;
  cfg.a_sizes = {1, 20, 40, 80};
  const auto rows = bench_selection(cfg);
  std::map<std::string, std::vector<TimingRow>> by_mode;
  for (const auto& r : rows) by_mode[r.mode].push_back(r);
  const auto& inc = by_mode.at("incremental");
  const auto& dir = by_mode.at("direct");
  REQUIRE(inc.size() == 4);
  REQUIRE(dir.size() == 4);

  const double ratio = dir[0].mean_s / inc[0].mean_s;
  CHECK(ratio > 0.1);
  CHECK(ratio < 10.0);
  for (const auto* mode : {&inc, &dir}) {
    for (std::size_t k = 2; k < mode->size(); ++k) CHECK((*mode)[k].median_s >= (*mode)[k - 1].median_s);
  }
  auto slope = [](const std::vector<TimingRow>& r) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 1; k < r.size(); ++k) {
      const double x = std::log(r[k].a_size), y = std::log(r[k].median_s);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double n = static_cast<double>(r.size() - 1);
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  CHECK(slope(inc) <= 2.3);
  CHECK(slope(dir) > slope(inc));
}
