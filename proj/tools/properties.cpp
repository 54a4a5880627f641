#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "agenda/eval.hpp"
#include "agenda/selection.hpp"
#include "agenda/synthetic.hpp"

namespace agenda::props {
namespace {

ItemModel random_model(std::mt19937_64& rng, int n_items, int d, double lambda, double gap_scale) {
  std::normal_distribution<double> n01(0.0, 1.0);
  ItemModel m;
  m.hp.d = d;
  m.hp.classifier_lambda = lambda;
  m.V.resize(n_items, d);
  m.Z.resize(n_items, 2);
  for (Eigen::Index k = 0; k < m.V.size(); ++k) m.V.data()[k] = n01(rng);
  for (int j = 0; j < n_items; ++j) {
    const double mid = 3.0 + n01(rng);
    const double gap = gap_scale * n01(rng);
    m.Z(j, 0) = mid + gap / 2;
    m.Z(j, 1) = mid - gap / 2;
  }
  return m;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

std::vector<ItemId> iota_items(int n) {
  std::vector<ItemId> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

PropertyResult incremental_vs_direct(int sessions, std::uint64_t seed) {
  PropertyResult res{"incremental caches equal direct recomputation; identical selections", true, ""};
  double worst = 0.0;
  int mismatched = 0, steps = 0;
  for (int s = 0; s < sessions; ++s) {
    std::mt19937_64 rng(seed * 1000003 + s);
    const int d = std::uniform_int_distribution<int>(1, 20)(rng);
    const int k = std::uniform_int_distribution<int>(1, 60)(rng);
    const double lambda = log_uniform(rng, 0.1, 200.0);
    const auto m = random_model(rng, k + 15, d, lambda, 1.5);
    std::uniform_real_distribution<double> rating(1.0, 5.0);
    std::vector<double> answers(m.n_items());
    for (auto& a : answers) a = rating(rng);

    SessionState inc(m, iota_items(m.n_items()), UpdateMode::incremental);
    SessionState dir(m, iota_items(m.n_items()), UpdateMode::direct);
    for (int step = 0; step < k; ++step) {
      const ItemId ji = select_next_fbc(inc);
      const ItemId jd = select_next_fbc(dir);
      ++steps;
      if (ji != jd) ++mismatched;
      inc.extend(ji, answers[ji]);
      dir.extend(ji, answers[ji]);
      worst = std::max({worst, cache_deviation(inc), max_abs_diff(inc.M(), dir.M()),
                        max_abs_diff(inc.sigma_inv(), dir.sigma_inv()), std::abs(inc.log_det() - dir.log_det())});
    }
  }
  res.passed = worst <= 1e-8 && mismatched == 0;
  res.detail = fmt::format("{} sessions, {} steps, max deviation {:.3e}, selection mismatches {}", sessions, steps,
                           worst, mismatched);
  return res;
}

PropertyResult closed_form_vs_quadrature(int instances, std::uint64_t seed) {
  PropertyResult res{"closed-form risk equals quadrature oracle (rel 1e-6)", true, ""};
  double worst = 0.0;
  int pos = 0, neg = 0, zero_gap = 0;
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(seed * 7919 + i);
    const int d = std::uniform_int_distribution<int>(1, 10)(rng);
    const int k = std::uniform_int_distribution<int>(0, 20)(rng);
    auto m = random_model(rng, k + 1, d, log_uniform(rng, 0.1, 100.0), 1.5);
    if (i % 5 == 4) m.hp.sigma_0 = log_uniform(rng, 0.5, 2.0);
    const ItemId j = k;
    if (i % 4 == 0) {
      m.Z(j, 1) = m.Z(j, 0);
      if (i % 8 == 0) m.Z.col(1) = m.Z.col(0);
      ++zero_gap;
    }
    SessionState s(m, iota_items(k + 1), UpdateMode::incremental);
    std::uniform_real_distribution<double> rating(1.0, 5.0);
    for (int a = 0; a < k; ++a) s.extend(a, rating(rng));
    const auto t = alpha_terms(s, j);
    if (t.a3 > 0) ++pos;
    if (t.a3 < 0) ++neg;
    const double lc = risk_closed_form(s, j).log_value;
    const double lq = risk_quadrature(s, j).log_value;
    worst = std::max(worst, std::abs(std::expm1(lc - lq)));
  }
  res.passed = worst <= 1e-6 && pos > 0 && neg > 0 && zero_gap > 0;
  res.detail = fmt::format("{} instances (alpha3 > 0: {}, < 0: {}, zero gap: {}), max rel error {:.3e}", instances,
                           pos, neg, zero_gap, worst);
  return res;
}

PropertyResult classify_matches_posterior(int queries, std::uint64_t seed) {
  PropertyResult res{"classify equals argmax posterior; normalization 1e-12", true, ""};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int disagreements = 0;
  double worst_norm = 0.0;
  ItemModel m;
  for (int q = 0; q < queries; ++q) {
    if (q % 100 == 0) {
      const int d = std::uniform_int_distribution<int>(1, 20)(rng);
      m = random_model(rng, 80, d, log_uniform(rng, 0.1, 200.0), 2.0);
      m.hp.sigma_0 = log_uniform(rng, 0.3, 3.0);
      m.hp.prior_plus = q % 300 == 0 ? 0.5 : 0.02 + 0.96 * unit(rng);
    }
    auto items = iota_items(m.n_items());
    std::shuffle(items.begin(), items.end(), rng);
    const int k = std::uniform_int_distribution<int>(1, 40)(rng);
    Query query;
    for (int a = 0; a < k; ++a) query.push_back(items[a], 1.0 + 4.0 * unit(rng));
    const auto p = posterior(m, query);
    worst_norm = std::max(worst_norm, std::abs(p.plus + p.minus - 1.0));
    if (classify(m, query) != p.argmax(m.hp.prior_plus)) ++disagreements;
  }
  res.passed = disagreements == 0 && worst_norm <= 1e-12;
  res.detail = fmt::format("{} queries, disagreements {}, max |p+ + p- - 1| {:.3e}", queries, disagreements,
                           worst_norm);
  return res;
}

PropertyResult synthetic_recovery(int users, std::uint64_t seed) {
  PropertyResult res{"noiseless strong-bias synthetic: IncFBC accuracy >= 95% within 5 questions", true, ""};
  SyntheticConfig c;
  c.n_users = users;
  c.n_items = 50;
  c.d = 5;
  c.sigma_0 = 0.0;
  c.bias_scale = 2.0;
  c.seed = seed;
  const auto g = generate_synthetic(c);
  const auto by_user = g.dataset.by_user();
  StrategyContext ctx;
  SessionConfig cfg;
  cfg.budget = 5;
  cfg.tau = 1.0;
  int correct = 0;
  for (int i = 0; i < users; ++i) {
    const auto t = simulate_user(i, g.dataset.types[i], by_user[i], g.truth, ctx, cfg);
    if (t.records.back().predicted == g.dataset.types[i]) ++correct;
  }
  const double acc = static_cast<double>(correct) / users;
  res.passed = acc >= 0.95;
  res.detail = fmt::format("{} users, lambda {}, accuracy at question 5: {:.3f}", users,
                           g.truth.hp.classifier_lambda, acc);
  return res;
}

PropertyResult shift_covariance(int users, std::uint64_t seed) {
  PropertyResult res{"global rating shift leaves classifications and selections unchanged", true, ""};
  SyntheticConfig c;
  c.n_users = users;
  c.n_items = 40;
  c.d = 4;
  c.sigma_0 = 0.5;
  c.seed = seed;
  const auto g = generate_synthetic(c);
  const double shift = 7.25;
  ItemModel shifted = g.truth;
  shifted.Z.array() += shift;
  const auto by_user = g.dataset.by_user();
  SessionConfig cfg;
  cfg.budget = 15;
  cfg.tau = 1.0;
  int differing = 0;
  for (int i = 0; i < users; ++i) {
    auto moved = by_user[i];
    for (auto& [j, r] : moved) r += shift;
    for (const auto s : {Strategy::incfbc, Strategy::pointest_fbc}) {
      StrategyContext ctx;
      ctx.strategy = s;
      const auto a = simulate_user(i, g.dataset.types[i], by_user[i], g.truth, ctx, cfg);
      const auto b = simulate_user(i, g.dataset.types[i], moved, shifted, ctx, cfg);
      bool same = a.records.size() == b.records.size();
      for (std::size_t k = 0; same && k < a.records.size(); ++k) {
        same = a.records[k].item == b.records[k].item && a.records[k].predicted == b.records[k].predicted;
      }
      if (!same) ++differing;
    }
  }
  res.passed = differing == 0;
  res.detail = fmt::format("{} users x 2 strategies, shift {}, differing sessions {}", users, shift, differing);
  return res;
}

PropertyResult timing_speedup(int d, int a_size, double required_speedup, std::uint64_t seed) {
  PropertyResult res{fmt::format("incremental selection >= {}x faster than direct at |A| = {}, d = {}",
                                 required_speedup, a_size, d),
                     true, ""};
  BenchConfig cfg;
  cfg.d = d;
  cfg.a_sizes = {a_size};
  cfg.seed = seed;
  const auto rows = bench_selection(cfg);
  std::map<std::string, TimingRow> by_mode;
  for (const auto& r : rows) by_mode[r.mode] = r;
  const double speedup = by_mode.at("direct").mean_s / by_mode.at("incremental").mean_s;
  res.passed = speedup >= required_speedup;
  res.detail = fmt::format("direct {:.3e} s (+-{:.1e}), incremental {:.3e} s (+-{:.1e}), speedup {:.2f}x",
                           by_mode.at("direct").mean_s, by_mode.at("direct").ci95_s, by_mode.at("incremental").mean_s,
                           by_mode.at("incremental").ci95_s, speedup);
  return res;
}

}  // namespace agenda::props
