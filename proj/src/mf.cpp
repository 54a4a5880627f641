#include "agenda/mf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <tuple>

#include <fmt/format.h>

#include "agenda/classifier.hpp"
#include "agenda/metrics.hpp"

namespace agenda {
namespace {

constexpr int kMinBiasSupport = 3;

int type_col(UserType t) { return t == UserType::plus ? 0 : 1; }

/// Type-conditional item means, falling back to the global type mean when an
/// item has fewer than kMinBiasSupport ratings of that type.
Eigen::MatrixXd initial_biases(const Dataset& d) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d.n_items, 2);
  Eigen::MatrixXi cnt = Eigen::MatrixXi::Zero(d.n_items, 2);
  double gsum[2] = {0, 0};
  long long gcnt[2] = {0, 0};
  double all = 0;
  for (const auto& r : d.ratings) {
    const int c = type_col(d.types[r.user]);
    sum(r.item, c) += r.rating;
    cnt(r.item, c) += 1;
    gsum[c] += r.rating;
    gcnt[c] += 1;
    all += r.rating;
  }
  const double global = d.ratings.empty() ? 0.0 : all / static_cast<double>(d.ratings.size());
  Eigen::MatrixXd Z(d.n_items, 2);
  for (int c = 0; c < 2; ++c) {
    const double fallback = gcnt[c] > 0 ? gsum[c] / static_cast<double>(gcnt[c]) : global;
    for (int j = 0; j < d.n_items; ++j) {
      Z(j, c) = cnt(j, c) >= kMinBiasSupport ? sum(j, c) / cnt(j, c) : fallback;
    }
  }
  return Z;
}

}  // namespace

double mf_objective(const Dataset& d, const Eigen::MatrixXd& U, const ItemModel& model) {
  double sse = 0.0;
  for (const auto& r : d.ratings) {
    const double e = r.rating - U.row(r.user).dot(model.V.row(r.item)) -
                     model.Z(r.item, type_col(d.types[r.user]));
    sse += e * e;
  }
  return sse + model.hp.reg * (U.squaredNorm() + model.V.squaredNorm());
}

TrainResult train_mf(const Dataset& train, const HyperParams& hp) {
  hp.validate();
  if (train.ratings.empty()) throw Error("train_mf: empty training set");
  if (static_cast<int>(train.types.size()) != train.n_users) throw Error("train_mf: missing user types");

  const int d = hp.d;
  std::mt19937_64 rng(hp.seed);
  std::normal_distribution<double> init(0.0, 0.1 / std::pow(static_cast<double>(d), 0.25));

  TrainResult res;
  res.U.resize(train.n_users, d);
  for (Eigen::Index k = 0; k < res.U.size(); ++k) res.U.data()[k] = init(rng);
  ItemModel& model = res.model;
  model.hp = hp;
  model.label_names = train.label_names;
  model.V.resize(train.n_items, d);
  for (Eigen::Index k = 0; k < model.V.size(); ++k) model.V.data()[k] = init(rng);
  model.Z = initial_biases(train);

  std::vector<std::size_t> order(train.ratings.size());
  std::iota(order.begin(), order.end(), 0);
  const double eta = hp.step_size;
  const double shrink = 1.0 / (1.0 + eta * hp.reg);
  Eigen::VectorXd u_old(d);

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto k : order) {
      const auto& r = train.ratings[k];
      auto u = res.U.row(r.user);
      auto v = model.V.row(r.item);
      double& z = model.Z(r.item, type_col(train.types[r.user]));
      const double e = r.rating - u.dot(v) - z;
      u_old = u.transpose();
      u = (u + eta * e * v) * shrink;
      v = (v + eta * e * u_old.transpose()) * shrink;
      z += eta * e;
    }
    const double obj = mf_objective(train, res.U, model);
    if (!std::isfinite(obj)) throw Error(fmt::format("train_mf: objective diverged at epoch {}", epoch));
    res.trace.objective.push_back(obj);
  }
  return res;
}

namespace {

double fold_auc(const ItemModel& model, const Dataset& test) {
  const auto users = test.by_user();
  std::vector<double> scores;
  std::vector<UserType> labels;
  for (int i = 0; i < test.n_users; ++i) {
    if (users[i].empty()) continue;
    Query q;
    for (const auto& [j, r] : users[i]) q.push_back(j, r);
    scores.push_back(posterior(model, q).plus);
    labels.push_back(test.types[i]);
  }
  return auc(scores, labels);
}

/// Fits a ridge profile on half of each user's ratings (true type known) and
/// scores the other half.
double fold_rmse(const ItemModel& model, const Dataset& test, std::uint64_t seed) {
  const auto users = test.by_user();
  std::mt19937_64 rng(seed);
  double sse = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < test.n_users; ++i) {
    auto items = users[i];
    if (items.size() < 2) continue;
    std::shuffle(items.begin(), items.end(), rng);
    const std::size_t half = items.size() / 2;
    Query fit;
    for (std::size_t k = 0; k < half; ++k) fit.push_back(items[k].first, items[k].second);
    const Eigen::VectorXd u = ridge_profile(model, fit, test.types[i]);
    for (std::size_t k = half; k < items.size(); ++k) {
      const double e = items[k].second - predict_rating(model, u, items[k].first, test.types[i]);
      sse += e * e;
      ++n;
    }
  }
  if (n == 0) throw Error("cross_validate: no test ratings for rmse");
  return std::sqrt(sse / static_cast<double>(n));
}

}  // namespace

std::vector<double> cross_validate_scores(const Dataset& d, const std::vector<HyperParams>& grid,
                                          int k, CvObjective objective, std::uint64_t split_seed) {
  if (grid.empty()) throw Error("cross_validate: empty grid");
  const auto folds = split_folds(d, k, split_seed);
  std::vector<double> totals(grid.size(), 0.0);

  for (std::size_t f = 0; f < folds.size(); ++f) {
    // Grid points differing only in classifier settings share one factorization.
    std::map<std::tuple<int, double, int, double, std::uint64_t>, ItemModel> trained;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto& hp = grid[g];
      const auto key = std::make_tuple(hp.d, hp.reg, hp.epochs, hp.step_size, hp.seed);
      auto it = trained.find(key);
      if (it == trained.end()) it = trained.emplace(key, train_mf(folds[f].train, hp).model).first;
      ItemModel model = it->second;
      model.hp = hp;
      totals[g] += objective == CvObjective::auc ? fold_auc(model, folds[f].test)
                                                 : fold_rmse(model, folds[f].test, split_seed + f);
    }
  }
  for (auto& t : totals) t /= static_cast<double>(folds.size());
  return totals;
}

HyperParams cross_validate(const Dataset& d, const std::vector<HyperParams>& grid, int k,
                           CvObjective objective, std::uint64_t split_seed) {
  const auto scores = cross_validate_scores(d, grid, k, objective, split_seed);
  std::size_t best = 0;
  for (std::size_t g = 1; g < scores.size(); ++g) {
    const bool better = objective == CvObjective::auc ? scores[g] > scores[best] : scores[g] < scores[best];
    if (better) best = g;
  }
  return grid[best];
}

}  // namespace agenda
