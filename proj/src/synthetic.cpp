#include "agenda/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace agenda {

void SyntheticConfig::validate() const {
  if (n_users < 1 || n_items < 1 || d < 1) throw Error("synthetic: counts must be >= 1");
  if (!(sigma_u > 0) || !(sigma_v > 0)) throw Error("synthetic: sigma_u and sigma_v must be > 0");
  if (!(sigma_0 >= 0) || !(bias_scale >= 0)) throw Error("synthetic: sigma_0 and bias_scale must be >= 0");
  if (!(density > 0 && density <= 1)) throw Error("synthetic: density must be in (0, 1]");
}

SyntheticData generate_synthetic(const SyntheticConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  SyntheticData out;
  out.U.resize(c.n_users, c.d);
  for (Eigen::Index k = 0; k < out.U.size(); ++k) out.U.data()[k] = c.sigma_u * std_normal(rng);

  ItemModel& truth = out.truth;
  truth.hp.d = c.d;
  truth.hp.sigma_0 = 1.0;
  truth.hp.classifier_lambda = 1.0 / (c.sigma_u * c.sigma_u);
  truth.hp.seed = c.seed;
  truth.V.resize(c.n_items, c.d);
  for (Eigen::Index k = 0; k < truth.V.size(); ++k) truth.V.data()[k] = c.sigma_v * std_normal(rng);
  truth.Z.resize(c.n_items, 2);
  for (int j = 0; j < c.n_items; ++j) {
    const double mid = c.bias_scale * std_normal(rng);
    const double gap = c.bias_scale * std_normal(rng);
    truth.Z(j, 0) = mid + 0.5 * gap;
    truth.Z(j, 1) = mid - 0.5 * gap;
  }

  Dataset& ds = out.dataset;
  ds.n_users = c.n_users;
  ds.n_items = c.n_items;
  ds.types.resize(c.n_users);
  for (auto& t : ds.types) t = coin(rng) ? UserType::plus : UserType::minus;
  for (int i = 0; i < c.n_users; ++i) ds.user_labels.push_back(std::to_string(i));
  for (int j = 0; j < c.n_items; ++j) ds.item_labels.push_back(std::to_string(j));

  const int per_user = std::max(1, static_cast<int>(std::lround(c.density * c.n_items)));
  std::vector<ItemId> items(c.n_items);
  for (int i = 0; i < c.n_users; ++i) {
    std::iota(items.begin(), items.end(), 0);
    if (per_user < c.n_items) {
      std::shuffle(items.begin(), items.end(), rng);
      std::sort(items.begin(), items.begin() + per_user);
    }
    for (int k = 0; k < per_user; ++k) {
      const ItemId j = items[k];
      double r = out.U.row(i).dot(truth.V.row(j)) + truth.bias(j, ds.types[i]);
      if (c.sigma_0 > 0) r += c.sigma_0 * std_normal(rng);
      ds.ratings.push_back({i, j, r});
    }
  }
  return out;
}

}  // namespace agenda
