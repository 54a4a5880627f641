#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "agenda/types.hpp"

namespace agenda {

struct HyperParams {
  int d = 20;
  double reg = 0.1;  // profile regularizer of the MF objective (users and items)
  int epochs = 20;
  double step_size = 0.005;
  double classifier_lambda = 100.0;
  double sigma_0 = 1.0;
  double prior_plus = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const HyperParams&) const = default;
};

/// Item side of the trained factorization: profiles V (one row per item) and
/// type biases Z (column 0 = plus, column 1 = minus).
struct ItemModel {
  Eigen::MatrixXd V;
  Eigen::MatrixXd Z;
  HyperParams hp;
  LabelNames label_names;

  int n_items() const { return static_cast<int>(V.rows()); }
  int dim() const { return static_cast<int>(V.cols()); }

  double bias(ItemId j, UserType t) const { return Z(j, t == UserType::plus ? 0 : 1); }
  /// Half the bias gap, (z+ - z-) / 2.
  double gap(ItemId j) const { return 0.5 * (Z(j, 0) - Z(j, 1)); }
  double mid(ItemId j) const { return 0.5 * (Z(j, 0) + Z(j, 1)); }

  void validate() const;
};

double predict_rating(const ItemModel& model, const Eigen::Ref<const Eigen::VectorXd>& u, ItemId j,
                      UserType t);

/// Text format: a versioned header, a key=value line, then one tab-separated
/// row per item (item_id, z_plus, z_minus, v_0 .. v_{d-1}).
void save_model(const ItemModel& model, const std::filesystem::path& path);
ItemModel load_model(const std::filesystem::path& path);

}  // namespace agenda
