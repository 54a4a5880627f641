#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "agenda/dataset.hpp"
#include "agenda/model.hpp"

namespace agenda {

struct SyntheticConfig {
  int n_users = 100;
  int n_items = 50;
  int d = 5;
  double sigma_u = 1.0;
  double sigma_v = 1.0;
  double sigma_0 = 1.0;     // rating noise; 0 gives noiseless ratings
  double bias_scale = 1.0;  // std-dev of the bias gaps and of the per-item bias midpoints
  double density = 1.0;     // fraction of items each user rates
  std::uint64_t seed = 1;

  void validate() const;
};

/// Ground truth behind a generated dataset.
struct SyntheticData {
  Dataset dataset;
  ItemModel truth;    // hp.classifier_lambda = 1 / sigma_u^2, hp.sigma_0 = 1
  Eigen::MatrixXd U;  // one row per user
};

/// Samples profiles, biases, and types, then ratings u^T v + z_{j,t} + noise.
SyntheticData generate_synthetic(const SyntheticConfig& c);

}  // namespace agenda
