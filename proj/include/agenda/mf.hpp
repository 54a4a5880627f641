#pragma once

#include <vector>

#include <Eigen/Dense>

#include "agenda/dataset.hpp"
#include "agenda/model.hpp"

namespace agenda {

struct TrainTrace {
  std::vector<double> objective;  // regularized squared error after each epoch
};

struct TrainResult {
  ItemModel model;
  Eigen::MatrixXd U;  // one row per training user
  TrainTrace trace;
};

/// Fits profiles and type biases by SGD over shuffled ratings. Biases are not
/// regularized; profile shrinkage is applied as an implicit (proximal) step so
/// that large `reg * step_size` products stay stable.
TrainResult train_mf(const Dataset& train, const HyperParams& hp);

/// Value of the regularized squared-error objective for given factors.
double mf_objective(const Dataset& d, const Eigen::MatrixXd& U, const ItemModel& model);

enum class CvObjective { auc, rmse };

/// Returns the grid point with the best mean fold objective. Earliest wins ties.
HyperParams cross_validate(const Dataset& d, const std::vector<HyperParams>& grid, int k,
                           CvObjective objective, std::uint64_t split_seed = 1);

/// Mean fold objective for every grid point, in grid order.
std::vector<double> cross_validate_scores(const Dataset& d, const std::vector<HyperParams>& grid,
                                          int k, CvObjective objective,
                                          std::uint64_t split_seed = 1);

}  // namespace agenda
