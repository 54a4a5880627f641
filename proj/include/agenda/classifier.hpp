#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "agenda/dataset.hpp"
#include "agenda/model.hpp"

namespace agenda {

/// Items a user has rated and the ratings given, in asking order.
struct Query {
  std::vector<ItemId> items;
  std::vector<double> ratings;

  Query() = default;
  Query(std::vector<ItemId> items, std::vector<double> ratings);

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  void push_back(ItemId j, double r) {
    items.push_back(j);
    ratings.push_back(r);
  }
};

/// Throws if items repeat, lengths differ, or an item is unknown to the model.
void validate_query(const ItemModel& model, const Query& q);

/// Quantities the factor-based classifier needs for a rated set A:
/// Sigma = lambda I + V_A^T V_A, M = I - V_A Sigma^{-1} V_A^T,
/// centered ratings r - (z+ + z-)/2 and half gaps (z+ - z-)/2.
struct FbcIntermediates {
  Eigen::MatrixXd sigma_inv;
  double log_det = 0.0;
  Eigen::MatrixXd M;
  Eigen::VectorXd r_bar;
  Eigen::VectorXd delta;
};

/// Gathers the rows of V for the given items.
Eigen::MatrixXd gather_profiles(const ItemModel& model, const std::vector<ItemId>& items);

/// Direct (from scratch) computation of the classifier intermediates.
FbcIntermediates build_intermediates(const ItemModel& model, const Query& q);

/// Log-odds of the plus type: 2 delta^T M r_bar / sigma0^2 + log(pi+/pi-).
double fbc_margin(const ItemModel& model, const FbcIntermediates& fi);
double fbc_margin(const ItemModel& model, const Query& q);

struct TypePosterior {
  double plus = 0.5;
  double minus = 0.5;

  UserType argmax(double prior_plus = 0.5) const;
  double confidence() const { return plus > minus ? plus : minus; }
};

/// Two-class softmax of the log-likelihoods, evaluated from the margin in a
/// log-sum-exp stable way.
TypePosterior posterior_from_margin(double margin);
TypePosterior posterior(const ItemModel& model, const Query& q);

/// MAP type. A zero margin goes to the class with the larger prior (plus when
/// priors are uniform).
UserType classify_margin(double margin, double prior_plus);
UserType classify(const ItemModel& model, const Query& q);

/// Ridge estimate Sigma^{-1} V_A^T (r_A - z_{A,t}).
Eigen::VectorXd ridge_profile(const ItemModel& model, const Query& q, UserType t);

/// Probability of the plus type for an arbitrary rated set.
using PosteriorFn = std::function<double(const Query&)>;
PosteriorFn fbc_posterior_fn(const ItemModel& model);

struct LogisticConfig {
  double l2 = 1e-3;
  int epochs = 300;
  double step = 1.0;  // initial step of the backtracking line search
};

/// L2-regularized logistic regression over zero-padded rating vectors.
struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double l2 = 0.0;

  double score(const Query& q) const;
  double posterior(const Query& q) const;
};

LogisticModel train_logistic(const Dataset& train, const LogisticConfig& cfg);
double logistic_posterior(const LogisticModel& m, const Query& q);
PosteriorFn logistic_posterior_fn(const LogisticModel& m);

}  // namespace agenda
