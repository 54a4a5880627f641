#include "agenda/classifier.hpp"

#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

namespace agenda {

Query::Query(std::vector<ItemId> items_, std::vector<double> ratings_)
    : items(std::move(items_)), ratings(std::move(ratings_)) {
  if (items.size() != ratings.size()) throw Error("query: items and ratings differ in length");
}

void validate_query(const ItemModel& model, const Query& q) {
  if (q.items.size() != q.ratings.size()) throw Error("query: items and ratings differ in length");
  std::unordered_set<ItemId> seen;
  for (const ItemId j : q.items) {
    if (j < 0 || j >= model.n_items()) {
      throw Error(fmt::format("query: item {} is not in the model", j));
    }
    if (!seen.insert(j).second) throw Error(fmt::format("query: item {} repeated", j));
  }
}

Eigen::MatrixXd gather_profiles(const ItemModel& model, const std::vector<ItemId>& items) {
  Eigen::MatrixXd VA(static_cast<Eigen::Index>(items.size()), model.dim());
  for (std::size_t k = 0; k < items.size(); ++k) VA.row(k) = model.V.row(items[k]);
  return VA;
}

FbcIntermediates build_intermediates(const ItemModel& model, const Query& q) {
  validate_query(model, q);
  const int d = model.dim();
  const auto n = static_cast<Eigen::Index>(q.size());
  const Eigen::MatrixXd VA = gather_profiles(model, q.items);

  Eigen::MatrixXd sigma = model.hp.classifier_lambda * Eigen::MatrixXd::Identity(d, d);
  sigma.selfadjointView<Eigen::Lower>().rankUpdate(VA.transpose());
  sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();

  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error("build_intermediates: Sigma is not positive definite");

  FbcIntermediates fi;
  fi.sigma_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  fi.log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  fi.M = Eigen::MatrixXd::Identity(n, n) - VA * fi.sigma_inv * VA.transpose();
  fi.r_bar.resize(n);
  fi.delta.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const ItemId j = q.items[k];
    fi.r_bar(k) = q.ratings[k] - model.mid(j);
    fi.delta(k) = model.gap(j);
  }
  return fi;
}

double fbc_margin(const ItemModel& model, const FbcIntermediates& fi) {
  const double prior = std::log(model.hp.prior_plus / (1.0 - model.hp.prior_plus));
  if (fi.r_bar.size() == 0) return prior;
  const double s2 = model.hp.sigma_0 * model.hp.sigma_0;
  return 2.0 * fi.delta.dot(fi.M * fi.r_bar) / s2 + prior;
}

double fbc_margin(const ItemModel& model, const Query& q) {
  if (q.empty()) return std::log(model.hp.prior_plus / (1.0 - model.hp.prior_plus));
  return fbc_margin(model, build_intermediates(model, q));
}

UserType TypePosterior::argmax(double prior_plus) const {
  if (plus > minus) return UserType::plus;
  if (minus > plus) return UserType::minus;
  return prior_plus >= 0.5 ? UserType::plus : UserType::minus;
}

TypePosterior posterior_from_margin(double margin) {
  // log-weights +m/2 and -m/2 differ from the full log-likelihoods by a
  // shared constant, so the softmax is unchanged.
  const double a = 0.5 * margin;
  const double hi = std::abs(a);
  const double lse = hi + std::log1p(std::exp(-2.0 * hi));
  return {std::exp(a - lse), std::exp(-a - lse)};
}

TypePosterior posterior(const ItemModel& model, const Query& q) {
  return posterior_from_margin(fbc_margin(model, q));
}

UserType classify_margin(double margin, double prior_plus) {
  if (margin > 0.0) return UserType::plus;
  if (margin < 0.0) return UserType::minus;
  return prior_plus >= 0.5 ? UserType::plus : UserType::minus;
}

UserType classify(const ItemModel& model, const Query& q) {
  return classify_margin(fbc_margin(model, q), model.hp.prior_plus);
}

Eigen::VectorXd ridge_profile(const ItemModel& model, const Query& q, UserType t) {
  validate_query(model, q);
  const int d = model.dim();
  if (q.empty()) return Eigen::VectorXd::Zero(d);
  const Eigen::MatrixXd VA = gather_profiles(model, q.items);
  Eigen::VectorXd resid(static_cast<Eigen::Index>(q.size()));
  for (std::size_t k = 0; k < q.size(); ++k) resid(k) = q.ratings[k] - model.bias(q.items[k], t);
  Eigen::MatrixXd sigma = model.hp.classifier_lambda * Eigen::MatrixXd::Identity(d, d);
  sigma.noalias() += VA.transpose() * VA;
  return sigma.llt().solve(VA.transpose() * resid);
}

PosteriorFn fbc_posterior_fn(const ItemModel& model) {
  return [&model](const Query& q) { return posterior(model, q).plus; };
}

}  // namespace agenda
