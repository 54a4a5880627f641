#include <cmath>

#include <Eigen/Sparse>
#include <fmt/format.h>

#include "agenda/classifier.hpp"

namespace agenda {
namespace {

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class LogisticObjective {
 public:
  LogisticObjective(const Dataset& d, double l2) : X_(d.n_users, d.n_items), y_(d.n_users), l2_(l2) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(d.ratings.size());
    for (const auto& r : d.ratings) trips.emplace_back(r.user, r.item, r.rating);
    X_.setFromTriplets(trips.begin(), trips.end());
    for (int i = 0; i < d.n_users; ++i) y_(i) = sign(d.types[i]);
  }

  Eigen::Index dim() const { return X_.cols() + 1; }

  /// Objective value; fills grad when non-null.
  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    const Eigen::Index m = X_.cols();
    const double n = static_cast<double>(X_.rows());
    const auto w = theta.head(m);
    const double b = theta(m);
    const Eigen::VectorXd s = (X_ * w).array() + b;
    double f = 0.0;
    Eigen::VectorXd g(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double z = -y_(i) * s(i);
      f += log1p_exp(z);
      g(i) = -y_(i) * sigmoid(z);
    }
    f = f / n + 0.5 * l2_ * w.squaredNorm();
    if (grad) {
      grad->resize(dim());
      grad->head(m) = (X_.transpose() * g) / n + l2_ * w;
      (*grad)(m) = g.sum() / n;
    }
    return f;
  }

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> X_;
  Eigen::VectorXd y_;
  double l2_;
};

}  // namespace

LogisticModel train_logistic(const Dataset& train, const LogisticConfig& cfg) {
  if (cfg.l2 < 0 || cfg.step <= 0 || cfg.epochs < 1) throw Error("train_logistic: invalid config");
  for (const auto t : train.types) {
    if (t != UserType::plus && t != UserType::minus) throw Error("train_logistic: bad label");
  }
  const LogisticObjective obj(train, cfg.l2);

  // Accelerated gradient descent with backtracking and function-value restart.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(obj.dim());
  Eigen::VectorXd y = x, grad, x_next;
  double fx = obj(x, nullptr);
  double L = 1.0 / cfg.step;
  double t = 1.0;
  for (int it = 0; it < cfg.epochs; ++it) {
    const double fy = obj(y, &grad);
    double f_next = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      x_next = y - grad / L;
      f_next = obj(x_next, nullptr);
      const Eigen::VectorXd step = x_next - y;
      if (f_next <= fy + grad.dot(step) + 0.5 * L * step.squaredNorm()) break;
      L *= 2.0;
    }
    if (!std::isfinite(f_next)) throw Error(fmt::format("train_logistic: diverged at epoch {}", it + 1));
    if (f_next > fx) {
      // restart momentum
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    const double change = std::abs(fx - f_next);
    x = x_next;
    fx = f_next;
    t = t_next;
    L *= 0.9;
    if (change < 1e-12 * std::max(1.0, std::abs(fx))) break;
  }

  LogisticModel m;
  m.weights = x.head(obj.dim() - 1);
  m.intercept = x(obj.dim() - 1);
  m.l2 = cfg.l2;
  return m;
}

double LogisticModel::score(const Query& q) const {
  double s = intercept;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const ItemId j = q.items[k];
    if (j < 0 || j >= weights.size()) throw Error(fmt::format("logistic: item {} out of range", j));
    s += weights(j) * q.ratings[k];
  }
  return s;
}

double LogisticModel::posterior(const Query& q) const { return sigmoid(score(q)); }

double logistic_posterior(const LogisticModel& m, const Query& q) { return m.posterior(q); }

PosteriorFn logistic_posterior_fn(const LogisticModel& m) {
  return [&m](const Query& q) { return m.posterior(q); };
}

}  // namespace agenda
