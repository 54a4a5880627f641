#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agenda/classifier.hpp"
#include "agenda/dataset.hpp"
#include "agenda/model.hpp"

namespace testutil {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(AGENDA_FIXTURE_DIR) / name;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("agenda_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline agenda::ItemModel random_model(int n_items, int d, double lambda, std::uint64_t seed,
                                      double v_scale = 1.0, double gap_scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  agenda::ItemModel m;
  m.hp.d = d;
  m.hp.classifier_lambda = lambda;
  m.V.resize(n_items, d);
  m.Z.resize(n_items, 2);
  for (int j = 0; j < n_items; ++j) {
    for (int k = 0; k < d; ++k) m.V(j, k) = v_scale * n01(rng);
    const double mid = 3.0 + n01(rng);
    const double gap = gap_scale * n01(rng);
    m.Z(j, 0) = mid + gap / 2;
    m.Z(j, 1) = mid - gap / 2;
  }
  return m;
}

/// Plain Gauss-Jordan inverse with partial pivoting.
inline Eigen::MatrixXd gauss_jordan_inverse(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n, n);
  for (int c = 0; c < n; ++c) {
    int p = c;
    for (int r = c + 1; r < n; ++r) {
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    }
    a.row(c).swap(a.row(p));
    inv.row(c).swap(inv.row(p));
    const double piv = a(c, c);
    a.row(c) /= piv;
    inv.row(c) /= piv;
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      a.row(r) -= f * a.row(c);
      inv.row(r) -= f * inv.row(c);
    }
  }
  return inv;
}

/// log det by Gaussian elimination of an SPD matrix.
inline double brute_log_det(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  double ld = 0.0;
  for (int c = 0; c < n; ++c) {
    ld += std::log(a(c, c));
    for (int r = c + 1; r < n; ++r) a.row(r) -= (a(r, c) / a(c, c)) * a.row(c);
  }
  return ld;
}

/// I - V_A (lambda I + V_A^T V_A)^{-1} V_A^T by brute force.
inline Eigen::MatrixXd brute_M(const Eigen::MatrixXd& VA, double lambda) {
  const auto d = VA.cols();
  const Eigen::MatrixXd S = lambda * Eigen::MatrixXd::Identity(d, d) + VA.transpose() * VA;
  return Eigen::MatrixXd::Identity(VA.rows(), VA.rows()) - VA * gauss_jordan_inverse(S) * VA.transpose();
}

/// Pr(+1 | r_A) from the per-type log-likelihoods, normalized directly.
inline double brute_posterior(const agenda::ItemModel& m, const agenda::Query& q) {
  const int k = static_cast<int>(q.size());
  Eigen::MatrixXd VA(k, m.dim());
  Eigen::VectorXd r(k), zp(k), zm(k);
  for (int a = 0; a < k; ++a) {
    VA.row(a) = m.V.row(q.items[a]);
    r(a) = q.ratings[a];
    zp(a) = m.Z(q.items[a], 0);
    zm(a) = m.Z(q.items[a], 1);
  }
  const Eigen::MatrixXd M = brute_M(VA, m.hp.classifier_lambda);
  const double s2 = m.hp.sigma_0 * m.hp.sigma_0;
  const double lp = -(r - zp).dot(M * (r - zp)) / (2 * s2) + std::log(m.hp.prior_plus);
  const double lm = -(r - zm).dot(M * (r - zm)) / (2 * s2) + std::log(1 - m.hp.prior_plus);
  const double hi = std::max(lp, lm);
  return std::exp(lp - hi) / (std::exp(lp - hi) + std::exp(lm - hi));
}

}  // namespace testutil
