#include "agenda/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <fmt/format.h>

namespace agenda {

SessionState::SessionState(const ItemModel& model, std::vector<ItemId> candidates, UpdateMode mode)
    : model_(&model), mode_(mode), candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw Error("session: empty candidate set");
  std::sort(candidates_.begin(), candidates_.end());
  if (std::adjacent_find(candidates_.begin(), candidates_.end()) != candidates_.end()) {
    throw Error("session: duplicate candidates");
  }
  if (candidates_.front() < 0 || candidates_.back() >= model.n_items()) {
    throw Error("session: candidate not in the model");
  }
  const int d = model.dim();
  const double lambda = model.hp.classifier_lambda;
  sigma_inv_ = Eigen::MatrixXd::Identity(d, d) / lambda;
  log_det_ = d * std::log(lambda);
  M_.resize(0, 0);
  VA_.resize(0, d);
  r_bar_.resize(0);
  delta_.resize(0);
  M_r_bar_.resize(0);
  M_delta_.resize(0);
}

bool SessionState::is_candidate(ItemId j) const {
  return std::binary_search(candidates_.begin(), candidates_.end(), j);
}

void SessionState::recompute() {
  const auto fi = build_intermediates(*model_, query_);
  sigma_inv_ = fi.sigma_inv;
  log_det_ = fi.log_det;
  M_ = fi.M;
}

void SessionState::extend(ItemId j, double r) {
  const auto it = std::lower_bound(candidates_.begin(), candidates_.end(), j);
  if (it == candidates_.end() || *it != j) {
    if (std::find(query_.items.begin(), query_.items.end(), j) != query_.items.end()) {
      throw Error(fmt::format("session: item {} already asked", j));
    }
    throw Error(fmt::format("session: item {} is not a candidate", j));
  }
  candidates_.erase(it);

  const auto k = VA_.rows();
  const Eigen::VectorXd v = model_->V.row(j).transpose();

  if (mode_ == UpdateMode::incremental) {
    const Eigen::VectorXd s = sigma_inv_ * v;
    const double c = 1.0 + v.dot(s);
    const Eigen::VectorXd phi = VA_ * s;
    log_det_ += std::log(c);
    sigma_inv_.noalias() -= (s / c) * s.transpose();
    M_.conservativeResize(k + 1, k + 1);
    M_.topLeftCorner(k, k).noalias() += (phi / c) * phi.transpose();
    M_.block(0, k, k, 1) = -phi / c;
    M_.block(k, 0, 1, k) = -phi.transpose() / c;
    M_(k, k) = 1.0 / c;
  }

  VA_.conservativeResize(k + 1, Eigen::NoChange);
  VA_.row(k) = v.transpose();
  r_bar_.conservativeResize(k + 1);
  r_bar_(k) = r - model_->mid(j);
  delta_.conservativeResize(k + 1);
  delta_(k) = model_->gap(j);
  query_.push_back(j, r);

  if (mode_ == UpdateMode::direct) recompute();
  M_r_bar_ = M_ * r_bar_;
  M_delta_ = M_ * delta_;
}

SessionState state_init(const ItemModel& model, std::vector<ItemId> candidates, UpdateMode mode) {
  return SessionState(model, std::move(candidates), mode);
}

void state_extend(SessionState& s, ItemId j, double r) { s.extend(j, r); }

double cache_deviation(const SessionState& s) {
  const auto fi = build_intermediates(s.model(), s.query());
  double dev = std::abs(fi.log_det - s.log_det());
  dev = std::max(dev, (fi.sigma_inv - s.sigma_inv()).cwiseAbs().maxCoeff());
  if (fi.M.size() > 0) dev = std::max(dev, (fi.M - s.M()).cwiseAbs().maxCoeff());
  return dev;
}

namespace {

void fill_alphas(AlphaTerms& t, const SessionState& s, ItemId j) {
  const auto& model = s.model();
  const double s2 = model.hp.sigma_0 * model.hp.sigma_0;
  const double dj = model.gap(j);
  const auto& rb = s.r_bar();
  const auto& dA = s.delta();

  const Eigen::VectorXd mu1_rb = t.mu1 * rb;
  const double xi_rb = t.xi.dot(rb);
  const double xi_dA = t.xi.dot(dA);

  t.a1 = t.mu2 / s2;
  t.a2 = -2.0 * xi_rb / s2;
  t.a3 = 2.0 * (dj * t.mu2 - xi_dA) / s2;
  t.a4 = 2.0 * (dA.dot(mu1_rb) - dj * xi_rb) / s2;
  t.a5 = (rb.dot(mu1_rb) + dA.dot(t.mu1 * dA) - 2.0 * dj * xi_dA + t.mu2 * dj * dj) / s2;
}

}  // namespace

AlphaTerms alpha_terms(const SessionState& s, ItemId j) {
  if (!s.is_candidate(j)) throw Error(fmt::format("alpha_terms: item {} is not a candidate", j));
  const auto& model = s.model();
  AlphaTerms t;

  if (s.mode() == UpdateMode::incremental) {
    const Eigen::VectorXd v = model.V.row(j).transpose();
    const Eigen::VectorXd sv = s.sigma_inv() * v;
    const double c = 1.0 + v.dot(sv);
    t.phi = s.profiles() * sv;
    t.xi = t.phi / c;
    t.mu2 = 1.0 / c;
    t.mu1 = s.M();
    t.mu1.noalias() += (t.phi / c) * t.phi.transpose();
    t.log_det = s.log_det() + std::log(c);
  } else {
    // From scratch in the (|A|+1)-dimensional form M = (I + V V^T / lambda)^-1,
    // log det Sigma = d log lambda + log det(I + V V^T / lambda).
    auto items = s.asked();
    items.push_back(j);
    const Eigen::MatrixXd V = gather_profiles(model, items);
    const auto k = static_cast<Eigen::Index>(s.asked().size());
    const double lambda = model.hp.classifier_lambda;
    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(k + 1, k + 1);
    G.selfadjointView<Eigen::Lower>().rankUpdate(V, 1.0 / lambda);
    const Eigen::LLT<Eigen::MatrixXd> llt(G.selfadjointView<Eigen::Lower>());
    const Eigen::MatrixXd M = llt.solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
    t.mu1 = M.topLeftCorner(k, k);
    t.xi = -M.block(0, k, k, 1);
    t.mu2 = M(k, k);
    t.phi = t.xi / t.mu2;
    t.log_det = model.dim() * std::log(lambda) + 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  }
  fill_alphas(t, s, j);
  return t;
}

double log_gauss_cdf_integral(double t) {
  // h(t) = sqrt(pi/2) erfc(-t/sqrt2)
  static const double log_half_sqrt_pi_2 = 0.5 * std::log(M_PI / 2.0);
  const double z = -t / M_SQRT2;
  if (z < 20.0) return log_half_sqrt_pi_2 + std::log(std::erfc(z));
  // Asymptotic expansion of erfc for large arguments.
  const double iz2 = 1.0 / (z * z);
  const double series = 1.0 + iz2 * (-0.5 + iz2 * (0.75 + iz2 * (-1.875 + iz2 * 6.5625)));
  return log_half_sqrt_pi_2 - z * z - std::log(z * std::sqrt(M_PI)) + std::log(series);
}

namespace {

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

double log_risk_integral(double a1, double a2, double a3, double a4, double a5) {
  if (!(a1 > 0) || !std::isfinite(a1)) throw Error(fmt::format("risk: alpha1 = {} is not positive", a1));
  for (const auto& [name, v] : {std::pair{"alpha2", a2}, {"alpha3", a3}, {"alpha4", a4}, {"alpha5", a5}}) {
    if (!std::isfinite(v)) throw Error(fmt::format("risk: {} is not finite", name));
  }
  const double ra = std::sqrt(a1);
  if (a3 == 0.0) {
    return -(std::abs(a4) + a5) / 2.0 + 0.5 * std::log(2.0 * M_PI / a1) + a2 * a2 / (8.0 * a1);
  }
  // Kink at x = b. On each half-line |a3 x + a4| = sgn * (a3 x + a4), giving a
  // Gaussian in x with linear coefficient p and constant c.
  const double b = -a4 / a3;
  const double left_sign = a3 > 0 ? -1.0 : 1.0;
  auto piece = [&](double sgn, bool left) {
    const double p = a2 + sgn * a3;
    const double c = a5 + sgn * a4;
    const double arg = ra * b + p / (2.0 * ra);
    return (p * p / (4.0 * a1) - c) / 2.0 - std::log(ra) + log_gauss_cdf_integral(left ? arg : -arg);
  };
  return log_add(piece(left_sign, true), piece(-left_sign, false));
}

double log_risk_excess(double a1, double a2, double a3, double a4, double log_ratio) {
  // Piece sign s = +1 holds the minus-type density, s = -1 the plus-type one.
  // m: less likely type. A = {x : s_m (a3 x + a4) < 0}, where f_m > f_o.
  if (a3 == 0.0) return -std::numeric_limits<double>::infinity();
  const double sm = log_ratio > 0 ? 1.0 : -1.0;
  const double log_rho = std::abs(log_ratio);  // log G_o / G_m
  const double ra = std::sqrt(a1);
  const double b = -a4 / a3;
  static const double log_sqrt_2pi = 0.5 * std::log(2.0 * M_PI);
  auto log_prob_A = [&](double s) {
    const double mu = -(a2 + s * a3) / (2.0 * a1);
    const double t = sm * a3 > 0 ? (b - mu) * ra : (mu - b) * ra;
    return log_gauss_cdf_integral(t) - log_sqrt_2pi;
  };
  const double lpm = log_prob_A(sm);
  const double lpo = log_prob_A(-sm);
  const double q = log_rho + lpo - lpm;
  if (q >= 0.0) return -std::numeric_limits<double>::infinity();
  return lpm + (q > -M_LN2 ? std::log(-std::expm1(q)) : std::log1p(-std::exp(q)));
}

namespace {

/// The five alphas and log det from cached quadratic forms only:
/// O(|A| d + d^2) per candidate instead of materializing mu1.
AlphaTerms cached_alphas(const SessionState& s, ItemId j) {
  const auto& model = s.model();
  const double s2 = model.hp.sigma_0 * model.hp.sigma_0;
  const double dj = model.gap(j);
  const Eigen::VectorXd v = model.V.row(j).transpose();
  const Eigen::VectorXd sv = s.sigma_inv() * v;
  const double c = 1.0 + v.dot(sv);
  const Eigen::VectorXd phi = s.profiles() * sv;
  const double phi_r = phi.dot(s.r_bar());
  const double phi_d = phi.dot(s.delta());
  const double xi_rb = phi_r / c;
  const double xi_dA = phi_d / c;
  const double rMr = s.r_bar().dot(s.M_r_bar()) + phi_r * phi_r / c;
  const double dMd = s.delta().dot(s.M_delta()) + phi_d * phi_d / c;
  const double dMr = s.delta().dot(s.M_r_bar()) + phi_d * phi_r / c;

  AlphaTerms t;
  t.mu2 = 1.0 / c;
  t.log_det = s.log_det() + std::log(c);
  t.a1 = t.mu2 / s2;
  t.a2 = -2.0 * xi_rb / s2;
  t.a3 = 2.0 * (dj * t.mu2 - xi_dA) / s2;
  t.a4 = 2.0 * (dMr - dj * xi_rb) / s2;
  t.a5 = (rMr + dMd - 2.0 * dj * xi_dA + t.mu2 * dj * dj) / s2;
  return t;
}

}  // namespace

RiskScore risk_closed_form(const SessionState& s, ItemId j) {
  if (!s.is_candidate(j)) throw Error(fmt::format("risk: item {} is not a candidate", j));
  const auto t = s.mode() == UpdateMode::incremental ? cached_alphas(s, j) : alpha_terms(s, j);
  RiskScore r;
  r.item = j;
  r.method = RiskMethod::closed_form;
  r.log_value = log_risk_integral(t.a1, t.a2, t.a3, t.a4, t.a5) - 0.5 * t.log_det;
  if (!std::isfinite(r.log_value)) throw Error(fmt::format("risk: non-finite value for item {}", j));
  r.value = std::exp(r.log_value);
  const double s2 = s.model().hp.sigma_0 * s.model().hp.sigma_0;
  const double log_ratio = s.asked().empty() ? 0.0 : 2.0 * s.delta().dot(s.M_r_bar()) / s2;
  r.log_excess = log_risk_excess(t.a1, t.a2, t.a3, t.a4, log_ratio);
  return r;
}

std::vector<RiskScore> score_candidates(const SessionState& s) {
  std::vector<RiskScore> out;
  out.reserve(s.candidates().size());
  for (const ItemId j : s.candidates()) out.push_back(risk_closed_form(s, j));
  return out;
}

ItemId select_next_fbc(const SessionState& s) {
  if (s.candidates().empty()) throw Error("select: no candidates left");
  ItemId best = -1;
  double best_excess = 0.0, best_log = 0.0;
  for (const ItemId j : s.candidates()) {
    const auto r = risk_closed_form(s, j);
    if (best < 0 || r.log_excess > best_excess || (r.log_excess == best_excess && r.log_value < best_log)) {
      best = j;
      best_excess = r.log_excess;
      best_log = r.log_value;
    }
  }
  return best;
}

PointEstChoice select_next_pointest(const SessionState& s, const PosteriorFn& posterior_plus) {
  if (s.candidates().empty()) throw Error("select: no candidates left");
  const auto& model = s.model();
  const UserType t_hat = posterior_plus(s.query()) >= 0.5 ? UserType::plus : UserType::minus;
  const Eigen::VectorXd u_hat = ridge_profile(model, s.query(), t_hat);

  PointEstChoice best{-1, std::numeric_limits<double>::infinity()};
  Query q = s.query();
  for (const ItemId j : s.candidates()) {
    q.push_back(j, predict_rating(model, u_hat, j, t_hat));
    const double p = posterior_plus(q);
    q.items.pop_back();
    q.ratings.pop_back();
    const double score = std::min(p, 1.0 - p);
    if (score < best.score) best = {j, score};
  }
  return best;
}

std::vector<double> item_entropies(const Dataset& d) {
  std::vector<std::map<double, int>> hist(d.n_items);
  for (const auto& r : d.ratings) ++hist[r.item][r.rating];
  std::vector<double> h(d.n_items, 0.0);
  for (int j = 0; j < d.n_items; ++j) {
    double total = 0;
    for (const auto& [v, c] : hist[j]) total += c;
    for (const auto& [v, c] : hist[j]) {
      const double p = c / total;
      h[j] -= p * std::log(p);
    }
  }
  return h;
}

std::vector<ItemId> passive_order(const ItemModel& model, const Dataset* train, PassiveKind kind,
                                  std::uint64_t seed) {
  std::vector<ItemId> order(model.n_items());
  std::iota(order.begin(), order.end(), 0);
  switch (kind) {
    case PassiveKind::maxgap: {
      std::stable_sort(order.begin(), order.end(), [&](ItemId a, ItemId b) {
        return std::abs(model.gap(a)) > std::abs(model.gap(b));
      });
      break;
    }
    case PassiveKind::entropy: {
      if (!train) throw Error("passive_order: entropy ordering needs training ratings");
      if (train->n_items != model.n_items()) throw Error("passive_order: model/dataset mismatch");
      const auto h = item_entropies(*train);
      std::stable_sort(order.begin(), order.end(), [&](ItemId a, ItemId b) { return h[a] > h[b]; });
      break;
    }
    case PassiveKind::random: {
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
      break;
    }
  }
  return order;
}

}  // namespace agenda
