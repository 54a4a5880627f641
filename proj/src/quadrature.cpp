#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "agenda/selection.hpp"

namespace agenda {
namespace {

/// Exponent of the risk integrand as a function of the centered rating x of
/// the candidate, evaluated from the full M_{A+j} without any block algebra:
///   -(r^T M r + 2 |delta^T M r| + delta^T M delta) / (2 sigma0^2).
class RiskIntegrand {
 public:
  RiskIntegrand(const SessionState& s, ItemId j) {
    const auto& model = s.model();
    Query q = s.query();
    q.push_back(j, model.mid(j));  // centered rating 0; replaced per evaluation
    fi_ = build_intermediates(model, q);
    k_ = fi_.r_bar.size() - 1;
    s2_ = model.hp.sigma_0 * model.hp.sigma_0;
  }

  double exponent(double x) const {
    Eigen::VectorXd r = fi_.r_bar;
    r(k_) = x;
    const Eigen::VectorXd Mr = fi_.M * r;
    return -(r.dot(Mr) + 2.0 * std::abs(fi_.delta.dot(Mr)) + fi_.delta.dot(fi_.M * fi_.delta)) / (2.0 * s2_);
  }

  /// Where delta^T M r changes sign (linear in x); nullopt when constant.
  std::optional<double> kink() const {
    Eigen::VectorXd r0 = fi_.r_bar;
    r0(k_) = 0.0;
    const double b0 = fi_.delta.dot(fi_.M * r0);
    const double slope = fi_.delta.dot(fi_.M.col(k_));
    if (slope == 0.0) return std::nullopt;
    return -b0 / slope;
  }

  double width() const { return std::sqrt(s2_ / fi_.M(k_, k_)); }
  double log_det() const { return fi_.log_det; }

 private:
  FbcIntermediates fi_;
  Eigen::Index k_ = 0;
  double s2_ = 1.0;
};

/// Maximizer of a concave function by bracketing then golden-section search.
double find_mode(const RiskIntegrand& f, double scale) {
  double lo = -scale, hi = scale;
  auto rising = [&](double x) { return f.exponent(x + 1e-6 * scale) > f.exponent(x); };
  int expansions = 0;
  while (!rising(lo) || rising(hi)) {
    if (++expansions > 200) throw Error("risk_quadrature: failed to bracket the mode");
    if (!rising(lo)) lo = lo * 2.0 - scale;
    if (rising(hi)) hi = hi * 2.0 + scale;
  }
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f.exponent(c), fd = f.exponent(d);
  for (int it = 0; it < 300 && (b - a) > 1e-13 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
    if (fc > fd) {
      b = d, d = c, fd = fc;
      c = b - g * (b - a);
      fc = f.exponent(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + g * (b - a);
      fd = f.exponent(d);
    }
  }
  return 0.5 * (a + b);
}

double integrate_window(const RiskIntegrand& f, double mode, double peak, double half, const QuadratureConfig& cfg) {
  using boost::math::quadrature::gauss_kronrod;
  auto g = [&](double x) { return std::exp(f.exponent(x) - peak); };
  const double lo = mode - half, hi = mode + half;
  std::vector<double> cuts{lo};
  const auto kink = f.kink();
  const bool split = kink && *kink > lo && *kink < hi;
  auto add_panels = [&](double a, double b) {
    for (int p = 1; p <= cfg.panels; ++p) cuts.push_back(a + (b - a) * p / cfg.panels);
  };
  if (split) {
    add_panels(lo, *kink);
    add_panels(*kink, hi);
  } else {
    add_panels(lo, hi);
  }
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    total += gauss_kronrod<double, 61>::integrate(g, cuts[k], cuts[k + 1], 12, cfg.tolerance);
  }
  return total;
}

}  // namespace

RiskScore risk_quadrature(const SessionState& s, ItemId j, const QuadratureConfig& cfg) {
  if (!s.is_candidate(j)) throw Error(fmt::format("risk_quadrature: item {} is not a candidate", j));
  const RiskIntegrand f(s, j);
  const double sd = f.width();
  const double mode = find_mode(f, sd);
  const double peak = f.exponent(mode);

  double half = cfg.half_width * sd;
  double value = integrate_window(f, mode, peak, half, cfg);
  for (int it = 0; it < cfg.max_doublings; ++it) {
    half *= 2.0;
    const double wider = integrate_window(f, mode, peak, half, cfg);
    const double change = std::abs(wider - value) / wider;
    value = wider;
    if (change < 1e-12) break;
  }
  if (!(value > 0) || !std::isfinite(value)) {
    throw Error(fmt::format("risk_quadrature: integration failed for item {}", j));
  }
  RiskScore r;
  r.item = j;
  r.method = RiskMethod::quadrature;
  r.log_value = peak + std::log(value) - 0.5 * f.log_det();
  r.value = std::exp(r.log_value);
  return r;
}

}  // namespace agenda
