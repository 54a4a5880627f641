#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "agenda/classifier.hpp"
#include "agenda/dataset.hpp"
#include "agenda/model.hpp"

namespace agenda {

enum class UpdateMode { direct, incremental };

/// One user's interrogation state.
///
/// Caches Sigma_A^{-1}, log det Sigma_A and M_A for the asked set A. In
/// incremental mode they are maintained by rank-one updates (determinant
/// lemma, Sherman-Morrison, and a bordered update of M); in direct mode they
/// are recomputed from scratch after every answer. Either way the caches must
/// equal their from-scratch definitions.
///
/// The state refers to the model it was created with; the model must outlive it.
class SessionState {
 public:
  SessionState(const ItemModel& model, std::vector<ItemId> candidates, UpdateMode mode);

  /// Moves j from the candidates to the asked set with answer r.
  void extend(ItemId j, double r);

  const ItemModel& model() const { return *model_; }
  UpdateMode mode() const { return mode_; }
  const std::vector<ItemId>& asked() const { return query_.items; }
  const std::vector<double>& ratings() const { return query_.ratings; }
  const Query& query() const { return query_; }
  /// Remaining candidates in ascending item order.
  const std::vector<ItemId>& candidates() const { return candidates_; }
  bool is_candidate(ItemId j) const;

  const Eigen::MatrixXd& sigma_inv() const { return sigma_inv_; }
  double log_det() const { return log_det_; }
  const Eigen::MatrixXd& M() const { return M_; }
  const Eigen::MatrixXd& profiles() const { return VA_; }  // rows v_j for j in A
  const Eigen::VectorXd& r_bar() const { return r_bar_; }
  const Eigen::VectorXd& delta() const { return delta_; }
  /// M_A r_bar and M_A delta, refreshed on every extension.
  const Eigen::VectorXd& M_r_bar() const { return M_r_bar_; }
  const Eigen::VectorXd& M_delta() const { return M_delta_; }

 private:
  void recompute();

  const ItemModel* model_;
  UpdateMode mode_;
  Query query_;
  std::vector<ItemId> candidates_;
  Eigen::MatrixXd sigma_inv_;
  double log_det_ = 0.0;
  Eigen::MatrixXd M_;
  Eigen::MatrixXd VA_;
  Eigen::VectorXd r_bar_;
  Eigen::VectorXd delta_;
  Eigen::VectorXd M_r_bar_;
  Eigen::VectorXd M_delta_;
};

SessionState state_init(const ItemModel& model, std::vector<ItemId> candidates, UpdateMode mode);
void state_extend(SessionState& s, ItemId j, double r);

/// Largest elementwise deviation of the cached Sigma^{-1}, log det and M from
/// a from-scratch recomputation.
double cache_deviation(const SessionState& s);

/// Terms of the risk integrand for candidate j, written as a function of the
/// unknown centered rating x = r_j - (z_{j+} + z_{j-})/2:
///   exponent(x) = -(a1 x^2 + a2 x + |a3 x + a4| + a5) / 2.
/// mu1, xi, mu2 are the blocks of M_{A+j} = [[mu1, -xi], [-xi^T, mu2]].
struct AlphaTerms {
  double a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0;
  Eigen::VectorXd xi;
  Eigen::VectorXd phi;
  Eigen::MatrixXd mu1;
  double mu2 = 1.0;
  double log_det = 0.0;  // log det Sigma_{A+j}
};

AlphaTerms alpha_terms(const SessionState& s, ItemId j);

enum class RiskMethod { closed_form, quadrature };

/// Expected misclassification risk after asking j, up to a factor shared by
/// all candidates of the same step. Compare log values; `value` may underflow.
struct RiskScore {
  ItemId item = -1;
  double log_value = 0.0;
  double value = 0.0;
  RiskMethod method = RiskMethod::closed_form;
  /// log E_j where risk_j = P(r_A | m) (1 - E_j) and m is the currently less
  /// likely type. P(r_A | m) is shared by all candidates, so ranking by E_j
  /// equals ranking by risk but stays resolvable once the posterior is
  /// confident and 1 - E_j rounds to 1. Closed form only.
  double log_excess = 0.0;
};

/// log of h(t) = integral_{-inf}^{t} exp(-y^2/2) dy, accurate far into both tails.
double log_gauss_cdf_integral(double t);

/// log of the integral over x of exp(-(a1 x^2 + a2 x + |a3 x + a4| + a5)/2).
double log_risk_integral(double a1, double a2, double a3, double a4, double a5);

/// log E for the integrand above, given the log likelihood ratio
/// log P(r_A | +) - log P(r_A | -) of the answers so far. -inf when E = 0.
double log_risk_excess(double a1, double a2, double a3, double a4, double log_ratio);

RiskScore risk_closed_form(const SessionState& s, ItemId j);

struct QuadratureConfig {
  double half_width = 12.0;  // in standard deviations of the Gaussian factor
  int panels = 8;            // per side of the kink
  double tolerance = 1e-13;
  int max_doublings = 6;
};

/// Numerical integration of the risk integrand, built from a from-scratch M_{A+j}.
/// Reference oracle for risk_closed_form.
RiskScore risk_quadrature(const SessionState& s, ItemId j, const QuadratureConfig& cfg = {});

std::vector<RiskScore> score_candidates(const SessionState& s);

/// Candidate with the smallest expected risk, ranked by log_excess; exact
/// ties go to the earlier candidate.
ItemId select_next_fbc(const SessionState& s);

struct PointEstChoice {
  ItemId item = -1;
  double score = 0.0;  // min_t Pr(t | r_A and the predicted rating of item)
};

/// Scores each candidate by plugging its predicted rating into a classifier
/// posterior instead of integrating over the rating.
PointEstChoice select_next_pointest(const SessionState& s, const PosteriorFn& posterior_plus);

enum class PassiveKind { maxgap, entropy, random };

/// Fixed asking order over all model items. Entropy needs the training ratings.
std::vector<ItemId> passive_order(const ItemModel& model, const Dataset* train, PassiveKind kind,
                                  std::uint64_t seed);

/// Shannon entropy (natural log) of each item's empirical rating histogram.
std::vector<double> item_entropies(const Dataset& d);

}  // namespace agenda
