#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace agenda::props {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Randomized sessions run side by side with incremental and direct caches.
PropertyResult incremental_vs_direct(int sessions, std::uint64_t seed);

/// Closed-form risk against the quadrature oracle on random instances.
PropertyResult closed_form_vs_quadrature(int instances, std::uint64_t seed);

/// classify == argmax posterior, and posterior normalization.
PropertyResult classify_matches_posterior(int queries, std::uint64_t seed);

/// Noiseless strong-bias synthetic users: IncFBC accuracy after 5 questions.
PropertyResult synthetic_recovery(int users, std::uint64_t seed);

/// A global rating shift leaves sessions unchanged.
PropertyResult shift_covariance(int users, std::uint64_t seed);

/// Incremental vs direct selection time at |A| = a_size.
PropertyResult timing_speedup(int d, int a_size, double required_speedup, std::uint64_t seed);

}  // namespace agenda::props
