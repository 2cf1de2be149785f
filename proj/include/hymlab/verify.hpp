#ifndef HYMLAB_VERIFY_HPP
#define HYMLAB_VERIFY_HPP

// Property suites run by `hymlab verify`: curvature duality, positivity
// hierarchy, frame invariance, linearization against finite differences, the
// symbol inverse and the eigenvalue identity.

#include "hymlab/config.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace hymlab {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured defect (or observed order)
  double tolerance = 0.0;  // threshold it was compared against
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  double seconds = 0.0;
  bool all_passed() const;
  nlohmann::json to_json() const;
};

VerifyReport run_verify(const VerifyConfig& cfg, std::uint64_t seed);

/// Metric whose periodic form is exp(H), H a random smooth Hermitian field of the given amplitude.
MetricField random_smooth_metric(const BundlePtr& bundle, double amplitude, std::uint64_t seed);

}  // namespace hymlab

#endif  // HYMLAB_VERIFY_HPP
