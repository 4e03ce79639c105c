#pragma once

#include <span>
#include <vector>

#include "weedid/trust/conformal.hpp"
#include "weedid/trust/ood.hpp"

namespace weedid::trust {

struct TrustVerdict {
  double energy = 0.0;
  bool is_ood = false;
  std::vector<SetMember> conformal_set;
};

/// Energy from the logits, conformal set from their softmax.
TrustVerdict make_verdict(std::span<const double> logits, const OodCalibration& ood,
                          const ConformalCalibration& conformal);

}  // namespace weedid::trust
