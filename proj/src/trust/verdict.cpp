#include "weedid/trust/verdict.hpp"

#include "weedid/nnkit/ops.hpp"

namespace weedid::trust {

TrustVerdict make_verdict(std::span<const double> logits, const OodCalibration& ood,
                          const ConformalCalibration& conformal) {
  const auto decision = ood_decide(logits, ood);
  const auto probs = nn::softmax_stable(logits);
  return {decision.energy, decision.is_ood, conformal_set(probs, conformal)};
}

}  // namespace weedid::trust
