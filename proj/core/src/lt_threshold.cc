#include "ltp/lt_threshold.h"

#include <algorithm>
#include <string>

#include "ltp/error.h"

namespace ltp {

Duration ProfileConstant(NetworkProfile profile) {
  switch (profile) {
    case NetworkProfile::kDcn: return std::chrono::milliseconds(30);
    case NetworkProfile::kWan: return std::chrono::milliseconds(100);
  }
  return std::chrono::milliseconds(30);
}

Duration InitLtThreshold(Duration rtprop, uint64_t model_bytes,
                         double btlbw_bps) {
  if (!(btlbw_bps > 0)) {
    throw LtpError(ErrorCode::kDegenerateBandwidth,
                   "bottleneck bandwidth estimate is " +
                       std::to_string(btlbw_bps));
  }
  const double transfer_s = static_cast<double>(model_bytes) * 8.0 / btlbw_bps;
  return rtprop * 3 / 2 + FromSeconds(transfer_s);
}

void LtThresholds::InitLink(uint32_t peer, Duration lt) {
  links_[peer] = Link{lt, std::nullopt};
}

void LtThresholds::UpdateLtThreshold(uint32_t peer, Duration full_time) {
  Link& link = links_[peer];
  if (!link.best_full_time || full_time < *link.best_full_time) {
    link.best_full_time = full_time;
  }
  link.lt = *link.best_full_time;
}

Duration LtThresholds::lt(uint32_t peer) const {
  auto it = links_.find(peer);
  if (it == links_.end()) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "no LT threshold for link " + std::to_string(peer));
  }
  return it->second.lt;
}

std::optional<Duration> LtThresholds::best_full_time(uint32_t peer) const {
  auto it = links_.find(peer);
  if (it == links_.end()) return std::nullopt;
  return it->second.best_full_time;
}

Duration LtThresholds::deadline() const {
  Duration max_lt = Duration::zero();
  for (const auto& [peer, link] : links_) max_lt = std::max(max_lt, link.lt);
  return max_lt + constant_;
}

}  // namespace ltp
