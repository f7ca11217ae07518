#ifndef LTP_LT_THRESHOLD_H_
#define LTP_LT_THRESHOLD_H_

#include <cstdint>
#include <map>
#include <optional>

#include "ltp/time.h"

namespace ltp {

enum class NetworkProfile { kDcn, kWan };

// User-defined slack added to the largest LT threshold to form the deadline.
Duration ProfileConstant(NetworkProfile profile);

// Initial LT threshold for the first batch of an epoch:
// 1.5 * rtprop + model_bytes * 8 / btlbw. Throws
// LtpError(kDegenerateBandwidth) when btlbw_bps is not positive.
Duration InitLtThreshold(Duration rtprop, uint64_t model_bytes,
                         double btlbw_bps);

// Per-link LT thresholds of one receiver and the deadline shared by all of
// its links.
class LtThresholds {
 public:
  explicit LtThresholds(Duration constant) : constant_(constant) {}

  // Starts a new epoch for `peer`: the threshold is reset to `lt` and the
  // best full-completion time forgotten.
  void InitLink(uint32_t peer, Duration lt);

  // A flow from `peer` received 100% of its data in `full_time`. The link's
  // threshold becomes the shortest such time seen this epoch.
  void UpdateLtThreshold(uint32_t peer, Duration full_time);

  Duration lt(uint32_t peer) const;
  std::optional<Duration> best_full_time(uint32_t peer) const;
  // max over links of lt, plus the constant.
  Duration deadline() const;
  Duration constant() const { return constant_; }
  size_t link_count() const { return links_.size(); }

 private:
  struct Link {
    Duration lt{};
    std::optional<Duration> best_full_time;
  };

  Duration constant_;
  std::map<uint32_t, Link> links_;
};

}  // namespace ltp

#endif  // LTP_LT_THRESHOLD_H_
