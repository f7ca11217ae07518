#ifndef LTP_SEGMENTATION_H_
#define LTP_SEGMENTATION_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ltp/wire.h"

namespace ltp {

// Half-open byte range [begin, end).
struct ByteRange {
  size_t begin = 0;
  size_t end = 0;

  bool operator==(const ByteRange&) const = default;
};

struct Segment {
  uint32_t seq = 0;
  size_t offset = 0;
  size_t length = 0;
  Importance importance = Importance::kNotCritical;
};

struct Segmentation {
  size_t total_bytes = 0;
  size_t element_size = 1;
  size_t segment_length = 0;
  std::vector<Segment> segments;

  Registration registration() const {
    return Registration{static_cast<uint32_t>(segments.size()),
                        static_cast<uint32_t>(total_bytes)};
  }
};

// Segment length floored to a multiple of element_size, so that no element
// ever straddles two segments and a zero-filled segment never corrupts a
// partial element.
size_t AlignedSegmentLength(size_t element_size,
                            size_t max_segment_bytes = kMaxSegmentBytes);

// Splits `data` into aligned segments; segments overlapping any critical
// range are Critical. Throws LtpError(kEmptyBuffer) for empty data and
// LtpError(kInvalidArgument) for an unsupported element size, an
// out-of-bounds range or a buffer too large for one flow.
Segmentation SegmentBuffer(std::span<const uint8_t> data, size_t element_size,
                           std::span<const ByteRange> critical_ranges,
                           size_t max_segment_bytes = kMaxSegmentBytes);

// Sequence ids of the segments overlapping any of `ranges`.
std::vector<uint32_t> SegmentsOverlapping(size_t total_bytes,
                                          size_t segment_length,
                                          std::span<const ByteRange> ranges);

// The first and last `edge_bytes` of a buffer, clamped to its length.
std::vector<ByteRange> EdgeRanges(size_t total_bytes, size_t edge_bytes);

}  // namespace ltp

#endif  // LTP_SEGMENTATION_H_
