#include "ltp/segmentation.h"

#include <algorithm>
#include <limits>
#include <string>

#include "ltp/error.h"

namespace ltp {

size_t AlignedSegmentLength(size_t element_size, size_t max_segment_bytes) {
  if (element_size != 1 && element_size != 2 && element_size != 4 &&
      element_size != 8) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "element_size must be 1, 2, 4 or 8, got " +
                       std::to_string(element_size));
  }
  const size_t len = max_segment_bytes / element_size * element_size;
  if (len == 0) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "max_segment_bytes smaller than one element");
  }
  return len;
}

Segmentation SegmentBuffer(std::span<const uint8_t> data, size_t element_size,
                           std::span<const ByteRange> critical_ranges,
                           size_t max_segment_bytes) {
  if (data.empty()) throw LtpError(ErrorCode::kEmptyBuffer, "nothing to send");
  const size_t seg_len = AlignedSegmentLength(element_size, max_segment_bytes);
  if (data.size() > std::numeric_limits<uint32_t>::max()) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "buffer length does not fit the registration payload");
  }
  const size_t count = (data.size() + seg_len - 1) / seg_len;
  if (count > kMaxSegmentsPerFlow) {
    throw LtpError(ErrorCode::kInvalidArgument, "too many segments for a flow");
  }
  for (const ByteRange& r : critical_ranges) {
    if (r.begin > r.end || r.end > data.size()) {
      throw LtpError(ErrorCode::kInvalidArgument,
                     "critical range [" + std::to_string(r.begin) + ", " +
                         std::to_string(r.end) + ") outside buffer");
    }
  }

  Segmentation out;
  out.total_bytes = data.size();
  out.element_size = element_size;
  out.segment_length = seg_len;
  out.segments.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const size_t offset = i * seg_len;
    out.segments.push_back(Segment{static_cast<uint32_t>(i), offset,
                                   std::min(seg_len, data.size() - offset),
                                   Importance::kNotCritical});
  }
  for (uint32_t seq :
       SegmentsOverlapping(data.size(), seg_len, critical_ranges)) {
    out.segments[seq].importance = Importance::kCritical;
  }
  return out;
}

std::vector<uint32_t> SegmentsOverlapping(size_t total_bytes,
                                          size_t segment_length,
                                          std::span<const ByteRange> ranges) {
  std::vector<uint32_t> seqs;
  if (segment_length == 0) return seqs;
  for (const ByteRange& r : ranges) {
    const size_t end = std::min(r.end, total_bytes);
    if (r.begin >= end) continue;
    for (size_t s = r.begin / segment_length; s * segment_length < end; ++s) {
      seqs.push_back(static_cast<uint32_t>(s));
    }
  }
  std::sort(seqs.begin(), seqs.end());
  seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
  return seqs;
}

std::vector<ByteRange> EdgeRanges(size_t total_bytes, size_t edge_bytes) {
  const size_t edge = std::min(edge_bytes, total_bytes);
  if (edge == 0) return {};
  return {ByteRange{0, edge}, ByteRange{total_bytes - edge, total_bytes}};
}

}  // namespace ltp
