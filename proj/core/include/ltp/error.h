#ifndef LTP_ERROR_H_
#define LTP_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace ltp {

enum class ErrorCode {
  kMalformedHeader,
  kMalformedPacket,
  kEmptyBuffer,
  kInvalidArgument,
  kUnknownSeq,
  kUnknownFlow,
  kDegenerateBandwidth,
  kOversizedDatagram,
  kWorkerUnreachable,
  kRoleError,
  kConfig,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

class LtpError : public std::runtime_error {
 public:
  LtpError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kMalformedPacket: return "MalformedPacket";
    case ErrorCode::kEmptyBuffer: return "EmptyBuffer";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnknownSeq: return "UnknownSeq";
    case ErrorCode::kUnknownFlow: return "UnknownFlow";
    case ErrorCode::kDegenerateBandwidth: return "DegenerateBandwidth";
    case ErrorCode::kOversizedDatagram: return "OversizedDatagram";
    case ErrorCode::kWorkerUnreachable: return "WorkerUnreachable";
    case ErrorCode::kRoleError: return "RoleError";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace ltp

#endif  // LTP_ERROR_H_
