#include "smile/error.hpp"

namespace smile {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kEmptyPrompt: return "EmptyPrompt";
        case ErrorCode::kInfeasibleRequest: return "InfeasibleRequest";
        case ErrorCode::kLengthMismatch: return "LengthMismatch";
        case ErrorCode::kEmptyText: return "EmptyText";
        case ErrorCode::kNonpositiveSigma: return "NonpositiveSigma";
        case ErrorCode::kInvalidNorm: return "InvalidNorm";
        case ErrorCode::kEmptySample: return "EmptySample";
        case ErrorCode::kSampleTooSmall: return "SampleTooSmall";
        case ErrorCode::kMissingPValue: return "MissingPValue";
        case ErrorCode::kAllZeroWeights: return "AllZeroWeights";
        case ErrorCode::kDegenerateVariance: return "DegenerateVariance";
        case ErrorCode::kDegenerateDoF: return "DegenerateDoF";
        case ErrorCode::kBothEmpty: return "BothEmpty";
        case ErrorCode::kShapeMismatch: return "ShapeMismatch";
        case ErrorCode::kNoPositives: return "NoPositives";
        case ErrorCode::kNoNegatives: return "NoNegatives";
        case ErrorCode::kAdapterUnavailable: return "AdapterUnavailable";
        case ErrorCode::kAdapterMalformedResponse: return "AdapterMalformedResponse";
        case ErrorCode::kProtocolViolation: return "ProtocolViolation";
        case ErrorCode::kPartialFailure: return "PartialFailure";
        case ErrorCode::kCacheCorrupt: return "CacheCorrupt";
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
        case ErrorCode::kIoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace smile
