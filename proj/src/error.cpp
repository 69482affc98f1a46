// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/error.hpp"

namespace promptforge {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kMissingApiKey: return "MissingApiKey";
    case ErrorCode::kTransportError: return "TransportError";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kNoSynonyms: return "NoSynonyms";
    case ErrorCode::kInsufficientPairs: return "InsufficientPairs";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kSequenceTooLong: return "SequenceTooLong";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kValueHeadDisabled: return "ValueHeadDisabled";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptySampleSet: return "EmptySampleSet";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kZeroSamples: return "ZeroSamples";
    case ErrorCode::kEmptyPrompt: return "EmptyPrompt";
    case ErrorCode::kTooManyCandidates: return "TooManyCandidates";
    case ErrorCode::kEmptyPromptSet: return "EmptyPromptSet";
    case ErrorCode::kNonFiniteRatio: return "NonFiniteRatio";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kCategoryMismatch: return "CategoryMismatch";
  }
  return "Unknown";
}

}  // namespace promptforge
