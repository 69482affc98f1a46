// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promptforge {

enum class ErrorCode {
  kEmptyCorpus,
  kIndexOutOfRange,
  kMalformedRecord,
  kIoError,
  kEmptyBatch,
  kMissingApiKey,
  kTransportError,
  kRateLimited,
  kMalformedResponse,
  kNoSynonyms,
  kInsufficientPairs,
  kInvalidConfig,
  kSequenceTooLong,
  kNonFiniteLoss,
  kValueHeadDisabled,
  kNonFiniteGradient,
  kEmptyDataset,
  kEmptySampleSet,
  kNonFiniteInput,
  kZeroSamples,
  kEmptyPrompt,
  kTooManyCandidates,
  kEmptyPromptSet,
  kNonFiniteRatio,
  kLengthMismatch,
  kEmptyInput,
  kCategoryMismatch,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the pair reader; `line()` is 1-based.
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& detail)
      : Error(ErrorCode::kMalformedRecord, "line " + std::to_string(line) + ": " + detail),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace promptforge
