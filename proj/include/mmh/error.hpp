#pragma once

#include <stdexcept>
#include <string>

namespace mmh {

enum class ErrorCode {
  // metadata
  MissingColumn,
  BadInteger,
  EmptyFile,
  MixedSplits,
  MalformedRow,
  IoFailure,
  // signal_io
  BadMagic,
  TruncatedFile,
  NonFiniteValue,
  EmptyClip,
  // processors
  EmptyCorpus,
  HeterogeneousBatch,
  // model
  InvalidSpec,
  ShapeMismatch,
  SequenceTooLong,
  DegenerateBatch,
  NonFiniteLoss,
  NoTrainableParameters,
  UnknownPolicy,
  IncompatibleSpec,
  // metrics
  LengthMismatch,
  EmptyInput,
  NonFinite,
  // pipeline
  MissingSection,
  UnknownKey,
  TypeError,
  ValidationFailed,
  SignalProbeFailed,
  UnknownMetric,
  UnknownModality,
  UnknownTask,
  // metaproc
  MalformedReference,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace mmh
