#include "mmh/error.hpp"

namespace mmh {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::BadInteger: return "BadInteger";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::MixedSplits: return "MixedSplits";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::HeterogeneousBatch: return "HeterogeneousBatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NoTrainableParameters: return "NoTrainableParameters";
    case ErrorCode::UnknownPolicy: return "UnknownPolicy";
    case ErrorCode::IncompatibleSpec: return "IncompatibleSpec";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::SignalProbeFailed: return "SignalProbeFailed";
    case ErrorCode::UnknownMetric: return "UnknownMetric";
    case ErrorCode::UnknownModality: return "UnknownModality";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::MalformedReference: return "MalformedReference";
  }
  return "Unknown";
}

}  // namespace mmh
