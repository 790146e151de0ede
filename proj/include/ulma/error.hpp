#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ulma {

enum class Errc {
  UnsupportedFormat,
  CorruptHeader,
  EmptyAudio,
  ClipTooShort,
  InvalidArgument,
  InvalidLevels,
  NoIsmFound,
  InvalidThresholds,
  MissingClass,
  DegenerateSpan,
  InfeasibleLength,
  NoConvergence,
  BadSampleCount,
  TooFewPoints,
  DimMismatch,
  LayerOutOfRange,
  OddDim,
  ShapeMismatch,
  RateMismatch,
  EmptyMask,
  LabelOutOfRange,
  EmptySequence,
  TargetLengthMismatch,
  NonFiniteLoss,
  EmptyDataset,
  MalformedLine,
  MissingPath,
  VersionMismatch,
  IoError,
};

constexpr std::string_view errc_name(Errc e) noexcept {
  switch (e) {
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::CorruptHeader: return "CorruptHeader";
    case Errc::EmptyAudio: return "EmptyAudio";
    case Errc::ClipTooShort: return "ClipTooShort";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidLevels: return "InvalidLevels";
    case Errc::NoIsmFound: return "NoIsmFound";
    case Errc::InvalidThresholds: return "InvalidThresholds";
    case Errc::MissingClass: return "MissingClass";
    case Errc::DegenerateSpan: return "DegenerateSpan";
    case Errc::InfeasibleLength: return "InfeasibleLength";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::BadSampleCount: return "BadSampleCount";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::LayerOutOfRange: return "LayerOutOfRange";
    case Errc::OddDim: return "OddDim";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::RateMismatch: return "RateMismatch";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::TargetLengthMismatch: return "TargetLengthMismatch";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::MissingPath: return "MissingPath";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a stable, machine-readable error kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), detail_(what) {}

  Errc code() const noexcept { return code_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace ulma
