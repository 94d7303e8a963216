#pragma once

#include <stdexcept>
#include <string>

namespace ltbr {

enum class Err {
  ShapeMismatch,
  DomainError,
  AxisOutOfRange,
  NotScalar,
  DetachedTensor,
  LengthMismatch,
  NonPositiveSigma,
  LabelOutOfRange,
  NonFiniteLoss,
  NonFiniteGradient,
  EmptyDataset,
  EmptyBank,
  EmptyHoldout,
  MissingMapping,
  UnknownKind,
  BatchTooLarge,
  QuotaUnreachable,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  VersionUnsupported,
  CorruptEntry,
  IoError,
  ZeroVector,
  BadDomain,
  InvalidArgument,
  ConfigError,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::DomainError: return "DomainError";
    case Err::AxisOutOfRange: return "AxisOutOfRange";
    case Err::NotScalar: return "NotScalar";
    case Err::DetachedTensor: return "DetachedTensor";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::NonPositiveSigma: return "NonPositiveSigma";
    case Err::LabelOutOfRange: return "LabelOutOfRange";
    case Err::NonFiniteLoss: return "NonFiniteLoss";
    case Err::NonFiniteGradient: return "NonFiniteGradient";
    case Err::EmptyDataset: return "EmptyDataset";
    case Err::EmptyBank: return "EmptyBank";
    case Err::EmptyHoldout: return "EmptyHoldout";
    case Err::MissingMapping: return "MissingMapping";
    case Err::UnknownKind: return "UnknownKind";
    case Err::BatchTooLarge: return "BatchTooLarge";
    case Err::QuotaUnreachable: return "QuotaUnreachable";
    case Err::BadMagic: return "BadMagic";
    case Err::TruncatedFile: return "TruncatedFile";
    case Err::CountMismatch: return "CountMismatch";
    case Err::VersionUnsupported: return "VersionUnsupported";
    case Err::CorruptEntry: return "CorruptEntry";
    case Err::IoError: return "IoError";
    case Err::ZeroVector: return "ZeroVector";
    case Err::BadDomain: return "BadDomain";
    case Err::InvalidArgument: return "InvalidArgument";
    case Err::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Err kind, const std::string& msg)
      : std::runtime_error(std::string(err_name(kind)) + ": " + msg), kind_(kind) {}

  Err kind() const { return kind_; }

 private:
  Err kind_;
};

[[noreturn]] inline void fail(Err kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace ltbr
