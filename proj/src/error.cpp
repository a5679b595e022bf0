#include "foldmap/error.hpp"

namespace foldmap {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "IoError";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::EmptyStructure: return "EmptyStructure";
    case ErrorKind::EmptySelection: return "EmptySelection";
    case ErrorKind::DuplicateDomain: return "DuplicateDomain";
    case ErrorKind::TooFewAtoms: return "TooFewAtoms";
    case ErrorKind::DisconnectedNetwork: return "DisconnectedNetwork";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::MissingCharges: return "MissingCharges";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::TooFew: return "TooFew";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::HeadMismatch: return "HeadMismatch";
    case ErrorKind::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

ErrorClass classify(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
      return ErrorClass::Io;
    case ErrorKind::MalformedLine:
    case ErrorKind::EmptyStructure:
    case ErrorKind::DuplicateDomain:
    case ErrorKind::BadMagic:
    case ErrorKind::TruncatedPayload:
    case ErrorKind::UnsupportedVersion:
    case ErrorKind::CorruptCheckpoint:
      return ErrorClass::Format;
    case ErrorKind::BadConfig:
    case ErrorKind::EmptySelection:
    case ErrorKind::MissingCharges:
    case ErrorKind::TooFew:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::IndexOutOfRange:
    case ErrorKind::EmptyDataset:
    case ErrorKind::HeadMismatch:
    case ErrorKind::VocabularyMismatch:
    case ErrorKind::LengthMismatch:
    case ErrorKind::TooFewPoints:
      return ErrorClass::Config;
    case ErrorKind::TooFewAtoms:
    case ErrorKind::DisconnectedNetwork:
    case ErrorKind::DegenerateGeometry:
    case ErrorKind::TooSmall:
    case ErrorKind::NumericFailure:
      return ErrorClass::Numeric;
  }
  return ErrorClass::Config;
}

}  // namespace foldmap
