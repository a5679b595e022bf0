#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace foldmap {

enum class ErrorKind {
  Io,
  MalformedLine,
  EmptyStructure,
  EmptySelection,
  DuplicateDomain,
  TooFewAtoms,
  DisconnectedNetwork,
  DegenerateGeometry,
  MissingCharges,
  TooSmall,
  TooFew,
  BadMagic,
  TruncatedPayload,
  UnsupportedVersion,
  BadConfig,
  ShapeMismatch,
  IndexOutOfRange,
  EmptyDataset,
  HeadMismatch,
  VocabularyMismatch,
  CorruptCheckpoint,
  LengthMismatch,
  TooFewPoints,
  NumericFailure,
};

std::string_view to_string(ErrorKind kind);

/// Failure classes used for process exit codes.
enum class ErrorClass { Io = 2, Format = 3, Config = 4, Numeric = 5 };

ErrorClass classify(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorClass error_class() const noexcept { return classify(kind_); }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace foldmap
