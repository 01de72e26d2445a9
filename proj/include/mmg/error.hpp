#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmg {

enum class ErrorCode {
  ParseError,
  DegenerateElement,
  DisconnectedMesh,
  NonDiskTopology,
  NonManifoldEdge,
  AmbiguousCorners,
  EmptyRole,
  AnchorMismatch,
  SolverDivergence,
  SingularSystem,
  OutsideDomain,
  DomainMismatch,
  AlphaOutOfRange,
  NonDecreasingSizes,
  KTooLarge,
  EigSolverFailure,
  EmptySelection,
  IndexOutOfRange,
  ShapeMismatch,
  TopologyDigestMismatch,
  RatioOutOfRange,
  ParamOutOfBounds,
  SelfIntersecting,
  EmptyInput,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace mmg
