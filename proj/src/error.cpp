#include "mmg/error.hpp"

namespace mmg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DegenerateElement: return "DegenerateElement";
    case ErrorCode::DisconnectedMesh: return "DisconnectedMesh";
    case ErrorCode::NonDiskTopology: return "NonDiskTopology";
    case ErrorCode::NonManifoldEdge: return "NonManifoldEdge";
    case ErrorCode::AmbiguousCorners: return "AmbiguousCorners";
    case ErrorCode::EmptyRole: return "EmptyRole";
    case ErrorCode::AnchorMismatch: return "AnchorMismatch";
    case ErrorCode::SolverDivergence: return "SolverDivergence";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::NonDecreasingSizes: return "NonDecreasingSizes";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EigSolverFailure: return "EigSolverFailure";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TopologyDigestMismatch: return "TopologyDigestMismatch";
    case ErrorCode::RatioOutOfRange: return "RatioOutOfRange";
    case ErrorCode::ParamOutOfBounds: return "ParamOutOfBounds";
    case ErrorCode::SelfIntersecting: return "SelfIntersecting";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace mmg
