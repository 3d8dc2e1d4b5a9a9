#include "epiflow/error.hpp"

namespace epiflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidIntrinsics: return "InvalidIntrinsics";
    case ErrorCode::ChartSingularity: return "ChartSingularity";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::InvalidPolynomial: return "InvalidPolynomial";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EstimationFailed: return "EstimationFailed";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::EpipoleSingularity: return "EpipoleSingularity";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::CheiralityAmbiguous: return "CheiralityAmbiguous";
    case ErrorCode::TriangulationDegenerate: return "TriangulationDegenerate";
    case ErrorCode::InsufficientTrajectory: return "InsufficientTrajectory";
    case ErrorCode::DegenerateScene: return "DegenerateScene";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace epiflow
