#include "maskident/error.hpp"

namespace maskident {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::InvalidParams: return "invalid parameters";
    case ErrorKind::DegenerateChain: return "degenerate chain";
    case ErrorKind::GenerationFailure: return "generation failure";
    case ErrorKind::UnknownFixture: return "unknown fixture";
    case ErrorKind::Degeneracy: return "degeneracy";
    case ErrorKind::UnsupportedTask: return "unsupported task";
    case ErrorKind::InvalidTask: return "invalid task";
    case ErrorKind::SizeLimit: return "size limit";
    case ErrorKind::NonAdjacent: return "non-adjacent task";
    case ErrorKind::Inconsistent: return "inconsistent recovery";
    case ErrorKind::Precondition: return "precondition failure";
    case ErrorKind::DistinctnessFailure: return "distinctness failure";
    case ErrorKind::SignResolution: return "sign resolution failure";
    case ErrorKind::ConcentrationFailure: return "concentration failure";
    case ErrorKind::Ambiguity: return "ambiguity";
    case ErrorKind::Conditioning: return "conditioning failure";
    case ErrorKind::AngleTooLarge: return "angle too large";
    case ErrorKind::InfeasiblePower: return "infeasible power construction";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "I/O error";
  }
  return "error";
}

}  // namespace maskident
