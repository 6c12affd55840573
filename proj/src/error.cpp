#include "tensegrity/error.hpp"

namespace tensegrity {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::usage: return "usage";
    case ErrorCode::degenerate_geometry: return "degenerate-geometry";
    case ErrorCode::degenerate_member: return "degenerate-member";
    case ErrorCode::mechanism_risk: return "mechanism-risk";
    case ErrorCode::cannot_fuse: return "cannot-fuse";
    case ErrorCode::incomplete_basis: return "incomplete-basis";
    case ErrorCode::numeric_degeneracy: return "numeric-degeneracy";
    case ErrorCode::no_solution: return "no-solution-found";
    case ErrorCode::ambiguous_typology: return "ambiguous-typology";
    case ErrorCode::classification: return "classification";
    case ErrorCode::out_of_domain: return "out-of-domain";
    case ErrorCode::parse: return "parse";
    case ErrorCode::io: return "io";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::invariant_violation: return "invariant-violation";
    }
    return "unknown";
}

}  // namespace tensegrity
