#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tensegrity {

enum class ErrorCode {
    usage,
    degenerate_geometry,
    degenerate_member,
    mechanism_risk,
    cannot_fuse,
    incomplete_basis,
    numeric_degeneracy,
    no_solution,
    ambiguous_typology,
    classification,
    out_of_domain,
    parse,
    io,
    not_found,
    invariant_violation,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string detail = {})
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace tensegrity
