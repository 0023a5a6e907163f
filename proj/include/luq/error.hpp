#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace luq {

enum class Errc {
    InvalidArgument,
    DimMismatch,
    EmptyInput,
    NotPositiveDefinite,
    TooFewSamples,
    DegenerateComponent,
    ClassTooSmall,
    MissingClassDensity,
    Diverged,
    MomentInversionFailed,
    MassUnreachable,
    OneClassOnly,
    NotNormalized,
    BadLayerIndex,
    BadKind,
    Format,
    Io,
    Config,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure raised by the toolkit carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace luq
