#include "luq/error.hpp"
#include "luq/log.hpp"
#include "luq/parallel.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace luq {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::DimMismatch: return "DimMismatch";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
        case Errc::TooFewSamples: return "TooFewSamples";
        case Errc::DegenerateComponent: return "DegenerateComponent";
        case Errc::ClassTooSmall: return "ClassTooSmall";
        case Errc::MissingClassDensity: return "MissingClassDensity";
        case Errc::Diverged: return "Diverged";
        case Errc::MomentInversionFailed: return "MomentInversionFailed";
        case Errc::MassUnreachable: return "MassUnreachable";
        case Errc::OneClassOnly: return "OneClassOnly";
        case Errc::NotNormalized: return "NotNormalized";
        case Errc::BadLayerIndex: return "BadLayerIndex";
        case Errc::BadKind: return "BadKind";
        case Errc::Format: return "Format";
        case Errc::Io: return "Io";
        case Errc::Config: return "Config";
    }
    return "Unknown";
}

namespace {
std::mutex g_sink_mutex;
WarningSink g_sink;
}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(g_sink_mutex);
    std::swap(g_sink, sink);
    return sink;
}

void warn(std::string_view message) {
    std::lock_guard lock(g_sink_mutex);
    if (g_sink) {
        g_sink(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

std::size_t thread_limit() {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("LUQ_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) return static_cast<std::size_t>(v);
    }
    return hw;
}

}  // namespace luq
