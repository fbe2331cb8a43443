#pragma once

#include <stdexcept>
#include <string>

namespace reorm {

enum class Errc {
    invalid_argument,
    io_error,
    format_error,        // malformed file contents (PNG, JSON, manifest, fixtures)
    dimension_mismatch,
    malformed_response,  // reasoner output not parseable; pipeline may re-prompt
    missing_fixture,
    transport_error,
    analysis_failed,
    no_mask_found,
    provider_unavailable,
    config_error,
    internal_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, std::string message) {
    throw Error(code, std::move(message));
}

} // namespace reorm
