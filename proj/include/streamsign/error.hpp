#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace streamsign {

enum class Errc {
    malformed_xml,
    unsupported_construct,
    sink_error,
    source_error,
    body_read_error,
    missing_boundary,
    truncated_package,
    malformed_headers,
    boundary_collision,
    invalid_base64,
    path_not_found,
    duplicate_path,
    unresolved_reference,
    duplicate_content_id,
    missing_digest,
    key_error,
    malformed_message,
    unsupported_algorithm,
    decrypt_failed,
    bind_error,
    connect_error,
    io_error,
    server_unavailable,
    verification_failed_during_bench,
    empty_report,
    invalid_argument,
};

/// Stable, greppable identifier such as "TruncatedPackage".
const char* to_string(Errc code) noexcept;

/// The single exception type thrown by the library. Carries a machine-readable
/// code and, for parse errors, the byte offset at which the problem was found.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message, std::optional<std::size_t> position = std::nullopt);

    Errc code() const noexcept { return code_; }
    std::optional<std::size_t> position() const noexcept { return position_; }

private:
    Errc code_;
    std::optional<std::size_t> position_;
};

} // namespace streamsign
