#include "streamsign/error.hpp"

namespace streamsign {

namespace {

std::string format_message(Errc code, const std::string& message, std::optional<std::size_t> position)
{
    std::string out = to_string(code);
    out += ": ";
    out += message;
    if (position) {
        out += " (at byte ";
        out += std::to_string(*position);
        out += ")";
    }
    return out;
}

} // namespace

const char* to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::malformed_xml: return "MalformedXml";
    case Errc::unsupported_construct: return "UnsupportedConstruct";
    case Errc::sink_error: return "SinkError";
    case Errc::source_error: return "SourceError";
    case Errc::body_read_error: return "BodyReadError";
    case Errc::missing_boundary: return "MissingBoundary";
    case Errc::truncated_package: return "TruncatedPackage";
    case Errc::malformed_headers: return "MalformedHeaders";
    case Errc::boundary_collision: return "BoundaryCollision";
    case Errc::invalid_base64: return "InvalidBase64";
    case Errc::path_not_found: return "PathNotFound";
    case Errc::duplicate_path: return "DuplicatePath";
    case Errc::unresolved_reference: return "UnresolvedReference";
    case Errc::duplicate_content_id: return "DuplicateContentId";
    case Errc::missing_digest: return "MissingDigest";
    case Errc::key_error: return "KeyError";
    case Errc::malformed_message: return "MalformedMessage";
    case Errc::unsupported_algorithm: return "UnsupportedAlgorithm";
    case Errc::decrypt_failed: return "DecryptFailed";
    case Errc::bind_error: return "BindError";
    case Errc::connect_error: return "ConnectError";
    case Errc::io_error: return "IoError";
    case Errc::server_unavailable: return "ServerUnavailable";
    case Errc::verification_failed_during_bench: return "VerificationFailedDuringBench";
    case Errc::empty_report: return "EmptyReport";
    case Errc::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& message, std::optional<std::size_t> position)
    : std::runtime_error(format_message(code, message, position)), code_(code), position_(position)
{
}

} // namespace streamsign
