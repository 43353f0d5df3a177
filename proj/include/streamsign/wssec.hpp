#pragma once

#include "streamsign/base64.hpp"
#include "streamsign/crypto.hpp"
#include "streamsign/io.hpp"
#include "streamsign/mime.hpp"
#include "streamsign/xml.hpp"
#include "streamsign/xop.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace streamsign::wssec {

namespace ns {
inline constexpr std::string_view soap12 = "http://www.w3.org/2003/05/soap-envelope";
inline constexpr std::string_view soap11 = "http://schemas.xmlsoap.org/soap/envelope/";
inline constexpr std::string_view wsse =
    "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-secext-1.0.xsd";
inline constexpr std::string_view wsu =
    "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-utility-1.0.xsd";
inline constexpr std::string_view ds = "http://www.w3.org/2000/09/xmldsig#";
inline constexpr std::string_view xenc = "http://www.w3.org/2001/04/xmlenc#";
} // namespace ns

/// Identifier of the restricted canonical form implemented by xml::canonicalize.
inline constexpr std::string_view c14n_algorithm = "urn:streamsign:c14n:restricted";
inline constexpr std::string_view encrypted_element_type = "http://www.w3.org/2001/04/xmlenc#Element";

enum class Mode { blocking, streaming_lax, streaming_strict };
const char* to_string(Mode mode) noexcept;
/// Accepts "blocking", "streaming_lax", "streaming_strict".
Mode parse_mode(std::string_view text);

enum class TargetKind { envelope_element, xop_part };

struct Reference {
    std::string uri; ///< "#id" or "cid:id"
    std::string digest_algorithm;
    std::string digest_value; ///< raw bytes; empty until computed
    TargetKind target_kind = TargetKind::envelope_element;

    bool operator==(const Reference&) const = default;
};

struct SignatureManifest {
    std::string canonicalization_algorithm = std::string(c14n_algorithm);
    std::string signature_algorithm = std::string(crypto::algorithm::rsa_sha256);
    std::vector<Reference> references;

    bool operator==(const SignatureManifest&) const = default;
};

/// Incremental digest of prefix || base64(binary) || suffix.
class StreamingReferenceDigest {
public:
    StreamingReferenceDigest(std::string_view algorithm, std::string_view prefix, std::string suffix);
    void update(std::string_view binary);
    std::string finish();
    std::uint64_t binary_bytes() const noexcept { return bytes_; }

private:
    crypto::Digest digest_;
    xop::Base64Encoder encoder_;
    std::string suffix_;
    std::string scratch_;
    std::uint64_t bytes_ = 0;
};

std::string digest_reference_streaming(std::string_view element_prefix, ByteSource& binary,
                                       std::string_view element_suffix, std::string_view algorithm,
                                       std::size_t chunk = 0);

/// ds:SignedInfo tree. Throws MissingDigest when a reference has no value and
/// InvalidArgument when the manifest is empty or has duplicate URIs.
xml::XmlNode build_signed_info(const SignatureManifest& manifest);

/// Structural inverse of build_signed_info. Throws MalformedMessage or UnsupportedAlgorithm.
SignatureManifest parse_signed_info(const xml::XmlNode& signed_info);

/// Complete ds:Signature: SignedInfo, SignatureValue over its canonical form, KeyInfo/KeyName.
xml::XmlNode build_signature(const SignatureManifest& manifest, const crypto::KeyMaterial& keys);

struct EncryptedSignature {
    xml::XmlNode placeholder; ///< xenc:EncryptedData with an xop:Include in CipherValue
    std::string ciphertext;   ///< nonce || ciphertext || tag of canonicalize(signature)
};
EncryptedSignature encrypt_signature(const xml::XmlNode& signature, std::string_view wrap_key,
                                     std::string_view content_id);
/// Decrypts and parses; the plaintext must be in canonical form.
xml::XmlNode decrypt_signature(std::string_view ciphertext, std::string_view wrap_key);

struct SignOptions {
    std::string digest_algorithm = std::string(crypto::algorithm::sha256);
    std::string body_id = "Body";
    /// Boundary and Content-ID source. Nonces never come from here.
    crypto::EntropySource entropy = crypto::system_entropy();
    mime::WriterOptions writer;
    /// Origin for the timing fields; defaults to the call time.
    std::optional<std::chrono::steady_clock::time_point> session_start;
    /// Receives the multipart Content-Type value before the first byte is
    /// written, for transports that send headers ahead of the body.
    std::function<void(const std::string&)> on_content_type;
};

struct SignTiming {
    double digest_done_s = 0; ///< all reference digests known
    double first_byte_s = 0;  ///< first byte handed to the sink
    double last_byte_s = 0;
};

/// What a signing session produced. The wire bytes themselves went to the sink.
struct SignedMessage {
    Mode mode = Mode::streaming_strict;
    std::string root; ///< canonical root part as sent
    SignatureManifest manifest;
    std::string boundary;
    std::string root_content_id;
    std::vector<std::string> part_ids; ///< payload parts in wire order
    std::string signature_content_id;  ///< empty in blocking mode
    std::string content_type;          ///< multipart/related header value
    std::uint64_t bytes_written = 0;
    SignTiming timing;
};

/// Adds the Header and wsse:Security blocks, strips inter-element whitespace
/// at Envelope and Header level, and gives Body and every other header block
/// a wsu:Id. Returns the ids to be referenced, Body first.
std::vector<std::string> prepare_envelope(xml::XmlNode& envelope, std::string_view body_id = "Body");

SignedMessage sign_blocking(const xml::XmlNode& envelope, const xop::Binaries& binaries,
                            const crypto::KeyMaterial& keys, ByteSink& sink, const SignOptions& options = {});

SignedMessage sign_streaming(const xml::XmlNode& envelope, const xop::Binaries& binaries,
                             const crypto::KeyMaterial& keys, bool strict, ByteSink& sink,
                             const SignOptions& options = {});

struct ReferenceCheck {
    std::string uri;
    std::string computed_digest;
    std::string declared_digest;
    bool match = false;
};

struct VerificationReport {
    bool signature_valid = false;
    std::vector<ReferenceCheck> per_reference;
    Mode mode_detected = Mode::blocking;
    /// Empty when valid; otherwise the first reason verification failed.
    std::string failure_reason;
};

struct VerifyOptions {
    /// Payload digests are computed as bytes arrive, before SignedInfo is seen
    /// in the streaming modes, so the acceptable algorithms are fixed up front.
    std::vector<std::string> digest_algorithms = {std::string(crypto::algorithm::sha256)};
    std::optional<mime::Boundary> boundary;
    std::size_t chunk_size = 0;
};

/// Single pass over the package; payload parts are never buffered. Throws
/// MalformedMessage (broken framing included), UnresolvedReference,
/// UnsupportedAlgorithm, DecryptFailed, or KeyError. A well-formed message
/// whose digests or signature do not check out yields a report instead.
VerificationReport verify(ByteSource& source, const crypto::KeyMaterial& keys, const VerifyOptions& options = {});

/// One-line JSON summary with hex digests.
std::string to_json(const VerificationReport& report);

} // namespace streamsign::wssec
