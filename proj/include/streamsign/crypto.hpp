#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

struct evp_pkey_st;
struct evp_md_ctx_st;

namespace streamsign::crypto {

namespace algorithm {
inline constexpr std::string_view sha256 = "http://www.w3.org/2001/04/xmlenc#sha256";
inline constexpr std::string_view sha512 = "http://www.w3.org/2001/04/xmlenc#sha512";
inline constexpr std::string_view rsa_sha256 = "http://www.w3.org/2001/04/xmldsig-more#rsa-sha256";
inline constexpr std::string_view aes256_gcm = "http://www.w3.org/2009/xmlenc11#aes256-gcm";
} // namespace algorithm

/// Fills a buffer with random bytes. The default draws from the OS CSPRNG.
using EntropySource = std::function<void(std::span<unsigned char>)>;
EntropySource system_entropy();
/// Deterministic entropy for reproducible tests; never use for keys or nonces.
EntropySource seeded_entropy(std::uint64_t seed);

std::string random_bytes(std::size_t n);
std::string to_hex(std::string_view bytes);

/// Incremental message digest identified by its XML-Signature algorithm URI.
class Digest {
public:
    /// Throws UnsupportedAlgorithm for unknown URIs.
    explicit Digest(std::string_view algorithm_uri);
    ~Digest();
    Digest(Digest&&) noexcept;
    Digest& operator=(Digest&&) noexcept;
    Digest(const Digest&) = delete;
    Digest& operator=(const Digest&) = delete;

    void update(std::string_view data);
    /// Returns the raw digest; the object cannot be updated afterwards.
    std::string finish();

    static std::size_t length(std::string_view algorithm_uri);
    static bool supported(std::string_view algorithm_uri) noexcept;
    static std::string compute(std::string_view algorithm_uri, std::string_view data);

private:
    evp_md_ctx_st* ctx_ = nullptr;
};

struct PkeyDeleter {
    void operator()(evp_pkey_st* key) const noexcept;
};
using Pkey = std::unique_ptr<evp_pkey_st, PkeyDeleter>;

/// Keys for one signing or verifying party. The private key is absent on a
/// pure verifier; the wrap key is present only when strict mode is in use.
struct KeyMaterial {
    Pkey signing_key;
    Pkey verification_key;
    std::optional<std::string> wrap_key;
    /// Bare identifier carried in ds:KeyInfo.
    std::string key_name;

    /// RSA-2048 pair plus a random 256-bit wrap key.
    static KeyMaterial generate();
    /// Private key PEM (public half derived from it), or public key PEM.
    /// Optionally a wrap key file holding one base64 line. Runs a sign/verify
    /// self-test when both halves are present.
    static KeyMaterial load(const std::filesystem::path& key_pem,
                            const std::optional<std::filesystem::path>& wrap_key_file = std::nullopt);
    /// Writes private.pem, public.pem and wrap.key into dir.
    void save(const std::filesystem::path& dir) const;

    KeyMaterial public_only() const;
    void self_test() const;
};

/// Identifier derived from the public key: "rsa-" + first 16 hex digits of
/// SHA-256 over its DER encoding.
std::string key_fingerprint(const Pkey& public_key);

std::string sign(std::string_view algorithm_uri, const Pkey& key, std::string_view data);
bool verify_signature(std::string_view algorithm_uri, const Pkey& key, std::string_view data,
                      std::string_view signature);

/// AES-256-GCM; output is nonce(12) || ciphertext || tag(16). A fresh nonce is
/// drawn for every call.
std::string aead_encrypt(std::string_view key, std::string_view plaintext);
/// Throws DecryptFailed on any authentication failure.
std::string aead_decrypt(std::string_view key, std::string_view sealed);

} // namespace streamsign::crypto
