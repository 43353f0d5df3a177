#include "streamsign/crypto.hpp"

#include "streamsign/base64.hpp"
#include "streamsign/error.hpp"

#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rand.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace streamsign::crypto {

namespace {

std::string openssl_reason()
{
    unsigned long code = ERR_get_error();
    ERR_clear_error();
    if (code == 0) {
        return "unknown OpenSSL error";
    }
    char buf[256];
    ERR_error_string_n(code, buf, sizeof buf);
    return buf;
}

const EVP_MD* digest_for(std::string_view uri) noexcept
{
    if (uri == algorithm::sha256) {
        return EVP_sha256();
    }
    if (uri == algorithm::sha512) {
        return EVP_sha512();
    }
    return nullptr;
}

const EVP_MD* signature_digest_for(std::string_view uri)
{
    if (uri == algorithm::rsa_sha256) {
        return EVP_sha256();
    }
    throw Error(Errc::unsupported_algorithm, "signature algorithm '" + std::string(uri) + "'");
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw Error(Errc::key_error, "cannot open key file '" + path.string() + "'");
    }
    return f;
}

struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const noexcept { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* c) const noexcept { EVP_MD_CTX_free(c); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

constexpr std::size_t nonce_size = 12;
constexpr std::size_t tag_size = 16;
constexpr std::size_t wrap_key_size = 32;

} // namespace

EntropySource system_entropy()
{
    return [](std::span<unsigned char> out) {
        if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
            throw Error(Errc::key_error, "random generator failure: " + openssl_reason());
        }
    };
}

EntropySource seeded_entropy(std::uint64_t seed)
{
    auto engine = std::make_shared<std::mt19937_64>(seed);
    return [engine](std::span<unsigned char> out) {
        for (auto& b : out) {
            b = static_cast<unsigned char>((*engine)() & 0xff);
        }
    };
}

std::string random_bytes(std::size_t n)
{
    std::string out(n, '\0');
    system_entropy()(std::span<unsigned char>(reinterpret_cast<unsigned char*>(out.data()), n));
    return out;
}

std::string to_hex(std::string_view bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out += digits[c >> 4];
        out += digits[c & 0xf];
    }
    return out;
}

Digest::Digest(std::string_view algorithm_uri)
{
    const EVP_MD* md = digest_for(algorithm_uri);
    if (md == nullptr) {
        throw Error(Errc::unsupported_algorithm, "digest algorithm '" + std::string(algorithm_uri) + "'");
    }
    ctx_ = EVP_MD_CTX_new();
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, md, nullptr) != 1) {
        EVP_MD_CTX_free(ctx_);
        throw Error(Errc::unsupported_algorithm, "digest init failed: " + openssl_reason());
    }
}

Digest::~Digest() { EVP_MD_CTX_free(ctx_); }

Digest::Digest(Digest&& other) noexcept : ctx_(other.ctx_) { other.ctx_ = nullptr; }

Digest& Digest::operator=(Digest&& other) noexcept
{
    if (this != &other) {
        EVP_MD_CTX_free(ctx_);
        ctx_ = other.ctx_;
        other.ctx_ = nullptr;
    }
    return *this;
}

void Digest::update(std::string_view data)
{
    if (!data.empty() && EVP_DigestUpdate(ctx_, data.data(), data.size()) != 1) {
        throw Error(Errc::source_error, "digest update failed: " + openssl_reason());
    }
}

std::string Digest::finish()
{
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, out, &len) != 1) {
        throw Error(Errc::source_error, "digest final failed: " + openssl_reason());
    }
    return std::string(reinterpret_cast<char*>(out), len);
}

std::size_t Digest::length(std::string_view algorithm_uri)
{
    const EVP_MD* md = digest_for(algorithm_uri);
    if (md == nullptr) {
        throw Error(Errc::unsupported_algorithm, "digest algorithm '" + std::string(algorithm_uri) + "'");
    }
    return static_cast<std::size_t>(EVP_MD_get_size(md));
}

bool Digest::supported(std::string_view algorithm_uri) noexcept { return digest_for(algorithm_uri) != nullptr; }

std::string Digest::compute(std::string_view algorithm_uri, std::string_view data)
{
    Digest d(algorithm_uri);
    d.update(data);
    return d.finish();
}

void PkeyDeleter::operator()(evp_pkey_st* key) const noexcept { EVP_PKEY_free(key); }

std::string key_fingerprint(const Pkey& public_key)
{
    unsigned char* der = nullptr;
    int len = i2d_PUBKEY(public_key.get(), &der);
    if (len <= 0) {
        throw Error(Errc::key_error, "cannot encode public key: " + openssl_reason());
    }
    std::string digest = Digest::compute(algorithm::sha256, std::string_view(reinterpret_cast<char*>(der), len));
    OPENSSL_free(der);
    return "rsa-" + to_hex(digest).substr(0, 16);
}

namespace {

Pkey public_half(const Pkey& key)
{
    unsigned char* der = nullptr;
    int len = i2d_PUBKEY(key.get(), &der);
    if (len <= 0) {
        throw Error(Errc::key_error, "cannot extract public key: " + openssl_reason());
    }
    const unsigned char* p = der;
    Pkey pub(d2i_PUBKEY(nullptr, &p, len));
    OPENSSL_free(der);
    if (!pub) {
        throw Error(Errc::key_error, "cannot extract public key: " + openssl_reason());
    }
    return pub;
}

std::string load_wrap_key(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::key_error, "cannot open wrap key '" + path.string() + "'");
    }
    std::string line;
    std::getline(in, line);
    std::string key;
    try {
        key = xop::base64_decode(line);
    } catch (const Error&) {
        throw Error(Errc::key_error, "wrap key file is not base64");
    }
    if (key.size() != wrap_key_size) {
        throw Error(Errc::key_error, "wrap key must be 32 bytes, got " + std::to_string(key.size()));
    }
    return key;
}

} // namespace

KeyMaterial KeyMaterial::generate()
{
    KeyMaterial km;
    km.signing_key.reset(EVP_PKEY_Q_keygen(nullptr, nullptr, "RSA", static_cast<size_t>(2048)));
    if (!km.signing_key) {
        throw Error(Errc::key_error, "RSA key generation failed: " + openssl_reason());
    }
    km.verification_key = public_half(km.signing_key);
    km.wrap_key = random_bytes(wrap_key_size);
    km.key_name = key_fingerprint(km.verification_key);
    return km;
}

KeyMaterial KeyMaterial::load(const std::filesystem::path& key_pem,
                              const std::optional<std::filesystem::path>& wrap_key_file)
{
    KeyMaterial km;
    {
        FilePtr f = open_file(key_pem, "rb");
        km.signing_key.reset(PEM_read_PrivateKey(f.get(), nullptr, nullptr, nullptr));
    }
    ERR_clear_error();
    if (km.signing_key) {
        km.verification_key = public_half(km.signing_key);
    } else {
        FilePtr f = open_file(key_pem, "rb");
        km.verification_key.reset(PEM_read_PUBKEY(f.get(), nullptr, nullptr, nullptr));
        if (!km.verification_key) {
            throw Error(Errc::key_error, "'" + key_pem.string() + "' holds neither a private nor a public PEM key");
        }
    }
    if (EVP_PKEY_get_base_id(km.verification_key.get()) != EVP_PKEY_RSA) {
        throw Error(Errc::key_error, "only RSA keys are supported");
    }
    if (wrap_key_file) {
        km.wrap_key = load_wrap_key(*wrap_key_file);
    }
    km.key_name = key_fingerprint(km.verification_key);
    km.self_test();
    return km;
}

void KeyMaterial::save(const std::filesystem::path& dir) const
{
    std::filesystem::create_directories(dir);
    if (signing_key) {
        FilePtr f = open_file(dir / "private.pem", "wb");
        if (PEM_write_PrivateKey(f.get(), signing_key.get(), nullptr, nullptr, 0, nullptr, nullptr) != 1) {
            throw Error(Errc::io_error, "cannot write private key: " + openssl_reason());
        }
        std::filesystem::permissions(dir / "private.pem", std::filesystem::perms::owner_read |
                                                               std::filesystem::perms::owner_write);
    }
    {
        FilePtr f = open_file(dir / "public.pem", "wb");
        if (PEM_write_PUBKEY(f.get(), verification_key.get()) != 1) {
            throw Error(Errc::io_error, "cannot write public key: " + openssl_reason());
        }
    }
    if (wrap_key) {
        std::ofstream out(dir / "wrap.key");
        out << xop::base64_encode(*wrap_key) << '\n';
        if (!out) {
            throw Error(Errc::io_error, "cannot write wrap key");
        }
    }
}

KeyMaterial KeyMaterial::public_only() const
{
    KeyMaterial km;
    km.verification_key = public_half(verification_key);
    km.wrap_key = wrap_key;
    km.key_name = key_name;
    return km;
}

void KeyMaterial::self_test() const
{
    if (!signing_key || !verification_key) {
        return;
    }
    constexpr std::string_view probe = "key material self-test";
    std::string sig = sign(algorithm::rsa_sha256, signing_key, probe);
    if (!verify_signature(algorithm::rsa_sha256, verification_key, probe, sig)) {
        throw Error(Errc::key_error, "verification key does not match signing key");
    }
}

std::string sign(std::string_view algorithm_uri, const Pkey& key, std::string_view data)
{
    if (!key) {
        throw Error(Errc::key_error, "no signing key available");
    }
    const EVP_MD* md = signature_digest_for(algorithm_uri);
    MdCtx ctx(EVP_MD_CTX_new());
    std::size_t len = 0;
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, md, nullptr, key.get()) != 1 ||
        EVP_DigestSign(ctx.get(), nullptr, &len, reinterpret_cast<const unsigned char*>(data.data()), data.size()) !=
            1) {
        throw Error(Errc::key_error, "signing failed: " + openssl_reason());
    }
    std::string out(len, '\0');
    if (EVP_DigestSign(ctx.get(), reinterpret_cast<unsigned char*>(out.data()), &len,
                       reinterpret_cast<const unsigned char*>(data.data()), data.size()) != 1) {
        throw Error(Errc::key_error, "signing failed: " + openssl_reason());
    }
    out.resize(len);
    return out;
}

bool verify_signature(std::string_view algorithm_uri, const Pkey& key, std::string_view data,
                      std::string_view signature)
{
    if (!key) {
        throw Error(Errc::key_error, "no verification key available");
    }
    const EVP_MD* md = signature_digest_for(algorithm_uri);
    MdCtx ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, md, nullptr, key.get()) != 1) {
        throw Error(Errc::key_error, "verify init failed: " + openssl_reason());
    }
    int rc = EVP_DigestVerify(ctx.get(), reinterpret_cast<const unsigned char*>(signature.data()), signature.size(),
                              reinterpret_cast<const unsigned char*>(data.data()), data.size());
    ERR_clear_error();
    return rc == 1;
}

std::string aead_encrypt(std::string_view key, std::string_view plaintext)
{
    if (key.size() != wrap_key_size) {
        throw Error(Errc::key_error, "wrap key must be 32 bytes");
    }
    std::string out = random_bytes(nonce_size);
    out.resize(nonce_size + plaintext.size() + tag_size);
    auto* dst = reinterpret_cast<unsigned char*>(out.data());
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    int total = 0;
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, nonce_size, nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, reinterpret_cast<const unsigned char*>(key.data()), dst) != 1 ||
        EVP_EncryptUpdate(ctx.get(), dst + nonce_size, &len, reinterpret_cast<const unsigned char*>(plaintext.data()),
                          static_cast<int>(plaintext.size())) != 1) {
        throw Error(Errc::key_error, "encryption failed: " + openssl_reason());
    }
    total = len;
    if (EVP_EncryptFinal_ex(ctx.get(), dst + nonce_size + total, &len) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, tag_size, dst + nonce_size + total + len) != 1) {
        throw Error(Errc::key_error, "encryption failed: " + openssl_reason());
    }
    return out;
}

std::string aead_decrypt(std::string_view key, std::string_view sealed)
{
    if (key.size() != wrap_key_size) {
        throw Error(Errc::key_error, "wrap key must be 32 bytes");
    }
    if (sealed.size() < nonce_size + tag_size) {
        throw Error(Errc::decrypt_failed, "ciphertext shorter than nonce and tag");
    }
    const auto* src = reinterpret_cast<const unsigned char*>(sealed.data());
    std::size_t body = sealed.size() - nonce_size - tag_size;
    std::string out(body, '\0');
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, nonce_size, nullptr) != 1 ||
        EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, reinterpret_cast<const unsigned char*>(key.data()), src) != 1 ||
        EVP_DecryptUpdate(ctx.get(), reinterpret_cast<unsigned char*>(out.data()), &len, src + nonce_size,
                          static_cast<int>(body)) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, tag_size,
                            const_cast<unsigned char*>(src + nonce_size + body)) != 1) {
        ERR_clear_error();
        throw Error(Errc::decrypt_failed, "cannot initialise decryption");
    }
    int final_len = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), reinterpret_cast<unsigned char*>(out.data()) + len, &final_len) != 1) {
        ERR_clear_error();
        throw Error(Errc::decrypt_failed, "authentication tag mismatch");
    }
    return out;
}

} // namespace streamsign::crypto
