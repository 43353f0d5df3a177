#include "streamsign/crypto.hpp"
#include "streamsign/error.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace streamsign;
using namespace streamsign::crypto;

namespace {

const KeyMaterial& shared_keys()
{
    static const KeyMaterial keys = KeyMaterial::generate();
    return keys;
}

} // namespace

TEST(Digest, KnownAnswers)
{
    // FIPS 180-2 "abc" vectors.
    EXPECT_EQ(to_hex(Digest::compute(algorithm::sha256, "abc")),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(to_hex(Digest::compute(algorithm::sha512, "abc")).substr(0, 32), "ddaf35a193617abacc417349ae204131");
    EXPECT_EQ(Digest::length(algorithm::sha256), 32u);
}

TEST(Digest, IncrementalEqualsOneShot)
{
    Digest d(algorithm::sha256);
    d.update("a");
    d.update("");
    d.update("bc");
    EXPECT_EQ(d.finish(), Digest::compute(algorithm::sha256, "abc"));
}

TEST(Digest, UnknownAlgorithm)
{
    EXPECT_FALSE(Digest::supported("urn:nope"));
    try {
        Digest d("urn:nope");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::unsupported_algorithm);
    }
}

TEST(Entropy, SeededIsReproducible)
{
    auto a = seeded_entropy(5);
    auto b = seeded_entropy(5);
    std::array<unsigned char, 40> x{}, y{};
    a(x);
    b(y);
    EXPECT_EQ(x, y);
    EXPECT_NE(random_bytes(16), random_bytes(16));
}

TEST(Keys, SignVerify)
{
    const auto& keys = shared_keys();
    std::string sig = sign(algorithm::rsa_sha256, keys.signing_key, "payload");
    EXPECT_EQ(sig.size(), 256u);
    EXPECT_TRUE(verify_signature(algorithm::rsa_sha256, keys.verification_key, "payload", sig));
    EXPECT_FALSE(verify_signature(algorithm::rsa_sha256, keys.verification_key, "payloaD", sig));
    sig[10] ^= 1;
    EXPECT_FALSE(verify_signature(algorithm::rsa_sha256, keys.verification_key, "payload", sig));
}

TEST(Keys, SaveLoadRoundTrip)
{
    const auto& keys = shared_keys();
    auto dir = std::filesystem::temp_directory_path() / "streamsign_keys_test";
    std::filesystem::remove_all(dir);
    keys.save(dir);
    auto loaded = KeyMaterial::load(dir / "private.pem", dir / "wrap.key");
    EXPECT_EQ(loaded.key_name, keys.key_name);
    EXPECT_EQ(loaded.wrap_key, keys.wrap_key);
    auto pub = KeyMaterial::load(dir / "public.pem");
    EXPECT_FALSE(pub.signing_key);
    EXPECT_EQ(pub.key_name, keys.key_name);
    EXPECT_TRUE(keys.key_name.starts_with("rsa-"));
    EXPECT_EQ(keys.key_name.size(), 20u);
    std::filesystem::remove_all(dir);
}

TEST(Keys, LoadRejectsGarbage)
{
    auto path = std::filesystem::temp_directory_path() / "streamsign_bad.pem";
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("not a key\n", f);
        std::fclose(f);
    }
    try {
        KeyMaterial::load(path);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::key_error);
    }
    std::filesystem::remove(path);
}

TEST(Aead, RoundTripFreshNonceAndTamper)
{
    const std::string key = *shared_keys().wrap_key;
    std::string a = aead_encrypt(key, "secret signature");
    std::string b = aead_encrypt(key, "secret signature");
    EXPECT_NE(a, b);
    EXPECT_EQ(a.size(), 12 + 16 + 16u);
    EXPECT_EQ(aead_decrypt(key, a), "secret signature");
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::string t = a;
        t[i] ^= 0x20;
        EXPECT_THROW(aead_decrypt(key, t), Error) << i;
    }
    EXPECT_THROW(aead_decrypt(key, a.substr(0, 20)), Error);
    EXPECT_THROW(aead_encrypt("short", "x"), Error);
}
