#include "streamsign/base64.hpp"
#include "streamsign/error.hpp"

#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <random>

using namespace streamsign;
using namespace streamsign::xop;

namespace {

// Independent encoder: OpenSSL's one-shot block encoder.
std::string oracle_encode(std::string_view in)
{
    std::string out(4 * ((in.size() + 2) / 3) + 1, '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string random_bytes(std::size_t n, std::uint64_t seed)
{
    PrngSource src(seed, n);
    return read_all(src);
}

std::string encode_chunked(std::string_view in, std::size_t chunk)
{
    auto src = std::make_unique<MemorySource>(std::string(in));
    ChunkedSource chunked(std::move(src), [chunk] { return chunk; });
    StringSink sink;
    std::uint64_t n = base64_encode_stream(chunked, sink, 64 * 1024);
    EXPECT_EQ(n, sink.str().size());
    return sink.take();
}

Errc decode_error(std::string_view in)
{
    try {
        base64_decode(in);
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::empty_report;
}

} // namespace

TEST(Base64, ThreeOctetsBecomeFour)
{
    EXPECT_EQ(base64_encode("abc").size(), 4u);
    EXPECT_EQ(encoded_size(3), 4u);
    EXPECT_EQ(encoded_size(300), 400u);
}

TEST(Base64, EmptyInput)
{
    MemorySource src("");
    StringSink sink;
    EXPECT_EQ(base64_encode_stream(src, sink), 0u);
    EXPECT_TRUE(sink.str().empty());
}

TEST(Base64, KnownVectors)
{
    const std::pair<const char*, const char*> vectors[] = {
        {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
        {"foobar", "Zm9vYmFy"}};
    for (auto [plain, encoded] : vectors) {
        EXPECT_EQ(base64_encode(plain), encoded);
        EXPECT_EQ(base64_decode(encoded), plain);
    }
}

TEST(Base64, ChunkingIndependentAndMatchesOracle)
{
    std::string data = random_bytes(1 << 20, 11);
    std::string expected = oracle_encode(data);
    for (std::size_t chunk : {std::size_t{1}, std::size_t{3}, std::size_t{7}, std::size_t{64 * 1024}}) {
        EXPECT_EQ(encode_chunked(data, chunk), expected) << "chunk " << chunk;
    }
}

TEST(Base64, SmallSizesMatchOracle)
{
    for (std::size_t n = 0; n < 64; ++n) {
        std::string data = random_bytes(n, n);
        EXPECT_EQ(base64_encode(data), oracle_encode(data));
        EXPECT_EQ(base64_decode(oracle_encode(data)), data);
    }
}

TEST(Base64, RoundTripTenMiB)
{
    std::string data = random_bytes(10 << 20, 3);
    MemorySource src(base64_encode(data));
    StringSink sink;
    EXPECT_EQ(base64_decode_stream(src, sink, 4093), data.size());
    EXPECT_EQ(sink.str(), data);
}

TEST(Base64, DecodeSkipsWhitespace)
{
    EXPECT_EQ(base64_decode(" Zm9v\r\nYmE=\t"), "fooba");
}

TEST(Base64, DecodeRejectsMalformed)
{
    for (const char* bad : {"====", "Zg", "Zg=", "Z===", "Zm9v!", "Zg==Zg==", "Zh==", "Zm9=", "=Zm9", "Zm9vY"}) {
        EXPECT_EQ(decode_error(bad), Errc::invalid_base64) << bad;
    }
}

TEST(Base64, DecoderChunkingIndependent)
{
    std::string data = random_bytes(10007, 5);
    std::string text = base64_encode(data);
    for (std::size_t step : {1u, 2u, 5u, 4096u}) {
        Base64Decoder decoder;
        std::string out;
        for (std::size_t i = 0; i < text.size(); i += step) {
            decoder.update(std::string_view(text).substr(i, step), out);
        }
        decoder.finish();
        EXPECT_EQ(out, data);
    }
}
