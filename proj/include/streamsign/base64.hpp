#pragma once

#include "streamsign/io.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace streamsign::xop {

/// Incremental base64 encoder (standard alphabet, '=' padding, no line
/// breaks). Up to two input bytes are carried between update() calls, so
/// the output never depends on how the input was split.
class Base64Encoder {
public:
    /// Appends the encoding of every complete 3-byte group now available.
    void update(std::string_view in, std::string& out);
    /// Flushes the carry with padding. The encoder can be reused afterwards.
    void finish(std::string& out);

    std::uint64_t encoded_length() const noexcept { return encoded_; }

private:
    std::array<unsigned char, 3> carry_{};
    unsigned carry_len_ = 0;
    std::uint64_t encoded_ = 0;
};

/// Incremental strict decoder. Whitespace is skipped; anything outside the
/// alphabet, misplaced padding, or non-zero bits under the padding raises
/// InvalidBase64.
class Base64Decoder {
public:
    void update(std::string_view in, std::string& out);
    /// Throws InvalidBase64 if input ended mid-quantum.
    void finish();

    std::uint64_t decoded_length() const noexcept { return decoded_; }

private:
    std::array<unsigned char, 4> quad_{};
    unsigned have_ = 0;
    unsigned padding_ = 0;
    bool ended_ = false;
    std::uint64_t consumed_ = 0;
    std::uint64_t decoded_ = 0;
};

/// 4 * ceil(n / 3).
constexpr std::uint64_t encoded_size(std::uint64_t n) noexcept { return 4 * ((n + 2) / 3); }

std::string base64_encode(std::string_view in);
std::string base64_decode(std::string_view in);

/// Streams input through the encoder into sink; returns the encoded length.
std::uint64_t base64_encode_stream(ByteSource& input, ByteSink& sink, std::size_t chunk = 0);
/// Streams base64 text through the decoder into sink; returns the decoded length.
std::uint64_t base64_decode_stream(ByteSource& input, ByteSink& sink, std::size_t chunk = 0);

} // namespace streamsign::xop
