#include "streamsign/base64.hpp"

#include "streamsign/error.hpp"

#include <vector>

namespace streamsign::xop {

namespace {

constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr unsigned char invalid = 0xff;
constexpr unsigned char whitespace = 0xfe;
constexpr unsigned char pad = 0xfd;

constexpr std::array<unsigned char, 256> make_decode_table()
{
    std::array<unsigned char, 256> t{};
    for (auto& v : t) {
        v = invalid;
    }
    for (unsigned i = 0; i < 64; ++i) {
        t[static_cast<unsigned char>(alphabet[i])] = static_cast<unsigned char>(i);
    }
    t[' '] = t['\t'] = t['\r'] = t['\n'] = whitespace;
    t['='] = pad;
    return t;
}

constexpr auto decode_table = make_decode_table();

inline void encode_group(const unsigned char* in, char* out) noexcept
{
    std::uint32_t v = (std::uint32_t(in[0]) << 16) | (std::uint32_t(in[1]) << 8) | in[2];
    out[0] = alphabet[(v >> 18) & 0x3f];
    out[1] = alphabet[(v >> 12) & 0x3f];
    out[2] = alphabet[(v >> 6) & 0x3f];
    out[3] = alphabet[v & 0x3f];
}

} // namespace

void Base64Encoder::update(std::string_view in, std::string& out)
{
    const auto* p = reinterpret_cast<const unsigned char*>(in.data());
    std::size_t n = in.size();
    while (carry_len_ > 0 && n > 0) {
        carry_[carry_len_++] = *p++;
        --n;
        if (carry_len_ == 3) {
            char enc[4];
            encode_group(carry_.data(), enc);
            out.append(enc, 4);
            encoded_ += 4;
            carry_len_ = 0;
        }
    }
    if (carry_len_ > 0) {
        return;
    }
    std::size_t groups = n / 3;
    std::size_t base = out.size();
    out.resize(base + groups * 4);
    char* dst = out.data() + base;
    for (std::size_t g = 0; g < groups; ++g) {
        encode_group(p + 3 * g, dst + 4 * g);
    }
    encoded_ += groups * 4;
    std::size_t rest = n - groups * 3;
    for (std::size_t i = 0; i < rest; ++i) {
        carry_[i] = p[groups * 3 + i];
    }
    carry_len_ = static_cast<unsigned>(rest);
}

void Base64Encoder::finish(std::string& out)
{
    if (carry_len_ == 0) {
        return;
    }
    unsigned char group[3] = {carry_[0], carry_len_ == 2 ? carry_[1] : static_cast<unsigned char>(0), 0};
    char enc[4];
    encode_group(group, enc);
    if (carry_len_ == 1) {
        enc[2] = '=';
    }
    enc[3] = '=';
    out.append(enc, 4);
    encoded_ += 4;
    carry_len_ = 0;
}

void Base64Decoder::update(std::string_view in, std::string& out)
{
    for (char ch : in) {
        ++consumed_;
        unsigned char v = decode_table[static_cast<unsigned char>(ch)];
        if (v == whitespace) {
            continue;
        }
        if (v == invalid) {
            throw Error(Errc::invalid_base64, "character outside the base64 alphabet", consumed_ - 1);
        }
        if (ended_) {
            throw Error(Errc::invalid_base64, "data after final padding", consumed_ - 1);
        }
        if (v == pad) {
            if (have_ < 2) {
                throw Error(Errc::invalid_base64, "misplaced padding", consumed_ - 1);
            }
            ++padding_;
            if (have_ + padding_ < 4) {
                continue;
            }
            if (have_ == 2) {
                if ((quad_[1] & 0x0f) != 0) {
                    throw Error(Errc::invalid_base64, "non-zero bits under padding", consumed_ - 1);
                }
                out += static_cast<char>((quad_[0] << 2) | (quad_[1] >> 4));
                decoded_ += 1;
            } else {
                if ((quad_[2] & 0x03) != 0) {
                    throw Error(Errc::invalid_base64, "non-zero bits under padding", consumed_ - 1);
                }
                out += static_cast<char>((quad_[0] << 2) | (quad_[1] >> 4));
                out += static_cast<char>(((quad_[1] & 0x0f) << 4) | (quad_[2] >> 2));
                decoded_ += 2;
            }
            have_ = 0;
            ended_ = true;
            continue;
        }
        if (padding_ > 0) {
            throw Error(Errc::invalid_base64, "data after padding", consumed_ - 1);
        }
        quad_[have_++] = v;
        if (have_ == 4) {
            out += static_cast<char>((quad_[0] << 2) | (quad_[1] >> 4));
            out += static_cast<char>(((quad_[1] & 0x0f) << 4) | (quad_[2] >> 2));
            out += static_cast<char>(((quad_[2] & 0x03) << 6) | quad_[3]);
            decoded_ += 3;
            have_ = 0;
        }
    }
}

void Base64Decoder::finish()
{
    if (have_ != 0 || (padding_ > 0 && !ended_)) {
        throw Error(Errc::invalid_base64, "input ends inside a 4-character group", consumed_);
    }
}

std::string base64_encode(std::string_view in)
{
    std::string out;
    out.reserve(encoded_size(in.size()));
    Base64Encoder enc;
    enc.update(in, out);
    enc.finish(out);
    return out;
}

std::string base64_decode(std::string_view in)
{
    std::string out;
    out.reserve(in.size() / 4 * 3);
    Base64Decoder dec;
    dec.update(in, out);
    dec.finish();
    return out;
}

std::uint64_t base64_encode_stream(ByteSource& input, ByteSink& sink, std::size_t chunk)
{
    if (chunk == 0) {
        chunk = default_chunk_size();
    }
    std::vector<char> buf(chunk);
    std::string encoded;
    encoded.reserve(encoded_size(chunk) + 4);
    Base64Encoder enc;
    for (;;) {
        std::size_t n = input.read(buf);
        if (n == 0) {
            break;
        }
        encoded.clear();
        enc.update(std::string_view(buf.data(), n), encoded);
        if (!encoded.empty()) {
            sink.write(encoded);
        }
    }
    encoded.clear();
    enc.finish(encoded);
    if (!encoded.empty()) {
        sink.write(encoded);
    }
    return enc.encoded_length();
}

std::uint64_t base64_decode_stream(ByteSource& input, ByteSink& sink, std::size_t chunk)
{
    if (chunk == 0) {
        chunk = default_chunk_size();
    }
    std::vector<char> buf(chunk);
    std::string decoded;
    decoded.reserve(chunk);
    Base64Decoder dec;
    for (;;) {
        std::size_t n = input.read(buf);
        if (n == 0) {
            break;
        }
        decoded.clear();
        dec.update(std::string_view(buf.data(), n), decoded);
        if (!decoded.empty()) {
            sink.write(decoded);
        }
    }
    dec.finish();
    return dec.decoded_length();
}

} // namespace streamsign::xop
