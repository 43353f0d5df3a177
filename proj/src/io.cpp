#include "streamsign/io.hpp"

#include "streamsign/error.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <cstring>

namespace streamsign {

std::size_t default_chunk_size()
{
    constexpr std::size_t fallback = 64 * 1024;
    const char* env = std::getenv("STREAMSIGN_CHUNK_BYTES");
    if (env == nullptr || *env == '\0') {
        return fallback;
    }
    std::size_t value = 0;
    std::string_view text(env);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || value == 0) {
        throw Error(Errc::invalid_argument, "STREAMSIGN_CHUNK_BYTES must be a positive integer, got '" +
                                                std::string(text) + "'");
    }
    return value;
}

std::string read_all(ByteSource& source, std::size_t chunk)
{
    if (chunk == 0) {
        chunk = default_chunk_size();
    }
    std::string out;
    std::size_t used = 0;
    for (;;) {
        out.resize(used + chunk);
        std::size_t n = source.read(std::span<char>(out.data() + used, chunk));
        if (n == 0) {
            break;
        }
        used += n;
    }
    out.resize(used);
    return out;
}

std::uint64_t pump(ByteSource& source, ByteSink& sink, std::size_t chunk)
{
    if (chunk == 0) {
        chunk = default_chunk_size();
    }
    std::vector<char> buf(chunk);
    std::uint64_t total = 0;
    for (;;) {
        std::size_t n = source.read(buf);
        if (n == 0) {
            break;
        }
        sink.write(std::string_view(buf.data(), n));
        total += n;
    }
    return total;
}

std::size_t MemorySource::read(std::span<char> buf)
{
    std::size_t n = std::min(buf.size(), data_.size() - offset_);
    std::memcpy(buf.data(), data_.data() + offset_, n);
    offset_ += n;
    return n;
}

std::size_t ViewSource::read(std::span<char> buf)
{
    std::size_t n = std::min(buf.size(), data_.size());
    std::memcpy(buf.data(), data_.data(), n);
    data_.remove_prefix(n);
    return n;
}

PrngSource::PrngSource(std::uint64_t seed, std::uint64_t length) : engine_(seed), remaining_(length) {}

std::size_t PrngSource::read(std::span<char> buf)
{
    std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(buf.size(), remaining_));
    std::size_t i = 0;
    // Drain bytes left over from the previous word so the stream is independent of read sizes.
    while (i < n && word_left_ > 0) {
        buf[i++] = static_cast<char>(word_ & 0xff);
        word_ >>= 8;
        --word_left_;
    }
    while (n - i >= 8) {
        std::uint64_t w = engine_();
        for (int b = 0; b < 8; ++b) {
            buf[i++] = static_cast<char>((w >> (8 * b)) & 0xff);
        }
    }
    if (i < n) {
        word_ = engine_();
        word_left_ = 8;
        while (i < n) {
            buf[i++] = static_cast<char>(word_ & 0xff);
            word_ >>= 8;
            --word_left_;
        }
    }
    remaining_ -= n;
    return n;
}

ChunkedSource::ChunkedSource(std::unique_ptr<ByteSource> inner, std::function<std::size_t()> next_size)
    : inner_(std::move(inner)), next_size_(std::move(next_size))
{
}

std::size_t ChunkedSource::read(std::span<char> buf)
{
    std::size_t cap = std::max<std::size_t>(1, next_size_());
    return inner_->read(buf.first(std::min(cap, buf.size())));
}

std::size_t ConcatSource::read(std::span<char> buf)
{
    while (index_ < parts_.size()) {
        std::size_t n = parts_[index_]->read(buf);
        if (n > 0) {
            return n;
        }
        parts_[index_].reset();
        ++index_;
    }
    return 0;
}

FileSource::FileSource(const std::filesystem::path& path)
{
    if (path == "-") {
        file_ = stdin;
        owned_ = false;
        return;
    }
    file_ = std::fopen(path.c_str(), "rb");
    if (file_ == nullptr) {
        throw Error(Errc::io_error, "cannot open '" + path.string() + "': " + std::strerror(errno));
    }
}

FileSource::~FileSource()
{
    if (owned_ && file_ != nullptr) {
        std::fclose(file_);
    }
}

std::size_t FileSource::read(std::span<char> buf)
{
    std::size_t n = std::fread(buf.data(), 1, buf.size(), file_);
    if (n == 0 && std::ferror(file_)) {
        throw Error(Errc::source_error, std::string("read failed: ") + std::strerror(errno));
    }
    return n;
}

FileSink::FileSink(const std::filesystem::path& path)
{
    if (path == "-") {
        file_ = stdout;
        owned_ = false;
        return;
    }
    file_ = std::fopen(path.c_str(), "wb");
    if (file_ == nullptr) {
        throw Error(Errc::io_error, "cannot create '" + path.string() + "': " + std::strerror(errno));
    }
}

FileSink::~FileSink()
{
    if (owned_ && file_ != nullptr) {
        std::fclose(file_);
    }
}

void FileSink::write(std::string_view data)
{
    if (std::fwrite(data.data(), 1, data.size(), file_) != data.size()) {
        throw Error(Errc::sink_error, std::string("write failed: ") + std::strerror(errno));
    }
}

void FileSink::flush()
{
    if (std::fflush(file_) != 0) {
        throw Error(Errc::sink_error, std::string("flush failed: ") + std::strerror(errno));
    }
}

} // namespace streamsign
