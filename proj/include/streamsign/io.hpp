#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace streamsign {

/// Default transfer chunk (64 KiB) unless STREAMSIGN_CHUNK_BYTES overrides it.
std::size_t default_chunk_size();

/// Pull-based byte stream. read() returns the number of bytes placed in buf,
/// zero only at end of stream.
class ByteSource {
public:
    virtual ~ByteSource() = default;
    virtual std::size_t read(std::span<char> buf) = 0;
};

/// Push-based byte stream.
class ByteSink {
public:
    virtual ~ByteSink() = default;
    virtual void write(std::string_view data) = 0;
    virtual void flush() {}
};

/// Reads a source to exhaustion. Meant for small inputs only.
std::string read_all(ByteSource& source, std::size_t chunk = 0);

/// Copies source into sink in chunks; returns bytes copied.
std::uint64_t pump(ByteSource& source, ByteSink& sink, std::size_t chunk = 0);

class MemorySource final : public ByteSource {
public:
    explicit MemorySource(std::string data) : data_(std::move(data)) {}
    std::size_t read(std::span<char> buf) override;

private:
    std::string data_;
    std::size_t offset_ = 0;
};

/// Non-owning view; the referenced bytes must outlive the source.
class ViewSource final : public ByteSource {
public:
    explicit ViewSource(std::string_view data) : data_(data) {}
    std::size_t read(std::span<char> buf) override;

private:
    std::string_view data_;
};

/// Deterministic pseudorandom bytes of a fixed length.
class PrngSource final : public ByteSource {
public:
    PrngSource(std::uint64_t seed, std::uint64_t length);
    std::size_t read(std::span<char> buf) override;

private:
    std::mt19937_64 engine_;
    std::uint64_t remaining_;
    std::uint64_t word_ = 0;
    unsigned word_left_ = 0;
};

/// Caps every read() at a size drawn from a generator; used to exercise
/// chunk-boundary handling.
class ChunkedSource final : public ByteSource {
public:
    ChunkedSource(std::unique_ptr<ByteSource> inner, std::function<std::size_t()> next_size);
    std::size_t read(std::span<char> buf) override;

private:
    std::unique_ptr<ByteSource> inner_;
    std::function<std::size_t()> next_size_;
};

/// Concatenation of several sources, read in order.
class ConcatSource final : public ByteSource {
public:
    explicit ConcatSource(std::vector<std::unique_ptr<ByteSource>> parts) : parts_(std::move(parts)) {}
    std::size_t read(std::span<char> buf) override;

private:
    std::vector<std::unique_ptr<ByteSource>> parts_;
    std::size_t index_ = 0;
};

class FileSource final : public ByteSource {
public:
    /// "-" reads standard input.
    explicit FileSource(const std::filesystem::path& path);
    ~FileSource() override;
    FileSource(const FileSource&) = delete;
    FileSource& operator=(const FileSource&) = delete;
    std::size_t read(std::span<char> buf) override;

private:
    std::FILE* file_ = nullptr;
    bool owned_ = true;
};

class StringSink final : public ByteSink {
public:
    void write(std::string_view data) override { data_.append(data); }
    const std::string& str() const noexcept { return data_; }
    std::string take() { return std::move(data_); }

private:
    std::string data_;
};

class NullSink final : public ByteSink {
public:
    void write(std::string_view data) override { bytes_ += data.size(); }
    std::uint64_t bytes() const noexcept { return bytes_; }

private:
    std::uint64_t bytes_ = 0;
};

class FileSink final : public ByteSink {
public:
    /// "-" writes standard output.
    explicit FileSink(const std::filesystem::path& path);
    ~FileSink() override;
    FileSink(const FileSink&) = delete;
    FileSink& operator=(const FileSink&) = delete;
    void write(std::string_view data) override;
    void flush() override;

private:
    std::FILE* file_ = nullptr;
    bool owned_ = true;
};

/// Forwards to another sink and counts bytes.
class CountingSink final : public ByteSink {
public:
    explicit CountingSink(ByteSink& inner) : inner_(inner) {}
    void write(std::string_view data) override
    {
        inner_.write(data);
        bytes_ += data.size();
    }
    void flush() override { inner_.flush(); }
    std::uint64_t bytes() const noexcept { return bytes_; }

private:
    ByteSink& inner_;
    std::uint64_t bytes_ = 0;
};

} // namespace streamsign
