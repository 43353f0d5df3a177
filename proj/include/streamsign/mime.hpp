#pragma once

#include "streamsign/crypto.hpp"
#include "streamsign/io.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace streamsign::mime {

inline constexpr std::size_t max_header_block = 16 * 1024;

enum class TransferEncoding { binary, base64, eight_bit };

const char* to_string(TransferEncoding e) noexcept;

struct MimeHeaders {
    /// Stored without angle brackets.
    std::string content_id;
    std::string content_type = "application/octet-stream";
    TransferEncoding transfer_encoding = TransferEncoding::binary;

    bool operator==(const MimeHeaders&) const = default;
};

/// One part of a multipart/related package. The body is read once.
struct MimePart {
    MimeHeaders headers;
    std::unique_ptr<ByteSource> body;
};

/// 16 to 60 characters drawn from the RFC 2046 bchars set (without space).
class Boundary {
public:
    explicit Boundary(std::string value);
    const std::string& value() const noexcept { return value_; }
    bool operator==(const Boundary&) const = default;

private:
    std::string value_;
};

/// "=_" followed by 32 hex digits (128 random bits).
Boundary generate_boundary(const crypto::EntropySource& entropy = crypto::system_entropy());

struct WriterOptions {
    std::size_t chunk_size = 0; ///< 0 selects default_chunk_size()
    /// Debug aid: scan bodies for the delimiter and raise BoundaryCollision.
    bool scan_for_boundary = false;
};

/// Incremental multipart writer. Parts are framed as
/// "--B\r\n" headers "\r\n" body, with "\r\n--B" before each later part and
/// "\r\n--B--\r\n" at the end.
class MimeWriter {
public:
    MimeWriter(ByteSink& sink, Boundary boundary, WriterOptions options = {});

    void begin_part(const MimeHeaders& headers);
    void write_body(std::string_view data);
    /// Streams a body source through one chunk-sized buffer.
    std::uint64_t copy_body(ByteSource& body);
    void finish();

    std::uint64_t bytes_written() const noexcept { return written_; }
    std::size_t chunk_size() const noexcept { return chunk_; }
    const Boundary& boundary() const noexcept { return boundary_; }

private:
    void emit(std::string_view data);

    ByteSink& sink_;
    Boundary boundary_;
    std::size_t chunk_;
    bool scan_;
    std::string delimiter_;
    std::string scan_tail_;
    std::vector<char> buffer_;
    std::uint64_t written_ = 0;
    std::size_t parts_ = 0;
    bool in_part_ = false;
    bool finished_ = false;
};

/// Writes parts in order; returns total bytes emitted. The first part is the root.
std::uint64_t write_package(ByteSink& sink, const Boundary& boundary, std::vector<MimePart>& parts,
                            WriterOptions options = {});

/// Lazy multipart reader with memory bounded by the chunk size plus one
/// header block. A part body must be consumed or skipped before the next
/// part is requested; next_part() skips any unread remainder itself.
class MimeReader {
public:
    /// With no boundary the first line of the source is taken as the dash-boundary.
    MimeReader(ByteSource& source, std::optional<Boundary> boundary, std::size_t chunk = 0);
    MimeReader(const MimeReader&) = delete;
    MimeReader& operator=(const MimeReader&) = delete;

    /// Headers of the next part, or nullopt after the closing delimiter.
    std::optional<MimeHeaders> next_part();
    /// Body of the part returned by the last next_part() call.
    ByteSource& body() noexcept { return body_; }
    void skip_body();

    const Boundary& boundary() const { return *boundary_; }

private:
    class Body final : public ByteSource {
    public:
        explicit Body(MimeReader& reader) : reader_(reader) {}
        std::size_t read(std::span<char> buf) override { return reader_.read_body(buf); }

    private:
        MimeReader& reader_;
    };

    enum class State { start, in_body, after_delimiter, done };

    std::size_t read_body(std::span<char> buf);
    std::size_t fill();
    std::string_view window() const noexcept { return {buffer_.data() + begin_, end_ - begin_}; }
    void read_opening();
    MimeHeaders read_headers();

    ByteSource& source_;
    std::optional<Boundary> boundary_;
    std::string delimiter_;
    std::vector<char> buffer_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
    std::size_t scanned_ = 0; // no delimiter starts in [begin_, scanned_)
    bool eof_ = false;
    State state_ = State::start;
    Body body_{*this};
};

/// Fully buffered part, for tests and small tools.
struct BufferedPart {
    MimeHeaders headers;
    std::string body;
    bool operator==(const BufferedPart&) const = default;
};

std::vector<BufferedPart> read_all_parts(ByteSource& source, const std::optional<Boundary>& boundary);

/// `multipart/related; type="application/xop+xml"; boundary="B"; start="<cid>"; start-info="..."`
std::string package_content_type(const Boundary& boundary, std::string_view root_content_id,
                                  std::string_view start_info = "application/soap+xml");

struct ContentType {
    std::string media_type; ///< lower-cased type/subtype
    std::map<std::string, std::string> parameters; ///< lower-cased names, unquoted values
};

ContentType parse_content_type(std::string_view value);

} // namespace streamsign::mime
