#include "streamsign/mime.hpp"

#include "streamsign/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>

namespace streamsign::mime {

namespace {

bool is_bchar(char c) noexcept
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || std::strchr("'()+_,-./:=?", c) != nullptr;
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) noexcept
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    return s;
}

void validate_headers(const MimeHeaders& h)
{
    for (char c : h.content_id) {
        if (std::isspace(static_cast<unsigned char>(c)) != 0 || c == '<' || c == '>') {
            throw Error(Errc::invalid_argument, "Content-ID contains whitespace or angle brackets");
        }
    }
    if (h.content_type.empty() || h.content_type.find_first_of("\r\n") != std::string::npos ||
        h.content_type.find('/') == std::string::npos) {
        throw Error(Errc::invalid_argument, "Content-Type must be a single-line type/subtype");
    }
}

} // namespace

const char* to_string(TransferEncoding e) noexcept
{
    switch (e) {
    case TransferEncoding::binary: return "binary";
    case TransferEncoding::base64: return "base64";
    case TransferEncoding::eight_bit: return "8bit";
    }
    return "binary";
}

Boundary::Boundary(std::string value) : value_(std::move(value))
{
    if (value_.size() < 16 || value_.size() > 60) {
        throw Error(Errc::invalid_argument, "boundary length must be 16..60, got " + std::to_string(value_.size()));
    }
    if (!std::all_of(value_.begin(), value_.end(), is_bchar)) {
        throw Error(Errc::invalid_argument, "boundary contains characters outside the MIME boundary alphabet");
    }
}

Boundary generate_boundary(const crypto::EntropySource& entropy)
{
    std::array<unsigned char, 16> bits{};
    entropy(bits);
    return Boundary("=_" + crypto::to_hex(std::string_view(reinterpret_cast<const char*>(bits.data()), bits.size())));
}

MimeWriter::MimeWriter(ByteSink& sink, Boundary boundary, WriterOptions options)
    : sink_(sink),
      boundary_(std::move(boundary)),
      chunk_(options.chunk_size == 0 ? default_chunk_size() : options.chunk_size),
      scan_(options.scan_for_boundary),
      delimiter_("\r\n--" + boundary_.value())
{
}

void MimeWriter::emit(std::string_view data)
{
    sink_.write(data);
    written_ += data.size();
}

void MimeWriter::begin_part(const MimeHeaders& headers)
{
    if (finished_) {
        throw Error(Errc::invalid_argument, "package already finished");
    }
    validate_headers(headers);
    std::string block = parts_ == 0 ? "--" + boundary_.value() + "\r\n" : delimiter_ + "\r\n";
    block += "Content-Type: " + headers.content_type + "\r\n";
    block += "Content-Transfer-Encoding: ";
    block += to_string(headers.transfer_encoding);
    block += "\r\n";
    if (!headers.content_id.empty()) {
        block += "Content-ID: <" + headers.content_id + ">\r\n";
    }
    block += "\r\n";
    emit(block);
    ++parts_;
    in_part_ = true;
    scan_tail_.clear();
}

void MimeWriter::write_body(std::string_view data)
{
    if (!in_part_) {
        throw Error(Errc::invalid_argument, "write_body outside a part");
    }
    if (data.empty()) {
        return;
    }
    if (scan_) {
        // The tail keeps the last delimiter-length-1 bytes so matches across writes are seen.
        std::string window = scan_tail_;
        window.append(data);
        if (window.find(delimiter_) != std::string::npos) {
            throw Error(Errc::boundary_collision, "part body contains the package delimiter");
        }
        std::size_t keep = std::min(window.size(), delimiter_.size() - 1);
        scan_tail_.assign(window, window.size() - keep, keep);
    }
    emit(data);
}

std::uint64_t MimeWriter::copy_body(ByteSource& body)
{
    buffer_.resize(chunk_);
    std::uint64_t total = 0;
    for (;;) {
        std::size_t n = 0;
        try {
            n = body.read(buffer_);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(Errc::body_read_error, e.what());
        }
        if (n == 0) {
            break;
        }
        write_body(std::string_view(buffer_.data(), n));
        total += n;
    }
    return total;
}

void MimeWriter::finish()
{
    if (parts_ == 0) {
        throw Error(Errc::invalid_argument, "a package needs at least one part");
    }
    if (finished_) {
        return;
    }
    emit(delimiter_ + "--\r\n");
    sink_.flush();
    finished_ = true;
    in_part_ = false;
}

std::uint64_t write_package(ByteSink& sink, const Boundary& boundary, std::vector<MimePart>& parts,
                            WriterOptions options)
{
    MimeWriter writer(sink, boundary, options);
    for (auto& part : parts) {
        writer.begin_part(part.headers);
        if (part.body) {
            writer.copy_body(*part.body);
        }
    }
    writer.finish();
    return writer.bytes_written();
}

MimeReader::MimeReader(ByteSource& source, std::optional<Boundary> boundary, std::size_t chunk)
    : source_(source), boundary_(std::move(boundary))
{
    if (chunk == 0) {
        chunk = default_chunk_size();
    }
    // Room for a full header block plus the longest delimiter line.
    buffer_.resize(std::max(chunk, max_header_block + 128));
}

std::size_t MimeReader::fill()
{
    if (begin_ > 0) {
        std::memmove(buffer_.data(), buffer_.data() + begin_, end_ - begin_);
        end_ -= begin_;
        scanned_ = scanned_ > begin_ ? scanned_ - begin_ : 0;
        begin_ = 0;
    }
    if (end_ == buffer_.size() || eof_) {
        return 0;
    }
    std::size_t n = source_.read(std::span<char>(buffer_.data() + end_, buffer_.size() - end_));
    if (n == 0) {
        eof_ = true;
    }
    end_ += n;
    return n;
}

void MimeReader::read_opening()
{
    // Need the whole first line in the window.
    for (;;) {
        auto nl = window().find('\n');
        if (nl != std::string_view::npos) {
            break;
        }
        if (end_ - begin_ > 256 || (fill() == 0 && eof_)) {
            throw Error(Errc::missing_boundary, "no dash-boundary line at start of package");
        }
    }
    std::string_view line = window().substr(0, window().find('\n'));
    if (line.ends_with('\r')) {
        line.remove_suffix(1);
    }
    line = trim(line);
    if (!line.starts_with("--")) {
        throw Error(Errc::missing_boundary, "package does not start with '--'");
    }
    if (!boundary_) {
        std::string_view value = line.substr(2);
        try {
            boundary_.emplace(std::string(value));
        } catch (const Error&) {
            throw Error(Errc::missing_boundary, "first line is not a valid dash-boundary");
        }
    }
    delimiter_ = "\r\n--" + boundary_->value();
    std::string_view dash = std::string_view(delimiter_).substr(2);
    if (line == std::string(dash) + "--") {
        begin_ += window().find('\n') + 1;
        state_ = State::done;
        return;
    }
    if (line != dash) {
        throw Error(Errc::missing_boundary, "first line does not match the boundary");
    }
    begin_ += window().find('\n') + 1;
    scanned_ = begin_;
}

MimeHeaders MimeReader::read_headers()
{
    // Find the blank line ending the header block, tolerating bare LF.
    std::size_t end_of_block = std::string_view::npos;
    std::size_t block_len = 0;
    for (;;) {
        std::string_view w = window();
        std::size_t limit = std::min(w.size(), max_header_block + 4);
        for (std::size_t i = 0; i < limit; ++i) {
            if (w[i] != '\n') {
                continue;
            }
            if (i == 0) {
                end_of_block = 0;
                block_len = 1;
                break;
            }
            if (w[i - 1] == '\n') {
                end_of_block = i - 1;
                block_len = i + 1;
                break;
            }
            if (w[i - 1] == '\r' && i >= 2 && w[i - 2] == '\n') {
                end_of_block = i - 2;
                block_len = i + 1;
                break;
            }
            if (i == 1 && w[0] == '\r') {
                end_of_block = 0;
                block_len = 2;
                break;
            }
        }
        if (end_of_block != std::string_view::npos) {
            break;
        }
        if (w.size() > max_header_block) {
            throw Error(Errc::malformed_headers, "header block exceeds 16 KiB");
        }
        if (fill() == 0 && eof_) {
            throw Error(Errc::truncated_package, "end of input inside part headers");
        }
    }
    if (end_of_block > max_header_block) {
        throw Error(Errc::malformed_headers, "header block exceeds 16 KiB");
    }

    std::string_view block = window().substr(0, end_of_block);
    MimeHeaders headers;
    headers.content_type.clear();
    std::vector<std::pair<std::string, std::string>> fields;
    while (!block.empty()) {
        auto nl = block.find('\n');
        std::string_view line = block.substr(0, nl);
        block = nl == std::string_view::npos ? std::string_view() : block.substr(nl + 1);
        if (line.ends_with('\r')) {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        if (line.front() == ' ' || line.front() == '\t') {
            if (fields.empty()) {
                throw Error(Errc::malformed_headers, "continuation line before any header");
            }
            fields.back().second += ' ';
            fields.back().second += trim(line);
            continue;
        }
        auto colon = line.find(':');
        if (colon == std::string_view::npos || colon == 0) {
            throw Error(Errc::malformed_headers, "header line without a field name");
        }
        fields.emplace_back(lower(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
    }
    for (auto& [name, value] : fields) {
        if (name == "content-type") {
            headers.content_type = value;
        } else if (name == "content-id") {
            std::string_view id = trim(value);
            if (id.starts_with('<') && id.ends_with('>') && id.size() >= 2) {
                id = id.substr(1, id.size() - 2);
            }
            headers.content_id = std::string(id);
        } else if (name == "content-transfer-encoding") {
            std::string enc = lower(value);
            if (enc == "binary") {
                headers.transfer_encoding = TransferEncoding::binary;
            } else if (enc == "base64") {
                headers.transfer_encoding = TransferEncoding::base64;
            } else if (enc == "8bit") {
                headers.transfer_encoding = TransferEncoding::eight_bit;
            } else {
                throw Error(Errc::malformed_headers, "unsupported Content-Transfer-Encoding '" + value + "'");
            }
        }
    }
    if (headers.content_type.empty()) {
        headers.content_type = "application/octet-stream";
    }
    begin_ += block_len;
    scanned_ = begin_;
    return headers;
}

std::optional<MimeHeaders> MimeReader::next_part()
{
    if (state_ == State::start) {
        read_opening();
        if (state_ == State::done) {
            return std::nullopt;
        }
        state_ = State::in_body;
        return read_headers();
    }
    if (state_ == State::in_body) {
        skip_body();
    }
    if (state_ == State::done) {
        return std::nullopt;
    }
    // Just past "\r\n--B": either "--" (close) or optional padding then a line end.
    while (end_ - begin_ < 2) {
        if (fill() == 0 && eof_) {
            throw Error(Errc::truncated_package, "end of input after a delimiter");
        }
    }
    if (window().starts_with("--")) {
        begin_ += 2;
        state_ = State::done;
        return std::nullopt;
    }
    for (;;) {
        std::string_view w = window();
        std::size_t i = 0;
        while (i < w.size() && (w[i] == ' ' || w[i] == '\t')) {
            ++i;
        }
        if (i < w.size()) {
            if (w.substr(i).starts_with("\r\n")) {
                begin_ += i + 2;
                break;
            }
            if (w[i] == '\n') {
                begin_ += i + 1;
                break;
            }
            if (w[i] != '\r' || i + 1 < w.size()) {
                throw Error(Errc::malformed_headers, "unexpected bytes after boundary");
            }
        }
        if (w.size() > 256) {
            throw Error(Errc::malformed_headers, "boundary line too long");
        }
        if (fill() == 0 && eof_) {
            throw Error(Errc::truncated_package, "end of input after a delimiter");
        }
    }
    state_ = State::in_body;
    return read_headers();
}

std::size_t MimeReader::read_body(std::span<char> buf)
{
    if (state_ != State::in_body || buf.empty()) {
        return 0;
    }
    for (;;) {
        std::string_view w = window();
        std::size_t from = scanned_ > begin_ ? scanned_ - begin_ : 0;
        std::size_t hit = w.find(delimiter_, from);
        if (hit != std::string_view::npos) {
            if (hit == 0) {
                begin_ += delimiter_.size();
                scanned_ = begin_;
                state_ = State::after_delimiter;
                return 0;
            }
            std::size_t n = std::min(hit, buf.size());
            std::memcpy(buf.data(), w.data(), n);
            begin_ += n;
            // The delimiter is still at the same absolute offset.
            scanned_ = std::max(scanned_, begin_ + (hit - n));
            return n;
        }
        // A delimiter may still start in the last delimiter-length-1 bytes.
        std::size_t safe = w.size() >= delimiter_.size() ? w.size() - (delimiter_.size() - 1) : 0;
        scanned_ = begin_ + safe;
        if (safe > 0) {
            std::size_t n = std::min(safe, buf.size());
            std::memcpy(buf.data(), w.data(), n);
            begin_ += n;
            return n;
        }
        if (eof_) {
            throw Error(Errc::truncated_package, "end of input inside a part body");
        }
        fill();
    }
}

void MimeReader::skip_body()
{
    std::array<char, 4096> scratch{};
    while (state_ == State::in_body) {
        read_body(scratch);
    }
}

std::vector<BufferedPart> read_all_parts(ByteSource& source, const std::optional<Boundary>& boundary)
{
    MimeReader reader(source, boundary);
    std::vector<BufferedPart> out;
    while (auto headers = reader.next_part()) {
        out.push_back({std::move(*headers), read_all(reader.body())});
    }
    return out;
}

std::string package_content_type(const Boundary& boundary, std::string_view root_content_id,
                                  std::string_view start_info)
{
    std::string out = "multipart/related; type=\"application/xop+xml\"; boundary=\"" + boundary.value() + "\"";
    if (!root_content_id.empty()) {
        out += "; start=\"<" + std::string(root_content_id) + ">\"";
    }
    if (!start_info.empty()) {
        out += "; start-info=\"" + std::string(start_info) + "\"";
    }
    return out;
}

ContentType parse_content_type(std::string_view value)
{
    ContentType ct;
    std::size_t semi = value.find(';');
    ct.media_type = lower(trim(value.substr(0, semi)));
    std::size_t pos = semi;
    while (pos != std::string_view::npos && pos < value.size()) {
        ++pos;
        while (pos < value.size() && (value[pos] == ' ' || value[pos] == '\t')) {
            ++pos;
        }
        std::size_t eq = value.find('=', pos);
        if (eq == std::string_view::npos) {
            break;
        }
        std::string name = lower(trim(value.substr(pos, eq - pos)));
        pos = eq + 1;
        std::string v;
        if (pos < value.size() && value[pos] == '"') {
            ++pos;
            while (pos < value.size() && value[pos] != '"') {
                if (value[pos] == '\\' && pos + 1 < value.size()) {
                    ++pos;
                }
                v += value[pos++];
            }
            pos = value.find(';', pos);
        } else {
            std::size_t next = value.find(';', pos);
            v = std::string(trim(value.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
            pos = next;
        }
        ct.parameters[name] = v;
    }
    return ct;
}

} // namespace streamsign::mime
