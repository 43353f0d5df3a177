#include "streamsign/transport.hpp"

#include "streamsign/error.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <span>
#include <type_traits>
#include <vector>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

namespace streamsign::transport {

namespace {

constexpr std::size_t max_header_bytes = 64 * 1024;

double seconds_between(Clock::time_point from, Clock::time_point to)
{
    return std::chrono::duration<double>(to - from).count();
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

class Fd {
public:
    explicit Fd(int fd = -1) : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Fd& operator=(Fd&& other) noexcept
    {
        if (this != &other) {
            reset();
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    int get() const noexcept { return fd_; }
    int release() noexcept { return std::exchange(fd_, -1); }
    void reset()
    {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_;
};

void set_timeouts(int fd, std::chrono::milliseconds timeout)
{
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

class SocketSink final : public ByteSink {
public:
    explicit SocketSink(int fd) : fd_(fd) {}
    void write(std::string_view data) override
    {
        while (!data.empty()) {
            ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) {
                    continue;
                }
                throw Error(Errc::sink_error, std::string("socket send: ") + std::strerror(errno));
            }
            data.remove_prefix(static_cast<std::size_t>(n));
        }
    }

private:
    int fd_;
};

/// Buffered socket reader. Returns 0 at orderly shutdown; reset and timeout
/// are reported as exceptions carrying the given code.
class SocketReader {
public:
    SocketReader(int fd, std::size_t capacity, Errc error) : fd_(fd), buffer_(capacity), error_(error) {}

    std::size_t read(std::span<char> out)
    {
        if (begin_ == end_ && !fill()) {
            return 0;
        }
        std::size_t n = std::min(out.size(), end_ - begin_);
        std::memcpy(out.data(), buffer_.data() + begin_, n);
        begin_ += n;
        return n;
    }

    /// Line without its CRLF (a bare LF is accepted). nullopt at EOF before any byte.
    std::optional<std::string> read_line(std::size_t limit)
    {
        std::string line;
        for (;;) {
            if (begin_ == end_ && !fill()) {
                if (line.empty()) {
                    return std::nullopt;
                }
                throw Error(error_, "connection closed inside a line");
            }
            const char* start = buffer_.data() + begin_;
            const void* nl = std::memchr(start, '\n', end_ - begin_);
            std::size_t take = nl ? static_cast<std::size_t>(static_cast<const char*>(nl) - start) + 1 : end_ - begin_;
            line.append(start, take);
            begin_ += take;
            if (line.size() > limit) {
                throw Error(error_, "line exceeds " + std::to_string(limit) + " bytes");
            }
            if (nl) {
                line.pop_back();
                if (!line.empty() && line.back() == '\r') {
                    line.pop_back();
                }
                return line;
            }
        }
    }

private:
    bool fill()
    {
        for (;;) {
            ssize_t n = ::recv(fd_, buffer_.data(), buffer_.size(), 0);
            if (n > 0) {
                begin_ = 0;
                end_ = static_cast<std::size_t>(n);
                return true;
            }
            if (n == 0) {
                return false;
            }
            if (errno == EINTR) {
                continue;
            }
            throw Error(error_, std::string("socket recv: ") + std::strerror(errno));
        }
    }

    int fd_;
    std::vector<char> buffer_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
    Errc error_;
};

using Headers = std::map<std::string, std::string>;

Headers read_headers(SocketReader& in, Errc error)
{
    Headers headers;
    std::size_t total = 0;
    for (;;) {
        auto line = in.read_line(max_header_bytes);
        if (!line) {
            throw Error(error, "connection closed inside headers");
        }
        if (line->empty()) {
            return headers;
        }
        total += line->size();
        if (total > max_header_bytes) {
            throw Error(error, "headers exceed " + std::to_string(max_header_bytes) + " bytes");
        }
        auto colon = line->find(':');
        if (colon == std::string::npos || colon == 0) {
            throw Error(error, "malformed header line");
        }
        headers[lower(trim(std::string_view(*line).substr(0, colon)))] =
            std::string(trim(std::string_view(*line).substr(colon + 1)));
    }
}

std::optional<std::uint64_t> parse_length(std::string_view text, int base)
{
    std::uint64_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value, base);
    if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
        return std::nullopt;
    }
    return value;
}

/// Request body in chunked transfer coding. EOF anywhere before the final
/// chunk is TruncatedPackage.
class ChunkedBody final : public ByteSource {
public:
    explicit ChunkedBody(SocketReader& in) : in_(in) {}

    std::size_t read(std::span<char> out) override
    {
        while (!done_ && remaining_ == 0) {
            next_chunk();
        }
        if (done_ || out.empty()) {
            return 0;
        }
        std::size_t want = static_cast<std::size_t>(std::min<std::uint64_t>(out.size(), remaining_));
        std::size_t n = guarded([&] { return in_.read(out.first(want)); });
        if (n == 0) {
            throw Error(Errc::truncated_package, "client closed the connection mid-chunk");
        }
        remaining_ -= n;
        if (remaining_ == 0) {
            expect_crlf_ = true;
        }
        return n;
    }

private:
    template <typename F>
    std::invoke_result_t<F> guarded(F&& f)
    {
        try {
            return f();
        } catch (const Error& e) {
            throw Error(Errc::truncated_package, e.what());
        }
    }

    std::string line()
    {
        auto l = guarded([&] { return in_.read_line(1024); });
        if (!l) {
            throw Error(Errc::truncated_package, "client closed the connection between chunks");
        }
        return *l;
    }

    void next_chunk()
    {
        if (expect_crlf_) {
            if (!line().empty()) {
                throw Error(Errc::malformed_message, "chunk data not followed by CRLF");
            }
            expect_crlf_ = false;
        }
        std::string size_line = line();
        std::string_view digits = trim(std::string_view(size_line).substr(0, size_line.find(';')));
        auto size = parse_length(digits, 16);
        if (!size) {
            throw Error(Errc::malformed_message, "bad chunk size line");
        }
        if (*size == 0) {
            while (!line().empty()) {
                // trailers are ignored
            }
            done_ = true;
            return;
        }
        remaining_ = *size;
    }

    SocketReader& in_;
    std::uint64_t remaining_ = 0;
    bool expect_crlf_ = false;
    bool done_ = false;
};

class LengthBody final : public ByteSource {
public:
    LengthBody(SocketReader& in, std::uint64_t length) : in_(in), remaining_(length) {}
    std::size_t read(std::span<char> out) override
    {
        if (remaining_ == 0 || out.empty()) {
            return 0;
        }
        std::size_t want = static_cast<std::size_t>(std::min<std::uint64_t>(out.size(), remaining_));
        std::size_t n = 0;
        try {
            n = in_.read(out.first(want));
        } catch (const Error& e) {
            throw Error(Errc::truncated_package, e.what());
        }
        if (n == 0) {
            throw Error(Errc::truncated_package, "client closed the connection with " + std::to_string(remaining_) +
                                                     " body bytes outstanding");
        }
        remaining_ -= n;
        return n;
    }

private:
    SocketReader& in_;
    std::uint64_t remaining_;
};

class EmptyBody final : public ByteSource {
public:
    std::size_t read(std::span<char>) override { return 0; }
};

/// Records when the first byte went in and when the last write returned.
class StampSink final : public ByteSink {
public:
    explicit StampSink(ByteSink& inner) : inner_(inner) {}
    void write(std::string_view data) override
    {
        if (!first_) {
            first_ = Clock::now();
        }
        inner_.write(data);
        last_ = Clock::now();
    }
    std::optional<Clock::time_point> first_, last_;

private:
    ByteSink& inner_;
};

/// Coalesces producer writes into chunk-sized HTTP chunks; the request line
/// and headers ride along with the first one.
class ChunkEncoder final : public RequestBody {
public:
    ChunkEncoder(ByteSink& out, std::string request_head, std::size_t chunk)
        : out_(out), head_(std::move(request_head)), chunk_(chunk)
    {
        pending_.reserve(chunk_);
    }

    void set_content_type(std::string value) override
    {
        if (head_sent_) {
            throw Error(Errc::invalid_argument, "content type set after the request headers were sent");
        }
        content_type_ = std::move(value);
    }

    void write(std::string_view data) override
    {
        bytes_ += data.size();
        while (!data.empty()) {
            std::size_t take = std::min(chunk_ - pending_.size(), data.size());
            pending_.append(data.substr(0, take));
            data.remove_prefix(take);
            if (pending_.size() == chunk_) {
                emit(false);
            }
        }
    }

    void finish() { emit(true); }
    std::uint64_t bytes() const noexcept { return bytes_; }

private:
    void emit(bool last)
    {
        frame_.clear();
        if (!head_sent_) {
            frame_ = head_ + "Content-Type: " + content_type_ + "\r\nTransfer-Encoding: chunked\r\n\r\n";
            head_sent_ = true;
        }
        if (!pending_.empty()) {
            char size[24];
            auto r = std::to_chars(size, size + sizeof size, pending_.size(), 16);
            frame_.append(size, r.ptr).append("\r\n").append(pending_).append("\r\n");
            pending_.clear();
        }
        if (last) {
            frame_.append("0\r\n\r\n");
        }
        out_.write(frame_);
    }

    ByteSink& out_;
    std::string head_;
    std::size_t chunk_;
    std::string content_type_ = "application/octet-stream";
    std::string pending_;
    std::string frame_;
    bool head_sent_ = false;
    std::uint64_t bytes_ = 0;
};

const char* reason_phrase(int status)
{
    switch (status) {
    case 200:
        return "OK";
    case 400:
        return "Bad Request";
    case 404:
        return "Not Found";
    default:
        return "Status";
    }
}

std::string json_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '"':
            out += "\\\"";
            break;
        case '\\':
            out += "\\\\";
            break;
        default:
            if (static_cast<unsigned char>(c) < 0x20) {
                out += ' ';
            } else {
                out += c;
            }
        }
    }
    return out;
}

std::pair<std::string, int> split_host_port(std::string_view text)
{
    std::string host;
    std::string_view rest;
    if (!text.empty() && text.front() == '[') {
        auto close = text.find(']');
        if (close == std::string_view::npos) {
            throw Error(Errc::invalid_argument, "unterminated IPv6 host in '" + std::string(text) + "'");
        }
        host = std::string(text.substr(1, close - 1));
        rest = text.substr(close + 1);
    } else {
        auto colon = text.rfind(':');
        if (colon == std::string_view::npos) {
            throw Error(Errc::invalid_argument, "expected host:port, got '" + std::string(text) + "'");
        }
        host = std::string(text.substr(0, colon));
        rest = text.substr(colon);
    }
    if (rest.empty() || rest.front() != ':') {
        throw Error(Errc::invalid_argument, "expected host:port, got '" + std::string(text) + "'");
    }
    auto port = parse_length(rest.substr(1), 10);
    if (!port || *port > 65535) {
        throw Error(Errc::invalid_argument, "bad port in '" + std::string(text) + "'");
    }
    return {host.empty() ? "127.0.0.1" : host, static_cast<int>(*port)};
}

addrinfo* resolve(const Endpoint& endpoint, bool passive, Errc error)
{
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = passive ? AI_PASSIVE : 0;
    addrinfo* list = nullptr;
    std::string port = std::to_string(endpoint.port);
    int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &list);
    if (rc != 0) {
        throw Error(error, "resolve " + endpoint.authority() + ": " + ::gai_strerror(rc));
    }
    return list;
}

} // namespace

Endpoint Endpoint::parse(std::string_view text)
{
    Endpoint e;
    auto bracket = text.find(']');
    auto slash = text.find('/', bracket == std::string_view::npos ? 0 : bracket);
    std::string_view authority = text.substr(0, slash);
    if (slash != std::string_view::npos) {
        e.path = std::string(text.substr(slash));
    }
    std::tie(e.host, e.port) = split_host_port(authority);
    return e;
}

void Endpoint::validate() const
{
    if (port < 1 || port > 65535) {
        throw Error(Errc::invalid_argument, "port " + std::to_string(port) + " outside 1..65535");
    }
    if (path.empty() || path.front() != '/') {
        throw Error(Errc::invalid_argument, "path must begin with '/'");
    }
}

std::string Endpoint::authority() const
{
    bool v6 = host.find(':') != std::string::npos;
    return (v6 ? "[" + host + "]" : host) + ":" + std::to_string(port);
}

std::uint64_t ThrottleConfig::effective_bucket() const
{
    return bucket != 0 ? bucket : default_chunk_size();
}

void ThrottleConfig::validate(std::size_t chunk) const
{
    if (!(rate > 0)) {
        throw Error(Errc::invalid_argument, "throttle rate must be positive");
    }
    if (chunk == 0) {
        chunk = default_chunk_size();
    }
    if (effective_bucket() < chunk) {
        throw Error(Errc::invalid_argument, "throttle bucket smaller than one chunk");
    }
}

ThrottledSink::ThrottledSink(ByteSink& inner, ThrottleConfig config)
    : inner_(inner), config_(config), bucket_(config.effective_bucket()), last_(Clock::now())
{
    if (!(config_.rate > 0)) {
        throw Error(Errc::invalid_argument, "throttle rate must be positive");
    }
}

void ThrottledSink::refill()
{
    auto now = Clock::now();
    tokens_ = std::min(static_cast<double>(bucket_), tokens_ + config_.rate * seconds_between(last_, now));
    last_ = now;
}

void ThrottledSink::write(std::string_view data)
{
    while (!data.empty()) {
        std::size_t piece = static_cast<std::size_t>(std::min<std::uint64_t>(data.size(), bucket_));
        refill();
        inner_.write(data.substr(0, piece));
        data.remove_prefix(piece);
        tokens_ -= static_cast<double>(piece);
        while (tokens_ < 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(-tokens_ / config_.rate));
            refill();
        }
    }
}

std::string Request::content_type() const
{
    auto it = headers.find("content-type");
    return it == headers.end() ? std::string() : it->second;
}

SendResult send(const Endpoint& endpoint, const Producer& producer, const std::optional<ThrottleConfig>& throttle,
                const SendOptions& options)
{
    const auto t0 = options.session_start.value_or(Clock::now());
    endpoint.validate();
    const std::size_t chunk = options.chunk_size != 0 ? options.chunk_size : default_chunk_size();
    if (throttle) {
        throttle->validate(chunk);
    }

    Fd fd;
    {
        addrinfo* list = resolve(endpoint, false, Errc::connect_error);
        std::string last_error = "no addresses";
        for (addrinfo* ai = list; ai != nullptr; ai = ai->ai_next) {
            Fd s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
            if (s.get() < 0) {
                last_error = std::strerror(errno);
                continue;
            }
            if (::connect(s.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
                fd = std::move(s);
                break;
            }
            last_error = std::strerror(errno);
        }
        ::freeaddrinfo(list);
        if (fd.get() < 0) {
            throw Error(Errc::connect_error, "connect " + endpoint.authority() + ": " + last_error);
        }
    }
    int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    set_timeouts(fd.get(), options.timeout);

    SocketSink socket(fd.get());
    std::optional<ThrottledSink> paced;
    ByteSink* link = &socket;
    if (throttle) {
        link = &paced.emplace(socket, *throttle);
    }
    StampSink stamp(*link);
    std::string head = "POST " + endpoint.path + " HTTP/1.1\r\nHost: " + endpoint.authority() +
                       "\r\nConnection: close\r\n";
    ChunkEncoder body(stamp, std::move(head), chunk);
    producer(body);
    body.finish();
    ::shutdown(fd.get(), SHUT_WR);

    SendResult result;
    result.bytes_sent = body.bytes();
    result.first_byte_s = seconds_between(t0, *stamp.first_);
    result.last_byte_s = seconds_between(t0, *stamp.last_);

    SocketReader in(fd.get(), 16 * 1024, Errc::io_error);
    auto status_line = in.read_line(max_header_bytes);
    if (!status_line) {
        throw Error(Errc::io_error, "server closed the connection without a response");
    }
    std::string_view sl = *status_line;
    auto sp = sl.find(' ');
    auto code = sp == std::string_view::npos ? std::nullopt : parse_length(sl.substr(sp + 1, 3), 10);
    if (sl.substr(0, 5) != "HTTP/" || !code) {
        throw Error(Errc::io_error, "malformed status line");
    }
    result.status = static_cast<int>(*code);
    Headers headers = read_headers(in, Errc::io_error);
    std::vector<char> buf(16 * 1024);
    std::optional<std::uint64_t> length;
    if (auto it = headers.find("content-length"); it != headers.end()) {
        length = parse_length(it->second, 10);
    }
    while (!length || result.body.size() < *length) {
        std::size_t want = buf.size();
        if (length) {
            want = static_cast<std::size_t>(std::min<std::uint64_t>(want, *length - result.body.size()));
        }
        std::size_t n = in.read(std::span<char>(buf.data(), want));
        if (n == 0) {
            if (length) {
                throw Error(Errc::io_error, "response body truncated");
            }
            break;
        }
        result.body.append(buf.data(), n);
    }
    result.response_s = seconds_between(t0, Clock::now());
    return result;
}

Server::Server(const Endpoint& listen, Handler handler, ServerOptions options)
    : listen_(listen), handler_(std::move(handler)), options_(options)
{
    if (listen_.port < 0 || listen_.port > 65535) {
        throw Error(Errc::bind_error, "port " + std::to_string(listen_.port) + " outside 0..65535");
    }
    addrinfo* list = resolve(listen_, true, Errc::bind_error);
    std::string last_error = "no addresses";
    for (addrinfo* ai = list; ai != nullptr; ai = ai->ai_next) {
        Fd s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (s.get() < 0) {
            last_error = std::strerror(errno);
            continue;
        }
        int one = 1;
        ::setsockopt(s.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(s.get(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.get(), 64) == 0) {
            fd_ = s.release();
            break;
        }
        last_error = std::strerror(errno);
    }
    ::freeaddrinfo(list);
    if (fd_ < 0) {
        throw Error(Errc::bind_error, "bind " + listen_.authority() + ": " + last_error);
    }
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                       : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

Server::~Server()
{
    stop();
}

Endpoint Server::endpoint() const
{
    Endpoint e = listen_;
    if (e.host == "0.0.0.0" || e.host.empty()) {
        e.host = "127.0.0.1";
    } else if (e.host == "::") {
        e.host = "::1";
    }
    e.port = port_;
    return e;
}

void Server::stop()
{
    {
        std::lock_guard lock(mutex_);
        if (stopping_ && !acceptor_.joinable()) {
            return;
        }
        stopping_ = true;
    }
    idle_.notify_all();
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
    }
    if (acceptor_.joinable()) {
        acceptor_.join();
    }
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [this] { return active_ == 0; });
}

void Server::wait()
{
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [this] { return stopping_; });
}

void Server::accept_loop()
{
    for (;;) {
        int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (c < 0) {
            if (errno == EINTR || errno == ECONNABORTED) {
                continue;
            }
            std::lock_guard lock(mutex_);
            if (stopping_) {
                return;
            }
            // Transient failure such as descriptor exhaustion; back off briefly.
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
            continue;
        }
        {
            std::lock_guard lock(mutex_);
            if (stopping_) {
                ::close(c);
                return;
            }
            ++active_;
        }
        std::thread([this, c] {
            handle(c);
            std::lock_guard lock(mutex_);
            --active_;
            idle_.notify_all();
        }).detach();
    }
}

void Server::handle(int raw)
{
    Fd fd(raw);
    set_timeouts(fd.get(), options_.idle_timeout);
    const std::size_t chunk = options_.chunk_size != 0 ? options_.chunk_size : default_chunk_size();
    SocketReader in(fd.get(), chunk, Errc::truncated_package);

    Request request;
    std::unique_ptr<ByteSource> body;
    Response response;
    try {
        auto line = in.read_line(max_header_bytes);
        if (!line) {
            return;
        }
        auto sp1 = line->find(' ');
        auto sp2 = line->find(' ', sp1 == std::string::npos ? sp1 : sp1 + 1);
        if (sp1 == std::string::npos || sp2 == std::string::npos) {
            throw Error(Errc::malformed_message, "malformed request line");
        }
        request.method = line->substr(0, sp1);
        request.path = line->substr(sp1 + 1, sp2 - sp1 - 1);
        request.headers = read_headers(in, Errc::malformed_message);
        if (auto te = request.headers.find("transfer-encoding");
            te != request.headers.end() && lower(te->second).find("chunked") != std::string::npos) {
            body = std::make_unique<ChunkedBody>(in);
        } else if (auto cl = request.headers.find("content-length"); cl != request.headers.end()) {
            auto length = parse_length(cl->second, 10);
            if (!length) {
                throw Error(Errc::malformed_message, "bad Content-Length");
            }
            body = std::make_unique<LengthBody>(in, *length);
        } else {
            body = std::make_unique<EmptyBody>();
        }
    } catch (const Error& e) {
        response = {400, std::string("{\"valid\":false,\"reason\":\"") + to_string(e.code()) + ": " +
                             json_escape(e.what()) + "\"}"};
    }

    bool truncated = false;
    if (body) {
        try {
            response = handler_(request, *body);
        } catch (const Error& e) {
            truncated = e.code() == Errc::truncated_package;
            response = {400, std::string("{\"valid\":false,\"reason\":\"") + to_string(e.code()) + ": " +
                                 json_escape(e.what()) + "\"}"};
        } catch (const std::exception& e) {
            response = {400, "{\"valid\":false,\"reason\":\"" + json_escape(e.what()) + "\"}"};
        }
        // Consume what the handler left so the client is not reset mid-write.
        if (!truncated) {
            try {
                std::vector<char> sink(chunk);
                while (body->read(sink) != 0) {
                }
            } catch (const Error&) {
                truncated = true;
            }
        }
    }
    served_.fetch_add(1);
    if (truncated) {
        return;
    }
    std::string out = "HTTP/1.1 " + std::to_string(response.status) + " " + reason_phrase(response.status) +
                      "\r\nContent-Type: " + response.content_type +
                      "\r\nContent-Length: " + std::to_string(response.body.size()) +
                      "\r\nConnection: close\r\n\r\n" + response.body;
    try {
        SocketSink(fd.get()).write(out);
    } catch (const Error&) {
        // The client is gone; nothing more to do.
    }
    ::shutdown(fd.get(), SHUT_WR);
}

std::unique_ptr<Server> serve(const Endpoint& listen, Handler handler, ServerOptions options)
{
    return std::make_unique<Server>(listen, std::move(handler), options);
}

} // namespace streamsign::transport
