#pragma once

#include "streamsign/io.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

namespace streamsign::transport {

using Clock = std::chrono::steady_clock;

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;
    std::string path = "/";

    /// "host:port" or "host:port/path". IPv6 hosts go in brackets.
    static Endpoint parse(std::string_view text);
    /// Throws InvalidArgument unless port is in 1..65535 and path starts with '/'.
    void validate() const;
    std::string authority() const;
};

struct ThrottleConfig {
    double rate = 12.5e6;  ///< bytes per second
    std::uint64_t bucket = 0; ///< burst size in bytes; 0 selects one chunk

    /// Throws InvalidArgument unless rate > 0 and bucket >= chunk.
    void validate(std::size_t chunk = 0) const;
    std::uint64_t effective_bucket() const;
};

/// Token-bucket pacing in front of another sink. The bucket starts empty and
/// a write may overdraw it; the overdraft is slept off before the write
/// returns, so the caller sees the time the bytes would take on a link of the
/// configured rate. Writes larger than the bucket are split.
class ThrottledSink final : public ByteSink {
public:
    ThrottledSink(ByteSink& inner, ThrottleConfig config);
    void write(std::string_view data) override;
    void flush() override { inner_.flush(); }

private:
    void refill();

    ByteSink& inner_;
    ThrottleConfig config_;
    std::uint64_t bucket_;
    double tokens_ = 0;
    Clock::time_point last_;
};

/// Request body handed to a send() producer. Headers go out with the first
/// body byte, so the content type may be set any time before that.
class RequestBody : public ByteSink {
public:
    virtual void set_content_type(std::string value) = 0;
};

using Producer = std::function<void(RequestBody&)>;

struct SendOptions {
    std::optional<Clock::time_point> session_start; ///< defaults to the call time
    std::size_t chunk_size = 0;
    std::chrono::milliseconds timeout{120000};
};

struct SendResult {
    int status = 0;
    std::string body;
    double first_byte_s = 0; ///< first request byte handed to the socket
    double last_byte_s = 0;  ///< last request byte paced out
    double response_s = 0;   ///< response fully read
    std::uint64_t bytes_sent = 0; ///< request body bytes, before chunk framing
};

/// POSTs one chunked request and reads the response. Throws ConnectError,
/// SinkError, or IoError; whatever the producer throws propagates after the
/// connection is closed.
SendResult send(const Endpoint& endpoint, const Producer& producer,
                const std::optional<ThrottleConfig>& throttle = std::nullopt, const SendOptions& options = {});

struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> headers; ///< lower-cased names
    std::string content_type() const;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Called on the connection's own thread with the body as a pull stream.
/// The body throws TruncatedPackage if the client goes away mid-request.
using Handler = std::function<Response(const Request&, ByteSource& body)>;

struct ServerOptions {
    std::chrono::milliseconds idle_timeout{60000};
    std::size_t chunk_size = 0;
};

class Server {
public:
    /// Binds and starts accepting. Port 0 picks an ephemeral port. Throws BindError.
    Server(const Endpoint& listen, Handler handler, ServerOptions options = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    int port() const noexcept { return port_; }
    Endpoint endpoint() const;
    /// Stops accepting and waits for connections in flight.
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();
    std::uint64_t requests_served() const noexcept { return served_.load(); }

private:
    void accept_loop();
    void handle(int fd);

    Endpoint listen_;
    Handler handler_;
    ServerOptions options_;
    int fd_ = -1;
    int port_ = 0;
    std::thread acceptor_;
    std::mutex mutex_;
    std::condition_variable idle_;
    std::size_t active_ = 0;
    bool stopping_ = false;
    std::atomic<std::uint64_t> served_{0};
};

std::unique_ptr<Server> serve(const Endpoint& listen, Handler handler, ServerOptions options = {});

} // namespace streamsign::transport
