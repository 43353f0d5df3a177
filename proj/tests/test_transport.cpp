#include "streamsign/crypto.hpp"
#include "streamsign/error.hpp"
#include "streamsign/memtrack.hpp"
#include "streamsign/transport.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <future>
#include <thread>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

using namespace streamsign;
using namespace streamsign::transport;
using streamsign::testing::error_code;

namespace {

/// Replies with the body's SHA-256 in hex and its length.
Response digest_handler(const Request& request, ByteSource& body)
{
    crypto::Digest d(crypto::algorithm::sha256);
    std::vector<char> buf(64 * 1024);
    std::uint64_t total = 0;
    while (std::size_t n = body.read(buf)) {
        d.update(std::string_view(buf.data(), n));
        total += n;
    }
    return {200, request.path + " " + request.content_type() + " " + std::to_string(total) + " " +
                     crypto::to_hex(d.finish())};
}

Producer bytes_producer(std::string data, std::string content_type = "application/test")
{
    return [data = std::move(data), content_type](RequestBody& body) {
        body.set_content_type(content_type);
        for (std::size_t i = 0; i < data.size(); i += 1000) {
            body.write(std::string_view(data).substr(i, 1000));
        }
    };
}

std::string expected_reply(const std::string& path, const std::string& data)
{
    return path + " application/test " + std::to_string(data.size()) + " " +
           crypto::to_hex(crypto::Digest::compute(crypto::algorithm::sha256, data));
}

} // namespace

TEST(Endpoint, ParseAndValidate)
{
    auto e = Endpoint::parse("localhost:8080/upload");
    EXPECT_EQ(e.host, "localhost");
    EXPECT_EQ(e.port, 8080);
    EXPECT_EQ(e.path, "/upload");
    auto v6 = Endpoint::parse("[::1]:9");
    EXPECT_EQ(v6.host, "::1");
    EXPECT_EQ(v6.path, "/");
    EXPECT_EQ(v6.authority(), "[::1]:9");
    EXPECT_EQ(error_code([] { Endpoint::parse("nohost"); }), Errc::invalid_argument);
    EXPECT_EQ(error_code([] { Endpoint::parse("h:70000"); }), Errc::invalid_argument);
    EXPECT_EQ(error_code([] { Endpoint{"h", 0, "/"}.validate(); }), Errc::invalid_argument);
    EXPECT_EQ(error_code([] { Endpoint{"h", 80, "x"}.validate(); }), Errc::invalid_argument);
}

TEST(Throttle, ConfigValidation)
{
    EXPECT_EQ(error_code([] { ThrottleConfig{0, 0}.validate(); }), Errc::invalid_argument);
    EXPECT_EQ(error_code([] { ThrottleConfig{1e6, 10}.validate(65536); }), Errc::invalid_argument);
    EXPECT_FALSE(error_code([] { ThrottleConfig{1e6, 65536}.validate(65536); }));
}

TEST(Throttle, TransparentAndPaced)
{
    PrngSource gen(3, 8 << 20);
    std::string data = read_all(gen);
    StringSink out;
    ThrottledSink paced(out, {4.0 * (1 << 20), 64 * 1024});
    auto t0 = Clock::now();
    for (std::size_t i = 0; i < data.size(); i += 300000) {
        paced.write(std::string_view(data).substr(i, 300000));
    }
    double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    EXPECT_EQ(out.str(), data);
    // 8 MiB at 4 MiB/s: 2 s, within 5%.
    EXPECT_GE(elapsed, 2.0);
    EXPECT_LE(elapsed, 2.1);
}

TEST(Transport, RoundTripAndTiming)
{
    auto server = serve({"127.0.0.1", 0, "/"}, digest_handler);
    PrngSource gen(1, 3'000'001);
    std::string data = read_all(gen);
    Endpoint to = server->endpoint();
    to.path = "/up";
    auto r = send(to, bytes_producer(data));
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body, expected_reply("/up", data));
    EXPECT_EQ(r.bytes_sent, data.size());
    EXPECT_LE(0.0, r.first_byte_s);
    EXPECT_LE(r.first_byte_s, r.last_byte_s);
    EXPECT_LE(r.last_byte_s, r.response_s);

    auto empty = send(to, bytes_producer(""));
    EXPECT_EQ(empty.body, expected_reply("/up", ""));
    EXPECT_EQ(server->requests_served(), 2u);
}

// 10 MiB at 1 MiB/s: the paced span is 10 s plus framing, within 5%.
TEST(Transport, ThrottledSendDuration)
{
    auto server = serve({"127.0.0.1", 0, "/"}, digest_handler);
    PrngSource gen(2, 10 << 20);
    std::string data = read_all(gen);
    auto r = send(server->endpoint(), bytes_producer(data), ThrottleConfig{double(1 << 20), 64 * 1024});
    EXPECT_EQ(r.body, expected_reply("/", data));
    double span = r.last_byte_s - r.first_byte_s;
    EXPECT_GE(span, 10.0);
    EXPECT_LE(span, 10.5);
}

TEST(Transport, ConnectError)
{
    int port = 0;
    {
        auto server = serve({"127.0.0.1", 0, "/"}, digest_handler);
        port = server->port();
    }
    EXPECT_EQ(error_code([&] { send({"127.0.0.1", port, "/"}, bytes_producer("x")); }), Errc::connect_error);
}

TEST(Transport, BindError)
{
    auto server = serve({"127.0.0.1", 0, "/"}, digest_handler);
    EXPECT_EQ(error_code([&] { serve({"127.0.0.1", server->port(), "/"}, digest_handler); }), Errc::bind_error);
}

TEST(Transport, ClientDisconnectMidBody)
{
    std::promise<std::optional<Errc>> seen;
    auto server = serve({"127.0.0.1", 0, "/"}, [&](const Request&, ByteSource& body) {
        seen.set_value(error_code([&] { read_all(body); }));
        return Response{};
    });
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(server->port()));
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
    std::string partial = "POST / HTTP/1.1\r\nTransfer-Encoding: chunked\r\n\r\n10\r\n0123456789";
    ASSERT_EQ(::send(fd, partial.data(), partial.size(), 0), static_cast<ssize_t>(partial.size()));
    ::close(fd);
    auto future = seen.get_future();
    ASSERT_EQ(future.wait_for(std::chrono::seconds(10)), std::future_status::ready);
    EXPECT_EQ(future.get(), Errc::truncated_package);
    server->stop();
    EXPECT_EQ(server->requests_served(), 1u);
}

TEST(Transport, ConcurrentUploadsAreIndependent)
{
    std::atomic<int> inside{0};
    std::atomic<int> overlap{0};
    auto server = serve({"127.0.0.1", 0, "/"}, [&](const Request& r, ByteSource& body) {
        overlap = std::max(overlap.load(), ++inside);
        auto reply = digest_handler(r, body);
        --inside;
        return reply;
    });
    PrngSource g1(10, 2 << 20), g2(11, 3 << 20);
    std::string a = read_all(g1), b = read_all(g2);
    ThrottleConfig slow{4.0 * (1 << 20), 64 * 1024};
    auto fa = std::async(std::launch::async, [&] { return send(server->endpoint(), bytes_producer(a), slow); });
    auto fb = std::async(std::launch::async, [&] { return send(server->endpoint(), bytes_producer(b), slow); });
    EXPECT_EQ(fa.get().body, expected_reply("/", a));
    EXPECT_EQ(fb.get().body, expected_reply("/", b));
    EXPECT_EQ(overlap.load(), 2);
}

TEST(Transport, ServerMemoryIsBoundedPerConnection)
{
    std::int64_t peak = -1;
    auto server = serve({"127.0.0.1", 0, "/"}, [&](const Request& r, ByteSource& body) {
        memtrack::Scope scope;
        auto reply = digest_handler(r, body);
        peak = scope.peak();
        return reply;
    });
    auto r = send(server->endpoint(), [](RequestBody& body) {
        PrngSource gen(4, 64 << 20);
        pump(gen, body);
    });
    EXPECT_EQ(r.status, 200);
    ASSERT_TRUE(memtrack::active());
    EXPECT_GE(peak, 0);
    EXPECT_LT(peak, 1 << 20);
}

TEST(Transport, HandlerErrorsBecome400)
{
    auto server = serve({"127.0.0.1", 0, "/"}, [](const Request&, ByteSource&) -> Response {
        throw Error(Errc::malformed_message, "nope");
    });
    auto r = send(server->endpoint(), bytes_producer("abc"));
    EXPECT_EQ(r.status, 400);
    EXPECT_NE(r.body.find("MalformedMessage"), std::string::npos);
}
