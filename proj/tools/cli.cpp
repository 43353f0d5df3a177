// streamsign command-line front end.
//
// Exit codes: 0 success or valid signature, 1 invalid or malformed message,
// 2 usage error, 3 I/O, key or network error.

#include "streamsign/bench.hpp"
#include "streamsign/error.hpp"
#include "streamsign/io.hpp"
#include "streamsign/mime.hpp"
#include "streamsign/transport.hpp"
#include "streamsign/wssec.hpp"
#include "streamsign/xml.hpp"
#include "streamsign/xop.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <strings.h>

using namespace streamsign;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_usage = 2;
constexpr int exit_io = 3;

int exit_code_for(Errc code)
{
    switch (code) {
    case Errc::invalid_argument:
    case Errc::malformed_xml:
    case Errc::unsupported_construct:
    case Errc::path_not_found:
    case Errc::duplicate_path:
        return exit_usage;
    case Errc::source_error:
    case Errc::sink_error:
    case Errc::body_read_error:
    case Errc::io_error:
    case Errc::connect_error:
    case Errc::bind_error:
    case Errc::server_unavailable:
    case Errc::key_error:
    case Errc::empty_report:
        return exit_io;
    default:
        return exit_invalid;
    }
}

void fail_line(const std::string& code, const std::string& message)
{
    std::string one = message;
    if (one.rfind(code + ": ", 0) == 0) {
        one.erase(0, code.size() + 2);
    }
    for (char& c : one) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    std::cerr << "streamsign: " << code << ": " << one << std::endl;
}

void note(const std::string& line)
{
    std::cerr << line << std::endl;
}

std::string read_file(const std::string& path)
{
    FileSource in(path);
    return read_all(in);
}

/// `/xpath=FILE` puts FILE in the named element; a bare FILE gets a fresh
/// pl:Data element appended to the Body.
xop::Binaries attach(xml::XmlNode& envelope, const std::vector<std::string>& specs)
{
    constexpr std::string_view payload_ns = "urn:streamsign:payload";
    xop::Binaries binaries;
    for (const auto& spec : specs) {
        auto eq = spec.find('=');
        if (!spec.empty() && spec.front() == '/' && eq != std::string::npos) {
            binaries.emplace_back(spec.substr(0, eq), xop::BinaryContent::from_file(spec.substr(eq + 1)));
            continue;
        }
        xml::XmlNode* body = nullptr;
        for (auto& child : envelope.children()) {
            if (auto* e = std::get_if<xml::XmlNode>(&child); e && e->name().local == "Body") {
                body = e;
            }
        }
        if (body == nullptr) {
            throw Error(Errc::invalid_argument, "envelope has no Body to attach " + spec + " to");
        }
        body->append(xml::XmlNode(xml::XmlName("Data", std::string(payload_ns), "pl")));
        int index = 0;
        for (const auto* child : body->element_children()) {
            index += child->name().matches(payload_ns, "Data") ? 1 : 0;
        }
        binaries.emplace_back("/Envelope/Body/Data[" + std::to_string(index) + "]",
                              xop::BinaryContent::from_file(spec));
    }
    return binaries;
}

crypto::KeyMaterial load_keys(const std::string& key, const std::string& wrap_key)
{
    std::optional<std::filesystem::path> wrap;
    if (!wrap_key.empty()) {
        wrap = wrap_key;
    }
    return crypto::KeyMaterial::load(key, wrap);
}

/// Recovers the multipart Content-Type from the opening of a package on disk
/// or a pipe: the boundary from the first line, the start from the first
/// part's Content-ID. Returns the bytes consumed so they can be replayed.
std::pair<std::string, std::string> sniff_content_type(ByteSource& in)
{
    std::string head;
    std::vector<char> buf(4096);
    while (head.find("\r\n\r\n") == std::string::npos && head.size() < 64 * 1024) {
        std::size_t n = in.read(buf);
        if (n == 0) {
            break;
        }
        head.append(buf.data(), n);
    }
    auto eol = head.find("\r\n");
    auto end = head.find("\r\n\r\n");
    if (head.rfind("--", 0) != 0 || eol == std::string::npos || end == std::string::npos) {
        throw Error(Errc::malformed_message, "input does not start with a MIME boundary line");
    }
    mime::Boundary boundary(head.substr(2, eol - 2));
    std::string cid;
    std::size_t pos = eol + 2;
    while (pos < end) {
        auto next = head.find("\r\n", pos);
        std::string line = head.substr(pos, next - pos);
        if (line.size() > 11 && strncasecmp(line.c_str(), "content-id:", 11) == 0) {
            cid = line.substr(11);
            cid.erase(0, cid.find_first_not_of(" \t<"));
            cid.erase(cid.find_last_not_of(" \t>") + 1);
        }
        pos = next + 2;
    }
    if (cid.empty()) {
        throw Error(Errc::malformed_message, "root part has no Content-ID");
    }
    return {mime::package_content_type(boundary, cid), head};
}

std::uint64_t parse_size(const std::string& text)
{
    std::size_t used = 0;
    double value = std::stod(text, &used);
    std::string suffix = text.substr(used);
    double scale = 1;
    if (suffix == "K" || suffix == "k" || suffix == "KiB") {
        scale = 1024;
    } else if (suffix == "M" || suffix == "MiB") {
        scale = 1024.0 * 1024;
    } else if (suffix == "G" || suffix == "GiB") {
        scale = 1024.0 * 1024 * 1024;
    } else if (!suffix.empty()) {
        throw Error(Errc::invalid_argument, "bad size '" + text + "'");
    }
    if (value < 0) {
        throw Error(Errc::invalid_argument, "negative size '" + text + "'");
    }
    return static_cast<std::uint64_t>(value * scale);
}

template <typename T>
std::vector<T> split_list(const std::string& text, T (*convert)(const std::string&))
{
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) {
            out.push_back(convert(item));
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

bench::BenchMode mode_from(const std::string& s)
{
    return bench::parse_bench_mode(s);
}

std::optional<transport::ThrottleConfig> throttle_from(double rate)
{
    if (rate <= 0) {
        return std::nullopt;
    }
    return transport::ThrottleConfig{rate, 0};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Streaming and blocking signing of MTOM/XOP SOAP messages"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // pack
    std::string envelope_path, out_path = "-", in_path = "-";
    std::vector<std::string> attachments;
    auto* pack = app.add_subcommand("pack", "Package an envelope and attachments without signing");
    pack->add_option("--envelope", envelope_path, "SOAP envelope XML")->required();
    pack->add_option("--attach", attachments, "FILE or /xpath=FILE")->required();
    pack->add_option("--out", out_path, "Output package, - for stdout");

    // sign
    std::string mode = "streaming", key_path, wrap_key_path;
    bool strict = false;
    auto* sign = app.add_subcommand("sign", "Sign and package a message");
    sign->add_option("--mode", mode, "blocking or streaming")->check(CLI::IsMember({"blocking", "streaming"}));
    sign->add_flag("--strict", strict, "Encrypt the deferred signature (streaming only)");
    sign->add_option("--key", key_path, "Private key PEM")->required();
    sign->add_option("--wrap-key", wrap_key_path, "Shared wrap key file (strict mode)");
    sign->add_option("--envelope", envelope_path, "SOAP envelope XML")->required();
    sign->add_option("--attach", attachments, "FILE or /xpath=FILE")->required();
    sign->add_option("--out", out_path, "Output package, - for stdout");

    // verify
    auto* verify = app.add_subcommand("verify", "Verify a signed package");
    verify->add_option("--key", key_path, "Signer's public or private key PEM")->required();
    verify->add_option("--wrap-key", wrap_key_path, "Shared wrap key file");
    verify->add_option("--in", in_path, "Input package, - for stdin");

    // send
    std::string to;
    double rate = 0;
    auto* send = app.add_subcommand("send", "Stream a package to a server");
    send->add_option("--to", to, "host:port[/path]")->required();
    send->add_option("--in", in_path, "Input package, - for stdin");
    send->add_option("--rate", rate, "Egress throttle in bytes/s");

    // serve
    std::string listen;
    auto* serve = app.add_subcommand("serve", "Run the verifying server");
    serve->add_option("--listen", listen, "host:port")->required();
    serve->add_option("--key", key_path, "Signer's public key PEM")->required();
    serve->add_option("--wrap-key", wrap_key_path, "Shared wrap key file");

    // bench
    std::string sizes = "1M,4M,16M,64M,256M", modes = "unsigned,blocking,streaming_strict", csv_path, plot_path;
    double bench_rate = 12.5e6;
    int reps = 3, warmup = 1;
    std::uint64_t seed = 1;
    auto* bench_cmd = app.add_subcommand("bench", "Run the throughput benchmark");
    bench_cmd->add_option("--sizes", sizes, "Comma-separated sizes, K/M/G suffixes are binary");
    bench_cmd->add_option("--modes", modes, "Comma-separated subset of unsigned,blocking,streaming_lax,streaming_strict");
    bench_cmd->add_option("--rate", bench_rate, "Egress throttle in bytes/s, 0 for none");
    bench_cmd->add_option("--reps", reps, "Timed repetitions per cell (>= 3)");
    bench_cmd->add_option("--warmup", warmup, "Discarded runs per cell");
    bench_cmd->add_option("--seed", seed, "Payload PRNG seed");
    bench_cmd->add_option("--out", csv_path, "CSV report")->required();
    bench_cmd->add_option("--plot-data", plot_path, "Also write a gnuplot data file");
    bench_cmd->add_option("--to", to, "Use a running server instead of an in-process one");
    bench_cmd->add_option("--key", key_path, "Private key PEM (generated when omitted)");
    bench_cmd->add_option("--wrap-key", wrap_key_path, "Shared wrap key file");

    // keygen
    std::string out_dir;
    auto* keygen = app.add_subcommand("keygen", "Write private.pem, public.pem and wrap.key");
    keygen->add_option("--out-dir", out_dir, "Destination directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail_line("UsageError", e.what());
        return exit_usage;
    }

    try {
        if (*pack) {
            xml::XmlNode envelope = xml::parse(read_file(envelope_path));
            auto binaries = attach(envelope, attachments);
            xop::XopPackage package = xop::extract(std::move(envelope), binaries);
            FileSink out(out_path);
            xop::write_xop_package(out, package);
            out.flush();
            note("content-type: " + xop::package_content_type(package));
            return exit_ok;
        }

        if (*sign) {
            if (strict && mode != "streaming") {
                fail_line("UsageError", "--strict applies to streaming mode only");
                return exit_usage;
            }
            if (strict && wrap_key_path.empty()) {
                fail_line("UsageError", "--strict needs --wrap-key");
                return exit_usage;
            }
            auto keys = load_keys(key_path, wrap_key_path);
            xml::XmlNode envelope = xml::parse(read_file(envelope_path));
            auto binaries = attach(envelope, attachments);
            FileSink out(out_path);
            wssec::SignedMessage m = mode == "blocking"
                                         ? wssec::sign_blocking(envelope, binaries, keys, out)
                                         : wssec::sign_streaming(envelope, binaries, keys, strict, out);
            out.flush();
            note("content-type: " + m.content_type);
            return exit_ok;
        }

        if (*verify) {
            auto keys = load_keys(key_path, wrap_key_path);
            FileSource in(in_path);
            wssec::VerificationReport report;
            try {
                report = wssec::verify(in, keys);
            } catch (const Error& e) {
                if (exit_code_for(e.code()) != exit_invalid) {
                    throw;
                }
                report.failure_reason = e.what();
            }
            std::cout << wssec::to_json(report) << std::endl;
            if (!report.signature_valid) {
                fail_line("InvalidSignature", report.failure_reason);
                return exit_invalid;
            }
            return exit_ok;
        }

        if (*send) {
            auto endpoint = transport::Endpoint::parse(to);
            FileSource in(in_path);
            auto result = transport::send(
                endpoint,
                [&](transport::RequestBody& body) {
                    auto [content_type, head] = sniff_content_type(in);
                    body.set_content_type(content_type);
                    body.write(head);
                    pump(in, body);
                },
                throttle_from(rate));
            std::cout << result.body << std::endl;
            char timing[160];
            std::snprintf(timing, sizeof timing, "status %d, %llu bytes, first byte %.3f s, last byte %.3f s",
                          result.status, static_cast<unsigned long long>(result.bytes_sent), result.first_byte_s,
                          result.last_byte_s);
            note(timing);
            if (result.status != 200) {
                fail_line("Rejected", "server answered " + std::to_string(result.status));
                return exit_invalid;
            }
            return exit_ok;
        }

        if (*serve) {
            auto keys = load_keys(key_path, wrap_key_path);
            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGINT);
            sigaddset(&signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);
            auto server = transport::serve(transport::Endpoint::parse(listen), bench::verifying_handler(keys));
            note("listening on " + server->endpoint().authority());
            int received = 0;
            sigwait(&signals, &received);
            server->stop();
            note("served " + std::to_string(server->requests_served()) + " requests");
            return exit_ok;
        }

        if (*bench_cmd) {
            bench::BenchConfig config;
            config.sizes = split_list<std::uint64_t>(sizes, parse_size);
            config.modes = split_list<bench::BenchMode>(modes, mode_from);
            config.repetitions = reps;
            config.warmup = warmup;
            config.seed = seed;
            config.throttle = throttle_from(bench_rate);
            config.validate();
            if (!to.empty() && key_path.empty()) {
                fail_line("UsageError", "--to needs the --key (and --wrap-key) the server was started with");
                return exit_usage;
            }
            crypto::KeyMaterial keys =
                key_path.empty() ? crypto::KeyMaterial::generate() : load_keys(key_path, wrap_key_path);
            std::unique_ptr<transport::Server> local;
            transport::Endpoint endpoint;
            if (to.empty()) {
                local = transport::serve({"127.0.0.1", 0, "/"}, bench::verifying_handler(keys));
                endpoint = local->endpoint();
            } else {
                endpoint = transport::Endpoint::parse(to);
            }
            auto report = bench::run_benchmark(config, keys, endpoint);
            bench::emit_csv(report, csv_path);
            if (!plot_path.empty()) {
                bench::emit_plot_data(report, plot_path);
            }
            for (const auto& row : report.rows) {
                char line[200];
                std::snprintf(line, sizeof line, "%12llu %-16s %9.3f s %8.2f MB/s  first byte %.3f s  peak %.1f MiB",
                              static_cast<unsigned long long>(row.size), bench::to_string(row.mode), row.median_s,
                              row.throughput / 1e6, row.first_byte_s,
                              static_cast<double>(row.peak_memory) / (1024.0 * 1024));
                note(line);
            }
            return exit_ok;
        }

        if (*keygen) {
            std::filesystem::create_directories(out_dir);
            crypto::KeyMaterial::generate().save(out_dir);
            note("wrote private.pem, public.pem and wrap.key to " + out_dir);
            return exit_ok;
        }
    } catch (const Error& e) {
        fail_line(to_string(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        fail_line("IoError", e.what());
        return exit_io;
    } catch (const std::invalid_argument& e) {
        fail_line("UsageError", e.what());
        return exit_usage;
    } catch (const std::exception& e) {
        fail_line("InternalError", e.what());
        return exit_io;
    }
    return exit_usage;
}
