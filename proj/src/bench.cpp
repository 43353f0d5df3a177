#include "streamsign/bench.hpp"

#include "streamsign/error.hpp"
#include "streamsign/memtrack.hpp"
#include "streamsign/wssec.hpp"
#include "streamsign/xop.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

namespace streamsign::bench {

using transport::Clock;

namespace {

constexpr BenchMode all_modes[] = {BenchMode::unsigned_, BenchMode::blocking, BenchMode::streaming_lax,
                                   BenchMode::streaming_strict};

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
    }
    return out;
}

void close_output(std::ofstream& out, const std::filesystem::path& path)
{
    out.close();
    if (!out) {
        throw Error(Errc::io_error, "write to " + path.string() + " failed");
    }
}

} // namespace

const char* to_string(BenchMode mode) noexcept
{
    switch (mode) {
    case BenchMode::unsigned_:
        return "unsigned";
    case BenchMode::blocking:
        return "blocking";
    case BenchMode::streaming_lax:
        return "streaming_lax";
    case BenchMode::streaming_strict:
        return "streaming_strict";
    }
    return "?";
}

BenchMode parse_bench_mode(std::string_view text)
{
    for (BenchMode m : all_modes) {
        if (text == to_string(m)) {
            return m;
        }
    }
    throw Error(Errc::invalid_argument, "unknown bench mode '" + std::string(text) + "'");
}

void BenchConfig::validate() const
{
    if (sizes.empty()) {
        throw Error(Errc::invalid_argument, "no payload sizes");
    }
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (sizes[i] <= sizes[i - 1]) {
            throw Error(Errc::invalid_argument, "sizes must be strictly increasing");
        }
    }
    if (modes.empty()) {
        throw Error(Errc::invalid_argument, "no modes");
    }
    if (repetitions < 3) {
        throw Error(Errc::invalid_argument, "at least 3 repetitions are required");
    }
    if (warmup < 0) {
        throw Error(Errc::invalid_argument, "warmup count is negative");
    }
    if (throttle) {
        throttle->validate(chunk_size);
    }
}

const BenchRow* BenchReport::find(std::uint64_t size, BenchMode mode) const
{
    for (const auto& row : rows) {
        if (row.size == size && row.mode == mode) {
            return &row;
        }
    }
    return nullptr;
}

RunSample run_once(std::uint64_t size, BenchMode mode, const crypto::KeyMaterial& keys,
                   const transport::Endpoint& endpoint, const std::optional<transport::ThrottleConfig>& throttle,
                   std::uint64_t seed, std::size_t chunk_size)
{
    const xml::XmlNode envelope = xml::parse(payload_envelope);
    const xop::Binaries binaries{{std::string(payload_path), xop::BinaryContent::from_prng(seed, size)}};
    transport::Endpoint target = endpoint;
    if (mode == BenchMode::unsigned_) {
        target.path = std::string(drain_path);
    }

    RunSample sample;
    transport::SendResult result;
    const auto t0 = Clock::now();
    {
        memtrack::Scope scope;
        auto producer = [&](transport::RequestBody& body) {
            mime::WriterOptions writer;
            writer.chunk_size = chunk_size;
            if (mode == BenchMode::unsigned_) {
                xop::XopPackage package = xop::extract(envelope, binaries);
                body.set_content_type(xop::package_content_type(package));
                xop::write_xop_package(body, package, writer);
                return;
            }
            wssec::SignOptions options;
            options.session_start = t0;
            options.writer = writer;
            options.on_content_type = [&body](const std::string& ct) { body.set_content_type(ct); };
            wssec::SignedMessage m =
                mode == BenchMode::blocking
                    ? wssec::sign_blocking(envelope, binaries, keys, body, options)
                    : wssec::sign_streaming(envelope, binaries, keys, mode == BenchMode::streaming_strict, body,
                                            options);
            sample.digest_done_s = m.timing.digest_done_s;
        };
        try {
            result = transport::send(target, producer, throttle, {t0, chunk_size, std::chrono::milliseconds(600000)});
        } catch (const Error& e) {
            if (e.code() == Errc::connect_error) {
                throw Error(Errc::server_unavailable, e.what());
            }
            throw;
        }
        sample.peak_memory = scope.peak();
    }
    sample.wall_s = seconds_since(t0);
    sample.first_byte_s = result.first_byte_s;
    sample.last_byte_s = result.last_byte_s;

    auto reply = nlohmann::json::parse(result.body, nullptr, false);
    const std::string what = std::string(to_string(mode)) + " run of " + std::to_string(size) + " bytes: ";
    if (result.status != 200 || reply.is_discarded()) {
        throw Error(Errc::verification_failed_during_bench,
                    what + "server answered " + std::to_string(result.status) + " " + result.body);
    }
    if (mode == BenchMode::unsigned_) {
        if (reply.value("bytes", std::uint64_t{0}) != result.bytes_sent) {
            throw Error(Errc::verification_failed_during_bench, what + "server counted " + result.body);
        }
    } else if (!reply.value("valid", false)) {
        throw Error(Errc::verification_failed_during_bench, what + result.body);
    }
    return sample;
}

BenchReport run_benchmark(const BenchConfig& config, const crypto::KeyMaterial& keys,
                          const transport::Endpoint& endpoint)
{
    config.validate();
    endpoint.validate();
    BenchReport report;
    report.seed = config.seed;
    report.throttle = config.throttle;

    std::vector<BenchMode> modes = config.modes;
    std::sort(modes.begin(), modes.end());
    modes.erase(std::unique(modes.begin(), modes.end()), modes.end());

    for (std::uint64_t size : config.sizes) {
        for (BenchMode mode : modes) {
            for (int i = 0; i < config.warmup; ++i) {
                run_once(size, mode, keys, endpoint, config.throttle, config.seed, config.chunk_size);
            }
            BenchRow row;
            row.size = size;
            row.mode = mode;
            row.repetitions = config.repetitions;
            for (int i = 0; i < config.repetitions; ++i) {
                row.samples.push_back(
                    run_once(size, mode, keys, endpoint, config.throttle, config.seed, config.chunk_size));
            }
            auto pick = [&](auto field) {
                std::vector<double> v;
                for (const auto& s : row.samples) {
                    v.push_back(field(s));
                }
                return median(std::move(v));
            };
            row.median_s = pick([](const RunSample& s) { return s.wall_s; });
            row.first_byte_s = pick([](const RunSample& s) { return s.first_byte_s; });
            row.digest_done_s = pick([](const RunSample& s) { return s.digest_done_s; });
            for (const auto& s : row.samples) {
                row.peak_memory = std::max(row.peak_memory, s.peak_memory);
            }
            row.throughput = row.median_s > 0 ? static_cast<double>(size) / row.median_s : 0;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

double calibrate_digest_rate(std::uint64_t size, std::uint64_t seed, std::size_t chunk_size)
{
    if (size == 0) {
        throw Error(Errc::invalid_argument, "calibration needs a non-empty payload");
    }
    xml::XmlNode envelope = xml::parse(payload_envelope);
    auto [prefix, suffix] = xml::canonical_tags(*xml::select(envelope, payload_path));
    PrngSource source(seed, size);
    const auto t0 = Clock::now();
    wssec::digest_reference_streaming(prefix, source, suffix, crypto::algorithm::sha256, chunk_size);
    return static_cast<double>(size) / seconds_since(t0);
}

void emit_csv(const BenchReport& report, const std::filesystem::path& path)
{
    if (report.rows.empty()) {
        throw Error(Errc::empty_report, "benchmark report has no rows");
    }
    std::vector<const BenchRow*> rows;
    for (const auto& r : report.rows) {
        rows.push_back(&r);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const BenchRow* a, const BenchRow* b) {
        return a->size != b->size ? a->size < b->size : a->mode < b->mode;
    });
    auto out = open_output(path);
    out << "size,mode,median_s,throughput_Bps,first_byte_s,peak_mem_B,reps\n";
    char line[256];
    for (const BenchRow* r : rows) {
        std::snprintf(line, sizeof line, "%llu,%s,%.6f,%.1f,%.6f,%lld,%d\n", static_cast<unsigned long long>(r->size),
                      to_string(r->mode), r->median_s, r->throughput, r->first_byte_s,
                      static_cast<long long>(r->peak_memory), r->repetitions);
        out << line;
    }
    close_output(out, path);
}

void emit_plot_data(const BenchReport& report, const std::filesystem::path& path)
{
    if (report.rows.empty()) {
        throw Error(Errc::empty_report, "benchmark report has no rows");
    }
    std::map<BenchMode, std::vector<const BenchRow*>> blocks;
    for (const auto& r : report.rows) {
        blocks[r.mode].push_back(&r);
    }
    auto out = open_output(path);
    out << "# seed " << report.seed;
    if (report.throttle) {
        out << ", throttle " << report.throttle->rate << " B/s";
    }
    out << "\n";
    bool first = true;
    char line[256];
    for (auto& [mode, rows] : blocks) {
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->size < b->size; });
        if (!first) {
            out << "\n\n";
        }
        first = false;
        out << "# " << to_string(mode) << "\n# size_MiB median_s throughput_MBps first_byte_s peak_mem_MiB\n";
        for (const BenchRow* r : rows) {
            std::snprintf(line, sizeof line, "%.3f %.6f %.3f %.6f %.3f\n", static_cast<double>(r->size) / MiB,
                          r->median_s, r->throughput / 1e6, r->first_byte_s,
                          static_cast<double>(r->peak_memory) / MiB);
            out << line;
        }
    }
    close_output(out, path);
}

transport::Handler verifying_handler(const crypto::KeyMaterial& keys)
{
    return [&keys](const transport::Request& request, ByteSource& body) -> transport::Response {
        if (request.path == drain_path) {
            std::vector<char> buf(default_chunk_size());
            std::uint64_t total = 0;
            while (std::size_t n = body.read(buf)) {
                total += n;
            }
            return {200, "{\"bytes\":" + std::to_string(total) + "}"};
        }
        wssec::VerificationReport report = wssec::verify(body, keys);
        return {report.signature_valid ? 200 : 400, wssec::to_json(report)};
    };
}

} // namespace streamsign::bench
