#pragma once

#include "streamsign/crypto.hpp"
#include "streamsign/transport.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace streamsign::bench {

enum class BenchMode { unsigned_, blocking, streaming_lax, streaming_strict };
/// "unsigned", "blocking", "streaming_lax", "streaming_strict"
const char* to_string(BenchMode mode) noexcept;
BenchMode parse_bench_mode(std::string_view text);

/// Request path at which verifying_handler only counts bytes.
inline constexpr std::string_view drain_path = "/drain";

inline constexpr std::uint64_t MiB = 1024 * 1024;

struct BenchConfig {
    std::vector<std::uint64_t> sizes = {1 * MiB, 4 * MiB, 16 * MiB, 64 * MiB, 256 * MiB};
    std::vector<BenchMode> modes = {BenchMode::unsigned_, BenchMode::blocking, BenchMode::streaming_strict};
    int repetitions = 3;
    int warmup = 1;
    /// 12.5 MB/s stands in for a 100 Mbps link.
    std::optional<transport::ThrottleConfig> throttle = transport::ThrottleConfig{12.5e6, 0};
    std::uint64_t seed = 1;
    std::size_t chunk_size = 0;

    /// Throws InvalidArgument: sizes empty or not strictly increasing,
    /// repetitions < 3, warmup < 0, no modes, or an invalid throttle.
    void validate() const;
};

/// One timed run. Times are seconds from session start.
struct RunSample {
    double wall_s = 0;        ///< response received
    double first_byte_s = 0;
    double last_byte_s = 0;
    double digest_done_s = 0; ///< zero for unsigned runs
    std::int64_t peak_memory = 0;
};

struct BenchRow {
    std::uint64_t size = 0;
    BenchMode mode = BenchMode::unsigned_;
    double median_s = 0;
    double throughput = 0; ///< size / median_s
    double first_byte_s = 0; ///< median
    std::int64_t peak_memory = 0; ///< maximum over the timed runs
    int repetitions = 0;
    double digest_done_s = 0; ///< median
    std::vector<RunSample> samples;
};

struct BenchReport {
    std::uint64_t seed = 0;
    std::optional<transport::ThrottleConfig> throttle;
    std::vector<BenchRow> rows; ///< ordered by size, then mode

    const BenchRow* find(std::uint64_t size, BenchMode mode) const;
};

/// Signs (or just packages) a payload of the given size and posts it.
/// Signed runs must come back verified. Throws ServerUnavailable or
/// VerificationFailedDuringBench.
RunSample run_once(std::uint64_t size, BenchMode mode, const crypto::KeyMaterial& keys,
                   const transport::Endpoint& endpoint, const std::optional<transport::ThrottleConfig>& throttle,
                   std::uint64_t seed, std::size_t chunk_size = 0);

/// Runs strictly one measurement at a time.
BenchReport run_benchmark(const BenchConfig& config, const crypto::KeyMaterial& keys,
                          const transport::Endpoint& endpoint);

/// Client digest rate D in bytes per second: one streaming reference digest
/// (base64 plus hash) over a pseudorandom payload of the given size.
double calibrate_digest_rate(std::uint64_t size, std::uint64_t seed = 1, std::size_t chunk_size = 0);

/// Header `size,mode,median_s,throughput_Bps,first_byte_s,peak_mem_B,reps`.
/// Throws EmptyReport (and writes nothing) for an empty report, IoError on write failure.
void emit_csv(const BenchReport& report, const std::filesystem::path& path);

/// Whitespace-separated blocks, one per mode, separated by two blank lines.
void emit_plot_data(const BenchReport& report, const std::filesystem::path& path);

/// Server side of the benchmark. Verifies every request and answers 200 with
/// the JSON report when valid, 400 otherwise. Requests to drain_path are
/// counted and discarded.
transport::Handler verifying_handler(const crypto::KeyMaterial& keys);

/// The envelope and payload element used by the benchmark.
inline constexpr std::string_view payload_envelope =
    R"(<soap:Envelope xmlns:soap="http://www.w3.org/2003/05/soap-envelope"><soap:Body>)"
    R"(<b:store xmlns:b="urn:streamsign:bench"><b:name>payload.bin</b:name><b:data></b:data></b:store>)"
    R"(</soap:Body></soap:Envelope>)";
inline constexpr std::string_view payload_path = "/Envelope/Body/store/data";

} // namespace streamsign::bench
