#include "streamsign/base64.hpp"
#include "streamsign/memtrack.hpp"
#include "streamsign/wssec.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace streamsign;
using namespace streamsign::wssec;
namespace ts = streamsign::testing;
using streamsign::testing::error_code;
using streamsign::testing::part_spans;
using streamsign::testing::test_keys;

namespace {

xop::Binaries one_binary(std::string data)
{
    return {{ts::upload_path, xop::BinaryContent::from_bytes(std::move(data))}};
}

std::string sign_to_string(Mode mode, const xml::XmlNode& env, const xop::Binaries& binaries, SignedMessage* out = nullptr,
                           std::uint64_t seed = 1)
{
    StringSink sink;
    SignOptions options;
    options.entropy = crypto::seeded_entropy(seed);
    SignedMessage m = mode == Mode::blocking
                          ? sign_blocking(env, binaries, test_keys(), sink, options)
                          : sign_streaming(env, binaries, test_keys(), mode == Mode::streaming_strict, sink, options);
    EXPECT_EQ(m.bytes_written, sink.str().size());
    if (out != nullptr) {
        *out = std::move(m);
    }
    return sink.take();
}

VerificationReport verify_string(const std::string& wire, const crypto::KeyMaterial& keys = test_keys())
{
    MemorySource src(wire);
    return verify(src, keys);
}

std::string read_fixture(const std::string& name)
{
    std::ifstream in(std::string(STREAMSIGN_FIXTURES) + "/" + name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr Mode all_modes[] = {Mode::blocking, Mode::streaming_lax, Mode::streaming_strict};

} // namespace

TEST(StreamingDigest, EmptyBinary)
{
    MemorySource empty("");
    EXPECT_EQ(digest_reference_streaming("<d>", empty, "</d>", crypto::algorithm::sha256),
              crypto::Digest::compute(crypto::algorithm::sha256, "<d></d>"));
}

// Oracle: inline the base64, canonicalize the element, digest in one shot.
TEST(StreamingDigest, EqualsReconstitutedCanonicalDigest)
{
    auto env = xml::parse(ts::upload_envelope);
    env.children().size();
    for (std::uint64_t size : {0ull, 1ull, 2ull, 3ull, 4ull, 5ull, 1024ull, 1ull << 20}) {
        PrngSource gen(size, size);
        std::string data = read_all(gen);
        auto element = *xml::select(env, ts::upload_path);
        element.set_attribute(xml::XmlName("ct", "urn:x", "x"), "a\"b");
        auto [prefix, suffix] = xml::canonical_tags(element);
        element.append_text(xop::base64_encode(data));
        std::string expected = crypto::Digest::compute(crypto::algorithm::sha256, xml::canonicalize(element));
        for (std::size_t step : {std::size_t{1}, std::size_t{2}, std::size_t{7}, std::size_t{65536}}) {
            if (step == 1 && size > 4096) {
                continue;
            }
            ChunkedSource src(std::make_unique<MemorySource>(data), [step] { return step; });
            EXPECT_EQ(digest_reference_streaming(prefix, src, suffix, crypto::algorithm::sha256), expected)
                << size << "/" << step;
        }
    }
}

TEST(SignedInfo, StructureOrderAndGolden)
{
    SignatureManifest m;
    m.references.push_back({"#Body", std::string(crypto::algorithm::sha256), std::string(32, '\x11'),
                            TargetKind::envelope_element});
    auto one = build_signed_info(m);
    int refs = 0;
    for (const auto* child : one.element_children()) {
        refs += child->name().local == "Reference" ? 1 : 0;
    }
    EXPECT_EQ(refs, 1);

    m.references.push_back({"cid:0123456789abcdef0123456789abcdef@streamsign.invalid",
                            std::string(crypto::algorithm::sha256), std::string(32, '\xab'), TargetKind::xop_part});
    std::string forward = xml::canonicalize(build_signed_info(m));
    EXPECT_EQ(forward, read_fixture("signed_info.xml"));
    EXPECT_EQ(parse_signed_info(xml::parse(forward)), m);

    std::swap(m.references[0], m.references[1]);
    EXPECT_NE(xml::canonicalize(build_signed_info(m)), forward);

    m.references[0].digest_value.clear();
    EXPECT_EQ(error_code([&] { build_signed_info(m); }), Errc::missing_digest);
}

TEST(SignedInfo, ParseRejectsUnknownAlgorithms)
{
    std::string golden = read_fixture("signed_info.xml");
    std::string bad = golden;
    bad.replace(bad.find("sha256"), 6, "sha999");
    EXPECT_EQ(error_code([&] { parse_signed_info(xml::parse(bad)); }), Errc::unsupported_algorithm);
    std::string c14n = golden;
    c14n.replace(c14n.find("restricted"), 10, "exclusive!");
    EXPECT_EQ(error_code([&] { parse_signed_info(xml::parse(c14n)); }), Errc::unsupported_algorithm);
}

TEST(EncryptSignature, RoundTripNonceAndTamper)
{
    auto env = xml::parse(ts::upload_envelope);
    SignatureManifest m;
    m.references.push_back({"#Body", std::string(crypto::algorithm::sha256), std::string(32, 'x'),
                            TargetKind::envelope_element});
    auto sig = build_signature(m, test_keys());
    auto a = encrypt_signature(sig, *test_keys().wrap_key, "s@x");
    auto b = encrypt_signature(sig, *test_keys().wrap_key, "s@x");
    EXPECT_NE(a.ciphertext, b.ciphertext);
    EXPECT_EQ(xml::canonicalize(decrypt_signature(a.ciphertext, *test_keys().wrap_key)), xml::canonicalize(sig));
    std::string flipped = a.ciphertext;
    flipped[flipped.size() / 2] ^= 1;
    EXPECT_EQ(error_code([&] { decrypt_signature(flipped, *test_keys().wrap_key); }), Errc::decrypt_failed);
    EXPECT_EQ(a.placeholder.name().local, "EncryptedData");
    EXPECT_EQ(error_code([&] { encrypt_signature(sig, "short", "s@x"); }), Errc::key_error);
}

TEST(PrepareEnvelope, AddsHeaderSecurityAndIds)
{
    auto env = xml::parse(
        R"(<s:Envelope xmlns:s="http://www.w3.org/2003/05/soap-envelope"> <s:Header> <a:To xmlns:a="urn:a">x</a:To> </s:Header> <s:Body>t</s:Body> </s:Envelope>)");
    auto ids = prepare_envelope(env);
    EXPECT_EQ(ids, (std::vector<std::string>{"Body", "H1"}));
    EXPECT_EQ(xml::canonicalize(env),
              R"(<s:Envelope xmlns:s="http://www.w3.org/2003/05/soap-envelope"><s:Header><wsse:Security xmlns:wsse=")" +
                  std::string(ns::wsse) + R"("></wsse:Security><a:To xmlns:a="urn:a" xmlns:wsu=")" + std::string(ns::wsu) +
                  R"(" wsu:Id="H1">x</a:To></s:Header><s:Body xmlns:wsu=")" + std::string(ns::wsu) +
                  R"(" wsu:Id="Body">t</s:Body></s:Envelope>)");
    auto not_soap = xml::parse("<Envelope><Body/></Envelope>");
    EXPECT_EQ(error_code([&] { prepare_envelope(not_soap); }), Errc::invalid_argument);
}

TEST(Sign, AllModesVerify)
{
    auto env = xml::parse(ts::upload_envelope);
    for (Mode mode : all_modes) {
        SignedMessage m;
        std::string wire = sign_to_string(mode, env, one_binary("hello, binary\r\n--world"), &m);
        auto report = verify_string(wire);
        EXPECT_TRUE(report.signature_valid) << to_string(mode) << " " << report.failure_reason;
        EXPECT_EQ(report.mode_detected, mode);
        EXPECT_EQ(report.per_reference.size(), 2u);
        EXPECT_EQ(m.mode, mode);
        EXPECT_TRUE(m.content_type.find(m.boundary) != std::string::npos);
    }
}

TEST(Sign, WireOrderAndStrictness)
{
    auto env = xml::parse(ts::upload_envelope);
    SignedMessage m;
    std::string wire = sign_to_string(Mode::streaming_strict, env, one_binary("abc"), &m);
    MemorySource src(wire);
    auto parts = mime::read_all_parts(src, std::nullopt);
    ASSERT_EQ(parts.size(), 3u);
    EXPECT_EQ(parts[0].headers.content_id, m.root_content_id);
    EXPECT_EQ(parts[1].headers.content_id, m.part_ids.at(0));
    EXPECT_EQ(parts[1].body, "abc");
    EXPECT_EQ(parts[2].headers.content_id, m.signature_content_id);
    EXPECT_EQ(parts[0].body, m.root);

    // Every xop:Include in the security header sits inside xenc:CipherValue.
    auto root = xml::parse(parts[0].body);
    const auto* header = root.find_child(ns::soap12, "Header");
    ASSERT_NE(header, nullptr);
    int includes = 0;
    std::vector<std::pair<const xml::XmlNode*, const xml::XmlNode*>> stack{{header, nullptr}};
    while (!stack.empty()) {
        auto [node, parent] = stack.back();
        stack.pop_back();
        if (xop::is_include(*node)) {
            ++includes;
            ASSERT_NE(parent, nullptr);
            EXPECT_TRUE(parent->name().matches(ns::xenc, "CipherValue"));
        }
        for (const auto* child : node->element_children()) {
            stack.emplace_back(child, node);
        }
    }
    EXPECT_EQ(includes, 1);
    EXPECT_EQ(parts[2].body.find("SignedInfo"), std::string::npos);

    std::string lax = sign_to_string(Mode::streaming_lax, env, one_binary("abc"));
    MemorySource lax_src(lax);
    auto lax_parts = mime::read_all_parts(lax_src, std::nullopt);
    EXPECT_NE(lax_parts.back().body.find("ds:SignedInfo"), std::string::npos);
}

TEST(Sign, DigestsEqualAcrossModes)
{
    std::mt19937_64 rng(5);
    for (std::uint64_t size : {0ull, 1ull, 2ull, 3ull, 4ull, 5ull, 1024ull, 1ull << 20}) {
        auto [env, paths] = ts::random_envelope(rng, 2);
        xop::Binaries binaries;
        for (std::size_t i = 0; i < paths.size(); ++i) {
            binaries.emplace_back(paths[i], xop::BinaryContent::from_prng(size + i, size));
        }
        SignedMessage blocking, lax, strict;
        sign_to_string(Mode::blocking, env, binaries, &blocking, size);
        sign_to_string(Mode::streaming_lax, env, binaries, &lax, size);
        sign_to_string(Mode::streaming_strict, env, binaries, &strict, size);
        EXPECT_EQ(blocking.manifest, lax.manifest) << size;
        EXPECT_EQ(blocking.manifest, strict.manifest) << size;
    }
}

TEST(Verify, PayloadTamperFlagsExactlyThatReference)
{
    std::mt19937_64 rng(9);
    auto [env, paths] = ts::random_envelope(rng, 3);
    xop::Binaries binaries;
    for (const auto& p : paths) {
        binaries.emplace_back(p, xop::BinaryContent::from_prng(rng(), 300));
    }
    for (Mode mode : all_modes) {
        SignedMessage m;
        std::string wire = sign_to_string(mode, env, binaries, &m);
        auto spans = part_spans(wire);
        for (std::size_t part = 1; part <= 3; ++part) {
            std::string bad = wire;
            bad[spans[part].first + 17] ^= 0x04;
            auto report = verify_string(bad);
            EXPECT_FALSE(report.signature_valid);
            int mismatched = 0;
            for (const auto& r : report.per_reference) {
                if (!r.match) {
                    ++mismatched;
                    EXPECT_EQ(r.uri, "cid:" + m.part_ids[part - 1]);
                }
            }
            EXPECT_EQ(mismatched, 1);
            EXPECT_NE(report.failure_reason.find(m.part_ids[part - 1]), std::string::npos);
        }
    }
}

TEST(Verify, TruncatedSignaturePart)
{
    auto env = xml::parse(ts::upload_envelope);
    for (Mode mode : {Mode::streaming_lax, Mode::streaming_strict}) {
        std::string wire = sign_to_string(mode, env, one_binary("abc"));
        auto spans = part_spans(wire);
        std::string cut = wire.substr(0, spans.back().first + (spans.back().second - spans.back().first) / 2);
        EXPECT_EQ(error_code([&] { verify_string(cut); }), Errc::malformed_message);
        std::string shortened = wire;
        shortened.erase(spans.back().second - 5, 5);
        auto code = error_code([&] { verify_string(shortened); });
        EXPECT_TRUE(code == Errc::malformed_message || code == Errc::decrypt_failed);
    }
}

TEST(Verify, KeyChecks)
{
    auto env = xml::parse(ts::upload_envelope);
    std::string strict = sign_to_string(Mode::streaming_strict, env, one_binary("abc"));
    auto public_only = test_keys().public_only();
    EXPECT_TRUE(verify_string(strict, public_only).signature_valid);
    auto no_wrap_key = test_keys().public_only();
    no_wrap_key.wrap_key.reset();
    EXPECT_EQ(error_code([&] { verify_string(strict, no_wrap_key); }), Errc::key_error);

    auto other = crypto::KeyMaterial::generate();
    other.wrap_key = test_keys().wrap_key;
    auto report = verify_string(strict, other);
    EXPECT_FALSE(report.signature_valid);

    std::string blocking = sign_to_string(Mode::blocking, env, one_binary("abc"));
    EXPECT_TRUE(verify_string(blocking, public_only).signature_valid);

    StringSink sink;
    EXPECT_EQ(error_code([&] { sign_streaming(env, one_binary("x"), public_only, false, sink); }), Errc::key_error);
    auto no_wrap = crypto::KeyMaterial::generate();
    no_wrap.wrap_key.reset();
    EXPECT_EQ(error_code([&] { sign_streaming(env, one_binary("x"), no_wrap, true, sink); }), Errc::key_error);
}

TEST(Verify, UnsupportedDigestForStreaming)
{
    auto env = xml::parse(ts::upload_envelope);
    StringSink sink;
    SignOptions options;
    options.digest_algorithm = std::string(crypto::algorithm::sha512);
    sign_streaming(env, one_binary("abc"), test_keys(), true, sink, options);
    EXPECT_EQ(error_code([&] { verify_string(sink.str()); }), Errc::unsupported_algorithm);
    MemorySource src(sink.str());
    VerifyOptions vo;
    vo.digest_algorithms.push_back(std::string(crypto::algorithm::sha512));
    EXPECT_TRUE(verify(src, test_keys(), vo).signature_valid);
}

TEST(Verify, UnreferencedAndMissingParts)
{
    auto env = xml::parse(ts::upload_envelope);
    std::string wire = sign_to_string(Mode::blocking, env, one_binary("abc"));
    auto spans = part_spans(wire);
    // Dropping the payload part leaves its cid unresolved.
    std::size_t second = wire.rfind("\r\n--", spans[1].first);
    std::string dropped = wire.substr(0, second) + wire.substr(spans[1].second);
    EXPECT_EQ(error_code([&] { verify_string(dropped); }), Errc::unresolved_reference);
}

TEST(Verify, ReportJson)
{
    auto env = xml::parse(ts::upload_envelope);
    auto report = verify_string(sign_to_string(Mode::streaming_strict, env, one_binary("abc")));
    std::string json = to_json(report);
    EXPECT_EQ(json.find('\n'), std::string::npos);
    EXPECT_NE(json.find("\"valid\":true"), std::string::npos);
    EXPECT_NE(json.find("streaming_strict"), std::string::npos);
}

TEST(Sign, FirstByteTiming)
{
    auto env = xml::parse(ts::upload_envelope);
    auto binaries = xop::Binaries{{ts::upload_path, xop::BinaryContent::from_prng(1, 64ull << 20)}};
    NullSink sink;
    auto streaming = sign_streaming(env, binaries, test_keys(), true, sink);
    EXPECT_LT(streaming.timing.first_byte_s, 0.01 * streaming.timing.digest_done_s);
    auto blocking = sign_blocking(env, binaries, test_keys(), sink);
    EXPECT_GE(blocking.timing.first_byte_s, blocking.timing.digest_done_s);
}

TEST(Sign, MemoryAsymmetry)
{
    auto env = xml::parse(ts::upload_envelope);
    auto run = [&](bool streaming, std::uint64_t size) {
        auto binaries = xop::Binaries{{ts::upload_path, xop::BinaryContent::from_prng(1, size)}};
        NullSink sink;
        memtrack::Scope scope;
        if (streaming) {
            sign_streaming(env, binaries, test_keys(), true, sink);
        } else {
            sign_blocking(env, binaries, test_keys(), sink);
        }
        return scope.peak();
    };
    auto s_small = run(true, 1 << 20), s_large = run(true, 64 << 20);
    EXPECT_LT(static_cast<double>(s_large), 2.0 * static_cast<double>(s_small));
    auto b_large = run(false, 64 << 20);
    EXPECT_GE(static_cast<double>(b_large), 1.3 * (64 << 20));
}
