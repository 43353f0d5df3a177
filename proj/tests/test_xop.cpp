#include "streamsign/base64.hpp"
#include "streamsign/error.hpp"
#include "streamsign/memtrack.hpp"
#include "streamsign/xop.hpp"

#include <gtest/gtest.h>

using namespace streamsign;
using namespace streamsign::xop;

namespace {

const char* envelope_text =
    R"(<s:Envelope xmlns:s="http://www.w3.org/2003/05/soap-envelope"><s:Body><m:upload xmlns:m="urn:m">)"
    R"(<m:name>f</m:name><m:data/><m:data/></m:upload></s:Body></s:Envelope>)";

Errc error_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::empty_report;
}

int count_includes(const xml::XmlNode& root)
{
    int n = 0;
    xml::for_each_element(root, [&](const xml::XmlNode& e) { n += is_include(e) ? 1 : 0; });
    return n;
}

std::vector<std::string> ids_of(const XopPackage& p)
{
    std::vector<std::string> ids;
    for (const auto& part : p.parts) {
        ids.push_back(part.content_id);
    }
    return ids;
}

} // namespace

TEST(Extract, SingleBinaryIsRaw)
{
    auto env = xml::parse(envelope_text);
    auto pkg = extract(env, {{"/Envelope/Body/upload/data", BinaryContent::from_bytes("\x01\x02\x03\x04\x05")}});
    EXPECT_EQ(count_includes(pkg.root), 1);
    ASSERT_EQ(pkg.parts.size(), 1u);
    EXPECT_EQ(read_all(*pkg.parts[0].content.open()), "\x01\x02\x03\x04\x05");
    EXPECT_TRUE(check_package(pkg.root, ids_of(pkg)).empty());

    StringSink sink;
    write_xop_package(sink, pkg);
    MemorySource src(sink.str());
    auto back = read_xop_package(src);
    ASSERT_EQ(back.parts.size(), 1u);
    EXPECT_EQ(back.parts[0].body, "\x01\x02\x03\x04\x05");
    EXPECT_EQ(back.parts[0].headers.transfer_encoding, mime::TransferEncoding::binary);
    EXPECT_EQ(back.root, pkg.root);
}

TEST(Extract, NoBinaries)
{
    auto env = xml::parse(envelope_text);
    auto pkg = extract(env, {});
    EXPECT_TRUE(pkg.parts.empty());
    EXPECT_EQ(pkg.root, env);
}

TEST(Extract, Errors)
{
    auto env = xml::parse(envelope_text);
    EXPECT_EQ(error_of([&] { extract(env, {{"/Envelope/Body/none", BinaryContent::from_bytes("")}}); }),
              Errc::path_not_found);
    EXPECT_EQ(error_of([&] {
                  extract(env, {{"/Envelope/Body/upload/data[1]", BinaryContent::from_bytes("")},
                                {"/Envelope/Body/upload/data", BinaryContent::from_bytes("")}});
              }),
              Errc::duplicate_path);
    EXPECT_EQ(error_of([&] { extract(env, {{"/Envelope/Body/upload", BinaryContent::from_bytes("")}}); }),
              Errc::invalid_argument);
}

TEST(Extract, SeededEntropyIsDeterministic)
{
    auto env = xml::parse(envelope_text);
    Binaries b = {{"/Envelope/Body/upload/data[2]", BinaryContent::from_bytes("x")}};
    auto p1 = extract(env, b, crypto::seeded_entropy(3));
    auto p2 = extract(env, b, crypto::seeded_entropy(3));
    EXPECT_EQ(p1.boundary, p2.boundary);
    EXPECT_EQ(p1.parts[0].content_id, p2.parts[0].content_id);
    EXPECT_TRUE(p1.parts[0].content_id.ends_with(content_id_domain));
}

TEST(Reconstitute, EqualsInlineBase64)
{
    auto env = xml::parse(envelope_text);
    std::string a = "first payload", b(1000, '\xfe');
    auto pkg = extract(env, {{"/Envelope/Body/upload/data[1]", BinaryContent::from_bytes(a)},
                             {"/Envelope/Body/upload/data[2]", BinaryContent::from_bytes(b)}});
    auto expected = env;
    xml::select(expected, "/Envelope/Body/upload/data[1]")->append_text(base64_encode(a));
    xml::select(expected, "/Envelope/Body/upload/data[2]")->append_text(base64_encode(b));
    EXPECT_EQ(reconstitute(pkg), expected);
}

TEST(Reconstitute, Errors)
{
    auto env = xml::parse(envelope_text);
    auto pkg = extract(env, {{"/Envelope/Body/upload/data", BinaryContent::from_bytes("x")}});
    auto dangling = pkg;
    dangling.parts[0].content_id = "other@x";
    EXPECT_EQ(error_of([&] { reconstitute(dangling); }), Errc::unresolved_reference);
    EXPECT_FALSE(check_package(dangling.root, ids_of(dangling)).empty());

    auto missing = env;
    xml::select(missing, "/Envelope/Body/upload/data")->append(make_include("missing"));
    EXPECT_EQ(error_of([&] { reconstitute(missing, [](std::string_view) { return nullptr; }); }),
              Errc::unresolved_reference);

    auto dup = pkg;
    dup.parts.push_back(dup.parts[0]);
    EXPECT_EQ(error_of([&] { reconstitute(dup); }), Errc::duplicate_content_id);
}

TEST(CheckPackage, FlagsDoubleReferenceAndBadIncludes)
{
    auto env = xml::parse(envelope_text);
    xml::select(env, "/Envelope/Body/upload/data[1]")->append(make_include("p@x"));
    xml::select(env, "/Envelope/Body/upload/data[2]")->append(make_include("p@x"));
    EXPECT_FALSE(check_package(env, {"p@x"}).empty());

    auto odd = xml::parse(envelope_text);
    auto inc = make_include("q@x");
    inc.set_attribute(xml::XmlName("extra"), "1");
    xml::select(odd, "/Envelope/Body/upload/data")->append(std::move(inc));
    EXPECT_FALSE(check_package(odd, {"q@x"}).empty());
}

TEST(Reconstitute, HundredMiBGrowsByAThird)
{
    const std::uint64_t size = 100ull << 20;
    auto env = xml::parse(envelope_text);
    auto pkg = extract(env, {{"/Envelope/Body/upload/data", BinaryContent::from_prng(1, size)}});
    memtrack::Scope scope;
    auto full = reconstitute(pkg);
    const std::string text = xml::select(full, "/Envelope/Body/upload/data")->text();
    EXPECT_EQ(text.size(), encoded_size(size));
    EXPECT_NEAR(static_cast<double>(text.size()) / static_cast<double>(size), 4.0 / 3.0, 1e-3);
    EXPECT_GE(scope.peak(), static_cast<std::int64_t>(encoded_size(size)));
}

TEST(BinaryContent, DeclaredLengthEnforcedOnWrite)
{
    auto env = xml::parse(envelope_text);
    auto content = BinaryContent::from_bytes("abc");
    content.declared_length = 4;
    auto pkg = extract(env, {{"/Envelope/Body/upload/data", content}});
    NullSink sink;
    EXPECT_EQ(error_of([&] { write_xop_package(sink, pkg); }), Errc::source_error);
}
