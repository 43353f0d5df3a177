#include "streamsign/error.hpp"
#include "streamsign/xml.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace streamsign;
using namespace streamsign::xml;

namespace {

Errc code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::invalid_argument;
}

// Random trees drawn from a small vocabulary so namespace reuse and
// prefix clashes actually occur.
XmlNode random_tree(std::mt19937_64& rng, int depth)
{
    static const std::vector<std::pair<std::string, std::string>> spaces = {
        {"", ""}, {"a", "urn:a"}, {"b", "urn:b"}, {"c", "urn:a"}};
    std::uniform_int_distribution<int> pick(0, 3);
    auto [prefix, ns] = spaces[pick(rng)];
    XmlNode node(XmlName("n" + std::to_string(pick(rng)), ns, prefix));
    int attrs = pick(rng);
    for (int i = 0; i < attrs; ++i) {
        auto [ap, ans] = spaces[pick(rng)];
        node.set_attribute(XmlName("k" + std::to_string(pick(rng)), ans, ap), "v<&\"\t" + std::to_string(i));
    }
    int kids = depth > 0 ? pick(rng) : 0;
    for (int i = 0; i < kids; ++i) {
        if (pick(rng) == 0) {
            node.append_text("t & <" + std::to_string(i) + ">\r");
        } else {
            node.append(random_tree(rng, depth - 1));
        }
    }
    return node;
}

} // namespace

TEST(XmlParse, MinimalDocument)
{
    XmlNode n = parse("<a/>");
    EXPECT_EQ(n.name().local, "a");
    EXPECT_TRUE(n.attributes().empty());
    EXPECT_TRUE(n.children().empty());
}

TEST(XmlParse, AttributeOrderPreserved)
{
    XmlNode n = parse(R"(<a b="2" a="1"/>)");
    ASSERT_EQ(n.attributes().size(), 2u);
    EXPECT_EQ(n.attributes()[0].name.local, "b");
    EXPECT_EQ(n.attributes()[0].value, "2");
    EXPECT_EQ(n.attributes()[1].name.local, "a");
}

TEST(XmlParse, NamespaceResolution)
{
    // Expected values obtained from Python's xml.dom.minidom on the same input.
    XmlNode n = parse(R"(<x:e xmlns:x="u"><y/></x:e>)");
    EXPECT_EQ(n.name().namespace_uri, "u");
    EXPECT_EQ(n.name().local, "e");
    ASSERT_EQ(n.element_count(), 1u);
    const XmlNode& y = *n.element_children()[0];
    EXPECT_EQ(y.name().namespace_uri, "");
    EXPECT_EQ(y.name().local, "y");
}

TEST(XmlParse, DefaultNamespaceInheritedAndUndeclared)
{
    XmlNode n = parse(R"(<r xmlns="d"><k/><m xmlns=""><z/></m></r>)");
    EXPECT_EQ(n.name().namespace_uri, "d");
    EXPECT_EQ(n.element_children()[0]->name().namespace_uri, "d");
    EXPECT_EQ(n.element_children()[1]->name().namespace_uri, "");
    EXPECT_EQ(n.element_children()[1]->element_children()[0]->name().namespace_uri, "");
}

TEST(XmlParse, CommentsDroppedCdataKept)
{
    XmlNode n = parse("<a><!-- c -->x<![CDATA[<y>]]>&amp;&#65;&#x42;</a>");
    EXPECT_EQ(n.text(), "x<y>&AB");
}

TEST(XmlParse, RejectsUnsupportedConstructs)
{
    EXPECT_EQ(code_of([] { parse("<!DOCTYPE a><a/>"); }), Errc::unsupported_construct);
    EXPECT_EQ(code_of([] { parse("<a><?pi x?></a>"); }), Errc::unsupported_construct);
    EXPECT_EQ(code_of([] { parse(R"(<?xml version="1.0" encoding="ISO-8859-1"?><a/>)"); }),
              Errc::unsupported_construct);
}

TEST(XmlParse, RejectsMalformedInput)
{
    for (const char* bad : {"", "<a>", "<a></b>", "<a b='1' b='2'/>", "<p:a/>", "<a/><b/>", "<a>&bogus;</a>",
                            "<a>\x01</a>", "<a x=1/>", "<a>\xff</a>", "text"}) {
        EXPECT_EQ(code_of([&] { parse(bad); }), Errc::malformed_xml) << bad;
    }
}

TEST(XmlParse, ErrorCarriesPosition)
{
    try {
        parse("<a></b>");
        FAIL();
    } catch (const Error& e) {
        ASSERT_TRUE(e.position().has_value());
        EXPECT_LE(*e.position(), 7u);
    }
}

TEST(XmlParse, DepthLimit)
{
    std::string ok;
    for (std::size_t i = 0; i < max_depth; ++i) {
        ok += "<d>";
    }
    for (std::size_t i = 0; i < max_depth; ++i) {
        ok += "</d>";
    }
    EXPECT_NO_THROW(parse(ok));
    EXPECT_EQ(code_of([&] { parse("<d>" + ok + "</d>"); }), Errc::malformed_xml);
}

TEST(XmlName, Invariants)
{
    EXPECT_THROW(XmlName(""), Error);
    EXPECT_THROW(XmlName("1a"), Error);
    EXPECT_THROW(XmlName("a:b"), Error);
    EXPECT_THROW(XmlName("a b"), Error);
    EXPECT_THROW(XmlName("a", "", "p"), Error);
    EXPECT_NO_THROW(XmlName("a", "u", "p"));
}

TEST(XmlNode, DuplicateAttributeReplaces)
{
    XmlNode n(XmlName("a"));
    n.set_attribute(XmlName("k"), "1");
    n.set_attribute(XmlName("k"), "2");
    ASSERT_EQ(n.attributes().size(), 1u);
    EXPECT_EQ(*n.attribute("k"), "2");
}

// Expected strings below were produced by Python's
// xml.etree.ElementTree.canonicalize on the same inputs.
TEST(Canonical, MatchesReferenceImplementation)
{
    EXPECT_EQ(canonicalize(parse(R"(<a b="2" a="1"/>)")), R"(<a a="1" b="2"></a>)");
    EXPECT_EQ(canonicalize(parse("<x:e xmlns:x=\"u\"><x:c xmlns:y=\"v\" y:p=\"1\" q=\"2\">t&amp;&lt;&gt;\"\r</x:c></x:e>")),
              "<x:e xmlns:x=\"u\"><x:c xmlns:y=\"v\" q=\"2\" y:p=\"1\">t&amp;&lt;&gt;\"\n</x:c></x:e>");
    EXPECT_EQ(canonicalize(parse(R"(<r xmlns="d"><k a="&#9;&#10;&quot;&lt;&amp;">x</k></r>)")),
              R"(<r xmlns="d"><k a="&#x9;&#xA;&quot;&lt;&amp;">x</k></r>)");
    EXPECT_EQ(canonicalize(parse(R"(<s:E xmlns:s="n" xmlns:b="bb" b:z="1" a="2"><s:B>t</s:B></s:E>)")),
              R"(<s:E xmlns:b="bb" xmlns:s="n" a="2" b:z="1"><s:B>t</s:B></s:E>)");
}

TEST(Canonical, EmptyElementAndEscapes)
{
    EXPECT_EQ(canonicalize(XmlNode(XmlName("a"))), "<a></a>");
    XmlNode t(XmlName("t"));
    t.append_text("x < y");
    EXPECT_EQ(canonicalize(t), "<t>x &lt; y</t>");
    XmlNode r(XmlName("r"));
    r.append_text("a\rb>");
    EXPECT_EQ(canonicalize(r), "<r>a&#xD;b&gt;</r>");
}

TEST(Canonical, UnusedDeclarationsDropped)
{
    EXPECT_EQ(canonicalize(parse(R"(<a xmlns:z="zz"><b/></a>)")), "<a><b></b></a>");
}

TEST(Canonical, DefaultNamespaceUndeclaredInSubtree)
{
    XmlNode r(XmlName("r", "urn:d"));
    r.append(XmlNode(XmlName("k")));
    EXPECT_EQ(canonicalize(r), R"(<r xmlns="urn:d"><k xmlns=""></k></r>)");
}

TEST(Canonical, TagsAgreeWithFullForm)
{
    XmlNode n = parse(R"(<p:d xmlns:p="urn:p" xmlns:q="urn:q" q:w="1" z="2"/>)");
    auto [start, end] = canonical_tags(n);
    n.append_text("QUJD");
    EXPECT_EQ(canonicalize(n), start + "QUJD" + end);
}

TEST(Canonical, Properties)
{
    std::mt19937_64 rng(7);
    for (int i = 0; i < 300; ++i) {
        XmlNode n = random_tree(rng, 4);
        std::string c = canonicalize(n);
        EXPECT_EQ(canonicalize(parse(c)), c);
        EXPECT_EQ(canonicalize(parse(serialize(n))), c);
        EXPECT_EQ(parse(serialize(n)), n);

        // Re-inserting the attributes in reverse order never changes the output.
        XmlNode shuffled(n.name());
        auto attrs = n.attributes();
        std::reverse(attrs.begin(), attrs.end());
        for (auto& a : attrs) {
            shuffled.set_attribute(a.name, a.value);
        }
        for (const auto& child : n.children()) {
            shuffled.children().push_back(child);
        }
        EXPECT_EQ(canonicalize(shuffled), c);
    }
}

TEST(Serialize, DeclaresPrefix)
{
    XmlNode n(XmlName("e", "u", "x"));
    std::string out = serialize(n);
    EXPECT_NE(out.find(R"(xmlns:x="u")"), std::string::npos);
    EXPECT_EQ(parse(out), n);
}

TEST(Serialize, ThousandDeepChain)
{
    XmlNode root(XmlName("d"));
    XmlNode* cur = &root;
    for (int i = 1; i < 1000; ++i) {
        cur = &cur->append(XmlNode(XmlName("d")));
    }
    std::string out = serialize(root);
    EXPECT_EQ(parse(out), root);
    EXPECT_EQ(canonicalize(parse(canonicalize(root))), canonicalize(root));
}

TEST(Select, PathsWithIndices)
{
    XmlNode n = parse("<Envelope><Body><u><data>1</data><x/><data>2</data></u></Body></Envelope>");
    ASSERT_NE(select(n, "/Envelope/Body/u/data[2]"), nullptr);
    EXPECT_EQ(select(n, "/Envelope/Body/u/data[2]")->text(), "2");
    EXPECT_EQ(select(n, "/Envelope/Body/u/data")->text(), "1");
    EXPECT_EQ(select(n, "/Envelope/Body/u/data[3]"), nullptr);
    EXPECT_EQ(select(n, "/Other/Body"), nullptr);
    EXPECT_EQ(select(n, "/Envelope/Body/u/data[0]"), nullptr);
}
