#include "streamsign/xml.hpp"

#include "streamsign/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>
#include <tuple>

namespace streamsign::xml {

namespace {

bool is_name_start(unsigned char c) noexcept
{
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c >= 0x80;
}

bool is_name_char(unsigned char c) noexcept
{
    return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

/// Returns the offset of the first invalid byte, or npos.
std::size_t find_invalid_utf8(std::string_view s) noexcept
{
    const auto* p = reinterpret_cast<const unsigned char*>(s.data());
    std::size_t n = s.size();
    std::size_t i = 0;
    while (i < n) {
        unsigned char c = p[i];
        if (c < 0x80) {
            if (c < 0x20 && c != '\t' && c != '\n' && c != '\r') {
                return i;
            }
            ++i;
            continue;
        }
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if ((c & 0xe0) == 0xc0) {
            len = 2;
            cp = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            len = 3;
            cp = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return i;
        }
        if (i + len > n) {
            return i;
        }
        for (std::size_t k = 1; k < len; ++k) {
            if ((p[i + k] & 0xc0) != 0x80) {
                return i;
            }
            cp = (cp << 6) | (p[i + k] & 0x3f);
        }
        static constexpr std::uint32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < min_for_len[len] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff) || cp == 0xfffe ||
            cp == 0xffff) {
            return i;
        }
        i += len;
    }
    return std::string_view::npos;
}

void append_utf8(std::string& out, std::uint32_t cp)
{
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xc0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xe0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
        out += static_cast<char>(0xf0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    }
}

bool is_xml_char(std::uint32_t cp) noexcept
{
    return cp == 0x9 || cp == 0xa || cp == 0xd || (cp >= 0x20 && cp <= 0xd7ff) || (cp >= 0xe000 && cp <= 0xfffd) ||
           (cp >= 0x10000 && cp <= 0x10ffff);
}

struct RawAttribute {
    std::string qname;
    std::string value;
    std::size_t position;
};

class Parser {
public:
    explicit Parser(std::string_view in) : in_(in) {}

    XmlNode run()
    {
        if (in_.starts_with("\xEF\xBB\xBF")) {
            pos_ = 3;
        }
        if (auto bad = find_invalid_utf8(in_); bad != std::string_view::npos) {
            fail("invalid UTF-8 or disallowed control character", bad);
        }
        if (in_.substr(pos_).starts_with("<?xml") && pos_ + 5 < in_.size() && is_space(in_[pos_ + 5])) {
            parse_declaration();
        }
        skip_misc();
        if (at_end() || in_[pos_] != '<') {
            fail("expected root element");
        }
        XmlNode root = parse_element_tree();
        skip_misc();
        if (!at_end()) {
            fail("content after root element");
        }
        return root;
    }

private:
    struct Binding {
        std::string prefix;
        std::string uri;
    };

    struct Frame {
        XmlNode node;
        std::string qname;
        std::size_t binding_mark;
    };

    [[noreturn]] void fail(const std::string& reason) const { fail(reason, pos_); }
    [[noreturn]] void fail(const std::string& reason, std::size_t at) const
    {
        throw Error(Errc::malformed_xml, reason, at);
    }
    [[noreturn]] void unsupported(const std::string& reason) const
    {
        throw Error(Errc::unsupported_construct, reason, pos_);
    }

    bool at_end() const noexcept { return pos_ >= in_.size(); }
    bool looking_at(std::string_view s) const noexcept { return in_.substr(pos_).starts_with(s); }

    void skip_space()
    {
        while (!at_end() && is_space(in_[pos_])) {
            ++pos_;
        }
    }

    void expect(std::string_view s)
    {
        if (!looking_at(s)) {
            fail("expected '" + std::string(s) + "'");
        }
        pos_ += s.size();
    }

    std::string parse_qname()
    {
        std::size_t start = pos_;
        if (at_end() || !is_name_start(static_cast<unsigned char>(in_[pos_]))) {
            fail("expected a name");
        }
        while (!at_end() && (is_name_char(static_cast<unsigned char>(in_[pos_])) || in_[pos_] == ':')) {
            ++pos_;
        }
        std::string name(in_.substr(start, pos_ - start));
        auto colon = name.find(':');
        if (colon != std::string::npos) {
            if (name.find(':', colon + 1) != std::string::npos || !is_ncname(std::string_view(name).substr(0, colon)) ||
                !is_ncname(std::string_view(name).substr(colon + 1))) {
                fail("invalid qualified name '" + name + "'", start);
            }
        }
        return name;
    }

    void parse_declaration()
    {
        pos_ += 5;
        std::size_t end = in_.find("?>", pos_);
        if (end == std::string_view::npos) {
            fail("unterminated XML declaration");
        }
        std::string_view body = in_.substr(pos_, end - pos_);
        auto enc = body.find("encoding");
        if (enc != std::string_view::npos) {
            auto q = body.find_first_of("\"'", enc);
            if (q == std::string_view::npos) {
                fail("malformed encoding declaration");
            }
            auto q2 = body.find(body[q], q + 1);
            if (q2 == std::string_view::npos) {
                fail("malformed encoding declaration");
            }
            std::string value(body.substr(q + 1, q2 - q - 1));
            std::transform(value.begin(), value.end(), value.begin(),
                           [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
            if (value != "UTF-8" && value != "UTF8") {
                unsupported("only UTF-8 documents are supported, declared '" + value + "'");
            }
        }
        pos_ = end + 2;
    }

    void skip_comment()
    {
        pos_ += 4;
        std::size_t end = in_.find("--", pos_);
        if (end == std::string_view::npos) {
            fail("unterminated comment");
        }
        if (end + 2 >= in_.size() || in_[end + 2] != '>') {
            fail("'--' inside comment", end);
        }
        pos_ = end + 3;
    }

    void skip_misc()
    {
        for (;;) {
            skip_space();
            if (looking_at("<!--")) {
                skip_comment();
            } else if (looking_at("<?")) {
                unsupported("processing instructions are not supported");
            } else if (looking_at("<!DOCTYPE")) {
                unsupported("DTDs are not supported");
            } else {
                return;
            }
        }
    }

    // Parses an entity or character reference at pos_ ('&') and appends its value.
    void parse_reference(std::string& out)
    {
        std::size_t start = pos_;
        std::size_t semi = in_.find(';', pos_);
        if (semi == std::string_view::npos || semi - pos_ > 12) {
            fail("unterminated reference");
        }
        std::string_view ref = in_.substr(pos_ + 1, semi - pos_ - 1);
        pos_ = semi + 1;
        if (ref == "amp") {
            out += '&';
        } else if (ref == "lt") {
            out += '<';
        } else if (ref == "gt") {
            out += '>';
        } else if (ref == "quot") {
            out += '"';
        } else if (ref == "apos") {
            out += '\'';
        } else if (ref.starts_with('#')) {
            std::uint32_t cp = 0;
            std::from_chars_result r{};
            std::string_view digits;
            if (ref.starts_with("#x")) {
                digits = ref.substr(2);
                r = std::from_chars(digits.data(), digits.data() + digits.size(), cp, 16);
            } else {
                digits = ref.substr(1);
                r = std::from_chars(digits.data(), digits.data() + digits.size(), cp, 10);
            }
            if (digits.empty() || r.ec != std::errc() || r.ptr != digits.data() + digits.size() || !is_xml_char(cp)) {
                fail("invalid character reference", start);
            }
            append_utf8(out, cp);
        } else {
            fail("undefined entity '" + std::string(ref) + "'", start);
        }
    }

    std::string parse_attribute_value()
    {
        if (at_end() || (in_[pos_] != '"' && in_[pos_] != '\'')) {
            fail("expected quoted attribute value");
        }
        char quote = in_[pos_++];
        std::string value;
        for (;;) {
            if (at_end()) {
                fail("unterminated attribute value");
            }
            char c = in_[pos_];
            if (c == quote) {
                ++pos_;
                return value;
            }
            if (c == '<') {
                fail("'<' in attribute value");
            }
            if (c == '&') {
                parse_reference(value);
                continue;
            }
            if (c == '\r') {
                // CRLF and lone CR both normalize to one space.
                ++pos_;
                if (!at_end() && in_[pos_] == '\n') {
                    ++pos_;
                }
                value += ' ';
                continue;
            }
            value += (c == '\t' || c == '\n') ? ' ' : c;
            ++pos_;
        }
    }

    std::optional<std::string> lookup(std::string_view prefix) const
    {
        if (prefix == "xml") {
            return std::string(xml_namespace);
        }
        for (auto it = bindings_.rbegin(); it != bindings_.rend(); ++it) {
            if (it->prefix == prefix) {
                return it->uri;
            }
        }
        if (prefix.empty()) {
            return std::string();
        }
        return std::nullopt;
    }

    // Reads a start tag at pos_ ('<'); returns true if it was self-closing.
    bool parse_start_tag(Frame& frame)
    {
        std::size_t tag_start = pos_;
        ++pos_;
        frame.qname = parse_qname();
        frame.binding_mark = bindings_.size();
        std::vector<RawAttribute> raw;
        bool self_closing = false;
        for (;;) {
            std::size_t before = pos_;
            skip_space();
            if (at_end()) {
                fail("unterminated start tag", tag_start);
            }
            if (looking_at("/>")) {
                pos_ += 2;
                self_closing = true;
                break;
            }
            if (in_[pos_] == '>') {
                ++pos_;
                break;
            }
            if (before == pos_) {
                fail("expected whitespace before attribute");
            }
            std::size_t at = pos_;
            std::string qname = parse_qname();
            skip_space();
            expect("=");
            skip_space();
            std::string value = parse_attribute_value();
            if (qname == "xmlns" || qname.starts_with("xmlns:")) {
                std::string prefix = qname == "xmlns" ? std::string() : qname.substr(6);
                if (prefix == "xmlns" || (prefix == "xml" && value != xml_namespace)) {
                    fail("reserved namespace prefix '" + prefix + "'", at);
                }
                if (!prefix.empty() && value.empty()) {
                    fail("prefix '" + prefix + "' cannot be undeclared", at);
                }
                for (std::size_t i = frame.binding_mark; i < bindings_.size(); ++i) {
                    if (bindings_[i].prefix == prefix) {
                        fail("duplicate namespace declaration", at);
                    }
                }
                if (prefix != "xml") {
                    bindings_.push_back({std::move(prefix), std::move(value)});
                }
                continue;
            }
            raw.push_back({std::move(qname), std::move(value), at});
        }

        auto resolve = [&](const std::string& qname, bool is_attribute, std::size_t at) {
            auto colon = qname.find(':');
            std::string prefix = colon == std::string::npos ? std::string() : qname.substr(0, colon);
            std::string local = colon == std::string::npos ? qname : qname.substr(colon + 1);
            if (prefix == "xmlns") {
                fail("'xmlns' prefix used on a name", at);
            }
            std::string ns;
            if (!prefix.empty() || !is_attribute) {
                auto uri = lookup(prefix);
                if (!uri) {
                    fail("unbound namespace prefix '" + prefix + "'", at);
                }
                ns = std::move(*uri);
            }
            return XmlName(std::move(local), std::move(ns), std::move(prefix));
        };

        frame.node = XmlNode(resolve(frame.qname, false, tag_start));
        for (auto& a : raw) {
            XmlName name = resolve(a.qname, true, a.position);
            if (frame.node.attribute(name.namespace_uri, name.local) != nullptr) {
                fail("duplicate attribute '" + a.qname + "'", a.position);
            }
            frame.node.set_attribute(std::move(name), std::move(a.value));
        }
        return self_closing;
    }

    void parse_text(std::string& out)
    {
        while (!at_end()) {
            char c = in_[pos_];
            if (c == '<') {
                return;
            }
            if (c == '&') {
                parse_reference(out);
                continue;
            }
            if (c == '>' && looking_at("]]>")) {
                fail("']]>' in text");
            }
            if (c == '\r') {
                ++pos_;
                if (!at_end() && in_[pos_] == '\n') {
                    ++pos_;
                }
                out += '\n';
                continue;
            }
            std::size_t run = pos_;
            while (run < in_.size() && in_[run] != '<' && in_[run] != '&' && in_[run] != '\r' && in_[run] != '>') {
                ++run;
            }
            if (run == pos_) {
                out += c;
                ++pos_;
            } else {
                out.append(in_.substr(pos_, run - pos_));
                pos_ = run;
            }
        }
    }

    XmlNode parse_element_tree()
    {
        std::vector<Frame> stack;
        std::string pending_text;

        auto flush_text = [&] {
            if (!pending_text.empty()) {
                stack.back().node.append_text(std::move(pending_text));
                pending_text.clear();
            }
        };

        auto close_top = [&]() -> std::optional<XmlNode> {
            Frame done = std::move(stack.back());
            stack.pop_back();
            bindings_.resize(done.binding_mark);
            if (stack.empty()) {
                return std::move(done.node);
            }
            stack.back().node.append(std::move(done.node));
            return std::nullopt;
        };

        // Root start tag.
        stack.emplace_back();
        if (parse_start_tag(stack.back())) {
            return std::move(*close_top());
        }

        for (;;) {
            if (at_end()) {
                fail("unexpected end of input inside <" + stack.back().qname + ">");
            }
            if (in_[pos_] != '<') {
                parse_text(pending_text);
                continue;
            }
            if (looking_at("</")) {
                flush_text();
                std::size_t at = pos_;
                pos_ += 2;
                std::string qname = parse_qname();
                skip_space();
                expect(">");
                if (qname != stack.back().qname) {
                    fail("mismatched end tag </" + qname + ">, expected </" + stack.back().qname + ">", at);
                }
                if (auto root = close_top()) {
                    return std::move(*root);
                }
                continue;
            }
            if (looking_at("<!--")) {
                skip_comment();
                continue;
            }
            if (looking_at("<![CDATA[")) {
                pos_ += 9;
                std::size_t end = in_.find("]]>", pos_);
                if (end == std::string_view::npos) {
                    fail("unterminated CDATA section");
                }
                std::string_view raw = in_.substr(pos_, end - pos_);
                for (std::size_t i = 0; i < raw.size(); ++i) {
                    if (raw[i] == '\r') {
                        pending_text += '\n';
                        if (i + 1 < raw.size() && raw[i + 1] == '\n') {
                            ++i;
                        }
                    } else {
                        pending_text += raw[i];
                    }
                }
                pos_ = end + 3;
                continue;
            }
            if (looking_at("<?")) {
                unsupported("processing instructions are not supported");
            }
            if (looking_at("<!")) {
                unsupported("markup declarations are not supported");
            }
            flush_text();
            if (stack.size() >= max_depth) {
                fail("element nesting deeper than " + std::to_string(max_depth));
            }
            stack.emplace_back();
            if (parse_start_tag(stack.back())) {
                if (auto root = close_top()) {
                    return std::move(*root);
                }
            }
        }
    }

    std::string_view in_;
    std::size_t pos_ = 0;
    std::vector<Binding> bindings_;
};

struct TextEscapes {
    std::array<bool, 256> special{};
    constexpr TextEscapes(std::string_view chars)
    {
        for (char c : chars) {
            special[static_cast<unsigned char>(c)] = true;
        }
    }
};

constexpr TextEscapes text_specials("&<>\r");
constexpr TextEscapes attribute_specials("&<\"\t\n\r");

template <typename Replace>
void escape_with(std::string_view in, std::string& out, const TextEscapes& table, Replace&& replace)
{
    std::size_t run = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (table.special[static_cast<unsigned char>(in[i])]) {
            out.append(in.data() + run, i - run);
            out += replace(in[i]);
            run = i + 1;
        }
    }
    out.append(in.data() + run, in.size() - run);
}

struct Declared {
    std::string prefix;
    std::string uri;
};

class Writer {
public:
    explicit Writer(bool canonical) : canonical_(canonical) {}

    std::string write(const XmlNode& root)
    {
        std::string out;
        struct Frame {
            const XmlNode* node;
            std::size_t next_child;
            std::size_t scope_mark;
        };
        std::vector<Frame> stack;
        stack.push_back({&root, 0, scope_.size()});
        write_start(root, out);
        while (!stack.empty()) {
            Frame& f = stack.back();
            const auto& kids = f.node->children();
            if (!canonical_ && kids.empty() && f.next_child == 0) {
                // Self-closing form was emitted by write_start.
                scope_.resize(f.scope_mark);
                stack.pop_back();
                continue;
            }
            if (f.next_child == kids.size()) {
                out += "</";
                out += f.node->name().qualified();
                out += '>';
                scope_.resize(f.scope_mark);
                stack.pop_back();
                continue;
            }
            const XmlChild& child = kids[f.next_child++];
            if (const auto* text = std::get_if<XmlText>(&child)) {
                escape_text(text->value, out);
            } else {
                const auto& element = std::get<XmlNode>(child);
                std::size_t mark = scope_.size();
                write_start(element, out);
                stack.push_back({&element, 0, mark});
            }
        }
        return out;
    }

    void write_start(const XmlNode& node, std::string& out)
    {
        const XmlName& name = node.name();
        std::vector<Declared> needed;
        auto need = [&](const std::string& prefix, const std::string& uri) {
            if (prefix == "xml") {
                return;
            }
            for (const auto& d : needed) {
                if (d.prefix == prefix) {
                    if (d.uri != uri) {
                        throw Error(Errc::invalid_argument, "prefix '" + prefix + "' bound to two namespaces on <" +
                                                                name.qualified() + ">");
                    }
                    return;
                }
            }
            if (in_scope(prefix) != uri) {
                needed.push_back({prefix, uri});
            }
        };
        need(name.prefix, name.namespace_uri);
        for (const auto& a : node.attributes()) {
            if (!a.name.prefix.empty()) {
                need(a.name.prefix, a.name.namespace_uri);
            }
        }
        std::sort(needed.begin(), needed.end(), [](const Declared& a, const Declared& b) { return a.prefix < b.prefix; });

        out += '<';
        out += name.qualified();
        for (const auto& d : needed) {
            out += d.prefix.empty() ? " xmlns=\"" : " xmlns:" + d.prefix + "=\"";
            escape_attribute(d.uri, out);
            out += '"';
            scope_.push_back(d);
        }
        auto emit_attribute = [&](const XmlAttribute& a) {
            out += ' ';
            out += a.name.qualified();
            out += "=\"";
            escape_attribute(a.value, out);
            out += '"';
        };
        if (canonical_) {
            std::vector<const XmlAttribute*> sorted;
            sorted.reserve(node.attributes().size());
            for (const auto& a : node.attributes()) {
                sorted.push_back(&a);
            }
            std::sort(sorted.begin(), sorted.end(), [](const XmlAttribute* a, const XmlAttribute* b) {
                return std::tie(a->name.namespace_uri, a->name.local) < std::tie(b->name.namespace_uri, b->name.local);
            });
            for (const auto* a : sorted) {
                emit_attribute(*a);
            }
            out += '>';
        } else {
            for (const auto& a : node.attributes()) {
                emit_attribute(a);
            }
            out += node.children().empty() ? "/>" : ">";
        }
    }

private:
    std::string in_scope(const std::string& prefix) const
    {
        for (auto it = scope_.rbegin(); it != scope_.rend(); ++it) {
            if (it->prefix == prefix) {
                return it->uri;
            }
        }
        return {};
    }

    bool canonical_;
    std::vector<Declared> scope_;
};

} // namespace

bool is_ncname(std::string_view s) noexcept
{
    if (s.empty() || !is_name_start(static_cast<unsigned char>(s[0]))) {
        return false;
    }
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return is_name_char(static_cast<unsigned char>(c)); });
}

XmlName::XmlName(std::string local_, std::string namespace_uri_, std::string prefix_)
    : local(std::move(local_)), namespace_uri(std::move(namespace_uri_)), prefix(std::move(prefix_))
{
    if (!is_ncname(local)) {
        throw Error(Errc::invalid_argument, "'" + local + "' is not a valid local name");
    }
    if (!prefix.empty()) {
        if (!is_ncname(prefix)) {
            throw Error(Errc::invalid_argument, "'" + prefix + "' is not a valid prefix");
        }
        if (namespace_uri.empty()) {
            throw Error(Errc::invalid_argument, "prefix '" + prefix + "' requires a namespace");
        }
    }
}

void XmlNode::set_attribute(XmlName name, std::string value)
{
    if (!name.namespace_uri.empty() && name.prefix.empty()) {
        throw Error(Errc::invalid_argument, "namespaced attribute '" + name.local + "' needs a prefix");
    }
    if (name.prefix == "xmlns" || (name.prefix.empty() && name.local == "xmlns")) {
        throw Error(Errc::invalid_argument, "namespace declarations are not attributes");
    }
    for (auto& a : attributes_) {
        if (a.name.namespace_uri == name.namespace_uri && a.name.local == name.local) {
            a.name = std::move(name);
            a.value = std::move(value);
            return;
        }
    }
    attributes_.push_back({std::move(name), std::move(value)});
}

const std::string* XmlNode::attribute(std::string_view ns, std::string_view local) const noexcept
{
    for (const auto& a : attributes_) {
        if (a.name.matches(ns, local)) {
            return &a.value;
        }
    }
    return nullptr;
}

bool XmlNode::remove_attribute(std::string_view ns, std::string_view local)
{
    auto it = std::find_if(attributes_.begin(), attributes_.end(),
                           [&](const XmlAttribute& a) { return a.name.matches(ns, local); });
    if (it == attributes_.end()) {
        return false;
    }
    attributes_.erase(it);
    return true;
}

XmlNode& XmlNode::append(XmlNode child)
{
    children_.emplace_back(std::move(child));
    return std::get<XmlNode>(children_.back());
}

void XmlNode::append_text(std::string text)
{
    if (!children_.empty()) {
        if (auto* last = std::get_if<XmlText>(&children_.back())) {
            last->value += text;
            return;
        }
    }
    children_.emplace_back(XmlText{std::move(text)});
}

XmlNode* XmlNode::find_child(std::string_view ns, std::string_view local) noexcept
{
    for (auto& c : children_) {
        if (auto* e = std::get_if<XmlNode>(&c); e != nullptr && e->name_.matches(ns, local)) {
            return e;
        }
    }
    return nullptr;
}

const XmlNode* XmlNode::find_child(std::string_view ns, std::string_view local) const noexcept
{
    return const_cast<XmlNode*>(this)->find_child(ns, local);
}

std::vector<const XmlNode*> XmlNode::element_children() const
{
    std::vector<const XmlNode*> out;
    for (const auto& c : children_) {
        if (const auto* e = std::get_if<XmlNode>(&c)) {
            out.push_back(e);
        }
    }
    return out;
}

std::size_t XmlNode::element_count() const noexcept
{
    return static_cast<std::size_t>(
        std::count_if(children_.begin(), children_.end(), [](const XmlChild& c) { return c.index() == 0; }));
}

std::string XmlNode::text() const
{
    std::string out;
    for (const auto& c : children_) {
        if (const auto* t = std::get_if<XmlText>(&c)) {
            out += t->value;
        }
    }
    return out;
}

bool XmlNode::operator==(const XmlNode& other) const
{
    return name_ == other.name_ && attributes_ == other.attributes_ && children_ == other.children_;
}

XmlNode parse(std::string_view input) { return Parser(input).run(); }

std::string canonicalize(const XmlNode& node) { return Writer(true).write(node); }

std::pair<std::string, std::string> canonical_tags(const XmlNode& node)
{
    XmlNode shell(node.name());
    for (const auto& a : node.attributes()) {
        shell.set_attribute(a.name, a.value);
    }
    std::string start;
    Writer(true).write_start(shell, start);
    return {std::move(start), "</" + node.name().qualified() + ">"};
}

std::string serialize(const XmlNode& node) { return Writer(false).write(node); }

void escape_text(std::string_view in, std::string& out)
{
    escape_with(in, out, text_specials, [](char c) -> std::string_view {
        switch (c) {
        case '&': return "&amp;";
        case '<': return "&lt;";
        case '>': return "&gt;";
        default: return "&#xD;";
        }
    });
}

void escape_attribute(std::string_view in, std::string& out)
{
    escape_with(in, out, attribute_specials, [](char c) -> std::string_view {
        switch (c) {
        case '&': return "&amp;";
        case '<': return "&lt;";
        case '"': return "&quot;";
        case '\t': return "&#x9;";
        case '\n': return "&#xA;";
        default: return "&#xD;";
        }
    });
}

XmlNode* select(XmlNode& root, std::string_view path)
{
    if (path.starts_with('/')) {
        path.remove_prefix(1);
    }
    if (path.empty()) {
        return nullptr;
    }
    auto parse_step = [](std::string_view step, std::string_view& name, std::size_t& index) {
        index = 1;
        name = step;
        auto open = step.find('[');
        if (open == std::string_view::npos) {
            return is_ncname(name);
        }
        if (!step.ends_with(']')) {
            return false;
        }
        name = step.substr(0, open);
        std::string_view digits = step.substr(open + 1, step.size() - open - 2);
        auto r = std::from_chars(digits.data(), digits.data() + digits.size(), index);
        return is_ncname(name) && r.ec == std::errc() && r.ptr == digits.data() + digits.size() && index >= 1;
    };

    XmlNode* current = nullptr;
    bool first = true;
    while (!path.empty()) {
        auto slash = path.find('/');
        std::string_view step = path.substr(0, slash);
        path = slash == std::string_view::npos ? std::string_view() : path.substr(slash + 1);
        std::string_view name;
        std::size_t index = 1;
        if (!parse_step(step, name, index)) {
            return nullptr;
        }
        if (first) {
            if (root.name().local != name || index != 1) {
                return nullptr;
            }
            current = &root;
            first = false;
            continue;
        }
        XmlNode* next = nullptr;
        std::size_t seen = 0;
        for (auto& c : current->children()) {
            if (auto* e = std::get_if<XmlNode>(&c); e != nullptr && e->name().local == name && ++seen == index) {
                next = e;
                break;
            }
        }
        if (next == nullptr) {
            return nullptr;
        }
        current = next;
    }
    return current;
}

} // namespace streamsign::xml
