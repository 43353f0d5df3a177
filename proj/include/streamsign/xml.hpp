#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace streamsign::xml {

inline constexpr std::size_t max_depth = 1024;
inline constexpr std::string_view xml_namespace = "http://www.w3.org/XML/1998/namespace";

/// Qualified name. The prefix is kept so serialization reproduces the
/// author's choice, but equality of names for lookup purposes is by
/// (namespace_uri, local).
struct XmlName {
    std::string local;
    std::string namespace_uri;
    std::string prefix;

    XmlName() = default;
    /// Validates the invariants: local is an NCName, a prefix implies a namespace.
    XmlName(std::string local, std::string namespace_uri = {}, std::string prefix = {});

    bool matches(std::string_view ns, std::string_view loc) const noexcept
    {
        return namespace_uri == ns && local == loc;
    }
    std::string qualified() const { return prefix.empty() ? local : prefix + ":" + local; }

    bool operator==(const XmlName&) const = default;
};

bool is_ncname(std::string_view s) noexcept;

struct XmlAttribute {
    XmlName name;
    std::string value;

    bool operator==(const XmlAttribute&) const = default;
};

struct XmlText {
    std::string value;

    bool operator==(const XmlText&) const = default;
};

class XmlNode;
using XmlChild = std::variant<XmlNode, XmlText>;

/// Element node. Children are held by value, so a tree is always acyclic and
/// every node has exactly one owner.
class XmlNode {
public:
    XmlNode() = default;
    explicit XmlNode(XmlName name) : name_(std::move(name)) {}

    const XmlName& name() const noexcept { return name_; }

    const std::vector<XmlAttribute>& attributes() const noexcept { return attributes_; }
    /// Replaces the value if (namespace_uri, local) already exists, else appends.
    void set_attribute(XmlName name, std::string value);
    const std::string* attribute(std::string_view ns, std::string_view local) const noexcept;
    const std::string* attribute(std::string_view local) const noexcept { return attribute({}, local); }
    bool remove_attribute(std::string_view ns, std::string_view local);

    std::vector<XmlChild>& children() noexcept { return children_; }
    const std::vector<XmlChild>& children() const noexcept { return children_; }

    XmlNode& append(XmlNode child);
    void append_text(std::string text);
    void clear_children() { children_.clear(); }

    /// First element child with the given expanded name, or nullptr.
    XmlNode* find_child(std::string_view ns, std::string_view local) noexcept;
    const XmlNode* find_child(std::string_view ns, std::string_view local) const noexcept;
    std::vector<const XmlNode*> element_children() const;
    std::size_t element_count() const noexcept;

    /// Concatenated direct text children.
    std::string text() const;

    bool operator==(const XmlNode&) const;

private:
    XmlName name_;
    std::vector<XmlAttribute> attributes_;
    std::vector<XmlChild> children_;
};

/// Parses a complete UTF-8 document with a single root element.
/// Comments are dropped; DTDs, processing instructions and non-UTF-8
/// declarations are rejected. Throws Error(malformed_xml | unsupported_construct).
XmlNode parse(std::string_view input);

/// Restricted canonical form: attributes sorted by (namespace, local), namespace
/// declarations on the element where first visibly used and sorted by prefix,
/// start/end tag pairs for empty elements, no declaration, no comments.
std::string canonicalize(const XmlNode& node);

/// Canonical start and end tags of node as an apex element, ignoring its
/// children. canonicalize of the element holding only text T equals
/// first + escape_text(T) + second.
std::pair<std::string, std::string> canonical_tags(const XmlNode& node);

/// Well-formed output preserving attribute order; empty elements self-close.
std::string serialize(const XmlNode& node);

void escape_text(std::string_view in, std::string& out);
void escape_attribute(std::string_view in, std::string& out);

/// Resolves a slash-separated path of local names, each optionally followed by
/// a 1-based index among same-named siblings: "/Envelope/Body/upload/data[2]".
/// The first step must match the root. Returns nullptr if nothing matches.
XmlNode* select(XmlNode& root, std::string_view path);

/// Depth-first pre-order visit of every element, including root.
template <typename Fn>
void for_each_element(XmlNode& root, Fn&& fn)
{
    std::vector<XmlNode*> stack{&root};
    while (!stack.empty()) {
        XmlNode* n = stack.back();
        stack.pop_back();
        fn(*n);
        auto& kids = n->children();
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
            if (auto* e = std::get_if<XmlNode>(&*it)) {
                stack.push_back(e);
            }
        }
    }
}

template <typename Fn>
void for_each_element(const XmlNode& root, Fn&& fn)
{
    std::vector<const XmlNode*> stack{&root};
    while (!stack.empty()) {
        const XmlNode* n = stack.back();
        stack.pop_back();
        fn(*n);
        const auto& kids = n->children();
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
            if (const auto* e = std::get_if<XmlNode>(&*it)) {
                stack.push_back(e);
            }
        }
    }
}

} // namespace streamsign::xml
