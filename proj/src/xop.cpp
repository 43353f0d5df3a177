#include "streamsign/xop.hpp"

#include "streamsign/base64.hpp"
#include "streamsign/error.hpp"

#include <array>
#include <map>
#include <set>

namespace streamsign::xop {

namespace {

// Reads from a string shared by every pass over the same binary.
class SharedSource final : public ByteSource {
public:
    explicit SharedSource(std::shared_ptr<const std::string> data) : data_(std::move(data)) {}
    std::size_t read(std::span<char> buf) override
    {
        std::size_t n = std::min(buf.size(), data_->size() - offset_);
        std::copy_n(data_->data() + offset_, n, buf.data());
        offset_ += n;
        return n;
    }

private:
    std::shared_ptr<const std::string> data_;
    std::size_t offset_ = 0;
};

std::string encode_source(ByteSource& source, std::optional<std::uint64_t> size_hint)
{
    std::string text;
    if (size_hint) {
        text.reserve(encoded_size(*size_hint));
    }
    Base64Encoder encoder;
    std::vector<char> buffer(default_chunk_size());
    for (;;) {
        std::size_t n = source.read(buffer);
        if (n == 0) {
            break;
        }
        encoder.update(std::string_view(buffer.data(), n), text);
    }
    encoder.finish(text);
    return text;
}

} // namespace

BinaryContent BinaryContent::from_bytes(std::string data, std::string media_type)
{
    auto shared = std::make_shared<const std::string>(std::move(data));
    BinaryContent content;
    content.declared_length = shared->size();
    content.open = [shared] { return std::make_unique<SharedSource>(shared); };
    content.media_type = std::move(media_type);
    return content;
}

BinaryContent BinaryContent::from_file(const std::filesystem::path& path, std::string media_type)
{
    BinaryContent content;
    std::error_code ec;
    auto size = std::filesystem::file_size(path, ec);
    if (!ec) {
        content.declared_length = size;
    }
    content.open = [path] { return std::make_unique<FileSource>(path); };
    content.media_type = std::move(media_type);
    return content;
}

BinaryContent BinaryContent::from_prng(std::uint64_t seed, std::uint64_t length, std::string media_type)
{
    BinaryContent content;
    content.declared_length = length;
    content.open = [seed, length] { return std::make_unique<PrngSource>(seed, length); };
    content.media_type = std::move(media_type);
    return content;
}

std::string generate_content_id(const crypto::EntropySource& entropy)
{
    std::array<unsigned char, 16> bits{};
    entropy(bits);
    return crypto::to_hex(std::string_view(reinterpret_cast<const char*>(bits.data()), bits.size())) +
           std::string(content_id_domain);
}

xml::XmlNode make_include(std::string_view content_id)
{
    xml::XmlNode include(xml::XmlName("Include", std::string(xop_namespace), "xop"));
    include.set_attribute(xml::XmlName("href"), "cid:" + std::string(content_id));
    return include;
}

bool is_include(const xml::XmlNode& node) noexcept
{
    return node.name().matches(xop_namespace, "Include");
}

std::optional<std::string> include_target(const xml::XmlNode& include)
{
    const std::string* href = include.attribute("href");
    if (href == nullptr || !href->starts_with("cid:") || href->size() == 4) {
        return std::nullopt;
    }
    return href->substr(4);
}

XopPackage extract(xml::XmlNode envelope, const Binaries& binaries, const crypto::EntropySource& entropy)
{
    mime::Boundary boundary = mime::generate_boundary(entropy);
    std::string root_cid = generate_content_id(entropy);
    std::vector<XopPart> parts;
    std::set<const xml::XmlNode*> seen;
    std::set<std::string> ids{root_cid};
    for (const auto& [path, content] : binaries) {
        xml::XmlNode* target = xml::select(envelope, path);
        if (target == nullptr) {
            throw Error(Errc::path_not_found, "no element at path " + path);
        }
        if (!seen.insert(target).second) {
            throw Error(Errc::duplicate_path, "element designated twice: " + path);
        }
        if (target->element_count() != 0) {
            throw Error(Errc::invalid_argument, "element at " + path + " has child elements; base64Binary content must be text");
        }
        std::string cid = generate_content_id(entropy);
        if (!ids.insert(cid).second) {
            throw Error(Errc::duplicate_content_id, "generated Content-ID collided: " + cid);
        }
        target->clear_children();
        target->append(make_include(cid));
        parts.push_back({cid, content, path});
    }
    return XopPackage{std::move(envelope), std::move(parts), std::move(boundary), std::move(root_cid)};
}

std::vector<std::string> check_package(const xml::XmlNode& root, const std::vector<std::string>& part_ids)
{
    std::vector<std::string> problems;
    std::map<std::string, int> uses;
    std::set<std::string> ids;
    for (const auto& id : part_ids) {
        if (!ids.insert(id).second) {
            problems.push_back("duplicate Content-ID " + id);
        }
        uses[id] = 0;
    }
    xml::for_each_element(root, [&](const xml::XmlNode& node) {
        if (!is_include(node)) {
            for (const auto& child : node.children()) {
                const auto* element = std::get_if<xml::XmlNode>(&child);
                if (element != nullptr && is_include(*element) && node.children().size() != 1) {
                    problems.push_back("xop:Include has siblings under " + node.name().qualified());
                }
            }
            return;
        }
        if (!node.children().empty()) {
            problems.push_back("xop:Include has children");
        }
        if (node.attributes().size() != 1) {
            problems.push_back("xop:Include must carry exactly one attribute");
        }
        auto cid = include_target(node);
        if (!cid) {
            problems.push_back("xop:Include href is not a cid: URI");
            return;
        }
        auto it = uses.find(*cid);
        if (it == uses.end()) {
            problems.push_back("unresolved reference cid:" + *cid);
        } else if (++it->second == 2) {
            problems.push_back("part referenced twice: cid:" + *cid);
        }
    });
    return problems;
}

xml::XmlNode reconstitute(const xml::XmlNode& root, const PartResolver& resolve)
{
    if (is_include(root)) {
        throw Error(Errc::invalid_argument, "root element is an xop:Include");
    }
    xml::XmlNode out = root;
    xml::for_each_element(out, [&](xml::XmlNode& node) {
        auto& kids = node.children();
        for (std::size_t i = 0; i < kids.size(); ++i) {
            auto* element = std::get_if<xml::XmlNode>(&kids[i]);
            if (element == nullptr || !is_include(*element)) {
                continue;
            }
            auto cid = include_target(*element);
            if (!cid) {
                throw Error(Errc::unresolved_reference, "xop:Include href is not a cid: URI");
            }
            auto source = resolve(*cid);
            if (!source) {
                throw Error(Errc::unresolved_reference, "no part for cid:" + *cid);
            }
            kids[i] = xml::XmlText{encode_source(*source, std::nullopt)};
        }
        // Merge adjacent text so the tree matches one built with inline base64.
        for (std::size_t i = 1; i < kids.size();) {
            auto* prev = std::get_if<xml::XmlText>(&kids[i - 1]);
            auto* cur = std::get_if<xml::XmlText>(&kids[i]);
            if (prev != nullptr && cur != nullptr) {
                prev->value += cur->value;
                kids.erase(kids.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                ++i;
            }
        }
    });
    return out;
}

xml::XmlNode reconstitute(const XopPackage& package)
{
    std::map<std::string, const XopPart*> by_id;
    for (const auto& part : package.parts) {
        if (!by_id.emplace(part.content_id, &part).second) {
            throw Error(Errc::duplicate_content_id, "Content-ID used by two parts: " + part.content_id);
        }
    }
    return reconstitute(package.root, [&](std::string_view cid) -> std::unique_ptr<ByteSource> {
        auto it = by_id.find(std::string(cid));
        if (it == by_id.end()) {
            return nullptr;
        }
        return it->second->content.open();
    });
}

std::string package_content_type(const XopPackage& package)
{
    return mime::package_content_type(package.boundary, package.root_content_id);
}

std::uint64_t write_xop_package(ByteSink& sink, const XopPackage& package, mime::WriterOptions options)
{
    mime::MimeWriter writer(sink, package.boundary, options);
    writer.begin_part({package.root_content_id, std::string(root_content_type), mime::TransferEncoding::eight_bit});
    writer.write_body(xml::canonicalize(package.root));
    for (const auto& part : package.parts) {
        writer.begin_part({part.content_id, part.content.media_type, mime::TransferEncoding::binary});
        auto source = part.content.open();
        std::uint64_t n = writer.copy_body(*source);
        if (part.content.declared_length && *part.content.declared_length != n) {
            throw Error(Errc::source_error, "binary for " + part.path + " yielded " + std::to_string(n) +
                                                " bytes, declared " + std::to_string(*part.content.declared_length));
        }
    }
    writer.finish();
    return writer.bytes_written();
}

BufferedPackage read_xop_package(ByteSource& source, const std::optional<mime::Boundary>& boundary)
{
    auto parts = mime::read_all_parts(source, boundary);
    if (parts.empty()) {
        throw Error(Errc::malformed_message, "package has no root part");
    }
    BufferedPackage out;
    out.root = xml::parse(parts.front().body);
    out.root_content_id = parts.front().headers.content_id;
    out.parts.assign(std::make_move_iterator(parts.begin() + 1), std::make_move_iterator(parts.end()));
    return out;
}

} // namespace streamsign::xop
