#pragma once

#include "streamsign/crypto.hpp"
#include "streamsign/io.hpp"
#include "streamsign/mime.hpp"
#include "streamsign/xml.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace streamsign::xop {

inline constexpr std::string_view xop_namespace = "http://www.w3.org/2004/08/xop/include";
inline constexpr std::string_view root_content_type =
    "application/xop+xml; charset=UTF-8; type=\"application/soap+xml\"";
inline constexpr std::string_view content_id_domain = "@streamsign.invalid";

/// Binary payload designated for an element. `open` is called once per pass;
/// the blocking signer needs two passes, the streaming signer exactly one.
struct BinaryContent {
    std::function<std::unique_ptr<ByteSource>()> open;
    /// Advisory; when present the source must yield exactly this many bytes.
    std::optional<std::uint64_t> declared_length;
    std::string media_type = "application/octet-stream";

    static BinaryContent from_bytes(std::string data, std::string media_type = "application/octet-stream");
    static BinaryContent from_file(const std::filesystem::path& path,
                                   std::string media_type = "application/octet-stream");
    static BinaryContent from_prng(std::uint64_t seed, std::uint64_t length,
                                   std::string media_type = "application/octet-stream");
};

/// Element path to binary, in designation order.
using Binaries = std::vector<std::pair<std::string, BinaryContent>>;

struct XopPart {
    std::string content_id;
    BinaryContent content;
    /// Path of the element the part was extracted from.
    std::string path;
};

struct XopPackage {
    xml::XmlNode root;
    std::vector<XopPart> parts;
    mime::Boundary boundary;
    std::string root_content_id;
};

/// 128 random bits as hex plus a fixed domain suffix.
std::string generate_content_id(const crypto::EntropySource& entropy);

xml::XmlNode make_include(std::string_view content_id);
bool is_include(const xml::XmlNode& node) noexcept;
/// Content-ID named by an xop:Include href, or nullopt if the href is not a cid: URI.
std::optional<std::string> include_target(const xml::XmlNode& include);

/// Replaces the content of every designated element with an xop:Include.
/// Draws from entropy in a fixed order: boundary, root Content-ID, then one
/// Content-ID per binary. Throws PathNotFound, DuplicatePath, or
/// InvalidArgument when a target holds child elements.
XopPackage extract(xml::XmlNode envelope, const Binaries& binaries,
                   const crypto::EntropySource& entropy = crypto::system_entropy());

/// Reference-integrity problems of a root and part id list; empty when sound.
std::vector<std::string> check_package(const xml::XmlNode& root, const std::vector<std::string>& part_ids);

using PartResolver = std::function<std::unique_ptr<ByteSource>(std::string_view content_id)>;

/// Replaces every xop:Include with the base64 text of its part. The resolver
/// returns nullptr for an unknown cid. Throws UnresolvedReference.
xml::XmlNode reconstitute(const xml::XmlNode& root, const PartResolver& resolve);
/// Throws DuplicateContentId or UnresolvedReference.
xml::XmlNode reconstitute(const XopPackage& package);

std::string package_content_type(const XopPackage& package);

/// Root part holds the canonical form of the root; binary parts follow in order.
std::uint64_t write_xop_package(ByteSink& sink, const XopPackage& package, mime::WriterOptions options = {});

/// Fully buffered reader for tests and small messages.
struct BufferedPackage {
    xml::XmlNode root;
    std::string root_content_id;
    std::vector<mime::BufferedPart> parts;
};
BufferedPackage read_xop_package(ByteSource& source, const std::optional<mime::Boundary>& boundary = std::nullopt);

} // namespace streamsign::xop
