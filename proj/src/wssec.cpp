#include "streamsign/wssec.hpp"

#include "streamsign/base64.hpp"
#include "streamsign/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>

namespace streamsign::wssec {

namespace {

using Clock = std::chrono::steady_clock;
using xml::XmlName;
using xml::XmlNode;

constexpr std::size_t max_root_bytes = 16u << 20;
constexpr std::size_t max_signature_bytes = 1u << 20;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

XmlNode ds_element(std::string_view local)
{
    return XmlNode(XmlName(std::string(local), std::string(ns::ds), "ds"));
}

XmlNode xenc_element(std::string_view local)
{
    return XmlNode(XmlName(std::string(local), std::string(ns::xenc), "xenc"));
}

XmlNode with_algorithm(XmlNode node, std::string_view uri)
{
    node.set_attribute(XmlName("Algorithm"), std::string(uri));
    return node;
}

[[noreturn]] void malformed(const std::string& why)
{
    throw Error(Errc::malformed_message, why);
}

bool is_whitespace(std::string_view s)
{
    return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

bool is_soap_envelope(const XmlNode& node)
{
    return node.name().matches(ns::soap12, "Envelope") || node.name().matches(ns::soap11, "Envelope");
}

const std::string* wsu_id(const XmlNode& node)
{
    return node.attribute(ns::wsu, "Id");
}

// Element children only; any non-whitespace text is refused.
std::vector<XmlNode*> strip_to_elements(XmlNode& node, std::string_view where)
{
    auto& kids = node.children();
    std::vector<xml::XmlChild> kept;
    for (auto& child : kids) {
        if (auto* text = std::get_if<xml::XmlText>(&child)) {
            if (!is_whitespace(text->value)) {
                throw Error(Errc::invalid_argument, "text content directly inside " + std::string(where));
            }
            continue;
        }
        kept.push_back(std::move(child));
    }
    kids = std::move(kept);
    std::vector<XmlNode*> out;
    for (auto& child : kids) {
        out.push_back(&std::get<XmlNode>(child));
    }
    return out;
}

XmlNode* header_of(XmlNode& envelope)
{
    return envelope.find_child(envelope.name().namespace_uri, "Header");
}

XmlNode* security_of(XmlNode& envelope)
{
    XmlNode* header = header_of(envelope);
    return header == nullptr ? nullptr : header->find_child(ns::wsse, "Security");
}

std::string digest_element(const XmlNode& element, std::string_view algorithm)
{
    return crypto::Digest::compute(algorithm, xml::canonicalize(element));
}

const XmlNode* find_by_id(const XmlNode& root, std::string_view id)
{
    const XmlNode* found = nullptr;
    xml::for_each_element(root, [&](const XmlNode& node) {
        const std::string* value = wsu_id(node);
        if (found == nullptr && value != nullptr && *value == id) {
            found = &node;
        }
    });
    return found;
}

XmlNode encrypted_placeholder(std::string_view content_id)
{
    XmlNode data = xenc_element("EncryptedData");
    data.set_attribute(XmlName("Type"), std::string(encrypted_element_type));
    data.append(with_algorithm(xenc_element("EncryptionMethod"), crypto::algorithm::aes256_gcm));
    XmlNode& cipher_data = data.append(xenc_element("CipherData"));
    XmlNode& cipher_value = cipher_data.append(xenc_element("CipherValue"));
    cipher_value.append(xop::make_include(content_id));
    return data;
}

// Records when bytes first and last reached the wrapped sink.
class TimingSink final : public ByteSink {
public:
    TimingSink(ByteSink& inner, Clock::time_point t0) : inner_(inner), t0_(t0) {}
    void write(std::string_view data) override
    {
        if (data.empty()) {
            return;
        }
        if (!first_) {
            first_ = seconds_since(t0_);
        }
        inner_.write(data);
        last_ = seconds_since(t0_);
    }
    void flush() override { inner_.flush(); }
    double first() const { return first_.value_or(0.0); }
    double last() const { return last_; }

private:
    ByteSink& inner_;
    Clock::time_point t0_;
    std::optional<double> first_;
    double last_ = 0;
};

void check_signing_keys(const crypto::KeyMaterial& keys, bool need_wrap)
{
    if (!keys.signing_key) {
        throw Error(Errc::key_error, "signing requires a private key");
    }
    if (need_wrap && (!keys.wrap_key || keys.wrap_key->size() != 32)) {
        throw Error(Errc::key_error, "strict mode requires a 256-bit wrap key");
    }
}

// State shared by both signing paths up to the point where bytes are emitted.
struct Prepared {
    xop::XopPackage package;
    std::vector<std::string> ids;
    std::vector<std::pair<std::string, std::string>> tags;
};

Prepared prepare(const XmlNode& envelope, const xop::Binaries& binaries, const SignOptions& options)
{
    XmlNode env = envelope;
    auto ids = prepare_envelope(env, options.body_id);
    auto package = xop::extract(std::move(env), binaries, options.entropy);
    std::vector<std::pair<std::string, std::string>> tags;
    for (const auto& part : package.parts) {
        tags.push_back(xml::canonical_tags(*xml::select(package.root, part.path)));
    }
    return {std::move(package), std::move(ids), std::move(tags)};
}

std::vector<Reference> envelope_references(const XmlNode& root, const std::vector<std::string>& ids,
                                           std::string_view algorithm)
{
    std::vector<Reference> refs;
    for (const auto& id : ids) {
        const XmlNode* target = find_by_id(root, id);
        refs.push_back({"#" + id, std::string(algorithm), digest_element(*target, algorithm),
                        TargetKind::envelope_element});
    }
    return refs;
}

std::string read_limited(ByteSource& source, std::size_t limit, const char* what)
{
    std::string out;
    std::array<char, 16384> buf{};
    while (std::size_t n = source.read(buf)) {
        out.append(buf.data(), n);
        if (out.size() > limit) {
            malformed(std::string(what) + " exceeds " + std::to_string(limit) + " bytes");
        }
    }
    return out;
}

XmlNode parse_canonical(std::string_view bytes, const char* what)
{
    XmlNode node;
    try {
        node = xml::parse(bytes);
    } catch (const Error& e) {
        malformed(std::string(what) + " is not well-formed: " + e.what());
    }
    if (xml::canonicalize(node) != bytes) {
        malformed(std::string(what) + " is not in canonical form");
    }
    return node;
}

void require_no_attributes(const XmlNode& node)
{
    if (!node.attributes().empty()) {
        malformed("unexpected attributes on " + node.name().qualified());
    }
}

std::vector<const XmlNode*> exact_elements(const XmlNode& node)
{
    for (const auto& child : node.children()) {
        if (std::holds_alternative<xml::XmlText>(child)) {
            malformed("unexpected text inside " + node.name().qualified());
        }
    }
    return node.element_children();
}

const std::string& only_attribute(const XmlNode& node, std::string_view local)
{
    const std::string* value = node.attribute(local);
    if (value == nullptr || node.attributes().size() != 1) {
        malformed(node.name().qualified() + " must carry exactly the " + std::string(local) + " attribute");
    }
    return *value;
}

void expect_name(const XmlNode& node, std::string_view ns_uri, std::string_view local)
{
    if (!node.name().matches(ns_uri, local)) {
        malformed("expected " + std::string(local) + ", found " + node.name().qualified());
    }
}

std::string text_only(const XmlNode& node)
{
    require_no_attributes(node);
    if (node.element_count() != 0) {
        malformed(node.name().qualified() + " must hold text only");
    }
    return node.text();
}

std::string decode_base64_field(const XmlNode& node)
{
    try {
        return xop::base64_decode(text_only(node));
    } catch (const Error& e) {
        if (e.code() == Errc::invalid_base64) {
            malformed(node.name().qualified() + " is not valid base64");
        }
        throw;
    }
}

// Validates the xop:Include slot used by the lax and strict placeholders.
std::string include_slot(const XmlNode& holder)
{
    auto kids = exact_elements(holder);
    if (kids.size() != 1 || !xop::is_include(*kids[0])) {
        malformed(holder.name().qualified() + " must contain one xop:Include");
    }
    const std::string& href = only_attribute(*kids[0], "href");
    (void)href;
    if (!kids[0]->children().empty()) {
        malformed("xop:Include must be empty");
    }
    auto cid = xop::include_target(*kids[0]);
    if (!cid) {
        malformed("xop:Include href is not a cid: URI");
    }
    return *cid;
}

struct Inspected {
    Mode mode = Mode::blocking;
    const XmlNode* inline_signature = nullptr;
    std::string signature_cid;
    std::vector<std::string> required_ids;
    // Payload cid to canonical start/end tags of the element holding it.
    std::map<std::string, std::pair<std::string, std::string>> includes;
};

Inspected inspect_envelope(const XmlNode& root)
{
    Inspected out;
    if (!is_soap_envelope(root)) {
        malformed("root element is not a SOAP Envelope");
    }
    require_no_attributes(root);
    const std::string& soap = root.name().namespace_uri;
    auto top = exact_elements(root);
    if (top.size() != 2 || !top[0]->name().matches(soap, "Header") || !top[1]->name().matches(soap, "Body")) {
        malformed("Envelope must contain exactly Header then Body");
    }
    const XmlNode& header = *top[0];
    const XmlNode& body = *top[1];
    require_no_attributes(header);
    auto blocks = exact_elements(header);
    if (blocks.empty() || !blocks[0]->name().matches(ns::wsse, "Security")) {
        malformed("Header must start with wsse:Security");
    }
    const XmlNode& security = *blocks[0];
    require_no_attributes(security);
    auto sec = exact_elements(security);
    if (sec.size() != 1) {
        malformed("wsse:Security must hold exactly one element");
    }
    const XmlNode& holder = *sec[0];
    if (holder.name().matches(ns::ds, "Signature")) {
        auto kids = exact_elements(holder);
        if (kids.size() == 1 && xop::is_include(*kids[0])) {
            out.mode = Mode::streaming_lax;
            require_no_attributes(holder);
            out.signature_cid = include_slot(holder);
        } else {
            out.mode = Mode::blocking;
            out.inline_signature = &holder;
        }
    } else if (holder.name().matches(ns::xenc, "EncryptedData")) {
        out.mode = Mode::streaming_strict;
        if (only_attribute(holder, "Type") != encrypted_element_type) {
            malformed("EncryptedData Type must be " + std::string(encrypted_element_type));
        }
        auto kids = exact_elements(holder);
        if (kids.size() != 2) {
            malformed("EncryptedData must hold EncryptionMethod and CipherData");
        }
        expect_name(*kids[0], ns::xenc, "EncryptionMethod");
        if (!exact_elements(*kids[0]).empty()) {
            malformed("EncryptionMethod must be empty");
        }
        if (only_attribute(*kids[0], "Algorithm") != crypto::algorithm::aes256_gcm) {
            throw Error(Errc::unsupported_algorithm, "encryption algorithm '" + *kids[0]->attribute("Algorithm") + "'");
        }
        expect_name(*kids[1], ns::xenc, "CipherData");
        require_no_attributes(*kids[1]);
        auto data = exact_elements(*kids[1]);
        if (data.size() != 1) {
            malformed("CipherData must hold one CipherValue");
        }
        expect_name(*data[0], ns::xenc, "CipherValue");
        require_no_attributes(*data[0]);
        out.signature_cid = include_slot(*data[0]);
    } else {
        malformed("wsse:Security holds neither ds:Signature nor xenc:EncryptedData");
    }

    // Every header block and the Body must be signed, so each needs an id.
    std::set<std::string> all_ids;
    xml::for_each_element(root, [&](const XmlNode& node) {
        if (const std::string* id = wsu_id(node); id != nullptr && !all_ids.insert(*id).second) {
            malformed("duplicate wsu:Id '" + *id + "'");
        }
    });
    for (const XmlNode* target : {&body}) {
        const std::string* id = wsu_id(*target);
        if (id == nullptr) {
            malformed("Body carries no wsu:Id");
        }
        out.required_ids.push_back(*id);
    }
    for (std::size_t i = 1; i < blocks.size(); ++i) {
        const std::string* id = wsu_id(*blocks[i]);
        if (id == nullptr) {
            malformed("header block " + blocks[i]->name().qualified() + " carries no wsu:Id");
        }
        out.required_ids.push_back(*id);
    }

    // Payload includes live anywhere outside the security header.
    std::vector<const XmlNode*> stack;
    for (std::size_t i = 1; i < blocks.size(); ++i) {
        stack.push_back(blocks[i]);
    }
    stack.push_back(&body);
    while (!stack.empty()) {
        const XmlNode* node = stack.back();
        stack.pop_back();
        if (xop::is_include(*node)) {
            malformed("xop:Include cannot be a header block or the Body");
        }
        for (const auto& child : node->children()) {
            const auto* element = std::get_if<XmlNode>(&child);
            if (element == nullptr) {
                continue;
            }
            if (!xop::is_include(*element)) {
                stack.push_back(element);
                continue;
            }
            std::string cid = include_slot(*node);
            if (cid == out.signature_cid || !out.includes.emplace(cid, xml::canonical_tags(*node)).second) {
                malformed("cid:" + cid + " is referenced twice");
            }
        }
    }
    return out;
}

} // namespace

const char* to_string(Mode mode) noexcept
{
    switch (mode) {
    case Mode::blocking: return "blocking";
    case Mode::streaming_lax: return "streaming_lax";
    case Mode::streaming_strict: return "streaming_strict";
    }
    return "blocking";
}

Mode parse_mode(std::string_view text)
{
    if (text == "blocking") {
        return Mode::blocking;
    }
    if (text == "streaming_lax") {
        return Mode::streaming_lax;
    }
    if (text == "streaming_strict") {
        return Mode::streaming_strict;
    }
    throw Error(Errc::invalid_argument, "unknown mode '" + std::string(text) + "'");
}

StreamingReferenceDigest::StreamingReferenceDigest(std::string_view algorithm, std::string_view prefix,
                                                   std::string suffix)
    : digest_(algorithm), suffix_(std::move(suffix))
{
    digest_.update(prefix);
}

void StreamingReferenceDigest::update(std::string_view binary)
{
    scratch_.clear();
    encoder_.update(binary, scratch_);
    digest_.update(scratch_);
    bytes_ += binary.size();
}

std::string StreamingReferenceDigest::finish()
{
    scratch_.clear();
    encoder_.finish(scratch_);
    digest_.update(scratch_);
    digest_.update(suffix_);
    return digest_.finish();
}

std::string digest_reference_streaming(std::string_view element_prefix, ByteSource& binary,
                                       std::string_view element_suffix, std::string_view algorithm, std::size_t chunk)
{
    StreamingReferenceDigest digest(algorithm, element_prefix, std::string(element_suffix));
    std::vector<char> buffer(chunk == 0 ? default_chunk_size() : chunk);
    for (;;) {
        std::size_t n = 0;
        try {
            n = binary.read(buffer);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(Errc::source_error, e.what());
        }
        if (n == 0) {
            break;
        }
        digest.update(std::string_view(buffer.data(), n));
    }
    return digest.finish();
}

XmlNode build_signed_info(const SignatureManifest& manifest)
{
    if (manifest.references.empty()) {
        throw Error(Errc::invalid_argument, "a manifest needs at least one reference");
    }
    std::set<std::string> uris;
    XmlNode info = ds_element("SignedInfo");
    info.append(with_algorithm(ds_element("CanonicalizationMethod"), manifest.canonicalization_algorithm));
    info.append(with_algorithm(ds_element("SignatureMethod"), manifest.signature_algorithm));
    for (const auto& ref : manifest.references) {
        if (!uris.insert(ref.uri).second) {
            throw Error(Errc::invalid_argument, "duplicate reference URI " + ref.uri);
        }
        if (ref.digest_value.empty()) {
            throw Error(Errc::missing_digest, "no digest for " + ref.uri);
        }
        if (ref.digest_value.size() != crypto::Digest::length(ref.digest_algorithm)) {
            throw Error(Errc::invalid_argument, "digest for " + ref.uri + " has the wrong length");
        }
        XmlNode r = ds_element("Reference");
        r.set_attribute(XmlName("URI"), ref.uri);
        r.append(with_algorithm(ds_element("DigestMethod"), ref.digest_algorithm));
        r.append(ds_element("DigestValue")).append_text(xop::base64_encode(ref.digest_value));
        info.append(std::move(r));
    }
    return info;
}

SignatureManifest parse_signed_info(const XmlNode& info)
{
    expect_name(info, ns::ds, "SignedInfo");
    require_no_attributes(info);
    auto kids = exact_elements(info);
    if (kids.size() < 3) {
        malformed("SignedInfo needs CanonicalizationMethod, SignatureMethod and a Reference");
    }
    SignatureManifest manifest;
    expect_name(*kids[0], ns::ds, "CanonicalizationMethod");
    expect_name(*kids[1], ns::ds, "SignatureMethod");
    for (int i = 0; i < 2; ++i) {
        if (!kids[i]->children().empty()) {
            malformed(kids[i]->name().qualified() + " must be empty");
        }
    }
    manifest.canonicalization_algorithm = only_attribute(*kids[0], "Algorithm");
    manifest.signature_algorithm = only_attribute(*kids[1], "Algorithm");
    if (manifest.canonicalization_algorithm != c14n_algorithm) {
        throw Error(Errc::unsupported_algorithm, "canonicalization '" + manifest.canonicalization_algorithm + "'");
    }
    if (manifest.signature_algorithm != crypto::algorithm::rsa_sha256) {
        throw Error(Errc::unsupported_algorithm, "signature method '" + manifest.signature_algorithm + "'");
    }
    std::set<std::string> uris;
    for (std::size_t i = 2; i < kids.size(); ++i) {
        const XmlNode& r = *kids[i];
        expect_name(r, ns::ds, "Reference");
        Reference ref;
        ref.uri = only_attribute(r, "URI");
        if (!uris.insert(ref.uri).second) {
            malformed("duplicate reference URI " + ref.uri);
        }
        if (ref.uri.starts_with("cid:")) {
            ref.target_kind = TargetKind::xop_part;
        } else if (ref.uri.starts_with("#")) {
            ref.target_kind = TargetKind::envelope_element;
        } else {
            malformed("unsupported reference URI " + ref.uri);
        }
        auto parts = exact_elements(r);
        if (parts.size() != 2) {
            malformed("Reference must hold DigestMethod and DigestValue");
        }
        expect_name(*parts[0], ns::ds, "DigestMethod");
        expect_name(*parts[1], ns::ds, "DigestValue");
        if (!parts[0]->children().empty()) {
            malformed("DigestMethod must be empty");
        }
        ref.digest_algorithm = only_attribute(*parts[0], "Algorithm");
        if (!crypto::Digest::supported(ref.digest_algorithm)) {
            throw Error(Errc::unsupported_algorithm, "digest method '" + ref.digest_algorithm + "'");
        }
        ref.digest_value = decode_base64_field(*parts[1]);
        if (ref.digest_value.size() != crypto::Digest::length(ref.digest_algorithm)) {
            malformed("digest for " + ref.uri + " has the wrong length");
        }
        manifest.references.push_back(std::move(ref));
    }
    return manifest;
}

XmlNode build_signature(const SignatureManifest& manifest, const crypto::KeyMaterial& keys)
{
    check_signing_keys(keys, false);
    XmlNode info = build_signed_info(manifest);
    std::string value = crypto::sign(manifest.signature_algorithm, keys.signing_key, xml::canonicalize(info));
    XmlNode signature = ds_element("Signature");
    signature.append(std::move(info));
    signature.append(ds_element("SignatureValue")).append_text(xop::base64_encode(value));
    signature.append(ds_element("KeyInfo")).append(ds_element("KeyName")).append_text(keys.key_name);
    return signature;
}

EncryptedSignature encrypt_signature(const XmlNode& signature, std::string_view wrap_key, std::string_view content_id)
{
    if (wrap_key.size() != 32) {
        throw Error(Errc::key_error, "wrap key must be 256 bits");
    }
    return {encrypted_placeholder(content_id), crypto::aead_encrypt(wrap_key, xml::canonicalize(signature))};
}

XmlNode decrypt_signature(std::string_view ciphertext, std::string_view wrap_key)
{
    if (wrap_key.size() != 32) {
        throw Error(Errc::key_error, "wrap key must be 256 bits");
    }
    return parse_canonical(crypto::aead_decrypt(wrap_key, ciphertext), "decrypted signature");
}

std::vector<std::string> prepare_envelope(XmlNode& envelope, std::string_view body_id)
{
    if (!is_soap_envelope(envelope)) {
        throw Error(Errc::invalid_argument, "root element is not a SOAP 1.1 or 1.2 Envelope");
    }
    if (!envelope.attributes().empty()) {
        throw Error(Errc::invalid_argument, "Envelope attributes cannot be covered by the signature");
    }
    const std::string soap = envelope.name().namespace_uri;
    const std::string soap_prefix = envelope.name().prefix;
    auto top = strip_to_elements(envelope, "Envelope");
    bool has_header = !top.empty() && top[0]->name().matches(soap, "Header");
    std::size_t body_index = has_header ? 1 : 0;
    if (top.size() != body_index + 1 || !top[body_index]->name().matches(soap, "Body")) {
        throw Error(Errc::invalid_argument, "Envelope must contain an optional Header followed by Body");
    }
    if (!has_header) {
        auto& kids = envelope.children();
        kids.insert(kids.begin(), XmlNode(XmlName("Header", soap, soap_prefix)));
    }
    XmlNode& header = *header_of(envelope);
    XmlNode& body = *envelope.find_child(soap, "Body");
    if (!header.attributes().empty()) {
        throw Error(Errc::invalid_argument, "Header attributes cannot be covered by the signature");
    }
    strip_to_elements(header, "Header");

    auto& blocks = header.children();
    for (auto it = blocks.begin(); it != blocks.end(); ++it) {
        auto& block = std::get<XmlNode>(*it);
        if (block.name().matches(ns::wsse, "Security")) {
            if (!block.children().empty() || !block.attributes().empty()) {
                throw Error(Errc::invalid_argument, "envelope already carries a populated security header");
            }
            blocks.erase(it);
            break;
        }
    }
    blocks.insert(blocks.begin(), XmlNode(XmlName("Security", std::string(ns::wsse), "wsse")));

    std::set<std::string> taken;
    xml::for_each_element(envelope, [&](const XmlNode& node) {
        if (const std::string* id = wsu_id(node); id != nullptr && !taken.insert(*id).second) {
            throw Error(Errc::invalid_argument, "duplicate wsu:Id '" + *id + "'");
        }
    });
    std::vector<std::string> ids;
    if (const std::string* existing = wsu_id(body)) {
        ids.push_back(*existing);
    } else {
        if (!taken.insert(std::string(body_id)).second) {
            throw Error(Errc::invalid_argument, "wsu:Id '" + std::string(body_id) + "' already in use");
        }
        body.set_attribute(XmlName("Id", std::string(ns::wsu), "wsu"), std::string(body_id));
        ids.emplace_back(body_id);
    }
    int counter = 0;
    for (std::size_t i = 1; i < blocks.size(); ++i) {
        auto& block = std::get<XmlNode>(blocks[i]);
        if (const std::string* existing = wsu_id(block)) {
            ids.push_back(*existing);
            continue;
        }
        std::string id;
        do {
            id = "H" + std::to_string(++counter);
        } while (!taken.insert(id).second);
        block.set_attribute(XmlName("Id", std::string(ns::wsu), "wsu"), id);
        ids.push_back(id);
    }
    return ids;
}

SignedMessage sign_blocking(const XmlNode& envelope, const xop::Binaries& binaries, const crypto::KeyMaterial& keys,
                            ByteSink& sink, const SignOptions& options)
{
    const auto t0 = options.session_start.value_or(Clock::now());
    check_signing_keys(keys, false);
    Prepared prepared = prepare(envelope, binaries, options);
    xop::XopPackage& package = prepared.package;

    SignatureManifest manifest;
    manifest.references = envelope_references(package.root, prepared.ids, options.digest_algorithm);
    {
        // The whole infoset with inline base64 exists only inside this block.
        XmlNode full = xop::reconstitute(package);
        for (const auto& part : package.parts) {
            const XmlNode* element = xml::select(full, part.path);
            manifest.references.push_back({"cid:" + part.content_id, options.digest_algorithm,
                                           digest_element(*element, options.digest_algorithm), TargetKind::xop_part});
        }
    }
    SignedMessage message;
    message.timing.digest_done_s = seconds_since(t0);

    security_of(package.root)->append(build_signature(manifest, keys));
    if (options.on_content_type) {
        options.on_content_type(xop::package_content_type(package));
    }
    TimingSink timed(sink, t0);
    message.bytes_written = xop::write_xop_package(timed, package, options.writer);

    message.mode = Mode::blocking;
    message.root = xml::canonicalize(package.root);
    message.manifest = std::move(manifest);
    message.boundary = package.boundary.value();
    message.root_content_id = package.root_content_id;
    for (const auto& part : package.parts) {
        message.part_ids.push_back(part.content_id);
    }
    message.content_type = xop::package_content_type(package);
    message.timing.first_byte_s = timed.first();
    message.timing.last_byte_s = timed.last();
    return message;
}

SignedMessage sign_streaming(const XmlNode& envelope, const xop::Binaries& binaries, const crypto::KeyMaterial& keys,
                             bool strict, ByteSink& sink, const SignOptions& options)
{
    const auto t0 = options.session_start.value_or(Clock::now());
    check_signing_keys(keys, strict);
    Prepared prepared = prepare(envelope, binaries, options);
    xop::XopPackage& package = prepared.package;
    const std::string signature_cid = xop::generate_content_id(options.entropy);

    // Body and header digests cover the optimized form, so they are known now.
    SignatureManifest manifest;
    manifest.references = envelope_references(package.root, prepared.ids, options.digest_algorithm);

    XmlNode placeholder = strict ? encrypted_placeholder(signature_cid) : ds_element("Signature");
    if (!strict) {
        placeholder.append(xop::make_include(signature_cid));
    }
    security_of(package.root)->append(std::move(placeholder));

    SignedMessage message;
    message.mode = strict ? Mode::streaming_strict : Mode::streaming_lax;
    message.root = xml::canonicalize(package.root);

    if (options.on_content_type) {
        options.on_content_type(xop::package_content_type(package));
    }
    TimingSink timed(sink, t0);
    mime::MimeWriter writer(timed, package.boundary, options.writer);
    writer.begin_part({package.root_content_id, std::string(xop::root_content_type), mime::TransferEncoding::eight_bit});
    writer.write_body(message.root);

    std::vector<char> buffer(writer.chunk_size());
    for (std::size_t i = 0; i < package.parts.size(); ++i) {
        const auto& part = package.parts[i];
        writer.begin_part({part.content_id, part.content.media_type, mime::TransferEncoding::binary});
        StreamingReferenceDigest digest(options.digest_algorithm, prepared.tags[i].first, prepared.tags[i].second);
        auto source = part.content.open();
        for (;;) {
            std::size_t n = 0;
            try {
                n = source->read(buffer);
            } catch (const Error&) {
                throw;
            } catch (const std::exception& e) {
                throw Error(Errc::source_error, e.what());
            }
            if (n == 0) {
                break;
            }
            std::string_view chunk(buffer.data(), n);
            digest.update(chunk);
            writer.write_body(chunk);
        }
        if (part.content.declared_length && *part.content.declared_length != digest.binary_bytes()) {
            throw Error(Errc::source_error, "binary for " + part.path + " yielded " +
                                                std::to_string(digest.binary_bytes()) + " bytes, declared " +
                                                std::to_string(*part.content.declared_length));
        }
        manifest.references.push_back(
            {"cid:" + part.content_id, options.digest_algorithm, digest.finish(), TargetKind::xop_part});
        message.part_ids.push_back(part.content_id);
    }
    message.timing.digest_done_s = seconds_since(t0);

    XmlNode signature = build_signature(manifest, keys);
    std::string last = strict ? encrypt_signature(signature, *keys.wrap_key, signature_cid).ciphertext
                              : xml::canonicalize(signature);
    writer.begin_part({signature_cid, "application/octet-stream", mime::TransferEncoding::binary});
    writer.write_body(last);
    writer.finish();

    message.manifest = std::move(manifest);
    message.boundary = package.boundary.value();
    message.root_content_id = package.root_content_id;
    message.signature_content_id = signature_cid;
    message.content_type = xop::package_content_type(package);
    message.bytes_written = writer.bytes_written();
    message.timing.first_byte_s = timed.first();
    message.timing.last_byte_s = timed.last();
    return message;
}

VerificationReport verify(ByteSource& source, const crypto::KeyMaterial& keys, const VerifyOptions& options)
{
    if (!keys.verification_key) {
        throw Error(Errc::key_error, "verification requires a public key");
    }
    if (options.digest_algorithms.empty()) {
        throw Error(Errc::invalid_argument, "no digest algorithms configured");
    }
    for (const auto& algorithm : options.digest_algorithms) {
        if (!crypto::Digest::supported(algorithm)) {
            throw Error(Errc::unsupported_algorithm, "digest algorithm '" + algorithm + "'");
        }
    }
    try {
        mime::MimeReader reader(source, options.boundary, options.chunk_size);
        if (!reader.next_part()) {
            malformed("package has no parts");
        }
        const XmlNode root = parse_canonical(read_limited(reader.body(), max_root_bytes, "root part"), "root part");
        Inspected shape = inspect_envelope(root);

        std::vector<std::string> algorithms = options.digest_algorithms;
        std::optional<SignatureManifest> early;
        if (shape.mode == Mode::blocking) {
            // SignedInfo is already here, so its own algorithms can be honoured.
            auto kids = exact_elements(*shape.inline_signature);
            if (kids.empty()) {
                malformed("ds:Signature is empty");
            }
            early = parse_signed_info(*kids[0]);
            for (const auto& ref : early->references) {
                if (std::find(algorithms.begin(), algorithms.end(), ref.digest_algorithm) == algorithms.end()) {
                    algorithms.push_back(ref.digest_algorithm);
                }
            }
        }

        std::map<std::string, std::map<std::string, std::string>> computed;
        std::string signature_bytes;
        bool signature_seen = false;
        std::vector<char> buffer(options.chunk_size == 0 ? default_chunk_size() : options.chunk_size);
        while (auto headers = reader.next_part()) {
            if (signature_seen) {
                malformed("part after the signature part");
            }
            const std::string& cid = headers->content_id;
            if (shape.mode != Mode::blocking && cid == shape.signature_cid) {
                signature_bytes = read_limited(reader.body(), max_signature_bytes, "signature part");
                signature_seen = true;
                continue;
            }
            auto include = shape.includes.find(cid);
            if (include == shape.includes.end()) {
                malformed("part <" + cid + "> is not referenced from the envelope");
            }
            if (computed.count(cid) != 0) {
                malformed("Content-ID <" + cid + "> appears twice");
            }
            std::vector<StreamingReferenceDigest> digests;
            for (const auto& algorithm : algorithms) {
                digests.emplace_back(algorithm, include->second.first, include->second.second);
            }
            while (std::size_t n = reader.body().read(buffer)) {
                for (auto& d : digests) {
                    d.update(std::string_view(buffer.data(), n));
                }
            }
            auto& slot = computed[cid];
            for (std::size_t i = 0; i < algorithms.size(); ++i) {
                slot[algorithms[i]] = digests[i].finish();
            }
        }
        if (shape.mode != Mode::blocking && !signature_seen) {
            malformed("signature part <" + shape.signature_cid + "> is missing");
        }
        for (const auto& [cid, tags] : shape.includes) {
            if (computed.count(cid) == 0) {
                throw Error(Errc::unresolved_reference, "no part for cid:" + cid);
            }
        }

        XmlNode owned;
        const XmlNode* signature = shape.inline_signature;
        if (shape.mode == Mode::streaming_lax) {
            owned = parse_canonical(signature_bytes, "signature part");
            signature = &owned;
        } else if (shape.mode == Mode::streaming_strict) {
            if (!keys.wrap_key) {
                throw Error(Errc::key_error, "strict-mode message needs the wrap key");
            }
            owned = decrypt_signature(signature_bytes, *keys.wrap_key);
            signature = &owned;
        }
        expect_name(*signature, ns::ds, "Signature");
        require_no_attributes(*signature);
        auto sig = exact_elements(*signature);
        if (sig.size() != 3) {
            malformed("ds:Signature must hold SignedInfo, SignatureValue and KeyInfo");
        }
        SignatureManifest manifest = early ? *early : parse_signed_info(*sig[0]);
        expect_name(*sig[1], ns::ds, "SignatureValue");
        std::string signature_value = decode_base64_field(*sig[1]);
        expect_name(*sig[2], ns::ds, "KeyInfo");
        require_no_attributes(*sig[2]);
        auto key_info = exact_elements(*sig[2]);
        if (key_info.size() != 1) {
            malformed("KeyInfo must hold one KeyName");
        }
        expect_name(*key_info[0], ns::ds, "KeyName");
        std::string key_name = text_only(*key_info[0]);

        VerificationReport report;
        report.mode_detected = shape.mode;
        auto fail = [&](const std::string& why) {
            if (report.failure_reason.empty()) {
                report.failure_reason = why;
            }
        };
        std::set<std::string> covered;
        for (const auto& ref : manifest.references) {
            ReferenceCheck check{ref.uri, {}, ref.digest_value, false};
            if (ref.target_kind == TargetKind::envelope_element) {
                std::string id = ref.uri.substr(1);
                const XmlNode* target = find_by_id(root, id);
                if (target == nullptr) {
                    throw Error(Errc::unresolved_reference, "no element with wsu:Id '" + id + "'");
                }
                check.computed_digest = digest_element(*target, ref.digest_algorithm);
                covered.insert(ref.uri);
            } else {
                std::string cid = ref.uri.substr(4);
                auto it = computed.find(cid);
                if (it == computed.end()) {
                    throw Error(Errc::unresolved_reference, "no part for " + ref.uri);
                }
                auto digest = it->second.find(ref.digest_algorithm);
                if (digest == it->second.end()) {
                    throw Error(Errc::unsupported_algorithm, "digest method '" + ref.digest_algorithm +
                                                                 "' was not enabled for streaming verification");
                }
                check.computed_digest = digest->second;
                covered.insert(ref.uri);
            }
            check.match = check.computed_digest == check.declared_digest;
            if (!check.match) {
                fail("digest mismatch for " + ref.uri);
            }
            report.per_reference.push_back(std::move(check));
        }
        for (const auto& id : shape.required_ids) {
            if (covered.count("#" + id) == 0) {
                fail("#" + id + " is not covered by the signature");
            }
        }
        for (const auto& [cid, tags] : shape.includes) {
            if (covered.count("cid:" + cid) == 0) {
                fail("cid:" + cid + " is not covered by the signature");
            }
        }
        if (key_name != keys.key_name) {
            fail("KeyName '" + key_name + "' does not name the verification key");
        }
        if (!crypto::verify_signature(manifest.signature_algorithm, keys.verification_key,
                                      xml::canonicalize(*sig[0]), signature_value)) {
            fail("signature value does not verify over SignedInfo");
        }
        report.signature_valid = report.failure_reason.empty();
        return report;
    } catch (const Error& e) {
        switch (e.code()) {
        case Errc::missing_boundary:
        case Errc::truncated_package:
        case Errc::malformed_headers:
            throw Error(Errc::malformed_message, e.what());
        default:
            throw;
        }
    }
}

std::string to_json(const VerificationReport& report)
{
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& r : report.per_reference) {
        refs.push_back({{"uri", r.uri},
                        {"match", r.match},
                        {"computed", crypto::to_hex(r.computed_digest)},
                        {"declared", crypto::to_hex(r.declared_digest)}});
    }
    nlohmann::json j = {{"valid", report.signature_valid},
                        {"mode", to_string(report.mode_detected)},
                        {"reason", report.failure_reason},
                        {"references", refs}};
    return j.dump();
}

} // namespace streamsign::wssec
