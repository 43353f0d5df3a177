#pragma once

// Helpers shared by the unit tests and the acceptance suite.

#include "streamsign/crypto.hpp"
#include "streamsign/error.hpp"
#include "streamsign/xml.hpp"
#include "streamsign/xop.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace streamsign::testing {

inline const crypto::KeyMaterial& test_keys()
{
    static const crypto::KeyMaterial keys = crypto::KeyMaterial::generate();
    return keys;
}

inline constexpr const char* upload_envelope =
    R"(<soap:Envelope xmlns:soap="http://www.w3.org/2003/05/soap-envelope">)"
    R"(<soap:Body><m:upload xmlns:m="urn:example:upload"><m:name>report.bin</m:name><m:data></m:data>)"
    R"(</m:upload></soap:Body></soap:Envelope>)";
inline constexpr const char* upload_path = "/Envelope/Body/upload/data";

/// Random envelope with n designated data elements, optional extra header
/// blocks, and assorted attributes and text. Returns the envelope and paths.
inline std::pair<xml::XmlNode, std::vector<std::string>> random_envelope(std::mt19937_64& rng, int binaries)
{
    using xml::XmlName;
    using xml::XmlNode;
    const std::string soap = rng() % 2 ? "http://www.w3.org/2003/05/soap-envelope"
                                       : "http://schemas.xmlsoap.org/soap/envelope/";
    const std::string prefix = rng() % 2 ? "soap" : "env";
    XmlNode env(XmlName("Envelope", soap, prefix));
    if (rng() % 2) {
        XmlNode& header = env.append(XmlNode(XmlName("Header", soap, prefix)));
        int blocks = static_cast<int>(rng() % 3);
        for (int i = 0; i < blocks; ++i) {
            XmlNode& b = header.append(XmlNode(XmlName("To" + std::to_string(i), "urn:example:addr", "a")));
            b.append_text("urn:dest:" + std::to_string(rng() % 1000));
        }
    }
    XmlNode& body = env.append(XmlNode(XmlName("Body", soap, prefix)));
    XmlNode& op = body.append(XmlNode(XmlName("op" + std::to_string(rng() % 3), "urn:example:op", rng() % 2 ? "m" : "")));
    op.set_attribute(XmlName("version"), std::to_string(rng() % 10));
    std::vector<std::string> paths;
    for (int i = 0; i < binaries; ++i) {
        if (rng() % 2) {
            op.append(XmlNode(XmlName("note", "urn:example:op", ""))).append_text("a&b<c> \"" + std::to_string(i));
        }
        XmlNode& d = op.append(XmlNode(XmlName("data", "urn:example:op", op.name().prefix)));
        if (rng() % 2) {
            d.set_attribute(XmlName("contentType", "urn:example:mime", "xm"), "application/octet-stream");
        }
        paths.push_back("/Envelope/Body/" + op.name().local + "/data[" + std::to_string(i + 1) + "]");
    }
    return {env, paths};
}

/// [begin, end) byte ranges of each part body in a serialized package.
inline std::vector<std::pair<std::size_t, std::size_t>> part_spans(const std::string& wire)
{
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    std::size_t eol = wire.find("\r\n");
    const std::string delimiter = "\r\n" + wire.substr(0, eol);
    std::size_t pos = eol + 2;
    for (;;) {
        std::size_t body = wire.find("\r\n\r\n", pos) + 4;
        std::size_t end = wire.find(delimiter, body);
        spans.emplace_back(body, end);
        pos = end + delimiter.size();
        if (wire.compare(pos, 2, "--") == 0) {
            return spans;
        }
        pos += 2;
    }
}

inline std::optional<Errc> error_code(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

} // namespace streamsign::testing
