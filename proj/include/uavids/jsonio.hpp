#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uavids/error.hpp"

namespace uavids {

/// Fixed-format double for files: up to 17 significant digits, enough to
/// round-trip any IEEE-754 double, and identical output on every platform.
inline std::string format_double_17(double v) {
    if (!std::isfinite(v)) throw IoFailure("non-finite value cannot be serialized");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(c);
                }
        }
    }
    return out;
}

/// Streaming JSON writer with caller-controlled (stable) key order and
/// 17-significant-digit floats. Reading uses nlohmann::json; this writer
/// exists because serialized reports and models must be byte-stable.
class JsonWriter {
public:
    std::string str() const { return out_; }

    JsonWriter& begin_object() { return open("{"); }
    JsonWriter& end_object() { return close("}"); }
    JsonWriter& begin_array() { return open("["); }
    JsonWriter& end_array() { return close("]"); }

    JsonWriter& key(const std::string& k) {
        comma();
        out_ += '"';
        out_ += json_escape(k);
        out_ += "\":";
        pending_value_ = true;
        return *this;
    }

    JsonWriter& value(const std::string& v) { return raw('"' + json_escape(v) + '"'); }
    JsonWriter& value(const char* v) { return value(std::string(v)); }
    JsonWriter& value(double v) { return raw(format_double_17(v)); }
    JsonWriter& value(int v) { return raw(std::to_string(v)); }
    JsonWriter& value(std::size_t v) { return raw(std::to_string(v)); }
    JsonWriter& value(bool v) { return raw(v ? "true" : "false"); }

    template <typename T>
    JsonWriter& array_of(const std::vector<T>& v) {
        begin_array();
        for (const auto& x : v) value(x);
        return end_array();
    }

private:
    JsonWriter& open(const char* tok) {
        comma();
        out_ += tok;
        first_.push_back(true);
        pending_value_ = false;
        return *this;
    }
    JsonWriter& close(const char* tok) {
        out_ += tok;
        first_.pop_back();
        if (!first_.empty()) first_.back() = false;
        return *this;
    }
    JsonWriter& raw(const std::string& tok) {
        comma();
        out_ += tok;
        pending_value_ = false;
        if (!first_.empty()) first_.back() = false;
        return *this;
    }
    void comma() {
        if (pending_value_) {
            pending_value_ = false;
            return;  // value directly follows its key
        }
        if (!first_.empty()) {
            if (!first_.back()) out_ += ',';
            first_.back() = false;
        }
    }

    std::string out_;
    std::vector<bool> first_;
    bool pending_value_ = false;
};

/// FNV-1a 64-bit content digest; stable and cheap, used in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string digest_hex(const std::string& content) {
    std::uint64_t h = fnv1a64(content.data(), content.size());
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot read file: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoFailure("read error: " + path.string());
    return content;
}

/// Write-then-rename so readers never observe a partial file.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoFailure("cannot write file: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoFailure("write error: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoFailure("cannot rename " + tmp.string() + " to " + path.string());
}

}  // namespace uavids
