#ifndef QUENCHWATCH_SERVICE_STORE_HPP
#define QUENCHWATCH_SERVICE_STORE_HPP

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include <json.hpp>

#include "quenchwatch/error.hpp"
#include "quenchwatch/ingest.hpp"

namespace quenchwatch::service {

namespace fs = std::filesystem;

inline std::string sha256_hex(std::string_view data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1
        || EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1
        || EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1)
        throw Error(ErrorCode::IoError, "sha256 failed");
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int k = 0; k < len; ++k) {
        char buf[3];
        std::snprintf(buf, sizeof(buf), "%02x", digest[k]);
        hex += buf;
    }
    return hex;
}

/// Write to a sibling temp file, then rename over the target.
inline void atomic_write(const fs::path& path, std::string_view content) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    write_file(tmp, content);
    fs::rename(tmp, path);
}

inline nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { atomic_write(path, j.dump(2) + "\n"); }

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// On-disk layout under one data directory:
///   datasets/<id>/{manifest.json, *.csv, record.json}
///   jobs/<job_id>.json, models/<model_id>.json
///   objects/<sha256>.json   immutable, named by the hash of their bytes
///   idempotency.json
class Store {
public:
    explicit Store(fs::path root) : root_(std::move(root)) {
        for (const char* sub : {"datasets", "jobs", "models", "objects"})
            fs::create_directories(root_ / sub);
    }

    const fs::path& root() const noexcept { return root_; }
    fs::path dataset_dir(const std::string& id) const { return root_ / "datasets" / id; }
    fs::path job_path(const std::string& id) const { return root_ / "jobs" / (id + ".json"); }
    fs::path model_path(const std::string& id) const { return root_ / "models" / (id + ".json"); }
    fs::path idempotency_path() const { return root_ / "idempotency.json"; }

    /// Stores the document and returns its content hash.
    std::string put_object(const nlohmann::json& doc) const {
        const auto text = doc.dump();
        const auto ref = sha256_hex(text);
        const auto path = object_path(ref);
        if (!fs::exists(path))
            atomic_write(path, text);
        return ref;
    }

    nlohmann::json get_object(const std::string& ref) const {
        const auto path = object_path(ref);
        if (!fs::exists(path))
            throw Error(ErrorCode::NotFound, "object " + ref);
        const auto text = read_file(path);
        if (sha256_hex(text) != ref)
            throw Error(ErrorCode::IoError, "object " + ref + " is corrupt");
        return nlohmann::json::parse(text);
    }

private:
    fs::path object_path(const std::string& ref) const { return root_ / "objects" / (ref + ".json"); }

    fs::path root_;
};

} // namespace quenchwatch::service

#endif // QUENCHWATCH_SERVICE_STORE_HPP
