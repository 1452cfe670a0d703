#pragma once

#include "genonet/digest.hpp"
#include "genonet/error.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace genonet {

/// Texts longer than this are stored as content-addressed blobs.
inline constexpr std::size_t kInlineTextLimit = 1024;

struct SessionInfo {
    std::string id;
    std::string created_at;
    nlohmann::json modes = nlohmann::json::object();
};

nlohmann::json to_json(const SessionInfo& s);
SessionInfo session_info_from_json(const nlohmann::json& j);

class SessionNotFound : public Error {
public:
    explicit SessionNotFound(const std::string& id) : Error("SessionNotFound", "no session '" + id + "'") {}
};

/// Append-only turn log of one session. When backed by a directory it holds
/// `session.json`, `turns.jsonl` (one turn per line) and `blobs/<sha256>`.
/// Thread-safe; readers get copies.
class SessionTranscript {
public:
    explicit SessionTranscript(SessionInfo info, std::optional<std::filesystem::path> dir = std::nullopt);

    /// Reads a persisted session. Throws SessionNotFound if `dir` holds none.
    static std::unique_ptr<SessionTranscript> load(const std::filesystem::path& dir);

    const SessionInfo& info() const { return info_; }

    /// `{"text": ...}` for short texts, `{"blob": sha256, "bytes": n}` otherwise.
    nlohmann::json put_text(const std::string& text);
    /// Inverse of put_text. Throws InvalidArgument for an unknown blob.
    std::string get_text(const nlohmann::json& ref) const;

    /// Appends `turn` after setting its `ordinal` to the next dense value;
    /// returns the ordinal. The record is persisted before this returns.
    std::size_t append(nlohmann::json turn);

    std::vector<nlohmann::json> turns() const;
    std::size_t size() const;
    /// Turn records, one compact JSON document per line.
    std::string serialize_turns() const;
    /// SHA-256 of serialize_turns(). Blobs enter through their digests.
    Digest digest() const;
    /// `{session, turns, blobs}` with every referenced blob embedded.
    nlohmann::json to_json() const;

private:
    SessionInfo info_;
    std::optional<std::filesystem::path> dir_;
    mutable std::mutex mutex_;
    std::vector<nlohmann::json> turns_;
    std::vector<std::string> lines_;
    std::map<std::string, std::string> blobs_;
};

} // namespace genonet
