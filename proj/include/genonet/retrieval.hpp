#pragma once

#include "genonet/error.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace genonet {

/// Default token budget for an augmented prompt, context block included.
inline constexpr std::size_t kDefaultContextBudget = 1536;

struct KnowledgeChunk {
    std::string chunk_id; ///< "<doc-id>/<revision>/<ordinal, 4 digits>"
    std::string doc_id;
    std::size_t ordinal = 0;
    std::size_t revision = 1;
    std::string text;
    std::string heading; ///< document title
};

struct RankedHit {
    std::string chunk_id;
    double score = 0.0;
    std::size_t rank = 0; ///< 1-based
};

struct ChunkingPolicy {
    std::size_t chunk_size = 512; ///< tokens
    std::size_t overlap = 64;     ///< tokens
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct TokenSpan {
    std::size_t begin;
    std::size_t end;
};

/// Lower-cased runs of letters and digits; bytes >= 0x80 count as letters.
std::vector<std::string> tokenize(std::string_view text);
std::vector<TokenSpan> token_spans(std::string_view text);

/// Splits `text` into windows of at most `chunk_size` tokens. A window is cut
/// at the last blank line inside it when one lies past the overlap; the next
/// window starts `overlap` tokens before the cut.
std::vector<std::string> chunk_text(std::string_view text, const ChunkingPolicy& policy);

class EmptyDocument : public Error {
public:
    explicit EmptyDocument(const std::string& doc_id) : Error("EmptyDocument", "document '" + doc_id + "' has no text") {}
};

class EmptyIndex : public Error {
public:
    EmptyIndex() : Error("EmptyIndex", "the knowledge index holds no chunks") {}
};

/// BM25 index over chunks. Queries read an immutable snapshot; ingest builds
/// the next snapshot under a writer lock and publishes it in one store, so a
/// reader sees a document either entirely before or entirely after a
/// re-ingest.
///
/// score(q, c) = sum over distinct query terms t present in c of
///     idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |c| / avgdl))
/// idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5)), N and avgdl over chunks.
class KnowledgeIndex {
public:
    explicit KnowledgeIndex(ChunkingPolicy chunking = {}, Bm25Params params = {});

    KnowledgeIndex(const KnowledgeIndex&) = delete;
    KnowledgeIndex& operator=(const KnowledgeIndex&) = delete;

    /// Returns the number of chunks produced. Re-ingesting a doc-id replaces
    /// its chunks and bumps the revision embedded in their ids.
    std::size_t ingest(std::string_view text, const std::string& doc_id);
    /// Ingests every `<doc-id>.txt` in `dir`, in doc-id order.
    std::size_t ingest_directory(const std::filesystem::path& dir);

    std::vector<RankedHit> query(std::string_view text, std::size_t k) const;

    /// Base prompt followed by a delimited context block, hits in rank order.
    /// Lowest-ranked hits are dropped whole until the rendering fits `budget`.
    std::string augment_prompt(const std::string& base, const std::vector<RankedHit>& hits,
                               std::size_t budget = kDefaultContextBudget) const;

    std::optional<KnowledgeChunk> chunk(const std::string& chunk_id) const;
    std::vector<KnowledgeChunk> chunks() const; ///< sorted by chunk id
    std::size_t chunk_count() const;
    std::size_t document_count() const;

    const ChunkingPolicy& chunking() const { return chunking_; }
    const Bm25Params& params() const { return params_; }

    nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;
    static std::unique_ptr<KnowledgeIndex> load(const std::filesystem::path& path);

private:
    struct State;

    std::shared_ptr<const State> snapshot() const;

    ChunkingPolicy chunking_;
    Bm25Params params_;
    std::shared_ptr<const State> state_;
    std::mutex writer_;
};

} // namespace genonet
