#include "genonet/retrieval.hpp"

#include "genonet/text.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

namespace genonet {

namespace {

bool token_byte(unsigned char c)
{
    return std::isalnum(c) != 0 || c >= 0x80;
}

bool valid_utf8(std::string_view s)
{
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > s.size()) return false;
        for (std::size_t j = 1; j < len; ++j)
            if ((static_cast<unsigned char>(s[i + j]) >> 6) != 0x2) return false;
        i += len;
    }
    return true;
}

bool blank_line_between(std::string_view text, std::size_t from, std::size_t to)
{
    bool seen_newline = false;
    for (std::size_t i = from; i < to; ++i) {
        char c = text[i];
        if (c == '\n') {
            if (seen_newline) return true;
            seen_newline = true;
        } else if (c != ' ' && c != '\t' && c != '\r') {
            seen_newline = false;
        }
    }
    return false;
}

std::string make_chunk_id(const std::string& doc_id, std::size_t revision, std::size_t ordinal)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", ordinal);
    return doc_id + "/" + std::to_string(revision) + "/" + buf;
}

std::string title_of(std::string_view text)
{
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        if (!line.empty()) {
            auto start = line.find_first_not_of("# ");
            return start == std::string::npos ? line : line.substr(start);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return {};
}

} // namespace

std::vector<TokenSpan> token_spans(std::string_view text)
{
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!token_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < text.size() && token_byte(static_cast<unsigned char>(text[i]))) ++i;
        spans.push_back({b, i});
    }
    return spans;
}

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    for (auto s : token_spans(text)) out.push_back(to_lower(text.substr(s.begin, s.end - s.begin)));
    return out;
}

std::vector<std::string> chunk_text(std::string_view text, const ChunkingPolicy& policy)
{
    if (policy.chunk_size == 0 || policy.overlap >= policy.chunk_size)
        throw InvalidArgument("chunk overlap must be smaller than the chunk size");
    auto spans = token_spans(text);
    std::vector<std::string> out;
    std::size_t n = spans.size();
    std::size_t s = 0;
    while (s < n) {
        std::size_t e = std::min(s + policy.chunk_size, n);
        if (e < n) {
            for (std::size_t b = e; b > s + policy.overlap; --b) {
                if (blank_line_between(text, spans[b - 1].end, spans[b].begin)) {
                    e = b;
                    break;
                }
            }
        }
        // Punctuation between tokens stays with the preceding chunk.
        std::size_t from = s == 0 ? 0 : spans[s].begin;
        std::size_t to = e < n ? spans[e].begin : text.size();
        out.push_back(trim(text.substr(from, to - from)));
        if (e >= n) break;
        s = e - policy.overlap;
    }
    return out;
}

// ---------------------------------------------------------------------------

struct KnowledgeIndex::State {
    struct Entry {
        KnowledgeChunk chunk;
        std::size_t length = 0;
    };
    struct Posting {
        std::size_t entry;
        std::size_t tf;
    };

    std::vector<Entry> entries; // sorted by chunk id
    std::map<std::string, std::size_t> revisions;
    std::unordered_map<std::string, std::vector<Posting>> postings;
    std::size_t total_length = 0;

    void index()
    {
        std::sort(entries.begin(), entries.end(),
                  [](const Entry& a, const Entry& b) { return a.chunk.chunk_id < b.chunk.chunk_id; });
        postings.clear();
        total_length = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            auto tokens = tokenize(entries[i].chunk.text);
            entries[i].length = tokens.size();
            total_length += tokens.size();
            std::map<std::string, std::size_t> tf;
            for (auto& t : tokens) ++tf[t];
            for (auto& [term, count] : tf) postings[term].push_back({i, count});
        }
    }

    const Entry* find(const std::string& id) const
    {
        auto it = std::lower_bound(entries.begin(), entries.end(), id,
                                   [](const Entry& e, const std::string& key) { return e.chunk.chunk_id < key; });
        return it != entries.end() && it->chunk.chunk_id == id ? &*it : nullptr;
    }
};

KnowledgeIndex::KnowledgeIndex(ChunkingPolicy chunking, Bm25Params params)
    : chunking_(chunking), params_(params), state_(std::make_shared<const State>())
{
    if (chunking_.chunk_size == 0 || chunking_.overlap >= chunking_.chunk_size)
        throw InvalidArgument("chunk overlap must be smaller than the chunk size");
}

std::shared_ptr<const KnowledgeIndex::State> KnowledgeIndex::snapshot() const
{
    return std::atomic_load(&state_);
}

std::size_t KnowledgeIndex::ingest(std::string_view text, const std::string& doc_id)
{
    if (doc_id.empty() || doc_id.find('/') != std::string::npos)
        throw InvalidArgument("doc-id must be non-empty and contain no '/'");
    if (!valid_utf8(text)) throw InvalidArgument("document '" + doc_id + "' is not valid UTF-8");
    auto pieces = chunk_text(text, chunking_);
    if (pieces.empty()) throw EmptyDocument(doc_id);

    std::lock_guard lock(writer_);
    auto next = std::make_shared<State>(*snapshot());
    std::size_t revision = ++next->revisions[doc_id];
    std::erase_if(next->entries, [&](const State::Entry& e) { return e.chunk.doc_id == doc_id; });
    auto heading = title_of(text);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        State::Entry e;
        e.chunk = {make_chunk_id(doc_id, revision, i), doc_id, i, revision, std::move(pieces[i]), heading};
        next->entries.push_back(std::move(e));
    }
    next->index();
    std::atomic_store(&state_, std::shared_ptr<const State>(std::move(next)));
    return pieces.size();
}

std::size_t KnowledgeIndex::ingest_directory(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::size_t total = 0;
    for (const auto& f : files) total += ingest(read_file(f), f.stem().string());
    return total;
}

std::vector<RankedHit> KnowledgeIndex::query(std::string_view text, std::size_t k) const
{
    if (k < 1) throw InvalidArgument("k must be at least 1");
    auto st = snapshot();
    if (st->entries.empty()) throw EmptyIndex();

    auto terms_vec = tokenize(text);
    std::set<std::string> terms(terms_vec.begin(), terms_vec.end());
    double n_chunks = static_cast<double>(st->entries.size());
    double avgdl = static_cast<double>(st->total_length) / n_chunks;

    std::vector<double> scores(st->entries.size(), 0.0);
    for (const auto& term : terms) {
        auto it = st->postings.find(term);
        if (it == st->postings.end()) continue;
        double df = static_cast<double>(it->second.size());
        double idf = std::log(1.0 + (n_chunks - df + 0.5) / (df + 0.5));
        for (const auto& p : it->second) {
            double tf = static_cast<double>(p.tf);
            double norm = 1.0 - params_.b + params_.b * static_cast<double>(st->entries[p.entry].length) / avgdl;
            scores[p.entry] += idf * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
        }
    }

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0.0) order.push_back(i);
    // Entries are already in chunk-id order, so a stable sort settles ties.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    if (order.size() > k) order.resize(k);

    std::vector<RankedHit> hits;
    for (std::size_t r = 0; r < order.size(); ++r)
        hits.push_back({st->entries[order[r]].chunk.chunk_id, scores[order[r]], r + 1});
    return hits;
}

std::string KnowledgeIndex::augment_prompt(const std::string& base, const std::vector<RankedHit>& hits,
                                           std::size_t budget) const
{
    if (hits.empty()) return base;
    auto st = snapshot();
    std::vector<std::string> blocks;
    for (const auto& h : hits) {
        const auto* e = st->find(h.chunk_id);
        if (!e) throw InvalidArgument("hit refers to unknown chunk '" + h.chunk_id + "'");
        blocks.push_back("[" + std::to_string(h.rank) + "] (source: " + e->chunk.doc_id + ") " + e->chunk.text + "\n");
    }
    auto render = [&](std::size_t count) {
        std::string out = base + "\n\n--- context ---\n";
        for (std::size_t i = 0; i < count; ++i) out += blocks[i];
        return out + "--- end context ---";
    };
    for (std::size_t count = blocks.size(); count > 0; --count) {
        auto out = render(count);
        if (tokenize(out).size() <= budget) return out;
    }
    return base;
}

std::optional<KnowledgeChunk> KnowledgeIndex::chunk(const std::string& chunk_id) const
{
    auto st = snapshot();
    if (const auto* e = st->find(chunk_id)) return e->chunk;
    return std::nullopt;
}

std::vector<KnowledgeChunk> KnowledgeIndex::chunks() const
{
    std::vector<KnowledgeChunk> out;
    for (const auto& e : snapshot()->entries) out.push_back(e.chunk);
    return out;
}

std::size_t KnowledgeIndex::chunk_count() const
{
    return snapshot()->entries.size();
}

std::size_t KnowledgeIndex::document_count() const
{
    std::set<std::string> docs;
    for (const auto& e : snapshot()->entries) docs.insert(e.chunk.doc_id);
    return docs.size();
}

// ---------------------------------------------------------------------------
// Persistence

nlohmann::json KnowledgeIndex::to_json() const
{
    auto st = snapshot();
    nlohmann::json chunks = nlohmann::json::array();
    for (const auto& e : st->entries)
        chunks.push_back({{"chunk_id", e.chunk.chunk_id},
                          {"doc_id", e.chunk.doc_id},
                          {"heading", e.chunk.heading},
                          {"ordinal", e.chunk.ordinal},
                          {"revision", e.chunk.revision},
                          {"text", e.chunk.text}});
    nlohmann::json revisions = nlohmann::json::object();
    for (const auto& [doc, rev] : st->revisions) revisions[doc] = rev;
    return {{"format", "genonet-index"},
            {"version", 1},
            {"chunking", {{"chunk_size", chunking_.chunk_size}, {"overlap", chunking_.overlap}}},
            {"bm25", {{"k1", params_.k1}, {"b", params_.b}}},
            {"revisions", revisions},
            {"chunks", chunks}};
}

void KnowledgeIndex::save(const std::filesystem::path& path) const
{
    write_file(path, to_json().dump(1) + "\n");
}

std::unique_ptr<KnowledgeIndex> KnowledgeIndex::load(const std::filesystem::path& path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "genonet-index") throw IoError(path.string() + ": not an index file");
    if (j.value("version", 0) != 1)
        throw IoError(path.string() + ": unsupported index version " + j.value("version", nlohmann::json()).dump());

    ChunkingPolicy chunking{j.at("chunking").at("chunk_size").get<std::size_t>(),
                            j.at("chunking").at("overlap").get<std::size_t>()};
    Bm25Params params{j.at("bm25").at("k1").get<double>(), j.at("bm25").at("b").get<double>()};
    auto index = std::make_unique<KnowledgeIndex>(chunking, params);

    auto st = std::make_shared<State>();
    for (const auto& [doc, rev] : j.at("revisions").items()) st->revisions[doc] = rev.get<std::size_t>();
    for (const auto& c : j.at("chunks")) {
        State::Entry e;
        e.chunk = {c.at("chunk_id").get<std::string>(), c.at("doc_id").get<std::string>(),
                   c.at("ordinal").get<std::size_t>(), c.at("revision").get<std::size_t>(),
                   c.at("text").get<std::string>(), c.value("heading", "")};
        st->entries.push_back(std::move(e));
    }
    st->index();
    index->state_ = std::move(st);
    return index;
}

} // namespace genonet
