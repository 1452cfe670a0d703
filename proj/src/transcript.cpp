#include "genonet/transcript.hpp"

#include "genonet/text.hpp"

#include <fstream>
#include <sstream>

namespace genonet {

namespace fs = std::filesystem;

nlohmann::json to_json(const SessionInfo& s)
{
    return {{"id", s.id}, {"created_at", s.created_at}, {"modes", s.modes}};
}

SessionInfo session_info_from_json(const nlohmann::json& j)
{
    SessionInfo s;
    s.id = j.at("id").get<std::string>();
    s.created_at = j.at("created_at").get<std::string>();
    s.modes = j.value("modes", nlohmann::json::object());
    return s;
}

SessionTranscript::SessionTranscript(SessionInfo info, std::optional<fs::path> dir)
    : info_(std::move(info)), dir_(std::move(dir))
{
    if (dir_) {
        fs::create_directories(*dir_ / "blobs");
        if (!fs::exists(*dir_ / "session.json")) write_file(*dir_ / "session.json", ::genonet::to_json(info_).dump(2) + "\n");
    }
}

std::unique_ptr<SessionTranscript> SessionTranscript::load(const fs::path& dir)
{
    if (!fs::exists(dir / "session.json")) throw SessionNotFound(dir.filename().string());
    auto info = session_info_from_json(nlohmann::json::parse(read_file(dir / "session.json")));
    auto t = std::make_unique<SessionTranscript>(std::move(info), dir);
    if (fs::exists(dir / "turns.jsonl")) {
        std::istringstream in(read_file(dir / "turns.jsonl"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            t->turns_.push_back(nlohmann::json::parse(line));
            t->lines_.push_back(line);
        }
    }
    for (const auto& e : fs::directory_iterator(dir / "blobs")) t->blobs_[e.path().filename().string()] = read_file(e.path());
    return t;
}

nlohmann::json SessionTranscript::put_text(const std::string& text)
{
    if (text.size() <= kInlineTextLimit) return {{"text", text}};
    auto hash = sha256(text).hex();
    std::lock_guard lock(mutex_);
    if (!blobs_.count(hash)) {
        if (dir_) write_file(*dir_ / "blobs" / hash, text);
        blobs_.emplace(hash, text);
    }
    return {{"blob", hash}, {"bytes", text.size()}};
}

std::string SessionTranscript::get_text(const nlohmann::json& ref) const
{
    if (ref.contains("text")) return ref.at("text").get<std::string>();
    auto hash = ref.at("blob").get<std::string>();
    std::lock_guard lock(mutex_);
    auto it = blobs_.find(hash);
    if (it == blobs_.end()) throw InvalidArgument("unknown blob " + hash);
    return it->second;
}

std::size_t SessionTranscript::append(nlohmann::json turn)
{
    std::lock_guard lock(mutex_);
    std::size_t ordinal = turns_.size() + 1;
    turn["ordinal"] = ordinal;
    std::string line = turn.dump();
    if (dir_) {
        std::ofstream out(*dir_ / "turns.jsonl", std::ios::binary | std::ios::app);
        out << line << '\n';
        out.flush();
        if (!out) throw IoError("cannot append to transcript of session " + info_.id);
    }
    turns_.push_back(std::move(turn));
    lines_.push_back(std::move(line));
    return ordinal;
}

std::vector<nlohmann::json> SessionTranscript::turns() const
{
    std::lock_guard lock(mutex_);
    return turns_;
}

std::size_t SessionTranscript::size() const
{
    std::lock_guard lock(mutex_);
    return turns_.size();
}

std::string SessionTranscript::serialize_turns() const
{
    std::lock_guard lock(mutex_);
    std::string out;
    for (const auto& l : lines_) out += l + "\n";
    return out;
}

Digest SessionTranscript::digest() const
{
    return sha256(serialize_turns());
}

namespace {

void collect_blobs(const nlohmann::json& j, std::vector<std::string>& out)
{
    if (j.is_object()) {
        if (j.contains("blob") && j.at("blob").is_string() && j.contains("bytes")) out.push_back(j.at("blob"));
        for (const auto& [k, v] : j.items()) collect_blobs(v, out);
    } else if (j.is_array()) {
        for (const auto& v : j) collect_blobs(v, out);
    }
}

} // namespace

nlohmann::json SessionTranscript::to_json() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> refs;
    for (const auto& t : turns_) collect_blobs(t, refs);
    nlohmann::json blobs = nlohmann::json::object();
    for (const auto& h : refs) {
        auto it = blobs_.find(h);
        if (it != blobs_.end()) blobs[h] = it->second;
    }
    return {{"session", ::genonet::to_json(info_)}, {"turns", turns_}, {"blobs", blobs}};
}

} // namespace genonet
