#include "genonet/llm.hpp"

#include "genonet/clock.hpp"
#include "genonet/text.hpp"

#include <httplib.h>

#include <fstream>
#include <thread>

namespace genonet::llm {

std::string_view to_string(Role r)
{
    switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "?";
}

std::string_view to_string(ProviderMode m)
{
    switch (m) {
    case ProviderMode::Live: return "live";
    case ProviderMode::Replay: return "replay";
    case ProviderMode::Record: return "record";
    }
    return "?";
}

std::string_view to_string(FinishReason f)
{
    switch (f) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
    }
    return "?";
}

std::string_view to_string(Provenance p)
{
    return p == Provenance::Live ? "live" : "replay";
}

std::optional<ProviderMode> parse_provider_mode(std::string_view s)
{
    if (s == "live") return ProviderMode::Live;
    if (s == "replay") return ProviderMode::Replay;
    if (s == "record") return ProviderMode::Record;
    return std::nullopt;
}

namespace {

FinishReason parse_finish(const std::string& s)
{
    if (s == "stop") return FinishReason::Stop;
    if (s == "length") return FinishReason::Length;
    return FinishReason::Error;
}

} // namespace

CassetteMiss::CassetteMiss(const Digest& digest)
    : Error("CassetteMiss", "no cassette entry for request " + digest.hex()), digest_(digest)
{
}

TransportError::TransportError(const std::string& message, int retries)
    : Error("TransportError", message + " (retries: " + std::to_string(retries) + ")"),
      detail_(message),
      retries_(retries)
{
}

ContractViolation::ContractViolation(std::string contract, const std::string& detail)
    : Error("ContractViolation", "output violates " + contract + ": " + detail), contract_(std::move(contract))
{
}

void check_request(const LlmRequest& req)
{
    if (req.messages.empty()) throw InvalidRequest("message list is empty");
    if (req.messages.front().role != Role::System) throw InvalidRequest("first message must be system-role");
    if (!(req.temperature >= 0.0 && req.temperature <= 2.0)) throw InvalidRequest("temperature outside [0, 2]");
    if (req.contract && req.temperature != 0.0)
        throw InvalidRequest("temperature must be 0 when a structured output contract is set");
    if (req.max_tokens <= 0) throw InvalidRequest("max_tokens must be positive");
}

nlohmann::json canonical_request(const LlmRequest& req)
{
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages)
        messages.push_back({{"content", collapse_whitespace(m.content)}, {"role", to_string(m.role)}});
    nlohmann::json j;
    j["contract"] = req.contract ? nlohmann::json(*req.contract) : nlohmann::json(nullptr);
    j["max_tokens"] = req.max_tokens;
    j["messages"] = std::move(messages);
    j["model"] = req.model;
    j["temperature"] = req.temperature;
    return j;
}

Digest normalize_request(const LlmRequest& req)
{
    return sha256(canonical_request(req).dump());
}

nlohmann::json to_json(const LlmResponse& r)
{
    return {
        {"finish_reason", to_string(r.finish_reason)},
        {"text", r.text},
        {"usage", {{"completion_tokens", r.usage.completion_tokens}, {"prompt_tokens", r.usage.prompt_tokens}}},
    };
}

LlmResponse response_from_json(const nlohmann::json& j)
{
    LlmResponse r;
    r.text = j.at("text").get<std::string>();
    r.finish_reason = parse_finish(j.value("finish_reason", "stop"));
    if (j.contains("usage")) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    r.provenance = Provenance::Replay;
    return r;
}

// ---------------------------------------------------------------------------
// HttpTransport

HttpTransport::HttpTransport(std::string base_url, std::string api_key) : api_key_(std::move(api_key))
{
    auto scheme_end = base_url.find("://");
    auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_begin = base_url.find('/', host_begin);
    origin_ = base_url.substr(0, path_begin);
    path_prefix_ = path_begin == std::string::npos ? "" : base_url.substr(path_begin);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

LlmResponse HttpTransport::send(const LlmRequest& req, std::chrono::milliseconds timeout)
{
    httplib::Client client(origin_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    nlohmann::json body;
    body["model"] = req.model;
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : req.messages)
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
    if (req.contract) body["response_format"] = {{"type", "json_object"}};

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw TransportError("HTTP " + std::to_string(res->status) + " from model endpoint");

    try {
        auto j = nlohmann::json::parse(res->body);
        const auto& choice = j.at("choices").at(0);
        LlmResponse r;
        r.text = choice.at("message").at("content").get<std::string>();
        r.finish_reason = parse_finish(choice.value("finish_reason", "stop"));
        if (j.contains("usage")) {
            r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
            r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
        }
        r.provenance = Provenance::Live;
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed completion body: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Cassette

Cassette::Cassette(std::string model_id, std::string recorded_at)
    : model_id_(std::move(model_id)), recorded_at_(std::move(recorded_at))
{
}

std::shared_ptr<Cassette> Cassette::load(const std::filesystem::path& path)
{
    auto c = std::make_shared<Cassette>();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cassette " + path.string());
    auto entries = std::make_shared<Entries>();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            if (j.contains("cassette")) {
                c->model_id_ = j["cassette"].value("model", "");
                c->recorded_at_ = j["cassette"].value("recorded_at", "");
                continue;
            }
            (*entries)[j.at("digest").get<std::string>()] =
                Record{j.at("request"), response_from_json(j.at("response"))};
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    c->entries_ = std::move(entries);
    return c;
}

std::shared_ptr<Cassette> Cassette::open_for_append(const std::filesystem::path& path)
{
    auto c = std::filesystem::exists(path) ? load(path) : std::make_shared<Cassette>();
    c->file_ = path;
    return c;
}

std::optional<LlmResponse> Cassette::find(const Digest& digest) const
{
    auto snapshot = std::atomic_load(&entries_);
    auto it = snapshot->find(digest.hex());
    if (it == snapshot->end()) return std::nullopt;
    auto r = it->second.response;
    r.provenance = Provenance::Replay;
    return r;
}

void Cassette::append(const Digest& digest, const LlmRequest& req, const LlmResponse& resp)
{
    std::lock_guard lock(writer_);
    auto current = std::atomic_load(&entries_);
    auto key = digest.hex();
    if (current->count(key)) return;
    auto next = std::make_shared<Entries>(*current);
    Record rec{canonical_request(req), resp};
    (*next)[key] = rec;
    if (file_) {
        bool fresh = !std::filesystem::exists(*file_) || std::filesystem::file_size(*file_) == 0;
        if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
        std::ofstream out(*file_, std::ios::app);
        if (!out) throw IoError("cannot append to cassette " + file_->string());
        if (fresh) {
            if (model_id_.empty()) model_id_ = req.model;
            if (recorded_at_.empty()) recorded_at_ = format_iso8601(std::chrono::system_clock::now());
            out << serialize_header() << '\n';
        }
        out << serialize_record(key, rec) << '\n';
        out.flush();
    }
    std::atomic_store(&entries_, std::shared_ptr<const Entries>(std::move(next)));
}

std::size_t Cassette::size() const
{
    return std::atomic_load(&entries_)->size();
}

std::string Cassette::serialize_header() const
{
    return nlohmann::json{{"cassette", {{"model", model_id_}, {"recorded_at", recorded_at_}, {"version", 1}}}}
        .dump();
}

std::string Cassette::serialize_record(const std::string& digest, const Record& rec)
{
    return nlohmann::json{{"digest", digest}, {"request", rec.request}, {"response", to_json(rec.response)}}
        .dump();
}

void Cassette::save(const std::filesystem::path& path) const
{
    std::string out = serialize_header() + "\n";
    for (const auto& [digest, rec] : *std::atomic_load(&entries_)) out += serialize_record(digest, rec) + "\n";
    write_file(path, out);
}

// ---------------------------------------------------------------------------
// Schemas

void SchemaRegistry::add(std::string id, Validator v)
{
    validators_[std::move(id)] = std::move(v);
}

bool SchemaRegistry::contains(const std::string& id) const
{
    return validators_.count(id) != 0;
}

std::optional<std::string> SchemaRegistry::check(const std::string& id, const std::string& text) const
{
    auto it = validators_.find(id);
    if (it == validators_.end()) return "unknown contract '" + id + "'";
    return it->second(text);
}

std::optional<nlohmann::json> extract_json_object(const std::string& text)
{
    auto begin = text.find('{');
    while (begin != std::string::npos) {
        // Scan for the matching close brace, honouring strings.
        int depth = 0;
        bool in_string = false;
        bool escape = false;
        for (std::size_t i = begin; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escape) escape = false;
                else if (c == '\\') escape = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                auto parsed = nlohmann::json::parse(text.substr(begin, i - begin + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                break;
            }
        }
        begin = text.find('{', begin + 1);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Gateway

GatewayConfig GatewayConfig::from_env()
{
    GatewayConfig c;
    c.base_url = env_or("LLM_API_BASE", c.base_url);
    c.api_key = env_or("LLM_API_KEY", "");
    c.model = env_or("LLM_MODEL", c.model);
    auto timeout = env_or("LLM_TIMEOUT_S", "");
    if (!timeout.empty()) {
        double s = std::stod(timeout);
        if (s <= 0) throw InvalidArgument("LLM_TIMEOUT_S must be positive");
        c.timeout = std::chrono::milliseconds(static_cast<long long>(s * 1000));
    }
    return c;
}

LlmGateway::LlmGateway(GatewayConfig config, std::shared_ptr<Cassette> cassette,
                       std::shared_ptr<Transport> transport, SchemaRegistry schemas)
    : config_(std::move(config)),
      cassette_(cassette ? std::move(cassette) : std::make_shared<Cassette>()),
      transport_(std::move(transport)),
      schemas_(std::move(schemas))
{
}

LlmRequest LlmGateway::request(std::string system, std::string user) const
{
    LlmRequest r;
    r.model = config_.model;
    r.messages = {{Role::System, std::move(system)}, {Role::User, std::move(user)}};
    return r;
}

std::string repair_instruction(const std::string& contract, const std::string& error)
{
    return "Your previous reply did not conform to the " + contract + " schema: " + error +
           "\nReply again with only a JSON object that conforms to the schema.";
}

LlmResponse LlmGateway::complete(const LlmRequest& req, ProviderMode mode)
{
    check_request(req);
    if (req.contract && !schemas_.contains(*req.contract))
        throw InvalidRequest("unknown structured output contract '" + *req.contract + "'");

    auto resp = dispatch(req, mode);
    if (!req.contract) return resp;

    auto error = schemas_.check(*req.contract, resp.text);
    if (!error) return resp;

    // Exactly one repair round trip.
    LlmRequest repair = req;
    repair.messages.push_back({Role::Assistant, resp.text});
    repair.messages.push_back({Role::User, repair_instruction(*req.contract, *error)});
    auto repaired = dispatch(repair, mode);
    if (auto again = schemas_.check(*req.contract, repaired.text)) throw ContractViolation(*req.contract, *again);
    return repaired;
}

LlmResponse LlmGateway::dispatch(const LlmRequest& req, ProviderMode mode)
{
    auto digest = normalize_request(req);
    switch (mode) {
    case ProviderMode::Replay: {
        auto hit = cassette_->find(digest);
        if (!hit) throw CassetteMiss(digest);
        return *hit;
    }
    case ProviderMode::Record: {
        if (auto hit = cassette_->find(digest)) return *hit;
        auto resp = live_call(req);
        cassette_->append(digest, req, resp);
        return resp;
    }
    case ProviderMode::Live:
        return live_call(req);
    }
    throw InvalidRequest("unknown provider mode");
}

Transport& LlmGateway::transport()
{
    std::lock_guard lock(transport_init_);
    if (!transport_) transport_ = std::make_shared<HttpTransport>(config_.base_url, config_.api_key);
    return *transport_;
}

LlmResponse LlmGateway::live_call(const LlmRequest& req)
{
    using clock = std::chrono::steady_clock;
    auto deadline = clock::now() + config_.timeout;
    auto& t = transport();
    int attempt = 0;
    std::string last_error = "no attempt made";
    while (true) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
        if (remaining.count() <= 0) break;
        try {
            auto r = t.send(req, remaining);
            r.provenance = Provenance::Live;
            return r;
        } catch (const TransportError& e) {
            last_error = e.detail();
        }
        if (attempt >= config_.max_retries) break;
        ++attempt;
    }
    throw TransportError(last_error, attempt);
}

} // namespace genonet::llm
