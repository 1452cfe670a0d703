#include "genonet/orchestrator.hpp"

#include "genonet/intent.hpp"
#include "genonet/text.hpp"

#include <openssl/rand.h>

#include <set>
#include <sstream>

namespace genonet {

namespace fs = std::filesystem;

std::string_view to_string(Route r)
{
    switch (r) {
    case Route::GeneralQuery: return "GeneralQuery";
    case Route::GenerateCpp: return "GenerateCpp";
    case Route::GeneratePython: return "GeneratePython";
    case Route::Execute: return "Execute";
    case Route::Interpret: return "Interpret";
    case Route::Debug: return "Debug";
    }
    return "GeneralQuery";
}

std::string_view to_string(DecidedBy d)
{
    return d == DecidedBy::Keyword ? "keyword" : "llm";
}

std::optional<Route> parse_route(std::string_view s)
{
    for (auto r : {Route::GeneralQuery, Route::GenerateCpp, Route::GeneratePython, Route::Execute, Route::Interpret,
                   Route::Debug})
        if (to_string(r) == s) return r;
    return std::nullopt;
}

nlohmann::json to_json(const RouteDecision& d)
{
    return {{"route", to_string(d.route)},
            {"confidence", d.confidence},
            {"rationale", d.rationale},
            {"decided_by", to_string(d.decided_by)}};
}

// ---------------------------------------------------------------------------
// Route table

RouteTable RouteTable::parse(std::string_view text)
{
    RouteTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto trimmed = trim(line);
        if (trimmed.empty()) continue;
        if (trimmed.front() == '#') {
            static const std::regex version_re(R"(^#\s*version\s+(\S+)\s*$)");
            std::smatch m;
            if (std::regex_match(trimmed, m, version_re)) t.version_ = m[1].str();
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw InvalidArgument("routes line " + std::to_string(lineno) + ": expected route<TAB>pattern");
        auto name = trim(line.substr(0, tab));
        auto route = parse_route(name);
        if (!route) throw InvalidArgument("routes line " + std::to_string(lineno) + ": unknown route '" + name + "'");
        auto pattern = trim(line.substr(tab + 1));
        try {
            t.rules_.push_back({*route, pattern, std::regex(pattern, std::regex::ECMAScript | std::regex::icase)});
        } catch (const std::regex_error& e) {
            throw InvalidArgument("routes line " + std::to_string(lineno) + ": bad pattern: " + e.what());
        }
    }
    if (t.version_.empty()) throw InvalidArgument("routes table has no '# version' line");
    return t;
}

RouteTable RouteTable::load(const fs::path& path)
{
    return parse(read_file(path));
}

const RouteTable& RouteTable::builtin()
{
    static const RouteTable t = load(data_dir() / "routes.tsv");
    return t;
}

std::optional<RouteDecision> RouteTable::match(const std::string& message, bool has_attachments) const
{
    if (has_attachments) return RouteDecision{Route::Interpret, 1.0, "attachment present", DecidedBy::Keyword};
    std::string flat = collapse_whitespace(message);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (std::regex_search(flat, rules_[i].re)) {
            return RouteDecision{rules_[i].route, 1.0, "rule " + std::to_string(i + 1) + ": " + rules_[i].pattern,
                                 DecidedBy::Keyword};
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Session modes

nlohmann::json to_json(const SessionModes& m)
{
    return {{"provider", llm::to_string(m.provider)},
            {"backend", to_string(m.backend)},
            {"generation", to_string(m.generation)},
            {"summary", to_string(m.summary)},
            {"max_attempts", m.max_attempts},
            {"auto_debug", m.auto_debug}};
}

SessionModes apply_overrides(SessionModes base, const nlohmann::json& overrides)
{
    if (overrides.is_null()) return base;
    if (!overrides.is_object()) throw InvalidOverride("overrides must be a JSON object");
    auto text = [](const std::string& key, const nlohmann::json& v) {
        if (!v.is_string()) throw InvalidOverride("override '" + key + "' must be a string");
        return v.get<std::string>();
    };
    for (const auto& [key, v] : overrides.items()) {
        if (key == "provider") {
            auto p = llm::parse_provider_mode(text(key, v));
            if (!p) throw InvalidOverride("unknown provider mode '" + text(key, v) + "'");
            base.provider = *p;
        } else if (key == "backend") {
            auto b = parse_backend(text(key, v));
            if (!b) throw InvalidOverride("unknown backend '" + text(key, v) + "'");
            base.backend = *b;
        } else if (key == "generation") {
            auto g = parse_generation_mode(text(key, v));
            if (!g) throw InvalidOverride("unknown generation mode '" + text(key, v) + "'");
            base.generation = *g;
        } else if (key == "summary") {
            auto s = parse_summary_style(text(key, v));
            if (!s) throw InvalidOverride("unknown summary style '" + text(key, v) + "'");
            base.summary = *s;
        } else if (key == "max_attempts") {
            if (!v.is_number_integer() || v.get<int>() < 1 || v.get<int>() > 10)
                throw InvalidOverride("max_attempts must be an integer in [1, 10]");
            base.max_attempts = v.get<int>();
        } else if (key == "auto_debug") {
            if (!v.is_boolean()) throw InvalidOverride("auto_debug must be a boolean");
            base.auto_debug = v.get<bool>();
        } else {
            throw InvalidOverride("override '" + key + "' is not allowed");
        }
    }
    return base;
}

std::optional<std::string> named_example(const std::string& message)
{
    static const std::regex before(R"(\b([a-z0-9][a-z0-9._/-]*)\s+(?:example|demo)\b)", std::regex::icase);
    static const std::regex after(R"(\b(?:example|demo)\s+([a-z0-9][a-z0-9._/-]*))", std::regex::icase);
    static const std::set<std::string> stop = {"the", "a", "an", "this", "that", "my", "your", "our",
                                               "same", "previous", "last", "it", "and", "run", "execute", "again", "now", "please", "too", "also"};
    for (const auto* re : {&before, &after}) {
        for (auto it = std::sregex_iterator(message.begin(), message.end(), *re); it != std::sregex_iterator(); ++it) {
            auto name = (*it)[1].str();
            while (!name.empty() && (name.back() == '.' || name.back() == '/')) name.pop_back();
            if (!name.empty() && !stop.count(to_lower(name))) return name;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Orchestrator

namespace {

class ChainError : public Error {
public:
    using Error::Error;
};

std::string random_session_id()
{
    unsigned char bytes[16];
    if (RAND_bytes(bytes, sizeof bytes) != 1) throw IoError("no randomness for a session id");
    static const char* hex = "0123456789abcdef";
    std::string id;
    for (unsigned char b : bytes) {
        id += hex[b >> 4];
        id += hex[b & 15];
    }
    return id;
}

bool valid_session_id(const std::string& id)
{
    if (id.empty() || id.size() > 64) return false;
    for (char c : id)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
    return true;
}

nlohmann::json artifact_record(SessionTranscript& t, const GeneratedArtifact& a)
{
    auto j = to_json(a);
    j["source"] = t.put_text(a.source);
    return j;
}

GeneratedArtifact artifact_from_record(const SessionTranscript& t, nlohmann::json j)
{
    j["source"] = t.get_text(j.at("source"));
    return artifact_from_json(j);
}

nlohmann::json report_record(SessionTranscript& t, const ExecutionReport& r)
{
    auto j = to_record(r);
    j["stdout"] = t.put_text(r.stdout_text);
    j["stderr"] = t.put_text(r.stderr_text);
    for (std::size_t i = 0; i < r.artifacts.size(); ++i) j["artifacts"][i]["content"] = t.put_text(read_file(r.artifacts[i].path));
    return j;
}

std::string tail_lines(const std::string& text, std::size_t n)
{
    std::size_t pos = text.size();
    if (pos > 0 && text[pos - 1] == '\n') --pos;
    for (std::size_t count = 0; pos > 0; --pos) {
        if (text[pos - 1] == '\n' && ++count == n) break;
    }
    return text.substr(pos);
}

struct Interpretation {
    nlohmann::json record;
    std::string text;
};

/// Interprets one output text. FlowMonitor documents are recognized by their
/// root element; anything else is read as an application log.
std::optional<Interpretation> interpret_text(const std::string& name, const std::string& content, SummaryStyle style,
                                             llm::LlmGateway& gw, llm::ProviderMode provider)
{
    if (content.find("<FlowMonitor") != std::string::npos) {
        auto flows = parse_flowmonitor(content);
        if (flows.empty()) {
            return Interpretation{{{"kind", "flowmon"}, {"source", name}, {"metrics", metrics_document(flows)}},
                                  "The FlowMonitor output `" + name + "` holds no flows.\n"};
        }
        auto s = summarize(flows, style, &gw, provider);
        return Interpretation{{{"kind", "flowmon"},
                               {"source", name},
                               {"metrics", metrics_document(flows)},
                               {"summary", to_json(s)}},
                              s.text};
    }
    auto log = parse_event_log(content);
    if (log.events.empty()) return std::nullopt;
    auto s = summarize(log, style, &gw, provider);
    return Interpretation{{{"kind", "event-log"}, {"source", name}, {"timeline", to_json(log)}, {"summary", to_json(s)}},
                          s.text};
}

struct Output {
    std::string name;
    std::string content;
};

/// Interpretable outputs of a stored execution report: FlowMonitor files,
/// else the captured streams.
std::vector<Output> report_outputs(const SessionTranscript& t, const nlohmann::json& report)
{
    std::vector<Output> out;
    for (const auto& a : report.value("artifacts", nlohmann::json::array()))
        if (a.contains("content")) out.push_back({a.value("file", a.value("name", "")), t.get_text(a.at("content"))});
    if (out.empty()) {
        std::string streams = t.get_text(report.at("stdout"));
        if (!streams.empty() && streams.back() != '\n') streams += '\n';
        streams += t.get_text(report.at("stderr"));
        out.push_back({"output log", streams});
    }
    return out;
}

std::string render_spec_line(const ScenarioSpec& s)
{
    std::ostringstream o;
    o << to_string(s.helper_stack) << ", " << to_string(s.traffic_profile) << " over " << to_string(s.transport) << ", "
      << s.ue_count << " UE(s), " << s.gnb_count << " gNB(s), " << to_string(s.channel_model) << " at "
      << format_engineering(s.frequency_hz) << " Hz, " << format_engineering(s.bandwidth_hz) << " Hz wide, "
      << s.cc_count << " CC(s), numerology " << s.numerology << ", " << format_plain(s.sim_duration_s) << " s";
    return o.str();
}

} // namespace

Orchestrator::Orchestrator(std::shared_ptr<llm::LlmGateway> gateway, std::shared_ptr<KnowledgeIndex> index,
                           Clock& clock, OrchestratorConfig config, SessionModes defaults, const RouteTable& routes)
    : gateway_(std::move(gateway)), index_(std::move(index)), clock_(clock), config_(std::move(config)),
      defaults_(defaults), routes_(routes)
{
    if (!gateway_) throw InvalidArgument("orchestrator needs a gateway");
    if (!index_) index_ = std::make_shared<KnowledgeIndex>();
}

SessionInfo Orchestrator::create_session(const nlohmann::json& overrides, std::optional<std::string> id)
{
    auto modes = apply_overrides(defaults_, overrides);
    SessionInfo info;
    info.id = id ? *id : random_session_id();
    if (!valid_session_id(info.id)) throw InvalidArgument("session ids are 1-64 characters of [A-Za-z0-9_-]");
    info.created_at = format_iso8601(clock_.now());
    info.modes = to_json(modes);
    std::lock_guard lock(sessions_mutex_);
    if (sessions_.count(info.id) ||
        (config_.transcript_root && fs::exists(*config_.transcript_root / info.id / "session.json")))
        throw InvalidArgument("session '" + info.id + "' already exists");
    std::optional<fs::path> dir;
    if (config_.transcript_root) dir = *config_.transcript_root / info.id;
    auto transcript = std::make_shared<SessionTranscript>(info, dir);
    sessions_.emplace(info.id, Entry{transcript, modes, std::make_shared<std::mutex>()});
    return info;
}

Orchestrator::Entry& Orchestrator::entry(const std::string& session_id)
{
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it != sessions_.end()) return it->second;
    if (!config_.transcript_root || !valid_session_id(session_id)) throw SessionNotFound(session_id);
    auto t = std::shared_ptr<SessionTranscript>(SessionTranscript::load(*config_.transcript_root / session_id));
    auto modes = apply_overrides(defaults_, t->info().modes);
    return sessions_.emplace(session_id, Entry{t, modes, std::make_shared<std::mutex>()}).first->second;
}

std::shared_ptr<SessionTranscript> Orchestrator::transcript(const std::string& session_id)
{
    return entry(session_id).transcript;
}

std::string Orchestrator::render_context(const SessionTranscript& session, std::size_t k) const
{
    if (k == 0) return "";
    auto turns = session.turns();
    std::size_t first = turns.size() > k ? turns.size() - k : 0;
    std::vector<std::string> blocks;
    for (std::size_t i = first; i < turns.size(); ++i) {
        blocks.push_back("User: " + turns[i].value("user_message", "") + "\nAssistant: " +
                         session.get_text(turns[i].at("reply")) + "\n");
    }
    auto render = [&](std::size_t from) {
        std::string out;
        for (std::size_t i = from; i < blocks.size(); ++i) out += (out.empty() ? "" : "\n") + blocks[i];
        return out;
    };
    for (std::size_t from = 0; from < blocks.size(); ++from) {
        auto text = render(from);
        if (tokenize(text).size() <= config_.context_budget) return text;
    }
    return "";
}

RouteDecision Orchestrator::route(const std::string& message, bool has_attachments, const SessionTranscript& session,
                                  llm::ProviderMode provider)
{
    if (trim(message).empty() && !has_attachments) throw InvalidArgument("empty message");
    if (auto d = routes_.match(message, has_attachments)) return *d;

    std::string context = render_context(session, config_.context_turns);
    auto req = gateway_->request(
        "You route messages for an ns-3 network simulation assistant. Reply with one JSON object: "
        "{\"route\": one of \"GeneralQuery\", \"GenerateCpp\", \"GeneratePython\", \"Execute\", \"Interpret\", "
        "\"Debug\", \"confidence\": a number in [0, 1], \"rationale\": one short sentence}. GeneralQuery is a "
        "question, Generate* asks for a simulation script in C++ or Python, Execute runs a script or example, "
        "Interpret explains simulator output, Debug repairs a failing script.",
        (context.empty() ? "" : "Conversation so far:\n" + context + "\n") + "Message: " + message);
    req.contract = kRouteContract;
    req.temperature = 0.0;
    req.max_tokens = 128;
    auto resp = gateway_->complete(req, provider);
    auto obj = llm::extract_json_object(resp.text);
    if (!obj) throw llm::ContractViolation(kRouteContract, "no JSON object in routing reply");
    RouteDecision d;
    d.decided_by = DecidedBy::Llm;
    d.route = parse_route(obj->at("route").get<std::string>()).value();
    d.confidence = obj->value("confidence", 0.5);
    d.rationale = obj->value("rationale", "");
    return d;
}

TurnResult Orchestrator::handle_turn(const std::string& session_id, const TurnInput& input, const StageSink& sink)
{
    auto& e = entry(session_id);
    if (trim(input.message).empty() && input.attachments.empty()) throw InvalidArgument("empty message");
    std::lock_guard turn_lock(*e.turn_mutex);
    auto& t = *e.transcript;
    const auto& modes = e.modes;
    auto emit = [&](const std::string& stage, const nlohmann::json& data) {
        if (sink) sink(stage, data);
    };

    nlohmann::json turn;
    turn["user_message"] = input.message;
    turn["started_at"] = format_iso8601(clock_.now());
    auto attachments = nlohmann::json::array();
    for (const auto& a : input.attachments)
        attachments.push_back({{"name", a.name}, {"sha256", sha256(a.content).hex()}, {"content", t.put_text(a.content)}});
    turn["attachments"] = attachments;
    for (const char* key : {"route", "spec", "extraction", "structure", "interpretation", "debug", "error"})
        turn[key] = nullptr;
    turn["retrieved"] = nlohmann::json::array();
    turn["artifacts"] = nlohmann::json::array();
    turn["executions"] = nlohmann::json::array();
    turn["refinements_rejected"] = nlohmann::json::array();

    auto retrieve = [&](const std::string& text) {
        emit("retrieving", {{"k", config_.retrieval_k}});
        std::vector<RankedHit> hits;
        if (index_->chunk_count() > 0) hits = index_->query(text, config_.retrieval_k);
        for (const auto& h : hits)
            turn["retrieved"].push_back({{"chunk_id", h.chunk_id}, {"score", h.score}, {"rank", h.rank}});
        return hits;
    };

    // Most recent artifact in the session; ambiguity is an error, not a guess.
    auto last_artifact = [&]() -> GeneratedArtifact {
        auto turns = t.turns();
        for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
            const auto& arts = (*it)["artifacts"];
            if (!arts.is_array() || arts.empty()) continue;
            if (arts.size() > 1)
                throw ChainError("AmbiguousReference", "turn " + std::to_string((*it)["ordinal"].get<int>()) +
                                                           " produced several scripts; name the one to use");
            return artifact_from_record(t, arts.back());
        }
        throw ChainError("NothingToExecute", "nothing to execute: no script in this session and no example named");
    };

    auto make_backend = [&]() -> std::shared_ptr<ExecutionBackend> {
        if (modes.backend == BackendKind::Stub) return std::make_shared<StubBackend>(config_.stub_root, clock_);
        if (!config_.ns3_root.empty()) return std::make_shared<Ns3Backend>(config_.ns3_root, clock_);
        return Ns3Backend::from_env(clock_);
    };

    auto interpret_outputs = [&](const std::vector<Output>& outputs, std::string& reply) {
        emit("interpreting", {{"sources", outputs.size()}});
        auto records = nlohmann::json::array();
        for (const auto& o : outputs) {
            auto r = interpret_text(o.name, o.content, modes.summary, *gateway_, modes.provider);
            if (!r) continue;
            records.push_back(r->record);
            reply += (reply.empty() || reply.back() == '\n' ? "" : "\n") + std::string(reply.empty() ? "" : "\n") +
                     r->text;
        }
        if (!records.empty()) turn["interpretation"] = records;
        return !records.empty();
    };

    std::string reply;
    bool ok = true;
    try {
        auto decision = route(input.message, !input.attachments.empty(), t, modes.provider);
        turn["route"] = to_json(decision);
        emit("routed", to_json(decision));

        switch (decision.route) {
        case Route::GeneralQuery: {
            auto hits = retrieve(input.message);
            emit("answering", nlohmann::json::object());
            std::string context = render_context(t, config_.context_turns);
            std::string base = (context.empty() ? "" : "Conversation so far:\n" + context + "\n") +
                               "Question: " + input.message;
            std::string prompt = hits.empty() ? base : index_->augment_prompt(base, hits, config_.context_budget);
            auto req = gateway_->request(
                "You are an assistant for ns-3 network simulation and 5G NR (5G-LENA) configuration. Answer "
                "concisely. When reference context is given, prefer it and cite the source names you used.",
                prompt);
            req.temperature = 0.0;
            req.max_tokens = 1024;
            reply = gateway_->complete(req, modes.provider).text;
            break;
        }
        case Route::GenerateCpp:
        case Route::GeneratePython: {
            auto dialect = decision.route == Route::GenerateCpp ? Dialect::Cpp : Dialect::Python;
            auto hits = retrieve(input.message);
            emit("generating", {{"dialect", to_string(dialect)}, {"mode", to_string(modes.generation)}});
            std::string context = hits.empty() ? "" : trim(index_->augment_prompt("", hits, config_.context_budget));
            IntentExtractor extractor(*gateway_);
            auto partial = extractor.extract_intent(input.message, context, modes.provider);
            auto merged = merge_and_default(partial);
            turn["spec"] = to_json(merged.spec);
            turn["extraction"] = {{"candidates", to_json(partial)}, {"merge", to_json(merged)}};
            CodeGenerator gen(*gateway_, clock_);
            auto result = gen.generate_script(merged.spec, dialect, modes.generation, modes.provider);
            turn["artifacts"].push_back(artifact_record(t, result.artifact));
            turn["structure"] = to_json(result.report);
            for (const auto& r : result.rejected)
                turn["refinements_rejected"].push_back({{"section", r.section}, {"reason", r.reason}});

            std::size_t passed = 0;
            for (const auto& c : result.report.checks) passed += c.passed ? 1 : 0;
            reply = "Generated `" + result.artifact.file_name() + "` (" + render_spec_line(merged.spec) +
                    "). Structure checks: " + std::to_string(passed) + "/" +
                    std::to_string(result.report.checks.size()) + " passed.\n";
            for (const auto& d : merged.disagreements)
                reply += "Note: the model read " + d.field + " as " + d.llm_value + ", the keyword rules as " +
                         d.rule_value + "; using " + d.llm_value + ".\n";
            for (const auto& r : result.rejected)
                reply += "Kept the template body of section '" + r.section + "': " + r.reason + ".\n";
            std::string lang = dialect == Dialect::Cpp ? "cpp" : "python";
            reply += "\n```" + lang + "\n" + result.artifact.source + "```\n";
            break;
        }
        case Route::Execute:
        case Route::Debug: {
            std::optional<ExecutionTarget> target;
            if (decision.route == Route::Execute) {
                if (auto name = named_example(input.message)) target = ExecutionTarget::example(*name);
            }
            if (!target) target = ExecutionTarget::of(last_artifact());
            emit("executing", {{"target", target->describe()}, {"backend", to_string(modes.backend)}});
            Sandbox sandbox(make_backend(), config_.sandbox_root);

            std::optional<ExecutionReport> final_report;
            std::string header;
            if (target->artifact) {
                int attempts = decision.route == Route::Debug || modes.auto_debug ? modes.max_attempts : 1;
                auto outcome = sandbox.debug_loop(*target->artifact, *gateway_, modes.provider, attempts, config_.limits);
                for (const auto& a : outcome.attempts) {
                    turn["executions"].push_back(report_record(t, a.report));
                    if (a.repair_prompt) turn["executions"].back()["repair_prompt"] = t.put_text(*a.repair_prompt);
                }
                turn["debug"] = {{"resolved", outcome.resolved},
                                 {"stop_reason", outcome.stop_reason},
                                 {"attempts", outcome.attempts.size()},
                                 {"max_attempts", attempts}};
                if (outcome.final_artifact.source != target->artifact->source)
                    turn["artifacts"].push_back(artifact_record(t, outcome.final_artifact));
                final_report = outcome.attempts.back().report;
                header = "Ran `" + target->artifact->file_name() + "` on the " + std::string(to_string(modes.backend)) +
                         " backend";
                if (outcome.attempts.size() > 1)
                    header += " (" + std::to_string(outcome.attempts.size()) + " attempts, " + outcome.stop_reason + ")";
                if (outcome.stop_reason == "lint-regression")
                    header += "; the proposed repair broke the script structure and was discarded";
            } else {
                auto report = sandbox.execute(*target, config_.limits, 1);
                turn["executions"].push_back(report_record(t, report));
                final_report = report;
                header = "Ran example `" + target->example_ref + "` on the " + std::string(to_string(modes.backend)) +
                         " backend";
            }
            const auto& r = *final_report;
            if (r.status == ExecStatus::Ok) {
                reply = header + ": exit status 0.\n";
                auto outputs = report_outputs(t, turn["executions"].back());
                if (!interpret_outputs(outputs, reply)) reply += "\nThe run produced no output that can be interpreted.\n";
            } else {
                ok = false;
                reply = header + ": " + std::string(to_string(r.status)) + " in the " + std::string(to_string(r.phase)) +
                        " phase (exit status " + std::to_string(r.exit_status) + ").\n";
                if (!r.stderr_text.empty()) reply += "\nstderr (tail):\n```\n" + tail_lines(r.stderr_text, 20) + "```\n";
            }
            break;
        }
        case Route::Interpret: {
            std::vector<Output> outputs;
            for (const auto& a : input.attachments) outputs.push_back({a.name, a.content});
            if (outputs.empty()) {
                auto turns = t.turns();
                for (auto it = turns.rbegin(); it != turns.rend() && outputs.empty(); ++it) {
                    const auto& ex = (*it)["executions"];
                    if (ex.is_array() && !ex.empty()) outputs = report_outputs(t, ex.back());
                }
            }
            if (outputs.empty()) throw ChainError("NothingToInterpret", "nothing to interpret: attach an output file or run a script first");
            if (!interpret_outputs(outputs, reply))
                throw ChainError("NothingToInterpret", "no FlowMonitor data or echo-application events found");
            break;
        }
        }
    } catch (const Error& err) {
        ok = false;
        turn["error"] = {{"code", "TurnFailed"}, {"cause", err.code()}, {"message", err.what()}};
        reply = "The request could not be completed (" + err.code() + "): " + err.what() + "\n";
    } catch (const std::exception& err) {
        ok = false;
        turn["error"] = {{"code", "TurnFailed"}, {"cause", "Internal"}, {"message", err.what()}};
        reply = "The request could not be completed: " + std::string(err.what()) + "\n";
    }
    turn["ok"] = ok;
    turn["reply"] = t.put_text(reply);
    turn["finished_at"] = format_iso8601(clock_.now());
    t.append(turn);
    turn["ordinal"] = t.size();
    emit("reply", {{"text", reply}, {"ok", ok}});
    return {turn, reply, ok};
}

} // namespace genonet
