#include "demo.hpp"

#include "genonet/intent.hpp"
#include "genonet/text.hpp"

#include <regex>
#include <set>
#include <sstream>

namespace genonet::demo {

namespace fs = std::filesystem;

const char* const kXrPrompt =
    "I want to use XR traffic with the 5G-Lena NR helper, which uses a 3GPP UMI channel model with a frequency "
    "of 28 GHz and a 200 MHz bandwidth and 1 component carrier with 100 UE's. Also, I want to have a TCP "
    "application and a scanning beamforming method.";

namespace {

bool starts_with(const std::string& s, std::string_view prefix)
{
    return s.compare(0, prefix.size(), prefix) == 0;
}

/// Text between `open` and the last "```" after it.
std::optional<std::string> fenced_after(const std::string& text, const std::string& open, const std::string& close)
{
    auto begin = text.find(open);
    if (begin == std::string::npos) return std::nullopt;
    begin += open.size();
    auto end = text.find(close, begin);
    if (end == std::string::npos) return std::nullopt;
    return text.substr(begin, end - begin);
}

std::string extraction_reply(const std::string& user)
{
    static const std::string head = "Scenario request:\n";
    auto begin = user.find(head);
    std::string prompt = begin == std::string::npos ? user : user.substr(begin + head.size());
    auto ref = prompt.find("\n\nReference material:");
    if (ref != std::string::npos) prompt.resize(ref);

    static const std::set<std::string> integers = {"cc_count", "numerology", "gnb_count", "ue_count"};
    nlohmann::json out = nlohmann::json::object();
    auto rules = rule_fallback_extract(prompt);
    for (const auto& [field, by_source] : rules.candidates()) {
        auto it = by_source.find(FieldSource::Rule);
        if (it == by_source.end()) continue;
        std::string key = field;
        for (std::string suffix : {"_hz", "_s"})
            if (key.size() > suffix.size() && key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0)
                key.resize(key.size() - suffix.size());
        if (integers.count(field))
            out[key] = std::stoi(it->second);
        else
            out[key] = it->second;
    }
    return out.dump();
}

std::string refinement_reply(const std::string& user)
{
    static const std::regex section_re(R"(\nSection: ([a-z-]+)\n)");
    std::smatch m;
    if (!std::regex_search(user, m, section_re)) throw llm::TransportError("demo model: no section in request");
    std::string section = m[1].str();
    auto fence_open = user.find("Current body of '" + section + "':\n```");
    if (fence_open == std::string::npos) throw llm::TransportError("demo model: no current body");
    auto body_begin = user.find('\n', fence_open + section.size() + 20) + 1;
    auto lang_begin = user.find("```", fence_open) + 3;
    std::string lang = user.substr(lang_begin, body_begin - 1 - lang_begin);
    auto body_end = user.rfind("```");
    std::string body = user.substr(body_begin, body_end - body_begin);

    std::string indent;
    for (std::size_t pos = 0; pos < body.size();) {
        auto nl = body.find('\n', pos);
        auto line = body.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        if (!trim(line).empty()) {
            indent = line.substr(0, line.find_first_not_of(" \t"));
            break;
        }
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    std::string comment = indent + (lang == "python" ? "# " : "// ") + "section '" + section +
                          "' reviewed against the scenario parameters\n";
    return "```" + lang + "\n" + comment + body + "```\n";
}

std::string repair_reply(const std::string& user)
{
    auto script = fenced_after(user, "Script:\n```cpp\n", "```\n\nstderr:");
    std::string lang = "cpp";
    if (!script) {
        script = fenced_after(user, "Script:\n```python\n", "```\n\nstderr:");
        lang = "python";
    }
    if (!script) throw llm::TransportError("demo model: no script in repair request");
    static const std::regex missing_semicolon(R"(CheckForLostPackets\(\)(?!;))");
    std::string fixed = std::regex_replace(*script, missing_semicolon, "CheckForLostPackets();");
    return "Here is the corrected script.\n\n```" + lang + "\n" + fixed + "```\n";
}

std::string answer_reply(const std::string& user)
{
    static const std::regex source_re(R"(\(source: ([^)]+)\))");
    std::vector<std::string> sources;
    for (auto it = std::sregex_iterator(user.begin(), user.end(), source_re); it != std::sregex_iterator(); ++it)
        if (std::find(sources.begin(), sources.end(), (*it)[1].str()) == sources.end()) sources.push_back((*it)[1]);

    auto q = user.rfind("Question: ");
    std::string question = to_lower(q == std::string::npos ? user : user.substr(q));
    std::string answer;
    if (question.find("numerology") != std::string::npos) {
        answer = "A 28 GHz carrier lies in frequency range 2, where numerology 2 (60 kHz subcarrier spacing) or 3 "
                 "(120 kHz) is the usual choice. In 5G-LENA set it per bandwidth part with "
                 "SetGnbPhyAttribute(\"Numerology\", UintegerValue(2)).";
    } else {
        answer = "The reference notes do not cover this question directly.";
    }
    if (!sources.empty()) {
        answer += "\n\nSources:";
        for (const auto& s : sources) answer += " " + s;
    }
    return answer + "\n";
}

} // namespace

llm::LlmResponse DemoModel::send(const llm::LlmRequest& req, std::chrono::milliseconds)
{
    if (req.messages.size() < 2) throw llm::TransportError("demo model: expected system and user messages");
    const auto& system = req.messages[0].content;
    const auto& user = req.messages[1].content;

    llm::LlmResponse r;
    r.provenance = llm::Provenance::Live;
    if (req.contract && *req.contract == kScenarioSpecContract)
        r.text = extraction_reply(user);
    else if (req.contract && *req.contract == kRouteContract)
        r.text = R"({"route": "GeneralQuery", "confidence": 0.5, "rationale": "no keyword rule matched"})";
    else if (starts_with(system, "You are an ns-3 simulation engineer"))
        r.text = refinement_reply(user);
    else if (starts_with(system, "You repair ns-3 simulation scripts"))
        r.text = repair_reply(user);
    else if (starts_with(system, "You turn ns-3 simulation results"))
        r.text = "Summary of the simulation results.\n\n" + user;
    else if (starts_with(system, "You are an assistant for ns-3"))
        r.text = answer_reply(user);
    else
        throw llm::TransportError("demo model: unrecognized request");

    std::size_t prompt_words = 0;
    for (const auto& m : req.messages) prompt_words += tokenize(m.content).size();
    r.usage = {static_cast<int>(prompt_words), static_cast<int>(tokenize(r.text).size())};
    return r;
}

std::shared_ptr<llm::LlmGateway> gateway(std::shared_ptr<llm::Cassette> cassette,
                                         std::shared_ptr<llm::Transport> transport)
{
    llm::GatewayConfig config;
    config.model = kModelId;
    config.base_url = "http://127.0.0.1:9/v1";
    config.max_retries = 0;
    return std::make_shared<llm::LlmGateway>(config, std::move(cassette), std::move(transport));
}

const std::vector<std::string>& session_script()
{
    static const std::vector<std::string> script = {
        "What numerology should I use for a 28 GHz carrier in 5G-LENA?",
        kXrPrompt,
        "Run it.",
        "Interpret the results.",
    };
    return script;
}

GeneratedArtifact xr_artifact(Clock& clock)
{
    auto spec = merge_and_default(rule_fallback_extract(kXrPrompt)).spec;
    return scaffold(spec, Dialect::Cpp, clock);
}

GeneratedArtifact inject(const GeneratedArtifact& a, Fault f)
{
    auto out = a;
    if (f == Fault::MissingSemicolon) {
        static const std::string stmt = "monitor->CheckForLostPackets();";
        auto pos = out.source.find(stmt);
        if (pos == std::string::npos) throw InvalidArgument("script has no CheckForLostPackets() call");
        out.source.erase(pos + stmt.size() - 1, 1);
    } else {
        static const std::string stmt = "internet.Install(remoteHostContainer);";
        auto pos = out.source.find(stmt);
        if (pos == std::string::npos) throw InvalidArgument("script installs no remote host stack");
        out.source.replace(pos, stmt.size(), "internet.Install(remoteHostContainr);");
    }
    out.sections = scan_sections(out.source, out.dialect, a.sections);
    return out;
}

std::string fixture_name(Fault f)
{
    return f == Fault::MissingSemicolon ? "xr-build-missing-semicolon" : "xr-build-undeclared";
}

SessionRun run_session(std::shared_ptr<llm::LlmGateway> gw, llm::ProviderMode mode, const Roots& roots)
{
    SteppingClock clock;
    auto index = std::make_shared<KnowledgeIndex>();
    index->ingest_directory(roots.corpus);
    OrchestratorConfig config;
    config.stub_root = roots.stub;
    config.sandbox_root = roots.sandbox;
    SessionModes modes;
    modes.provider = mode;
    Orchestrator orch(std::move(gw), index, clock, config, modes);
    orch.create_session(nlohmann::json::object(), std::string(kSessionId));
    SessionRun run;
    for (const auto& message : session_script()) run.turns.push_back(orch.handle_turn(kSessionId, {message, {}}));
    run.transcript = orch.transcript(kSessionId);
    return run;
}

DebugOutcome run_debug(llm::LlmGateway& gw, llm::ProviderMode mode, Fault f, const Roots& roots, int max_attempts)
{
    SteppingClock clock;
    auto broken = inject(xr_artifact(clock), f);
    Sandbox sandbox(std::make_shared<StubBackend>(roots.stub, clock), roots.sandbox);
    return sandbox.debug_loop(broken, gw, mode, max_attempts);
}

namespace {

struct Position {
    std::size_t line = 1;
    std::size_t column = 1;
    std::string text;
};

Position position_of(const std::string& source, std::size_t offset)
{
    Position p;
    auto line_start = source.rfind('\n', offset == 0 ? 0 : offset - 1);
    line_start = line_start == std::string::npos ? 0 : line_start + 1;
    p.line = 1 + static_cast<std::size_t>(std::count(source.begin(), source.begin() + line_start, '\n'));
    p.column = offset - line_start + 1;
    auto line_end = source.find('\n', line_start);
    p.text = source.substr(line_start, line_end - line_start);
    return p;
}

/// Compiler diagnostics in the usual `file:line:col: error:` form.
std::string build_stderr(const GeneratedArtifact& broken, Fault f)
{
    std::ostringstream err;
    const auto file = broken.file_name();
    err << file << ": In function 'int main(int, char**)':\n";
    if (f == Fault::MissingSemicolon) {
        auto at = broken.source.find("monitor->CheckForLostPackets()") + std::string("monitor->CheckForLostPackets()").size();
        auto p = position_of(broken.source, at);
        auto next = broken.source.find_first_not_of(" \t\n", at);
        auto next_end = broken.source.find_first_not_of(
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_", next);
        err << file << ":" << p.line << ":" << p.column << ": error: expected ';' before '"
            << broken.source.substr(next, next_end - next) << "'\n";
        err << std::string(5 - std::min<std::size_t>(4, std::to_string(p.line).size()), ' ') << p.line << " | "
            << p.text << "\n";
    } else {
        auto at = broken.source.find("remoteHostContainr");
        auto p = position_of(broken.source, at);
        err << file << ":" << p.line << ":" << p.column
            << ": error: 'remoteHostContainr' was not declared in this scope; did you mean 'remoteHostContainer'?\n";
        err << std::string(5 - std::min<std::size_t>(4, std::to_string(p.line).size()), ' ') << p.line << " | "
            << p.text << "\n";
    }
    err << "ninja: build stopped: subcommand failed.\n";
    return err.str();
}

void write_broken_fixture(const fs::path& dir, const GeneratedArtifact& broken, Fault f)
{
    fs::create_directories(dir);
    nlohmann::ordered_json report = {{"phase", "build"},
                                     {"exit_status", 1},
                                     {"wall_time_s", f == Fault::MissingSemicolon ? 38.2 : 37.9},
                                     {"peak_memory_bytes", 1205862400},
                                     {"artifacts", nlohmann::json::array()}};
    write_file(dir / "report.json", report.dump(2) + "\n");
    write_file(dir / "stdout.txt", "[0/2] Building CXX object scratch/CMakeFiles/scratch_genonet-scenario.dir/"
                                   "genonet-scenario.cc.o\nFAILED: scratch/CMakeFiles/scratch_genonet-scenario.dir/"
                                   "genonet-scenario.cc.o\n");
    write_file(dir / "stderr.txt", build_stderr(broken, f));
}

void save_cassette(const llm::Cassette& c, const fs::path& path)
{
    fs::create_directories(path.parent_path());
    c.save(path);
}

} // namespace

std::vector<fs::path> generate(const fs::path& data, const fs::path& out)
{
    std::vector<fs::path> written;
    const auto stub_in = data / "fixtures" / "stub";
    const auto stub_out = out / "fixtures" / "stub";
    fs::create_directories(stub_out);
    if (fs::weakly_canonical(stub_in) != fs::weakly_canonical(stub_out)) {
        for (const auto* name : {"cttc-nr-demo", "second", "xr-nr"})
            fs::copy(stub_in / name, stub_out / name, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    }

    SteppingClock clock;
    auto good = xr_artifact(clock);
    std::string aliases = "# Stub fixture aliases: key<TAB>fixture directory. Keys are source or spec\n"
                          "# sha256 digests. Generated by genonet-fixtures; do not edit.\n";
    aliases += good.spec_digest.hex() + "\txr-nr\n";
    for (auto f : {Fault::MissingSemicolon, Fault::UndeclaredIdentifier}) {
        auto broken = inject(good, f);
        write_broken_fixture(stub_out / fixture_name(f), broken, f);
        for (const auto* file : {"report.json", "stdout.txt", "stderr.txt"})
            written.push_back(fs::path("fixtures") / "stub" / fixture_name(f) / file);
        aliases += sha256(broken.source).hex() + "\t" + fixture_name(f) + "\n";
    }
    write_file(stub_out / "aliases.tsv", aliases);
    written.push_back(fs::path("fixtures") / "stub" / "aliases.tsv");

    auto sandbox = fs::temp_directory_path() / ("genonet-fixtures-" + std::to_string(::getpid()));
    Roots roots{stub_out, sandbox, data / "corpus"};

    auto demo = std::make_shared<llm::Cassette>(kModelId, kRecordedAt);
    run_session(gateway(demo), llm::ProviderMode::Record, roots);
    save_cassette(*demo, out / "cassettes" / "demo.ndjson");
    written.push_back(fs::path("cassettes") / "demo.ndjson");

    auto fix = std::make_shared<llm::Cassette>(kModelId, kRecordedAt);
    run_debug(*gateway(fix), llm::ProviderMode::Record, Fault::MissingSemicolon, roots);
    save_cassette(*fix, out / "cassettes" / "debug-fix.ndjson");
    written.push_back(fs::path("cassettes") / "debug-fix.ndjson");

    auto exhaust = std::make_shared<llm::Cassette>(kModelId, kRecordedAt);
    run_debug(*gateway(exhaust), llm::ProviderMode::Record, Fault::UndeclaredIdentifier, roots);
    save_cassette(*exhaust, out / "cassettes" / "debug-exhaust.ndjson");
    written.push_back(fs::path("cassettes") / "debug-exhaust.ndjson");

    std::error_code ec;
    fs::remove_all(sandbox, ec);
    return written;
}

} // namespace genonet::demo
