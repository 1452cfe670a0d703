// genonet: command-line front end. Every verb drives the same library code
// as the HTTP service; `chat` goes through the orchestrator turn by turn.

#include "genonet/intent.hpp"
#include "genonet/runtime.hpp"
#include "genonet/service.hpp"
#include "genonet/text.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace genonet;

namespace {

struct Common {
    std::string provider;
    std::string backend;
    std::string cassette;
    std::string index;
    std::string transcript_dir;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--provider", c.provider, "live, replay or record (default GENONET_PROVIDER or replay)");
    app->add_option("--backend", c.backend, "stub or ns3 (default GENONET_BACKEND or stub)");
    app->add_option("--cassette", c.cassette, "replay/record cassette (default GENONET_CASSETTE or the demo cassette)");
    app->add_option("--index", c.index, "saved index from `genonet ingest --save` (default: ingest the corpus)");
    app->add_option("--transcript-dir", c.transcript_dir, "persist sessions under this directory");
}

RuntimeOptions options_from(const Common& c)
{
    auto o = RuntimeOptions::from_env();
    if (!c.provider.empty()) {
        auto p = llm::parse_provider_mode(c.provider);
        if (!p) throw InvalidArgument("unknown provider '" + c.provider + "'");
        o.provider = *p;
    }
    if (!c.backend.empty()) {
        auto b = parse_backend(c.backend);
        if (!b) throw InvalidArgument("unknown backend '" + c.backend + "'");
        o.backend = *b;
    }
    if (!c.cassette.empty()) o.cassette = c.cassette;
    if (!c.index.empty()) o.index_file = c.index;
    if (!c.transcript_dir.empty()) o.transcript_root = c.transcript_dir;
    return o;
}

fs::path sidecar_of(const fs::path& script)
{
    return fs::path(script.string() + ".genonet.json");
}

int cmd_chat(const Common& common, const std::string& session, const std::string& overrides, bool print_digest,
             bool quiet)
{
    auto rt = Runtime::create(options_from(common));
    auto& orch = *rt->orchestrator;
    auto ov = overrides.empty() ? nlohmann::json::object() : nlohmann::json::parse(overrides);
    std::string id = session;
    bool resumed = false;
    if (!id.empty() && !common.transcript_dir.empty()) {
        try {
            orch.transcript(id);
            resumed = true;
        } catch (const SessionNotFound&) {
        }
    }
    if (!resumed) id = orch.create_session(ov, id.empty() ? std::nullopt : std::optional<std::string>(id)).id;
    if (!quiet) std::cerr << "session " << id << " (" << llm::to_string(orch.defaults().provider) << ")\n";

    bool tty = ::isatty(0);
    std::vector<Attachment> pending;
    std::string line;
    while (true) {
        if (tty) std::cerr << "> " << std::flush;
        if (!std::getline(std::cin, line)) break;
        auto t = trim(line);
        if (t.empty()) continue;
        if (t == "/quit" || t == "/exit") break;
        if (t.rfind("/attach ", 0) == 0) {
            fs::path p = trim(t.substr(8));
            pending.push_back({p.filename().string(), read_file(p)});
            if (!quiet) std::cerr << "attached " << p.filename().string() << " (" << pending.back().content.size() << " bytes)\n";
            continue;
        }
        auto r = orch.handle_turn(id, {t == "/send" ? "" : t, pending}, [&](const std::string& stage, const nlohmann::json& data) {
            if (!quiet && stage != "reply") std::cerr << "[" << stage << "] " << data.dump() << "\n";
        });
        pending.clear();
        std::cout << r.reply << (r.reply.empty() || r.reply.back() != '\n' ? "\n" : "") << std::flush;
    }
    if (print_digest) {
        auto tr = orch.transcript(id);
        std::cout << "turns: " << tr->size() << "\ntranscript-digest: " << tr->digest().hex() << "\n";
    }
    return 0;
}

int cmd_generate(const Common& common, const std::string& prompt, const std::string& dialect_name,
                 const std::string& mode_name, const std::string& out)
{
    auto dialect = parse_dialect(dialect_name);
    if (!dialect) throw InvalidArgument("dialect must be cpp or python");
    auto mode = parse_generation_mode(mode_name);
    if (!mode) throw InvalidArgument("mode must be scaffold_only or llm_refine");
    auto rt = Runtime::create(options_from(common));
    auto provider = rt->orchestrator->defaults().provider;

    std::string context;
    if (rt->index->chunk_count() > 0) {
        auto hits = rt->index->query(prompt, rt->orchestrator->config().retrieval_k);
        if (!hits.empty()) context = trim(rt->index->augment_prompt("", hits));
    }
    IntentExtractor extractor(*rt->gateway);
    auto merged = merge_and_default(extractor.extract_intent(prompt, context, provider));
    for (const auto& d : merged.disagreements)
        std::cerr << "note: " << d.field << ": model says " << d.llm_value << ", rules say " << d.rule_value << "\n";
    CodeGenerator gen(*rt->gateway, *rt->clock);
    auto result = gen.generate_script(merged.spec, *dialect, *mode, provider);
    for (const auto& r : result.rejected) std::cerr << "refinement of '" << r.section << "' rejected: " << r.reason << "\n";
    for (const auto& c : result.report.checks)
        std::cerr << (c.passed ? "  ok   " : "  FAIL ") << c.id << (c.detail.empty() ? "" : ": " + c.detail) << "\n";

    if (out.empty() || out == "-") {
        std::cout << result.artifact.source;
    } else {
        write_file(out, result.artifact.source);
        auto meta = to_json(result.artifact);
        meta.erase("source");
        meta["source_sha256"] = sha256(result.artifact.source).hex();
        write_file(sidecar_of(out), meta.dump(2) + "\n");
        std::cerr << "wrote " << out << " and " << sidecar_of(out).string() << "\n";
    }
    return result.report.ok ? 0 : 1;
}

void print_report(const ExecutionReport& r)
{
    std::cout << "attempt " << r.attempt << ": " << to_string(r.status) << " in " << to_string(r.phase)
              << " phase, exit status " << r.exit_status << ", " << format_plain(r.wall_time_s) << " s, peak "
              << r.peak_memory_bytes << " B\n";
    for (const auto& a : r.artifacts) std::cout << "  output " << a.name << ": " << a.path.string() << "\n";
}

int cmd_run(const Common& common, const std::string& script, const std::string& example, int timeout_s,
            int max_attempts, bool json)
{
    if (script.empty() == example.empty()) throw InvalidArgument("give a script path or --example, not both");
    auto rt = Runtime::create(options_from(common));
    const auto& modes = rt->orchestrator->defaults();
    const auto& cfg = rt->orchestrator->config();
    std::shared_ptr<ExecutionBackend> backend;
    if (modes.backend == BackendKind::Stub)
        backend = std::make_shared<StubBackend>(cfg.stub_root, *rt->clock);
    else
        backend = Ns3Backend::from_env(*rt->clock);
    Sandbox sandbox(backend, cfg.sandbox_root);
    ExecutionLimits limits;
    if (timeout_s > 0) limits.run_timeout = std::chrono::seconds(timeout_s);

    const ExecutionReport* last = nullptr;
    DebugOutcome outcome;
    ExecutionReport single;
    if (!example.empty()) {
        single = sandbox.execute(ExecutionTarget::example(example), limits);
        last = &single;
        if (json) std::cout << to_json(single).dump(2) << "\n";
        else print_report(single);
    } else {
        GeneratedArtifact a;
        auto meta_path = sidecar_of(script);
        a.source = read_file(script);
        if (fs::exists(meta_path)) {
            auto meta = nlohmann::json::parse(read_file(meta_path));
            meta["source"] = a.source;
            a = artifact_from_json(meta);
            a.sections = scan_sections(a.source, a.dialect, a.sections);
        } else {
            if (fs::path(script).extension() == ".py") a.dialect = Dialect::Python;
            a.sections = scan_sections(a.source, a.dialect);
            if (max_attempts > 1) {
                std::cerr << "no " << meta_path.filename().string() << " next to the script; repairs disabled\n";
                max_attempts = 1;
            }
        }
        outcome = sandbox.debug_loop(a, *rt->gateway, modes.provider, max_attempts, limits);
        if (json) {
            std::cout << to_json(outcome).dump(2) << "\n";
        } else {
            for (const auto& at : outcome.attempts) print_report(at.report);
            std::cout << (outcome.resolved ? "resolved" : "unresolved") << " (" << outcome.stop_reason << ")\n";
        }
        last = &outcome.attempts.back().report;
    }
    if (!json && last->status != ExecStatus::Ok && !last->stderr_text.empty()) std::cerr << last->stderr_text;
    return last->status == ExecStatus::Ok ? 0 : 1;
}

int cmd_interpret(const Common& common, const std::string& kind, const std::string& file, const std::string& style_name,
                  bool json)
{
    auto style = parse_summary_style(style_name);
    if (!style) throw InvalidArgument("style must be template or llm_polished");
    auto text = read_file(file);
    std::unique_ptr<Runtime> rt;
    llm::LlmGateway* gw = nullptr;
    llm::ProviderMode provider = llm::ProviderMode::Replay;
    if (*style == SummaryStyle::LlmPolished) {
        rt = Runtime::create(options_from(common));
        gw = rt->gateway.get();
        provider = rt->orchestrator->defaults().provider;
    }
    if (kind == "flowmon") {
        auto flows = parse_flowmonitor(text);
        if (json) {
            std::cout << metrics_document(flows).dump(2) << "\n";
            return 0;
        }
        auto s = summarize(flows, *style, gw, provider);
        std::cout << s.text;
        if (s.fell_back) std::cerr << "polishing fell back to the template: " << s.fallback_reason << "\n";
    } else {
        auto log = parse_event_log(text);
        if (json) {
            std::cout << to_json(log).dump(2) << "\n";
            return 0;
        }
        auto s = summarize(log, *style, gw, provider);
        std::cout << s.text;
        if (s.fell_back) std::cerr << "polishing fell back to the template: " << s.fallback_reason << "\n";
    }
    return 0;
}

int cmd_ingest(const std::vector<std::string>& paths, const std::string& save)
{
    // An existing --save file is extended rather than replaced.
    auto index = !save.empty() && fs::exists(save) ? KnowledgeIndex::load(save) : std::make_unique<KnowledgeIndex>();
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            std::cout << p << ": " << index->ingest_directory(p) << " chunks\n";
        } else {
            auto doc = fs::path(p).stem().string();
            std::cout << doc << ": " << index->ingest(read_file(p), doc) << " chunks\n";
        }
    }
    std::cout << index->document_count() << " documents, " << index->chunk_count() << " chunks\n";
    if (!save.empty()) {
        index->save(save);
        std::cout << "saved " << save << "\n";
    }
    return 0;
}

int cmd_search(const Common& common, const std::string& query, std::size_t k, bool json)
{
    auto o = options_from(common);
    std::unique_ptr<KnowledgeIndex> loaded;
    KnowledgeIndex fresh;
    const KnowledgeIndex* index = &fresh;
    if (o.index_file) {
        loaded = KnowledgeIndex::load(*o.index_file);
        index = loaded.get();
    } else {
        fresh.ingest_directory(o.corpus);
    }
    auto hits = index->query(query, k);
    if (json) {
        auto out = nlohmann::json::array();
        for (const auto& h : hits) out.push_back({{"chunk_id", h.chunk_id}, {"score", h.score}, {"rank", h.rank}});
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    for (const auto& h : hits) {
        auto c = index->chunk(h.chunk_id);
        std::cout << h.rank << ". " << h.chunk_id << "  " << format_shortest(h.score) << "  " << (c ? c->heading : "")
                  << "\n";
    }
    if (hits.empty()) std::cout << "no matches\n";
    return 0;
}

Service* g_service = nullptr;

void on_signal(int)
{
    if (g_service) g_service->stop();
}

int cmd_serve(const Common& common, const std::string& bind)
{
    auto rt = Runtime::create(options_from(common));
    auto config = ServiceConfig::from_env();
    if (!bind.empty()) {
        ::setenv("GENONET_BIND_ADDR", bind.c_str(), 1);
        auto parsed = ServiceConfig::from_env();
        config.host = parsed.host;
        config.port = parsed.port;
    }
    Service service(*rt->orchestrator, config);
    int port = service.bind();
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "genonet serving on http://" << config.host << ":" << port << " ("
              << llm::to_string(rt->orchestrator->defaults().provider) << ", "
              << to_string(rt->orchestrator->defaults().backend) << " backend"
              << (config.auth_token.empty() ? ", no auth" : ", bearer auth") << ")\n";
    service.run();
    g_service = nullptr;
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"genonet: generate, run and interpret ns-3 simulations from chat"};
    app.require_subcommand(1);
    Common common;

    auto* chat = app.add_subcommand("chat", "conversation on stdin, one message per line (/attach FILE, /send, /quit)");
    std::string session, overrides;
    bool digest = false, quiet = false;
    add_common(chat, common);
    chat->add_option("--session", session, "session id (resumed from --transcript-dir when it exists)");
    chat->add_option("--overrides", overrides, "session overrides as a JSON object");
    chat->add_flag("--digest", digest, "print the transcript digest at the end");
    chat->add_flag("-q,--quiet", quiet, "no stage events on stderr");

    auto* gen = app.add_subcommand("generate", "write a simulation script for a scenario prompt");
    std::string prompt, dialect = "cpp", mode = "llm_refine", out;
    add_common(gen, common);
    gen->add_option("--prompt", prompt, "scenario description")->required();
    gen->add_option("--dialect", dialect, "cpp or python")->check(CLI::IsMember({"cpp", "python"}));
    gen->add_option("--mode", mode, "scaffold_only or llm_refine")->check(CLI::IsMember({"scaffold_only", "llm_refine"}));
    gen->add_option("-o,--output", out, "script path; a .genonet.json sidecar is written next to it");

    auto* run = app.add_subcommand("run", "execute a script or a known example");
    std::string script, example;
    int timeout_s = 0, max_attempts = 3;
    bool run_json = false;
    add_common(run, common);
    run->add_option("script", script, "script written by `genonet generate`");
    run->add_option("--example", example, "example known to the backend, e.g. cttc-nr-demo");
    run->add_option("--timeout", timeout_s, "run-phase timeout in seconds");
    run->add_option("--max-attempts", max_attempts, "attempts including repairs")->check(CLI::Range(1, 10));
    run->add_flag("--json", run_json, "print the reports as JSON");

    auto* interp = app.add_subcommand("interpret", "summarize FlowMonitor XML or an echo application log");
    std::string kind, file, style = "template";
    bool interp_json = false;
    add_common(interp, common);
    interp->add_option("kind", kind, "flowmon or log")->required()->check(CLI::IsMember({"flowmon", "log"}));
    interp->add_option("file", file, "input file")->required()->check(CLI::ExistingFile);
    interp->add_option("--style", style, "template or llm_polished")->check(CLI::IsMember({"template", "llm_polished"}));
    interp->add_flag("--json", interp_json, "print parsed records instead of a summary");

    auto* ingest = app.add_subcommand("ingest", "chunk and index reference documents");
    std::vector<std::string> paths;
    std::string save;
    ingest->add_option("paths", paths, "files or directories of .txt documents")->required();
    ingest->add_option("--save", save, "write the index as JSON");

    auto* search = app.add_subcommand("search", "rank knowledge chunks for a query");
    std::string query;
    std::size_t k = 4;
    bool search_json = false;
    add_common(search, common);
    search->add_option("query", query, "query text")->required();
    search->add_option("-k", k, "number of hits");
    search->add_flag("--json", search_json, "print hits as JSON");

    auto* serve = app.add_subcommand("serve", "HTTP API with server-sent stage events");
    std::string bind;
    add_common(serve, common);
    serve->add_option("--bind", bind, "host:port (default GENONET_BIND_ADDR or 127.0.0.1:8080)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*chat) return cmd_chat(common, session, overrides, digest, quiet);
        if (*gen) return cmd_generate(common, prompt, dialect, mode, out);
        if (*run) return cmd_run(common, script, example, timeout_s, max_attempts, run_json);
        if (*interp) return cmd_interpret(common, kind, file, style, interp_json);
        if (*ingest) return cmd_ingest(paths, save);
        if (*search) return cmd_search(common, query, k, search_json);
        if (*serve) return cmd_serve(common, bind);
    } catch (const Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
