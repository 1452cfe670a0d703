#include "genonet/sandbox.hpp"

#include "genonet/text.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace genonet {

namespace fs = std::filesystem;

std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::Configure: return "configure";
    case Phase::Build: return "build";
    case Phase::Run: return "run";
    }
    return "run";
}

std::string_view to_string(ExecStatus s)
{
    switch (s) {
    case ExecStatus::Ok: return "ok";
    case ExecStatus::BuildFailed: return "build-failed";
    case ExecStatus::RunFailed: return "run-failed";
    case ExecStatus::Timeout: return "timeout";
    }
    return "ok";
}

std::string_view to_string(BackendKind b)
{
    return b == BackendKind::Stub ? "stub" : "ns3";
}

std::optional<Phase> parse_phase(std::string_view s)
{
    if (s == "configure") return Phase::Configure;
    if (s == "build") return Phase::Build;
    if (s == "run") return Phase::Run;
    return std::nullopt;
}

std::optional<BackendKind> parse_backend(std::string_view s)
{
    if (s == "stub") return BackendKind::Stub;
    if (s == "ns3") return BackendKind::Ns3;
    return std::nullopt;
}

const ProducedArtifact* ExecutionReport::artifact(const std::string& name) const
{
    for (const auto& a : artifacts)
        if (a.name == name) return &a;
    return nullptr;
}

namespace {

nlohmann::json report_common(const ExecutionReport& r)
{
    return {
        {"attempt", r.attempt},
        {"phase", to_string(r.phase)},
        {"status", to_string(r.status)},
        {"exit_status", r.exit_status},
        {"stdout", r.stdout_text},
        {"stderr", r.stderr_text},
        {"wall_time_s", r.wall_time_s},
        {"peak_memory_bytes", r.peak_memory_bytes},
        {"backend", to_string(r.backend)},
        {"target", r.target},
        {"started_at", r.started_at},
        {"finished_at", r.finished_at},
    };
}

ExecStatus status_for(Phase phase, int exit_status, bool timed_out)
{
    if (timed_out) return ExecStatus::Timeout;
    if (exit_status == 0) return ExecStatus::Ok;
    return phase == Phase::Run ? ExecStatus::RunFailed : ExecStatus::BuildFailed;
}

} // namespace

nlohmann::json to_json(const ExecutionReport& r)
{
    auto j = report_common(r);
    auto arts = nlohmann::json::array();
    for (const auto& a : r.artifacts) arts.push_back({{"name", a.name}, {"path", a.path.string()}});
    j["artifacts"] = arts;
    return j;
}

nlohmann::json to_record(const ExecutionReport& r)
{
    auto j = report_common(r);
    auto arts = nlohmann::json::array();
    for (const auto& a : r.artifacts) {
        std::string digest;
        if (fs::exists(a.path)) digest = sha256(read_file(a.path)).hex();
        arts.push_back({{"name", a.name}, {"file", a.path.filename().string()}, {"sha256", digest}});
    }
    j["artifacts"] = arts;
    return j;
}

ExecutionTarget ExecutionTarget::of(GeneratedArtifact a)
{
    ExecutionTarget t;
    t.artifact = std::move(a);
    return t;
}

ExecutionTarget ExecutionTarget::example(std::string ref)
{
    ExecutionTarget t;
    t.example_ref = std::move(ref);
    return t;
}

std::string ExecutionTarget::describe() const
{
    if (artifact) return artifact->file_name() + " (sha256 " + sha256(artifact->source).hex().substr(0, 12) + ")";
    return example_ref;
}

FixtureMissing::FixtureMissing(std::string key)
    : Error("FixtureMissing", "no stub fixture registered for " + key), key_(std::move(key))
{
}

BackendUnavailable::BackendUnavailable(std::string backend, const std::string& detail)
    : Error("BackendUnavailable", backend + " backend unavailable: " + detail)
{
}

// ---------------------------------------------------------------------------
// Stub

StubBackend::StubBackend(fs::path root, Clock& clock) : root_(std::move(root)), clock_(clock)
{
    auto alias_file = root_ / "aliases.tsv";
    if (!fs::exists(alias_file)) return;
    std::istringstream in(read_file(alias_file));
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto tab = t.find('\t');
        if (tab == std::string::npos) throw InvalidArgument("aliases.tsv: expected key<TAB>dir in '" + t + "'");
        aliases_[trim(t.substr(0, tab))] = trim(t.substr(tab + 1));
    }
}

fs::path StubBackend::default_root()
{
    return data_dir() / "fixtures" / "stub";
}

std::optional<fs::path> StubBackend::lookup(const std::string& key) const
{
    if (key.empty() || key.find('/') != std::string::npos || key.find("..") != std::string::npos) return std::nullopt;
    auto a = aliases_.find(key);
    fs::path dir = root_ / (a == aliases_.end() ? key : a->second);
    if (fs::is_directory(dir) && fs::exists(dir / "report.json")) return dir;
    return std::nullopt;
}

std::optional<fs::path> StubBackend::resolve(const ExecutionTarget& target) const
{
    if (target.artifact) {
        if (auto d = lookup(sha256(target.artifact->source).hex())) return d;
        return lookup(target.artifact->spec_digest.hex());
    }
    return lookup(target.example_ref);
}

ExecutionReport StubBackend::execute(const ExecutionTarget& target, const ExecutionLimits&, const fs::path& workdir)
{
    auto dir = resolve(target);
    if (!dir) {
        throw FixtureMissing(target.artifact ? "spec digest " + target.artifact->spec_digest.hex() + " (source " +
                                                   sha256(target.artifact->source).hex() + ")"
                                             : "example '" + target.example_ref + "'");
    }
    auto canned = nlohmann::json::parse(read_file(*dir / "report.json"));
    ExecutionReport r;
    r.backend = BackendKind::Stub;
    r.target = target.describe();
    r.started_at = format_iso8601(clock_.now());
    auto phase = parse_phase(canned.value("phase", "run"));
    if (!phase) throw InvalidArgument("fixture " + dir->string() + ": bad phase");
    r.phase = *phase;
    r.exit_status = canned.value("exit_status", 0);
    r.status = status_for(r.phase, r.exit_status, canned.value("timed_out", false));
    r.wall_time_s = canned.value("wall_time_s", 0.0);
    r.peak_memory_bytes = canned.value("peak_memory_bytes", std::uint64_t{0});
    if (fs::exists(*dir / "stdout.txt")) r.stdout_text = read_file(*dir / "stdout.txt");
    if (fs::exists(*dir / "stderr.txt")) r.stderr_text = read_file(*dir / "stderr.txt");
    if (target.artifact) write_file(workdir / target.artifact->file_name(), target.artifact->source);
    for (const auto& a : canned.value("artifacts", nlohmann::json::array())) {
        std::string file = a.at("file").get<std::string>();
        fs::path dst = workdir / fs::path(file).filename();
        fs::copy_file(*dir / file, dst, fs::copy_options::overwrite_existing);
        r.artifacts.push_back({a.at("name").get<std::string>(), dst});
    }
    r.finished_at = format_iso8601(clock_.now());
    return r;
}

// ---------------------------------------------------------------------------
// ns-3

Ns3Backend::Ns3Backend(fs::path root, Clock& clock) : root_(std::move(root)), clock_(clock)
{
    if (root_.empty()) throw BackendUnavailable("ns3", "NS3_ROOT is not set");
    auto driver = root_ / "ns3";
    if (!fs::exists(driver) || ::access(driver.c_str(), X_OK) != 0)
        throw BackendUnavailable("ns3", "no executable ns3 driver in " + root_.string());
    root_ = fs::canonical(root_);
}

std::unique_ptr<Ns3Backend> Ns3Backend::from_env(Clock& clock)
{
    return std::make_unique<Ns3Backend>(env_or("NS3_ROOT", ""), clock);
}

const std::map<std::string, std::string>& Ns3Backend::declared_outputs()
{
    static const std::map<std::string, std::string> m{{"flowmon", "flowmon.xml"}};
    return m;
}

ExecutionReport Ns3Backend::execute(const ExecutionTarget& target, const ExecutionLimits& limits,
                                    const fs::path& workdir)
{
    ExecutionReport r;
    r.backend = BackendKind::Ns3;
    r.target = target.describe();
    r.started_at = format_iso8601(clock_.now());

    auto env = allowed_environment();
    env["NS3_ROOT"] = root_.string();
    std::string driver = (root_ / "ns3").string();

    std::optional<fs::path> staged;
    std::string program = target.example_ref;
    bool python = false;
    if (target.artifact) {
        const auto& a = *target.artifact;
        python = a.dialect == Dialect::Python;
        std::string stem = "genonet-" + sha256(a.source).hex().substr(0, 16);
        staged = root_ / "scratch" / (stem + (python ? ".py" : ".cc"));
        write_file(*staged, a.source);
        write_file(workdir / a.file_name(), a.source);
        program = python ? "scratch/" + stem + ".py" : stem;
    }

    auto step = [&](Phase phase, std::vector<std::string> argv, std::chrono::milliseconds timeout) {
        ProcessSpec spec{std::move(argv), root_, env};
        auto res = run_process(spec, ProcessLimits{timeout, limits.memory_bytes});
        r.phase = phase;
        r.exit_status = res.exit_status;
        r.stdout_text += res.out;
        r.stderr_text += res.err;
        r.wall_time_s += res.wall_time_s;
        r.peak_memory_bytes = std::max(r.peak_memory_bytes, res.peak_rss_bytes);
        r.status = status_for(phase, res.exit_status, res.timed_out);
        return r.status == ExecStatus::Ok;
    };

    bool ok = true;
    if (!fs::exists(root_ / "cmake-cache"))
        ok = step(Phase::Configure, {driver, "configure", "--enable-examples"}, limits.build_timeout);
    if (ok && !python) ok = step(Phase::Build, {driver, "build", program}, limits.build_timeout);
    if (ok) {
        ok = step(Phase::Run, {driver, "run", program, "--no-build", "--cwd=" + fs::absolute(workdir).string()},
                  limits.run_timeout);
    }
    if (staged) {
        std::error_code ec;
        fs::remove(*staged, ec);
    }
    for (const auto& [name, file] : declared_outputs()) {
        auto p = workdir / file;
        if (fs::exists(p)) r.artifacts.push_back({name, p});
    }
    r.finished_at = format_iso8601(clock_.now());
    return r;
}

// ---------------------------------------------------------------------------
// Sandbox

std::counting_semaphore<>& sandbox_slots()
{
    static std::counting_semaphore<> slots([] {
        long n = std::strtol(env_or("GENONET_MAX_SANDBOXES", "2").c_str(), nullptr, 10);
        return static_cast<std::ptrdiff_t>(n > 0 ? n : 2);
    }());
    return slots;
}

Sandbox::Sandbox(std::shared_ptr<ExecutionBackend> backend, fs::path root)
    : backend_(std::move(backend)), root_(std::move(root))
{
    if (!backend_) throw InvalidArgument("sandbox needs a backend");
}

fs::path Sandbox::default_root()
{
    return env_or("GENONET_SANDBOX_DIR", (fs::temp_directory_path() / "genonet-sandbox").string());
}

ExecutionReport Sandbox::execute(const ExecutionTarget& target, const ExecutionLimits& limits, int attempt)
{
    if (limits.build_timeout.count() <= 0 || limits.run_timeout.count() <= 0)
        throw InvalidArgument("timeouts must be positive");
    if (attempt < 1) throw InvalidArgument("attempt ordinals start at 1");
    static std::atomic<std::uint64_t> counter{0};
    std::string key = target.artifact ? sha256(target.artifact->source).hex().substr(0, 12) : target.example_ref;
    for (auto& c : key)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    fs::path workdir = root_ / (key + "-" + std::to_string(::getpid()) + "-" + std::to_string(++counter) + "-a" +
                                std::to_string(attempt));
    fs::create_directories(workdir);

    auto& slots = sandbox_slots();
    slots.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{slots};
    auto report = backend_->execute(target, limits, workdir);
    report.attempt = attempt;
    return report;
}

llm::LlmRequest repair_request(const llm::LlmGateway& gateway, const GeneratedArtifact& artifact,
                               const ExecutionReport& report)
{
    std::string lang = artifact.dialect == Dialect::Cpp ? "cpp" : "python";
    std::string source = artifact.source;
    if (!source.empty() && source.back() != '\n') source += '\n';
    std::string err = report.stderr_text;
    if (!err.empty() && err.back() != '\n') err += '\n';
    auto req = gateway.request(
        "You repair ns-3 simulation scripts. Reply with the complete corrected script in one fenced code block "
        "and nothing else. Keep every @genonet marker comment line unchanged.",
        "The script " + artifact.file_name() + " failed in the " + std::string(to_string(report.phase)) +
            " phase with exit status " + std::to_string(report.exit_status) + ".\n\nScript:\n```" + lang + "\n" +
            source + "```\n\nstderr:\n```\n" + err + "```\n");
    req.temperature = 0.0;
    req.max_tokens = 8192;
    return req;
}

namespace {

bool regressed(const StructureReport& before, const StructureReport& after)
{
    for (const auto& c : before.checks) {
        if (!c.passed) continue;
        auto* now = after.find(c.id);
        if (!now || !now->passed) return true;
    }
    return false;
}

} // namespace

DebugOutcome Sandbox::debug_loop(const GeneratedArtifact& artifact, llm::LlmGateway& gateway,
                                 llm::ProviderMode provider, int max_attempts, const ExecutionLimits& limits)
{
    if (max_attempts < 1) throw InvalidArgument("max_attempts must be at least 1");
    DebugOutcome out;
    GeneratedArtifact current = artifact;
    for (int n = 1; n <= max_attempts; ++n) {
        auto report = execute(ExecutionTarget::of(current), limits, n);
        out.attempts.push_back({current, report, std::nullopt});
        if (report.status == ExecStatus::Ok) {
            out.resolved = true;
            out.stop_reason = "success";
            break;
        }
        if (report.status == ExecStatus::Timeout) {
            out.stop_reason = "timeout";
            break;
        }
        if (n == max_attempts) {
            out.stop_reason = "exhausted";
            break;
        }
        auto req = repair_request(gateway, current, report);
        out.attempts.back().repair_prompt = req.messages.at(1).content;
        std::string fixed;
        try {
            fixed = strip_code_fence(gateway.complete(req, provider).text);
        } catch (const Error& e) {
            out.stop_reason = "gateway-error: " + e.code();
            break;
        }
        GeneratedArtifact next = current;
        next.source = fixed;
        bool structural = true;
        try {
            next.sections = scan_sections(next.source, next.dialect, current.sections);
        } catch (const InvalidArgument&) {
            structural = false;
        }
        if (!structural || regressed(lint_structure(current), lint_structure(next))) {
            out.rejected_artifact = next;
            out.stop_reason = "lint-regression";
            break;
        }
        current = std::move(next);
    }
    out.final_artifact = current;
    return out;
}

nlohmann::json to_json(const DebugOutcome& o)
{
    auto attempts = nlohmann::json::array();
    for (const auto& a : o.attempts) {
        attempts.push_back({
            {"source_sha256", sha256(a.artifact.source).hex()},
            {"report", to_record(a.report)},
            {"repair_prompt", a.repair_prompt ? nlohmann::json(*a.repair_prompt) : nlohmann::json(nullptr)},
        });
    }
    nlohmann::json j{
        {"resolved", o.resolved},
        {"stop_reason", o.stop_reason},
        {"attempts", attempts},
        {"final_source_sha256", sha256(o.final_artifact.source).hex()},
    };
    if (o.rejected_artifact) j["rejected_source_sha256"] = sha256(o.rejected_artifact->source).hex();
    return j;
}

} // namespace genonet
