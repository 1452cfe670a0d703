#pragma once

#include "genonet/clock.hpp"
#include "genonet/codegen.hpp"
#include "genonet/error.hpp"
#include "genonet/llm.hpp"
#include "genonet/process.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace genonet {

enum class Phase { Configure, Build, Run };
/// Outcome class of one attempt. BuildFailed and Timeout are reported, not thrown.
enum class ExecStatus { Ok, BuildFailed, RunFailed, Timeout };
enum class BackendKind { Stub, Ns3 };

std::string_view to_string(Phase p);
std::string_view to_string(ExecStatus s);
std::string_view to_string(BackendKind b);
std::optional<Phase> parse_phase(std::string_view s);
std::optional<BackendKind> parse_backend(std::string_view s);

struct ProducedArtifact {
    std::string name; ///< logical name, e.g. `flowmon`
    std::filesystem::path path;
};

struct ExecutionReport {
    int attempt = 1;
    Phase phase = Phase::Run;
    ExecStatus status = ExecStatus::Ok;
    int exit_status = 0;
    std::string stdout_text;
    std::string stderr_text;
    double wall_time_s = 0;
    std::uint64_t peak_memory_bytes = 0;
    std::vector<ProducedArtifact> artifacts;
    BackendKind backend = BackendKind::Stub;
    std::string target; ///< example-ref, or the script file name for artifacts
    std::string started_at;
    std::string finished_at;

    const ProducedArtifact* artifact(const std::string& name) const;
};

/// Full report including absolute artifact paths.
nlohmann::json to_json(const ExecutionReport& r);
/// Transcript form: artifact paths replaced by file name and content digest,
/// so replayed sessions serialize identically.
nlohmann::json to_record(const ExecutionReport& r);

struct ExecutionLimits {
    std::chrono::milliseconds build_timeout{std::chrono::seconds(300)};
    std::chrono::milliseconds run_timeout{std::chrono::seconds(600)};
    std::uint64_t memory_bytes = 4ull << 30;
};

/// What to execute: a generated script, or an example already known to the
/// backend (`cttc-nr-demo`, `second`).
struct ExecutionTarget {
    std::optional<GeneratedArtifact> artifact;
    std::string example_ref;

    static ExecutionTarget of(GeneratedArtifact a);
    static ExecutionTarget example(std::string ref);
    std::string describe() const;
};

class FixtureMissing : public Error {
public:
    explicit FixtureMissing(std::string key);
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

class BackendUnavailable : public Error {
public:
    BackendUnavailable(std::string backend, const std::string& detail);
};

class ExecutionBackend {
public:
    virtual ~ExecutionBackend() = default;
    virtual BackendKind kind() const = 0;
    /// Runs `target` inside `workdir`, which exists and is empty.
    virtual ExecutionReport execute(const ExecutionTarget& target, const ExecutionLimits& limits,
                                    const std::filesystem::path& workdir) = 0;
};

/// Canned reports. A fixture is a directory holding report.json,
/// stdout.txt, stderr.txt and the declared output files. Artifact lookup
/// tries the source digest, then `spec_digest`; example-refs are looked up
/// by name. Keys resolve through `aliases.tsv` (`key<TAB>fixture-dir`) first,
/// then as a directory name.
class StubBackend final : public ExecutionBackend {
public:
    StubBackend(std::filesystem::path root, Clock& clock);
    /// `<data>/fixtures/stub`
    static std::filesystem::path default_root();

    BackendKind kind() const override { return BackendKind::Stub; }
    ExecutionReport execute(const ExecutionTarget& target, const ExecutionLimits& limits,
                            const std::filesystem::path& workdir) override;

    /// Fixture directory for `target`, or nullopt.
    std::optional<std::filesystem::path> resolve(const ExecutionTarget& target) const;

private:
    std::optional<std::filesystem::path> lookup(const std::string& key) const;

    std::filesystem::path root_;
    Clock& clock_;
    std::map<std::string, std::string> aliases_;
};

/// Real toolchain: stages scripts into `<NS3_ROOT>/scratch`, then runs
/// `./ns3 build` and `./ns3 run` as subprocesses with the run's working
/// directory set to the attempt directory.
class Ns3Backend final : public ExecutionBackend {
public:
    /// Throws BackendUnavailable unless `<root>/ns3` is executable.
    Ns3Backend(std::filesystem::path root, Clock& clock);
    /// Reads NS3_ROOT.
    static std::unique_ptr<Ns3Backend> from_env(Clock& clock);

    BackendKind kind() const override { return BackendKind::Ns3; }
    ExecutionReport execute(const ExecutionTarget& target, const ExecutionLimits& limits,
                            const std::filesystem::path& workdir) override;

    /// Output files collected after a run, by logical name.
    static const std::map<std::string, std::string>& declared_outputs();

private:
    std::filesystem::path root_;
    Clock& clock_;
};

/// Service-wide cap on concurrently running attempts, sized from
/// GENONET_MAX_SANDBOXES (default 2) on first use.
std::counting_semaphore<>& sandbox_slots();

struct DebugAttempt {
    GeneratedArtifact artifact;
    ExecutionReport report;
    /// User message of the repair prompt sent after this attempt, if any.
    std::optional<std::string> repair_prompt;
};

struct DebugOutcome {
    GeneratedArtifact final_artifact;
    std::vector<DebugAttempt> attempts;
    bool resolved = false;
    /// `success`, `exhausted`, `lint-regression`, `timeout` or `gateway-error: ...`
    std::string stop_reason;
    /// Repaired script rejected for structural regression, kept for inspection.
    std::optional<GeneratedArtifact> rejected_artifact;
};

nlohmann::json to_json(const DebugOutcome& o);

class Sandbox {
public:
    /// Attempt directories go under `root`, by default GENONET_SANDBOX_DIR or
    /// `<tmp>/genonet-sandbox`.
    Sandbox(std::shared_ptr<ExecutionBackend> backend, std::filesystem::path root = default_root());
    static std::filesystem::path default_root();

    /// One attempt in a fresh working directory, holding a sandbox slot.
    ExecutionReport execute(const ExecutionTarget& target, const ExecutionLimits& limits = {}, int attempt = 1);

    /// Executes; on BuildFailed or RunFailed asks the gateway for a corrected
    /// script and retries. A correction that fails a structure check the
    /// previous script passed ends the loop. Never throws for attempt
    /// failures; gateway errors end the loop unresolved.
    DebugOutcome debug_loop(const GeneratedArtifact& artifact, llm::LlmGateway& gateway,
                            llm::ProviderMode provider, int max_attempts = 3,
                            const ExecutionLimits& limits = {});

    ExecutionBackend& backend() { return *backend_; }

private:
    std::shared_ptr<ExecutionBackend> backend_;
    std::filesystem::path root_;
};

/// Repair request carrying the full source and the complete stderr.
llm::LlmRequest repair_request(const llm::LlmGateway& gateway, const GeneratedArtifact& artifact,
                               const ExecutionReport& report);

} // namespace genonet
