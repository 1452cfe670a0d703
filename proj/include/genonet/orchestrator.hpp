#pragma once

#include "genonet/clock.hpp"
#include "genonet/codegen.hpp"
#include "genonet/interpret.hpp"
#include "genonet/llm.hpp"
#include "genonet/retrieval.hpp"
#include "genonet/sandbox.hpp"
#include "genonet/transcript.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace genonet {

enum class Route { GeneralQuery, GenerateCpp, GeneratePython, Execute, Interpret, Debug };
enum class DecidedBy { Keyword, Llm };

std::string_view to_string(Route r);
std::string_view to_string(DecidedBy d);
std::optional<Route> parse_route(std::string_view s);

inline constexpr const char* kRouteContract = "route-v1";

struct RouteDecision {
    Route route = Route::GeneralQuery;
    double confidence = 1.0;
    std::string rationale;
    DecidedBy decided_by = DecidedBy::Keyword;
};

nlohmann::json to_json(const RouteDecision& d);

/// Ordered keyword rules, `route<TAB>regex` per line after a `# version N`
/// line. Patterns are ECMAScript, matched case-insensitively; the first
/// matching rule wins. A message with attachments routes to Interpret before
/// any rule is tried.
class RouteTable {
public:
    struct Rule {
        Route route;
        std::string pattern;
        std::regex re;
    };

    static RouteTable parse(std::string_view text);
    static RouteTable load(const std::filesystem::path& path);
    /// `routes.tsv` from the data directory.
    static const RouteTable& builtin();

    std::optional<RouteDecision> match(const std::string& message, bool has_attachments) const;
    const std::string& version() const { return version_; }
    const std::vector<Rule>& rules() const { return rules_; }

private:
    std::string version_;
    std::vector<Rule> rules_;
};

/// Per-session behaviour, fixed when the session is created.
struct SessionModes {
    llm::ProviderMode provider = llm::ProviderMode::Replay;
    BackendKind backend = BackendKind::Stub;
    GenerationMode generation = GenerationMode::LlmRefine;
    SummaryStyle summary = SummaryStyle::Template;
    int max_attempts = 3;
    bool auto_debug = true;
};

nlohmann::json to_json(const SessionModes& m);

class InvalidOverride : public Error {
public:
    explicit InvalidOverride(const std::string& message) : Error("InvalidOverride", message) {}
};

/// Applies `overrides` (keys provider, backend, generation, summary,
/// max_attempts, auto_debug) to `base`. Anything else is InvalidOverride.
SessionModes apply_overrides(SessionModes base, const nlohmann::json& overrides);

struct OrchestratorConfig {
    std::size_t retrieval_k = 4;
    std::size_t context_turns = 6;
    std::size_t context_budget = kDefaultContextBudget;
    ExecutionLimits limits;
    std::filesystem::path sandbox_root = Sandbox::default_root();
    std::filesystem::path stub_root = StubBackend::default_root();
    /// Empty means NS3_ROOT.
    std::filesystem::path ns3_root;
    /// Session directories live here when set; otherwise transcripts stay in memory.
    std::optional<std::filesystem::path> transcript_root;
};

struct Attachment {
    std::string name;
    std::string content;
};

struct TurnInput {
    std::string message;
    std::vector<Attachment> attachments;
};

struct TurnResult {
    nlohmann::json turn; ///< the record appended to the transcript
    std::string reply;
    bool ok = true;
};

/// Receives `(stage, data)` in chain order: routed, retrieving, then one of
/// answering/generating/executing/interpreting, and reply last.
using StageSink = std::function<void(const std::string& stage, const nlohmann::json& data)>;

/// Example name in a message such as "run the cttc-nr-demo example".
std::optional<std::string> named_example(const std::string& message);

class Orchestrator {
public:
    Orchestrator(std::shared_ptr<llm::LlmGateway> gateway, std::shared_ptr<KnowledgeIndex> index, Clock& clock,
                 OrchestratorConfig config = {}, SessionModes defaults = {},
                 const RouteTable& routes = RouteTable::builtin());

    /// New empty session. `id` is generated (128 random bits, hex) when absent.
    SessionInfo create_session(const nlohmann::json& overrides = nlohmann::json::object(),
                               std::optional<std::string> id = std::nullopt);
    /// Transcript of a known session, loading it from the transcript root if
    /// needed. Throws SessionNotFound.
    std::shared_ptr<SessionTranscript> transcript(const std::string& session_id);

    RouteDecision route(const std::string& message, bool has_attachments, const SessionTranscript& session,
                        llm::ProviderMode provider);

    /// Runs the route's chain and appends exactly one turn. Chain failures
    /// are recorded in the turn (`error.code` = TurnFailed) and in the reply;
    /// only an unknown session or an empty message throws. Turns of one
    /// session are serialized.
    TurnResult handle_turn(const std::string& session_id, const TurnInput& input, const StageSink& sink = {});

    /// Last `k` turns, oldest first, as "User: ...\nAssistant: ...". Oldest
    /// turns are dropped until the text fits the context budget.
    std::string render_context(const SessionTranscript& session, std::size_t k) const;

    const SessionModes& defaults() const { return defaults_; }
    const OrchestratorConfig& config() const { return config_; }
    llm::LlmGateway& gateway() { return *gateway_; }

private:
    struct Entry {
        std::shared_ptr<SessionTranscript> transcript;
        SessionModes modes;
        std::shared_ptr<std::mutex> turn_mutex;
    };

    Entry& entry(const std::string& session_id);

    std::shared_ptr<llm::LlmGateway> gateway_;
    std::shared_ptr<KnowledgeIndex> index_;
    Clock& clock_;
    OrchestratorConfig config_;
    SessionModes defaults_;
    const RouteTable& routes_;
    std::mutex sessions_mutex_;
    std::map<std::string, Entry> sessions_;
};

} // namespace genonet
