#pragma once

// Scripted stand-in model and the canned sessions behind the committed
// cassettes and stub fixtures. Shared by genonet-fixtures, the acceptance
// binary and the tests.

#include "genonet/codegen.hpp"
#include "genonet/llm.hpp"
#include "genonet/orchestrator.hpp"
#include "genonet/sandbox.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace genonet::demo {

inline constexpr const char* kModelId = "genonet-demo-model";
inline constexpr const char* kRecordedAt = "2024-01-01T00:00:00.000Z";
inline constexpr const char* kSessionId = "demo";

extern const char* const kXrPrompt;

/// Deterministic rule-based replies keyed on the request's system prompt.
/// It extracts with the keyword rules, echoes section bodies back with a
/// comment line, inserts a missing `;` after CheckForLostPackets() and
/// otherwise returns scripts unchanged.
class DemoModel final : public llm::Transport {
public:
    llm::LlmResponse send(const llm::LlmRequest& req, std::chrono::milliseconds timeout) override;
};

/// Gateway over `cassette` with the demo model id; `transport` defaults to
/// a DemoModel.
std::shared_ptr<llm::LlmGateway> gateway(std::shared_ptr<llm::Cassette> cassette,
                                         std::shared_ptr<llm::Transport> transport = std::make_shared<DemoModel>());

/// User messages of the scripted session: question, XR generation, run, interpret.
const std::vector<std::string>& session_script();

enum class Fault { MissingSemicolon, UndeclaredIdentifier };

/// Template-mode C++ scaffold of the XR scenario.
GeneratedArtifact xr_artifact(Clock& clock);
GeneratedArtifact inject(const GeneratedArtifact& a, Fault f);
/// Fixture directory name of a broken build.
std::string fixture_name(Fault f);

struct SessionRun {
    std::vector<TurnResult> turns;
    std::shared_ptr<SessionTranscript> transcript;
};

struct Roots {
    std::filesystem::path stub;
    std::filesystem::path sandbox;
    std::filesystem::path corpus;
};

/// Runs session_script() in a fresh orchestrator with a stepping clock.
SessionRun run_session(std::shared_ptr<llm::LlmGateway> gw, llm::ProviderMode mode, const Roots& roots);

/// Debug loop over the faulted XR scaffold on the stub backend.
DebugOutcome run_debug(llm::LlmGateway& gw, llm::ProviderMode mode, Fault f, const Roots& roots, int max_attempts = 3);

/// Regenerates broken-build fixtures, aliases.tsv and the cassettes
/// (demo, debug-fix, debug-exhaust) under `out`, taking hand-written stub
/// fixtures and the corpus from `data`. Returns the written files relative
/// to `out`.
std::vector<std::filesystem::path> generate(const std::filesystem::path& data, const std::filesystem::path& out);

} // namespace genonet::demo
