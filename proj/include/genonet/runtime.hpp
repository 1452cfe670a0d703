#pragma once

#include "genonet/orchestrator.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace genonet {

/// Process-wide wiring shared by the CLI and the HTTP service.
struct RuntimeOptions {
    llm::ProviderMode provider = llm::ProviderMode::Replay;
    BackendKind backend = BackendKind::Stub;
    std::filesystem::path cassette;
    /// Saved index (`genonet ingest --save`); the corpus directory is used when unset.
    std::optional<std::filesystem::path> index_file;
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> transcript_root;
    /// Stepping clock from 2024-01-01Z; defaults to on for replay.
    std::optional<bool> deterministic_clock;

    /// GENONET_PROVIDER, GENONET_BACKEND, GENONET_CASSETTE, GENONET_INDEX,
    /// GENONET_CORPUS_DIR and GENONET_TRANSCRIPT_DIR over the defaults
    /// (replay, stub, `<data>/cassettes/demo.ndjson`, `<data>/corpus`).
    static RuntimeOptions from_env();
};

struct Runtime {
    std::unique_ptr<Clock> clock;
    std::shared_ptr<llm::Cassette> cassette;
    std::shared_ptr<llm::LlmGateway> gateway;
    std::shared_ptr<KnowledgeIndex> index;
    std::unique_ptr<Orchestrator> orchestrator;

    /// In replay mode the request model id is taken from the cassette header,
    /// so recorded sessions replay whatever LLM_MODEL says.
    static std::unique_ptr<Runtime> create(const RuntimeOptions& options, OrchestratorConfig config = {});
};

} // namespace genonet
