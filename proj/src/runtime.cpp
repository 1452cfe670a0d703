#include "genonet/runtime.hpp"

#include "genonet/text.hpp"

namespace genonet {

namespace fs = std::filesystem;

RuntimeOptions RuntimeOptions::from_env()
{
    RuntimeOptions o;
    auto provider = env_or("GENONET_PROVIDER", "replay");
    auto p = llm::parse_provider_mode(provider);
    if (!p) throw InvalidArgument("GENONET_PROVIDER must be live, replay or record, not '" + provider + "'");
    o.provider = *p;
    auto backend = env_or("GENONET_BACKEND", "stub");
    auto b = parse_backend(backend);
    if (!b) throw InvalidArgument("GENONET_BACKEND must be stub or ns3, not '" + backend + "'");
    o.backend = *b;
    o.cassette = env_or("GENONET_CASSETTE", (data_dir() / "cassettes" / "demo.ndjson").string());
    if (auto index = env_or("GENONET_INDEX", ""); !index.empty()) o.index_file = index;
    o.corpus = env_or("GENONET_CORPUS_DIR", (data_dir() / "corpus").string());
    if (auto dir = env_or("GENONET_TRANSCRIPT_DIR", ""); !dir.empty()) o.transcript_root = dir;
    return o;
}

std::unique_ptr<Runtime> Runtime::create(const RuntimeOptions& options, OrchestratorConfig config)
{
    auto rt = std::make_unique<Runtime>();
    bool stepping = options.deterministic_clock.value_or(options.provider == llm::ProviderMode::Replay);
    if (stepping)
        rt->clock = std::make_unique<SteppingClock>();
    else
        rt->clock = std::make_unique<SystemClock>();

    auto gw_config = llm::GatewayConfig::from_env();
    switch (options.provider) {
    case llm::ProviderMode::Replay:
        rt->cassette = fs::exists(options.cassette) ? llm::Cassette::load(options.cassette)
                                                    : std::make_shared<llm::Cassette>();
        if (!rt->cassette->model_id().empty()) gw_config.model = rt->cassette->model_id();
        break;
    case llm::ProviderMode::Record:
        rt->cassette = llm::Cassette::open_for_append(options.cassette);
        break;
    case llm::ProviderMode::Live:
        rt->cassette = std::make_shared<llm::Cassette>();
        break;
    }
    rt->gateway = std::make_shared<llm::LlmGateway>(gw_config, rt->cassette);

    if (options.index_file) {
        rt->index = std::shared_ptr<KnowledgeIndex>(KnowledgeIndex::load(*options.index_file));
    } else {
        rt->index = std::make_shared<KnowledgeIndex>();
        if (fs::is_directory(options.corpus)) rt->index->ingest_directory(options.corpus);
    }

    if (options.transcript_root) config.transcript_root = options.transcript_root;
    SessionModes modes;
    modes.provider = options.provider;
    modes.backend = options.backend;
    rt->orchestrator = std::make_unique<Orchestrator>(rt->gateway, rt->index, *rt->clock, config, modes);
    return rt;
}

} // namespace genonet
