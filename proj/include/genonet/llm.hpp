#pragma once

#include "genonet/digest.hpp"
#include "genonet/error.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace genonet::llm {

enum class Role { System, User, Assistant };
enum class ProviderMode { Live, Replay, Record };
enum class FinishReason { Stop, Length, Error };
enum class Provenance { Live, Replay };

std::string_view to_string(Role r);
std::string_view to_string(ProviderMode m);
std::string_view to_string(FinishReason f);
std::string_view to_string(Provenance p);
std::optional<ProviderMode> parse_provider_mode(std::string_view s);

struct Message {
    Role role;
    std::string content;
};

struct LlmRequest {
    std::vector<Message> messages;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 1024;
    /// Named output schema; when set the gateway validates and repairs.
    std::optional<std::string> contract;
    /// Volatile fields (session ids, timestamps). Never part of the digest.
    std::map<std::string, std::string> metadata;
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct LlmResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    Usage usage;
    Provenance provenance = Provenance::Replay;
};

class InvalidRequest : public Error {
public:
    explicit InvalidRequest(const std::string& message) : Error("InvalidRequest", message) {}
};

class CassetteMiss : public Error {
public:
    explicit CassetteMiss(const Digest& digest);
    const Digest& digest() const { return digest_; }

private:
    Digest digest_;
};

class TransportError : public Error {
public:
    TransportError(const std::string& message, int retries = 0);
    int retries() const { return retries_; }
    const std::string& detail() const { return detail_; }

private:
    std::string detail_;
    int retries_;
};

class ContractViolation : public Error {
public:
    ContractViolation(std::string contract, const std::string& detail);
    const std::string& contract() const { return contract_; }

private:
    std::string contract_;
};

/// Throws InvalidRequest when an invariant does not hold: non-empty
/// messages, system message first, temperature in [0, 2], temperature 0
/// whenever a contract is set.
void check_request(const LlmRequest& req);

/// Canonical form used for hashing: volatile metadata stripped, whitespace
/// runs in message text collapsed.
nlohmann::json canonical_request(const LlmRequest& req);
Digest normalize_request(const LlmRequest& req);

nlohmann::json to_json(const LlmResponse& r);
LlmResponse response_from_json(const nlohmann::json& j);

/// Network leg of a live call. Implementations throw TransportError.
class Transport {
public:
    virtual ~Transport() = default;
    virtual LlmResponse send(const LlmRequest& req, std::chrono::milliseconds timeout) = 0;
};

/// OpenAI-compatible chat-completions over HTTP(S).
class HttpTransport final : public Transport {
public:
    HttpTransport(std::string base_url, std::string api_key);
    LlmResponse send(const LlmRequest& req, std::chrono::milliseconds timeout) override;

private:
    std::string origin_;
    std::string path_prefix_;
    std::string api_key_;
};

/// Request-digest -> recorded response store. Backed by a newline-delimited
/// JSON file: one header record, then one `{digest, request, response}`
/// record per line. Lookups read an immutable snapshot; appends go through
/// a single writer.
class Cassette {
public:
    struct Record {
        nlohmann::json request;
        LlmResponse response;
    };

    Cassette() = default;
    /// `recorded_at` is stamped on first append when empty.
    explicit Cassette(std::string model_id, std::string recorded_at = "");

    static std::shared_ptr<Cassette> load(const std::filesystem::path& path);
    /// Loads `path` if it exists, otherwise starts empty; appends persist to it.
    static std::shared_ptr<Cassette> open_for_append(const std::filesystem::path& path);

    std::optional<LlmResponse> find(const Digest& digest) const;
    void append(const Digest& digest, const LlmRequest& req, const LlmResponse& resp);
    std::size_t size() const;
    void save(const std::filesystem::path& path) const;

    const std::string& model_id() const { return model_id_; }
    const std::string& recorded_at() const { return recorded_at_; }

private:
    using Entries = std::map<std::string, Record>;

    std::string serialize_header() const;
    static std::string serialize_record(const std::string& digest, const Record& rec);

    std::shared_ptr<const Entries> entries_ = std::make_shared<const Entries>();
    mutable std::mutex writer_;
    std::optional<std::filesystem::path> file_;
    std::string model_id_;
    std::string recorded_at_;
};

/// Contract id -> validator. A validator returns an error message for
/// non-conforming output, or nullopt.
class SchemaRegistry {
public:
    using Validator = std::function<std::optional<std::string>(const std::string& text)>;

    /// Registry with the built-in `scenario-spec-v1` and `route-v1` schemas.
    static SchemaRegistry with_builtins();

    void add(std::string id, Validator v);
    bool contains(const std::string& id) const;
    std::optional<std::string> check(const std::string& id, const std::string& text) const;

private:
    std::map<std::string, Validator> validators_;
};

/// Extracts the first JSON object from model output, tolerating code fences
/// and surrounding prose.
std::optional<nlohmann::json> extract_json_object(const std::string& text);

struct GatewayConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    std::string model = "gpt-4o";
    std::chrono::milliseconds timeout{std::chrono::seconds(60)};
    int max_retries = 2;

    /// Reads LLM_API_BASE, LLM_API_KEY, LLM_MODEL and LLM_TIMEOUT_S.
    static GatewayConfig from_env();
};

/// The single choke point for model calls.
class LlmGateway {
public:
    LlmGateway(GatewayConfig config, std::shared_ptr<Cassette> cassette,
               std::shared_ptr<Transport> transport = nullptr,
               SchemaRegistry schemas = SchemaRegistry::with_builtins());

    LlmResponse complete(const LlmRequest& req, ProviderMode mode);

    const GatewayConfig& config() const { return config_; }
    const Cassette& cassette() const { return *cassette_; }

    /// Request skeleton with the configured model id.
    LlmRequest request(std::string system, std::string user) const;

private:
    LlmResponse dispatch(const LlmRequest& req, ProviderMode mode);
    LlmResponse live_call(const LlmRequest& req);
    Transport& transport();

    GatewayConfig config_;
    std::shared_ptr<Cassette> cassette_;
    std::shared_ptr<Transport> transport_;
    std::mutex transport_init_;
    SchemaRegistry schemas_;
};

/// Text of the repair turn appended after a contract failure.
std::string repair_instruction(const std::string& contract, const std::string& error);

} // namespace genonet::llm
