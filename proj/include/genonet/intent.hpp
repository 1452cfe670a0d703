#pragma once

#include "genonet/error.hpp"
#include "genonet/llm.hpp"
#include "genonet/scenario.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace genonet {

inline constexpr const char* kScenarioSpecContract = "scenario-spec-v1";

enum class FieldSource { Llm, Rule, Default };

std::string_view to_string(FieldSource s);

struct FieldValue {
    std::string text;
    FieldSource source;
};

/// Candidate values per ScenarioSpec field, tagged by where they came from.
/// Field names are canonical (see `scenario_field_names`).
class PartialSpec {
public:
    /// Records a candidate; the first candidate per (field, source) sticks.
    void add(std::string_view field, std::string text, FieldSource source);

    std::optional<std::string> get(const std::string& field, FieldSource source) const;
    /// Highest-precedence candidate: llm over rule.
    std::optional<FieldValue> resolved(const std::string& field) const;

    bool empty() const { return candidates_.empty(); }
    std::size_t field_count() const { return candidates_.size(); }
    const std::map<std::string, std::map<FieldSource, std::string>>& candidates() const { return candidates_; }

private:
    std::map<std::string, std::map<FieldSource, std::string>> candidates_;
};

nlohmann::json to_json(const PartialSpec& p);

/// Surface form -> canonical enumeration value, loaded from a versioned
/// two-column text file.
class KeywordTable {
public:
    struct Entry {
        std::string surface; ///< lower-cased
        std::string canonical;
        std::string field;
    };

    static KeywordTable load(const std::filesystem::path& path);
    static KeywordTable parse(std::string_view text);
    /// `keywords.tsv` from the data directory, cached after first load.
    static const KeywordTable& builtin();

    const std::string& version() const { return version_; }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::string version_;
    std::vector<Entry> entries_;
};

/// Deterministic pattern pass. All fields tagged FieldSource::Rule.
PartialSpec rule_fallback_extract(std::string_view prompt, const KeywordTable& table);
PartialSpec rule_fallback_extract(std::string_view prompt);

class ExtractionEmpty : public Error {
public:
    ExtractionEmpty() : Error("ExtractionEmpty", "no scenario fields recognized in the prompt") {}
};

struct Disagreement {
    std::string field;
    std::string llm_value;
    std::string rule_value;
};

struct MergeResult {
    ScenarioSpec spec;
    std::map<std::string, FieldSource> provenance;
    std::vector<Disagreement> disagreements;
};

nlohmann::json to_json(const MergeResult& m);

/// Precedence llm > rule > default, then normalize_units and validate.
/// Throws SpecInvalid carrying the report when validation fails.
MergeResult merge_and_default(const PartialSpec& p);

/// Validator for the `scenario-spec-v1` contract.
std::optional<std::string> check_scenario_spec_output(const std::string& text);

class IntentExtractor {
public:
    explicit IntentExtractor(llm::LlmGateway& gateway, const KeywordTable& table = KeywordTable::builtin());

    /// One schema-constrained gateway call plus the rule pass as cross-check.
    /// `context` is retrieved reference text (may be empty).
    PartialSpec extract_intent(std::string_view prompt, std::string_view context, llm::ProviderMode mode) const;

    llm::LlmRequest build_request(std::string_view prompt, std::string_view context) const;

private:
    llm::LlmGateway& gateway_;
    const KeywordTable& table_;
};

} // namespace genonet
