#pragma once

#include "genonet/clock.hpp"
#include "genonet/error.hpp"
#include "genonet/llm.hpp"
#include "genonet/scenario.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace genonet {

enum class Dialect { Cpp, Python };
enum class SectionProvenance { Scaffold, Llm };
enum class GenerationMode { ScaffoldOnly, LlmRefine };

std::string_view to_string(Dialect d);
std::string_view to_string(SectionProvenance p);
std::string_view to_string(GenerationMode m);
std::optional<Dialect> parse_dialect(std::string_view s);
std::optional<GenerationMode> parse_generation_mode(std::string_view s);

/// Section ids in emission order. `namespace` is emitted for cpp only.
const std::vector<std::string>& section_ids();
/// Sections whose bodies may be elaborated by the model.
const std::vector<std::string>& refinable_section_ids();

struct SectionRange {
    std::size_t begin = 0; ///< first byte of the body
    std::size_t end = 0;   ///< one past the last byte of the body
    SectionProvenance provenance = SectionProvenance::Scaffold;
};

struct GeneratedArtifact {
    Dialect dialect = Dialect::Cpp;
    std::string source;
    std::map<std::string, SectionRange> sections;
    ScenarioSpec spec;
    Digest spec_digest;
    std::string generated_at;

    /// `genonet-scenario.cc` or `genonet-scenario.py`.
    std::string file_name() const;
    std::string section_body(const std::string& id) const;
};

nlohmann::json to_json(const GeneratedArtifact& a);
GeneratedArtifact artifact_from_json(const nlohmann::json& j);

/// Rebuilds the section map by scanning the marker comments in `source`.
/// Provenance is taken from `previous` where a section is known, else scaffold.
std::map<std::string, SectionRange> scan_sections(const std::string& source, Dialect dialect,
                                                  const std::map<std::string, SectionRange>& previous = {});

struct Combination {
    HelperStack stack;
    TrafficProfile traffic;
    Transport transport;

    bool operator==(const Combination&) const = default;
};

std::string to_string(const Combination& c);

/// (helper_stack, traffic_profile, transport) triples that have templates.
const std::vector<Combination>& coverage_matrix();

/// Covered combination minimizing 4*[stack differs] + 2*[traffic differs] +
/// [transport differs]; ties go to the earlier matrix entry.
Combination nearest_supported(const Combination& c);

class UnsupportedCombination : public Error {
public:
    UnsupportedCombination(Combination requested, Combination nearest);
    const Combination& requested() const { return requested_; }
    const Combination& nearest() const { return nearest_; }

private:
    Combination requested_;
    Combination nearest_;
};

struct StructureCheck {
    std::string id;
    bool passed = false;
    std::string detail;
};

struct StructureReport {
    std::vector<StructureCheck> checks;
    bool ok = false;

    const StructureCheck* find(const std::string& id) const;
};

nlohmann::json to_json(const StructureReport& r);

/// Check ids in order: includes, namespace, log-component, helper,
/// node-counts, channel, traffic, attachment, run-teardown.
const std::vector<std::string>& structure_check_ids();

/// Presence and relative order of the structural elements, with spec
/// literals matched exactly. Pure text analysis.
StructureReport lint_structure(const GeneratedArtifact& artifact);
StructureReport lint_structure(const std::string& source, Dialect dialect, const ScenarioSpec& spec);

/// Template store rooted at `<data>/templates`.
class TemplateLibrary {
public:
    explicit TemplateLibrary(std::filesystem::path root);
    static const TemplateLibrary& builtin();

    /// Text of `<root>/<stack>/<dialect>/<name>.tmpl`.
    std::string load(HelperStack stack, Dialect dialect, const std::string& name) const;

private:
    std::filesystem::path root_;
};

/// Deterministic template expansion. Throws SpecInvalid for an invalid spec
/// and UnsupportedCombination when no template covers it.
GeneratedArtifact scaffold(const ScenarioSpec& spec, Dialect dialect, Clock& clock,
                           const TemplateLibrary& library = TemplateLibrary::builtin());

struct RefinementRejected {
    std::string section;
    std::string reason;
};

struct GenerationResult {
    GeneratedArtifact artifact;
    std::vector<RefinementRejected> rejected;
    StructureReport report;
};

class CodeGenerator {
public:
    CodeGenerator(llm::LlmGateway& gateway, Clock& clock,
                  const TemplateLibrary& library = TemplateLibrary::builtin());

    /// Scaffold, then in refine mode one gateway call per refinable section.
    /// A refined body is kept only if the whole script still lints clean.
    GenerationResult generate_script(const ScenarioSpec& spec, Dialect dialect, GenerationMode mode,
                                     llm::ProviderMode provider) const;

    llm::LlmRequest refinement_request(const GeneratedArtifact& artifact, const std::string& section) const;

private:
    llm::LlmGateway& gateway_;
    Clock& clock_;
    const TemplateLibrary& library_;
};

/// Body of the first markdown code fence, prose around it dropped; the text
/// unchanged when there is no fence.
std::string strip_code_fence(const std::string& text);

/// Replaces the body of `section`, updating every range. Throws
/// InvalidArgument for an unknown section.
GeneratedArtifact replace_section_body(const GeneratedArtifact& a, const std::string& section,
                                       const std::string& body, SectionProvenance provenance);

} // namespace genonet
