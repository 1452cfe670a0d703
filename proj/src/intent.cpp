#include "genonet/intent.hpp"

#include "genonet/text.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <regex>
#include <sstream>

namespace genonet {

std::string_view to_string(FieldSource s)
{
    switch (s) {
    case FieldSource::Llm: return "llm";
    case FieldSource::Rule: return "rule";
    case FieldSource::Default: return "default";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// PartialSpec

void PartialSpec::add(std::string_view field, std::string text, FieldSource source)
{
    auto canon = canonical_field(field);
    if (!canon) throw InvalidField(std::string(field), "unknown field");
    candidates_[*canon].try_emplace(source, std::move(text));
}

std::optional<std::string> PartialSpec::get(const std::string& field, FieldSource source) const
{
    auto it = candidates_.find(field);
    if (it == candidates_.end()) return std::nullopt;
    auto jt = it->second.find(source);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
}

std::optional<FieldValue> PartialSpec::resolved(const std::string& field) const
{
    for (auto source : {FieldSource::Llm, FieldSource::Rule})
        if (auto v = get(field, source)) return FieldValue{*v, source};
    return std::nullopt;
}

nlohmann::json to_json(const PartialSpec& p)
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [field, by_source] : p.candidates())
        for (const auto& [source, text] : by_source) j[field][std::string(to_string(source))] = text;
    return j;
}

// ---------------------------------------------------------------------------
// Keyword table

namespace {

std::optional<std::string> field_of_canonical(const std::string& value)
{
    if (auto v = parse_channel_model(value); v && to_string(*v) == value) return "channel_model";
    if (auto v = parse_traffic_profile(value); v && to_string(*v) == value) return "traffic_profile";
    if (auto v = parse_transport(value); v && to_string(*v) == value) return "transport";
    if (auto v = parse_beamforming(value); v && to_string(*v) == value) return "beamforming";
    if (auto v = parse_helper_stack(value); v && to_string(*v) == value) return "helper_stack";
    return std::nullopt;
}

bool is_word_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

} // namespace

KeywordTable KeywordTable::parse(std::string_view text)
{
    KeywordTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto stripped = trim(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '#') {
            static const std::regex version_re(R"(^#\s*version\s+(\S+)\s*$)");
            std::smatch m;
            if (std::regex_match(stripped, m, version_re)) t.version_ = m[1].str();
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw InvalidArgument("keyword table line " + std::to_string(lineno) + ": expected two tab-separated columns");
        Entry e;
        e.surface = to_lower(trim(line.substr(0, tab)));
        e.canonical = trim(line.substr(tab + 1));
        auto field = field_of_canonical(e.canonical);
        if (e.surface.empty() || !field)
            throw InvalidArgument("keyword table line " + std::to_string(lineno) + ": unknown canonical value '" +
                                  e.canonical + "'");
        e.field = *field;
        t.entries_.push_back(std::move(e));
    }
    if (t.version_.empty()) throw InvalidArgument("keyword table carries no version line");
    return t;
}

KeywordTable KeywordTable::load(const std::filesystem::path& path)
{
    return parse(read_file(path));
}

const KeywordTable& KeywordTable::builtin()
{
    static const KeywordTable table = load(data_dir() / "keywords.tsv");
    return table;
}

// ---------------------------------------------------------------------------
// Rule pass

namespace {

struct Word {
    std::string text;
    std::size_t begin;
    std::size_t end;
};

std::vector<Word> split_words(const std::string& lower)
{
    std::vector<Word> words;
    std::size_t i = 0;
    while (i < lower.size()) {
        if (!is_word_char(lower[i])) {
            ++i;
            continue;
        }
        std::size_t b = i;
        while (i < lower.size() && (is_word_char(lower[i]) || lower[i] == '\'')) ++i;
        words.push_back({lower.substr(b, i - b), b, i});
    }
    return words;
}

// Up to `n` words ending at or before `pos`, nearest first.
std::vector<std::string> words_before(const std::vector<Word>& words, std::size_t pos, std::size_t n)
{
    std::vector<std::string> out;
    for (auto it = words.rbegin(); it != words.rend() && out.size() < n; ++it)
        if (it->end <= pos) out.push_back(it->text);
    return out;
}

std::vector<std::string> words_after(const std::vector<Word>& words, std::size_t pos, std::size_t n)
{
    std::vector<std::string> out;
    for (const auto& w : words)
        if (w.begin >= pos && out.size() < n) out.push_back(w.text);
    return out;
}

bool contains_any(const std::vector<std::string>& words, std::initializer_list<std::string_view> keys)
{
    for (const auto& w : words)
        for (auto k : keys)
            if (w == k) return true;
    return false;
}

enum class HzRole { Frequency, Bandwidth, Unknown };

HzRole classify_hz(const std::vector<Word>& words, std::size_t begin, std::size_t end)
{
    auto after = words_after(words, end, 1);
    if (contains_any(after, {"bandwidth", "bw", "wide", "channel"})) return HzRole::Bandwidth;
    for (const auto& w : words_before(words, begin, 3)) {
        if (w == "bandwidth" || w == "bw") return HzRole::Bandwidth;
        if (w == "frequency" || w == "at" || w == "carrier" || w == "fc" || w == "band" || w == "centered")
            return HzRole::Frequency;
    }
    return HzRole::Unknown;
}

void keyword_pass(const std::string& lower, const KeywordTable& table, PartialSpec& out)
{
    struct Hit {
        std::size_t pos;
        std::size_t len;
        const KeywordTable::Entry* entry;
    };
    std::map<std::string, Hit> best;
    for (const auto& e : table.entries()) {
        std::size_t pos = lower.find(e.surface);
        while (pos != std::string::npos) {
            std::size_t end = pos + e.surface.size();
            bool left_ok = pos == 0 || !is_word_char(lower[pos - 1]);
            bool right_ok = end >= lower.size() || !is_word_char(lower[end]);
            if (left_ok && right_ok) {
                auto it = best.find(e.field);
                // Earliest mention wins; on a tie the longer surface form.
                if (it == best.end() || pos < it->second.pos ||
                    (pos == it->second.pos && e.surface.size() > it->second.len))
                    best[e.field] = Hit{pos, e.surface.size(), &e};
                break;
            }
            pos = lower.find(e.surface, pos + 1);
        }
    }
    for (const auto& [field, hit] : best) out.add(field, hit.entry->canonical, FieldSource::Rule);
}

void quantity_pass(const std::string& original, const std::string& lower, PartialSpec& out)
{
    auto words = split_words(lower);

    static const std::regex hz_re(R"((\d+(?:\.\d+)?)\s*(ghz|mhz|khz|hz)\b)");
    std::optional<std::string> frequency;
    std::optional<std::string> bandwidth;
    std::vector<std::string> unassigned;
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), hz_re); it != std::sregex_iterator(); ++it) {
        auto begin = static_cast<std::size_t>(it->position(0));
        auto end = begin + static_cast<std::size_t>(it->length(0));
        // Keep the user's unit spelling for the transcript.
        std::string unit = original.substr(static_cast<std::size_t>(it->position(2)), static_cast<std::size_t>(it->length(2)));
        std::string value = (*it)[1].str() + " " + unit;
        switch (classify_hz(words, begin, end)) {
        case HzRole::Frequency:
            if (!frequency) frequency = value;
            break;
        case HzRole::Bandwidth:
            if (!bandwidth) bandwidth = value;
            break;
        case HzRole::Unknown:
            unassigned.push_back(value);
            break;
        }
    }
    for (const auto& v : unassigned) {
        if (!frequency) frequency = v;
        else if (!bandwidth) bandwidth = v;
    }
    if (frequency) out.add("frequency_hz", *frequency, FieldSource::Rule);
    if (bandwidth) out.add("bandwidth_hz", *bandwidth, FieldSource::Rule);

    struct CountRule {
        const char* field;
        std::regex re;
    };
    static const CountRule counts[] = {
        {"gnb_count", std::regex(R"((\d+)\s*(?:gnbs?|gnb's|gnodebs?|base stations?|cells|access points?|aps)\b)")},
        {"ue_count", std::regex(R"((\d+)\s*(?:ues?|ue's|users?|user equipments?|terminals?|stations?)\b)")},
        {"cc_count", std::regex(R"((\d+)\s*(?:component carriers?|ccs?|carriers?)\b)")},
        {"numerology", std::regex(R"((?:numerology|mu|μ)\s*(?:of|=|:|is)?\s*(\d+)\b)")},
    };
    for (const auto& rule : counts) {
        std::smatch m;
        if (std::regex_search(lower, m, rule.re)) out.add(rule.field, m[1].str(), FieldSource::Rule);
    }

    static const std::regex time_re(R"((\d+(?:\.\d+)?)\s*(ms|seconds?|secs?|s)\b)");
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), time_re); it != std::sregex_iterator(); ++it) {
        auto begin = static_cast<std::size_t>(it->position(0));
        auto before = words_before(words, begin, 3);
        if (contains_any(before, {"for", "duration", "simulate", "simulation", "lasting", "during"})) {
            std::string unit = (*it)[2].str() == "ms" ? "ms" : "s";
            out.add("sim_duration_s", (*it)[1].str() + " " + unit, FieldSource::Rule);
            break;
        }
    }
}

} // namespace

PartialSpec rule_fallback_extract(std::string_view prompt, const KeywordTable& table)
{
    PartialSpec out;
    std::string original(prompt);
    std::string lower = to_lower(original);
    quantity_pass(original, lower, out);
    keyword_pass(lower, table, out);
    return out;
}

PartialSpec rule_fallback_extract(std::string_view prompt)
{
    return rule_fallback_extract(prompt, KeywordTable::builtin());
}

// ---------------------------------------------------------------------------
// Merge

namespace {

// Normalized comparable form of one field value, or nullopt if it does not parse.
std::optional<std::string> comparable(const std::string& field, const std::string& text)
{
    try {
        RawSpecDraft d;
        d.set(field, text);
        auto s = normalize_units(d);
        auto j = to_json(s);
        return j.at(field).dump();
    } catch (const Error&) {
        return std::nullopt;
    }
}

} // namespace

MergeResult merge_and_default(const PartialSpec& p)
{
    MergeResult result;
    RawSpecDraft draft;
    for (const auto& field : scenario_field_names()) {
        auto v = p.resolved(field);
        if (!v) {
            result.provenance[field] = FieldSource::Default;
            continue;
        }
        draft.set(field, v->text);
        result.provenance[field] = v->source;

        auto llm_value = p.get(field, FieldSource::Llm);
        auto rule_value = p.get(field, FieldSource::Rule);
        if (llm_value && rule_value) {
            auto a = comparable(field, *llm_value);
            auto b = comparable(field, *rule_value);
            if (a != b || !a) result.disagreements.push_back({field, *llm_value, *rule_value});
        }
    }
    result.spec = normalize_units(draft);
    auto report = validate(result.spec);
    if (!report.ok()) throw SpecInvalid(std::move(report));
    return result;
}

nlohmann::json to_json(const MergeResult& m)
{
    nlohmann::json provenance = nlohmann::json::object();
    for (const auto& [field, source] : m.provenance) provenance[field] = to_string(source);
    nlohmann::json disagreements = nlohmann::json::array();
    for (const auto& d : m.disagreements)
        disagreements.push_back({{"field", d.field}, {"llm", d.llm_value}, {"rule", d.rule_value}});
    return {{"disagreements", disagreements}, {"provenance", provenance}, {"spec", to_json(m.spec)}};
}

// ---------------------------------------------------------------------------
// Extraction contract

namespace {

std::optional<std::string> value_text(const nlohmann::json& v)
{
    if (v.is_null()) return std::nullopt;
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return format_shortest(v.get<double>());
    return std::nullopt;
}

} // namespace

std::optional<std::string> check_scenario_spec_output(const std::string& text)
{
    auto obj = llm::extract_json_object(text);
    if (!obj) return "expected a JSON object";
    for (const auto& [key, value] : obj->items()) {
        auto field = canonical_field(key);
        if (!field) return "unknown field '" + key + "'";
        if (value.is_null()) continue;
        if (!value.is_string() && !value.is_number()) return "field '" + key + "' must be a string or number";
        try {
            RawSpecDraft d;
            d.set(*field, *value_text(value));
            normalize_units(d);
        } catch (const Error& e) {
            return std::string("field '") + key + "': " + e.what();
        }
    }
    return std::nullopt;
}

IntentExtractor::IntentExtractor(llm::LlmGateway& gateway, const KeywordTable& table)
    : gateway_(gateway), table_(table)
{
}

llm::LlmRequest IntentExtractor::build_request(std::string_view prompt, std::string_view context) const
{
    static const std::string system =
        "You extract ns-3 simulation scenario parameters from a user request.\n"
        "Reply with one JSON object and nothing else. Allowed keys:\n"
        "frequency (string with unit, e.g. \"28 GHz\"), bandwidth (string with unit, e.g. \"200 MHz\"),\n"
        "cc_count, numerology, gnb_count, ue_count (integers), sim_duration (string with unit, e.g. \"10 s\"),\n"
        "channel_model (UMi|UMa|RMa|InH-Office), traffic_profile (XR|CBR|BULK|ECHO), transport (TCP|UDP),\n"
        "beamforming (SCANNING|IDEAL|NONE), helper_stack (NR_5GLENA|WIFI|P2P_CSMA).\n"
        "Omit any key the request does not state.";
    std::string user = "Scenario request:\n" + std::string(prompt);
    if (!context.empty()) user += "\n\nReference material:\n" + std::string(context);
    auto req = gateway_.request(system, user);
    req.contract = kScenarioSpecContract;
    req.temperature = 0.0;
    req.max_tokens = 512;
    return req;
}

PartialSpec IntentExtractor::extract_intent(std::string_view prompt, std::string_view context,
                                            llm::ProviderMode mode) const
{
    if (trim(prompt).empty()) throw InvalidArgument("prompt is empty");

    PartialSpec out;
    try {
        auto resp = gateway_.complete(build_request(prompt, context), mode);
        if (auto obj = llm::extract_json_object(resp.text)) {
            for (const auto& [key, value] : obj->items()) {
                auto field = canonical_field(key);
                auto text = value_text(value);
                if (field && text) out.add(*field, *text, FieldSource::Llm);
            }
        }
    } catch (const llm::ContractViolation&) {
        // Unparseable model output: the rule pass stands alone.
    }

    auto rules = rule_fallback_extract(prompt, table_);
    for (const auto& [field, by_source] : rules.candidates())
        for (const auto& [source, text] : by_source) out.add(field, text, source);

    if (out.empty()) throw ExtractionEmpty();
    return out;
}

} // namespace genonet
