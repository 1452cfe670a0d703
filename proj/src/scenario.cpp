#include "genonet/scenario.hpp"

#include "genonet/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>

namespace genonet {

namespace {

template <typename E>
struct EnumEntry {
    E value;
    std::string_view name;
};

constexpr EnumEntry<ChannelModel> kChannelModels[] = {
    {ChannelModel::UMi, "UMi"},
    {ChannelModel::UMa, "UMa"},
    {ChannelModel::RMa, "RMa"},
    {ChannelModel::InHOffice, "InH-Office"},
};
constexpr EnumEntry<TrafficProfile> kTrafficProfiles[] = {
    {TrafficProfile::XR, "XR"},
    {TrafficProfile::CBR, "CBR"},
    {TrafficProfile::BULK, "BULK"},
    {TrafficProfile::ECHO, "ECHO"},
};
constexpr EnumEntry<Transport> kTransports[] = {
    {Transport::TCP, "TCP"},
    {Transport::UDP, "UDP"},
};
constexpr EnumEntry<Beamforming> kBeamformings[] = {
    {Beamforming::SCANNING, "SCANNING"},
    {Beamforming::IDEAL, "IDEAL"},
    {Beamforming::NONE, "NONE"},
};
constexpr EnumEntry<HelperStack> kHelperStacks[] = {
    {HelperStack::NR_5GLENA, "NR_5GLENA"},
    {HelperStack::WIFI, "WIFI"},
    {HelperStack::P2P_CSMA, "P2P_CSMA"},
};

// Lower-cased, with '_' and ' ' folded to '-'.
std::string alias_key(std::string_view s)
{
    std::string k = to_lower(trim(s));
    std::replace(k.begin(), k.end(), '_', '-');
    std::replace(k.begin(), k.end(), ' ', '-');
    return k;
}

template <typename E, std::size_t N>
std::string_view name_of(const EnumEntry<E> (&table)[N], E v)
{
    for (const auto& e : table)
        if (e.value == v) return e.name;
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> lookup(const EnumEntry<E> (&table)[N], std::string_view s,
                        std::initializer_list<std::pair<std::string_view, E>> aliases)
{
    auto key = alias_key(s);
    for (const auto& e : table)
        if (alias_key(e.name) == key) return e.value;
    for (const auto& [alias, v] : aliases)
        if (alias == key) return v;
    return std::nullopt;
}

const std::map<std::string, std::string, std::less<>>& field_aliases()
{
    static const std::map<std::string, std::string, std::less<>> m = {
        {"frequency", "frequency_hz"}, {"frequency_hz", "frequency_hz"},
        {"bandwidth", "bandwidth_hz"}, {"bandwidth_hz", "bandwidth_hz"},
        {"cc", "cc_count"},            {"cc_count", "cc_count"},
        {"numerology", "numerology"},  {"gnb", "gnb_count"},
        {"gnb_count", "gnb_count"},    {"ue", "ue_count"},
        {"ue_count", "ue_count"},      {"channel_model", "channel_model"},
        {"traffic_profile", "traffic_profile"},
        {"transport", "transport"},    {"beamforming", "beamforming"},
        {"sim_duration", "sim_duration_s"},
        {"sim_duration_s", "sim_duration_s"},
        {"helper_stack", "helper_stack"},
    };
    return m;
}

struct Magnitude {
    std::string number;
    std::string suffix;
};

Magnitude split_magnitude(std::string_view field, std::string_view text)
{
    static const std::regex re(R"(^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z]*)\s*$)");
    std::string s(text);
    std::smatch m;
    if (!std::regex_match(s, m, re))
        throw InvalidField(std::string(field), "not a magnitude: '" + s + "'");
    return {m[1].str(), m[2].str()};
}

// Scales a decimal literal by 10^exp10 without intermediate rounding.
double scaled(const std::string& number, int exp10)
{
    std::string literal = number + "e" + std::to_string(exp10);
    // Numbers that already carry an exponent are scaled arithmetically.
    if (number.find_first_of("eE") != std::string::npos)
        return std::strtod(number.c_str(), nullptr) * std::pow(10.0, exp10);
    return std::strtod(literal.c_str(), nullptr);
}

int parse_count(std::string_view field, std::string_view text)
{
    std::string s = trim(text);
    static const std::regex re(R"(^[+-]?\d+$)");
    if (!std::regex_match(s, re))
        throw InvalidField(std::string(field), "not an integer: '" + s + "'");
    long long v = std::strtoll(s.c_str(), nullptr, 10);
    if (v < 0) throw NegativeMagnitude(std::string(field), s);
    if (v > 1'000'000'000) throw InvalidField(std::string(field), "integer out of range: " + s);
    return static_cast<int>(v);
}

template <typename E>
E parse_enum(std::string_view field, const std::string& text, std::optional<E> (*parser)(std::string_view))
{
    auto v = parser(text);
    if (!v) throw InvalidField(std::string(field), "unknown value '" + text + "'");
    return *v;
}

bool rel_equal(double a, double b)
{
    if (a == b) return true;
    return std::fabs(a - b) <= 1e-6 * std::max(std::fabs(a), std::fabs(b));
}

} // namespace

std::string_view to_string(ChannelModel v) { return name_of(kChannelModels, v); }
std::string_view to_string(TrafficProfile v) { return name_of(kTrafficProfiles, v); }
std::string_view to_string(Transport v) { return name_of(kTransports, v); }
std::string_view to_string(Beamforming v) { return name_of(kBeamformings, v); }
std::string_view to_string(HelperStack v) { return name_of(kHelperStacks, v); }

std::optional<ChannelModel> parse_channel_model(std::string_view s)
{
    return lookup(kChannelModels, s,
                  {{"umi-streetcanyon", ChannelModel::UMi},
                   {"urban-micro", ChannelModel::UMi},
                   {"urban-macro", ChannelModel::UMa},
                   {"rural-macro", ChannelModel::RMa},
                   {"inh", ChannelModel::InHOffice},
                   {"inh-officeopen", ChannelModel::InHOffice},
                   {"inh-office-open", ChannelModel::InHOffice},
                   {"inh-officemixed", ChannelModel::InHOffice},
                   {"indoor-office", ChannelModel::InHOffice}});
}

std::optional<TrafficProfile> parse_traffic_profile(std::string_view s)
{
    return lookup(kTrafficProfiles, s,
                  {{"extended-reality", TrafficProfile::XR},
                   {"constant-bitrate", TrafficProfile::CBR},
                   {"bulk-send", TrafficProfile::BULK},
                   {"bulksend", TrafficProfile::BULK},
                   {"udp-echo", TrafficProfile::ECHO}});
}

std::optional<Transport> parse_transport(std::string_view s)
{
    return lookup(kTransports, s, {});
}

std::optional<Beamforming> parse_beamforming(std::string_view s)
{
    return lookup(kBeamformings, s,
                  {{"cell-scan", Beamforming::SCANNING},
                   {"cellscan", Beamforming::SCANNING},
                   {"beam-search", Beamforming::SCANNING},
                   {"direct-path", Beamforming::IDEAL},
                   {"off", Beamforming::NONE}});
}

std::optional<HelperStack> parse_helper_stack(std::string_view s)
{
    return lookup(kHelperStacks, s,
                  {{"nr", HelperStack::NR_5GLENA},
                   {"5g-lena", HelperStack::NR_5GLENA},
                   {"5glena", HelperStack::NR_5GLENA},
                   {"nr-5g-lena", HelperStack::NR_5GLENA},
                   {"wi-fi", HelperStack::WIFI},
                   {"p2p-csma", HelperStack::P2P_CSMA},
                   {"p2p", HelperStack::P2P_CSMA},
                   {"point-to-point", HelperStack::P2P_CSMA},
                   {"csma", HelperStack::P2P_CSMA}});
}

bool equivalent(const ScenarioSpec& a, const ScenarioSpec& b)
{
    return rel_equal(a.frequency_hz, b.frequency_hz) && rel_equal(a.bandwidth_hz, b.bandwidth_hz) &&
           rel_equal(a.sim_duration_s, b.sim_duration_s) && a.cc_count == b.cc_count &&
           a.numerology == b.numerology && a.gnb_count == b.gnb_count && a.ue_count == b.ue_count &&
           a.channel_model == b.channel_model && a.traffic_profile == b.traffic_profile &&
           a.transport == b.transport && a.beamforming == b.beamforming &&
           a.helper_stack == b.helper_stack;
}

const std::vector<std::string>& scenario_field_names()
{
    static const std::vector<std::string> names = {
        "bandwidth_hz", "beamforming",     "cc_count",       "channel_model",
        "frequency_hz", "gnb_count",       "helper_stack",   "numerology",
        "sim_duration_s", "traffic_profile", "transport",    "ue_count",
    };
    return names;
}

std::optional<std::string> canonical_field(std::string_view key)
{
    auto it = field_aliases().find(to_lower(trim(key)));
    if (it == field_aliases().end()) return std::nullopt;
    return it->second;
}

RawSpecDraft::RawSpecDraft(std::initializer_list<std::pair<const std::string, std::string>> init)
{
    for (const auto& [k, v] : init) set(k, v);
}

RawSpecDraft& RawSpecDraft::set(std::string_view field, std::string value)
{
    auto canon = canonical_field(field);
    if (!canon) throw InvalidField(std::string(field), "unknown field");
    fields_[*canon] = std::move(value);
    return *this;
}

UnknownUnit::UnknownUnit(std::string field, std::string suffix)
    : Error("UnknownUnit", "unknown unit '" + suffix + "' for " + field), suffix_(std::move(suffix))
{
}

NegativeMagnitude::NegativeMagnitude(std::string field, const std::string& text)
    : Error("NegativeMagnitude", "negative magnitude '" + text + "' for " + field)
{
}

InvalidField::InvalidField(std::string field, const std::string& detail)
    : Error("InvalidField", field + ": " + detail), field_(std::move(field))
{
}

double parse_frequency(std::string_view field, std::string_view text)
{
    auto m = split_magnitude(field, text);
    static const std::map<std::string, int, std::less<>> units = {
        {"", 0}, {"hz", 0}, {"khz", 3}, {"mhz", 6}, {"ghz", 9}};
    auto it = units.find(to_lower(m.suffix));
    if (it == units.end()) throw UnknownUnit(std::string(field), m.suffix);
    if (!m.number.empty() && m.number.front() == '-' && std::strtod(m.number.c_str(), nullptr) != 0)
        throw NegativeMagnitude(std::string(field), std::string(text));
    return std::fabs(scaled(m.number, it->second));
}

double parse_duration(std::string_view field, std::string_view text)
{
    auto m = split_magnitude(field, text);
    static const std::map<std::string, int, std::less<>> units = {
        {"", 0}, {"s", 0}, {"sec", 0}, {"second", 0}, {"seconds", 0}, {"ms", -3}};
    auto it = units.find(to_lower(m.suffix));
    if (it == units.end()) throw UnknownUnit(std::string(field), m.suffix);
    if (!m.number.empty() && m.number.front() == '-' && std::strtod(m.number.c_str(), nullptr) != 0)
        throw NegativeMagnitude(std::string(field), std::string(text));
    return std::fabs(scaled(m.number, it->second));
}

ScenarioSpec normalize_units(const RawSpecDraft& raw)
{
    ScenarioSpec spec;
    const auto& f = raw.fields();
    auto get = [&](const char* key) -> const std::string* {
        auto it = f.find(key);
        return it == f.end() ? nullptr : &it->second;
    };

    if (auto* v = get("frequency_hz")) spec.frequency_hz = parse_frequency("frequency_hz", *v);
    if (auto* v = get("bandwidth_hz")) spec.bandwidth_hz = parse_frequency("bandwidth_hz", *v);
    if (auto* v = get("sim_duration_s")) spec.sim_duration_s = parse_duration("sim_duration_s", *v);
    if (auto* v = get("cc_count")) spec.cc_count = parse_count("cc_count", *v);
    if (auto* v = get("gnb_count")) spec.gnb_count = parse_count("gnb_count", *v);
    if (auto* v = get("ue_count")) spec.ue_count = parse_count("ue_count", *v);

    if (auto* v = get("numerology"))
        spec.numerology = parse_count("numerology", *v);
    else
        spec.numerology = spec.is_fr2() ? 2 : 1;

    if (auto* v = get("channel_model"))
        spec.channel_model = parse_enum("channel_model", *v, &parse_channel_model);
    if (auto* v = get("traffic_profile"))
        spec.traffic_profile = parse_enum("traffic_profile", *v, &parse_traffic_profile);
    if (auto* v = get("beamforming"))
        spec.beamforming = parse_enum("beamforming", *v, &parse_beamforming);
    if (auto* v = get("helper_stack"))
        spec.helper_stack = parse_enum("helper_stack", *v, &parse_helper_stack);

    if (auto* v = get("transport")) {
        spec.transport = parse_enum("transport", *v, &parse_transport);
    } else {
        // Unstated transport follows the traffic profile's natural carrier.
        bool tcp = spec.traffic_profile == TrafficProfile::XR || spec.traffic_profile == TrafficProfile::BULK;
        spec.transport = tcp ? Transport::TCP : Transport::UDP;
    }
    return spec;
}

ValidationReport validate(const ScenarioSpec& spec)
{
    ValidationReport r;
    auto add = [&](const char* field, const char* rule, std::string msg) {
        r.violations.push_back({field, rule, std::move(msg)});
    };
    if (!(spec.frequency_hz >= 0.5e9 && spec.frequency_hz <= 100e9))
        add("frequency_hz", "range-0.5e9-100e9",
            "frequency " + format_shortest(spec.frequency_hz) + " Hz outside [0.5 GHz, 100 GHz]");
    if (!(spec.bandwidth_hz > 0 && spec.bandwidth_hz <= 2e9))
        add("bandwidth_hz", "range-0-2e9",
            "bandwidth " + format_shortest(spec.bandwidth_hz) + " Hz outside (0, 2 GHz]");
    if (spec.cc_count < 1) add("cc_count", "min-1", "at least one component carrier required");
    if (spec.numerology < 0 || spec.numerology > 4)
        add("numerology", "range-0-4", "numerology " + std::to_string(spec.numerology) + " outside 0..4");
    if (spec.gnb_count < 1) add("gnb_count", "min-1", "at least one gNB required");
    if (spec.ue_count < 1) add("ue_count", "min-1", "at least one UE required");
    if (!(spec.sim_duration_s > 0))
        add("sim_duration_s", "positive", "simulation duration must be positive");
    return r;
}

SpecInvalid::SpecInvalid(ValidationReport report)
    : Error("SpecInvalid",
            [&] {
                std::string msg = "scenario invalid:";
                for (const auto& v : report.violations) msg += " " + v.field + " (" + v.rule_id + ")";
                return msg;
            }()),
      report_(std::move(report))
{
}

nlohmann::json to_json(const ScenarioSpec& s)
{
    nlohmann::json j;
    j["bandwidth_hz"] = s.bandwidth_hz;
    j["beamforming"] = to_string(s.beamforming);
    j["cc_count"] = s.cc_count;
    j["channel_model"] = to_string(s.channel_model);
    j["frequency_hz"] = s.frequency_hz;
    j["gnb_count"] = s.gnb_count;
    j["helper_stack"] = to_string(s.helper_stack);
    j["numerology"] = s.numerology;
    j["sim_duration_s"] = s.sim_duration_s;
    j["traffic_profile"] = to_string(s.traffic_profile);
    j["transport"] = to_string(s.transport);
    j["ue_count"] = s.ue_count;
    return j;
}

ScenarioSpec scenario_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw InvalidField("scenario", "expected a JSON object");
    for (const auto& [k, _] : j.items())
        if (std::find(scenario_field_names().begin(), scenario_field_names().end(), k) ==
            scenario_field_names().end())
            throw InvalidField(k, "unknown field");
    auto need = [&](const char* key) -> const nlohmann::json& {
        if (!j.contains(key)) throw InvalidField(key, "missing");
        return j.at(key);
    };
    try {
        ScenarioSpec s;
        s.bandwidth_hz = need("bandwidth_hz").get<double>();
        s.beamforming = parse_enum("beamforming", need("beamforming").get<std::string>(), &parse_beamforming);
        s.cc_count = need("cc_count").get<int>();
        s.channel_model =
            parse_enum("channel_model", need("channel_model").get<std::string>(), &parse_channel_model);
        s.frequency_hz = need("frequency_hz").get<double>();
        s.gnb_count = need("gnb_count").get<int>();
        s.helper_stack = parse_enum("helper_stack", need("helper_stack").get<std::string>(), &parse_helper_stack);
        s.numerology = need("numerology").get<int>();
        s.sim_duration_s = need("sim_duration_s").get<double>();
        s.traffic_profile =
            parse_enum("traffic_profile", need("traffic_profile").get<std::string>(), &parse_traffic_profile);
        s.transport = parse_enum("transport", need("transport").get<std::string>(), &parse_transport);
        s.ue_count = need("ue_count").get<int>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidField("scenario", e.what());
    }
}

std::string canonical_serialization(const ScenarioSpec& spec)
{
    return to_json(spec).dump();
}

Digest spec_hash(const ScenarioSpec& spec)
{
    return sha256(canonical_serialization(spec));
}

} // namespace genonet
