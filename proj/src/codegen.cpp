#include "genonet/codegen.hpp"

#include "genonet/text.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

namespace genonet {

std::string_view to_string(Dialect d)
{
    return d == Dialect::Cpp ? "cpp" : "python";
}

std::string_view to_string(SectionProvenance p)
{
    return p == SectionProvenance::Scaffold ? "scaffold" : "llm";
}

std::string_view to_string(GenerationMode m)
{
    return m == GenerationMode::ScaffoldOnly ? "scaffold_only" : "llm_refine";
}

std::optional<Dialect> parse_dialect(std::string_view s)
{
    auto l = to_lower(s);
    if (l == "cpp" || l == "c++" || l == "cc") return Dialect::Cpp;
    if (l == "python" || l == "py") return Dialect::Python;
    return std::nullopt;
}

std::optional<GenerationMode> parse_generation_mode(std::string_view s)
{
    if (s == "scaffold_only") return GenerationMode::ScaffoldOnly;
    if (s == "llm_refine") return GenerationMode::LlmRefine;
    return std::nullopt;
}

const std::vector<std::string>& section_ids()
{
    static const std::vector<std::string> ids = {"includes", "namespace", "log-component", "helpers", "nodes",
                                                 "channel",  "internet",  "traffic",       "attachment", "run"};
    return ids;
}

const std::vector<std::string>& refinable_section_ids()
{
    static const std::vector<std::string> ids = {"helpers", "nodes", "channel", "internet", "traffic", "attachment"};
    return ids;
}

const std::vector<std::string>& structure_check_ids()
{
    static const std::vector<std::string> ids = {"includes", "namespace",  "log-component", "helper",      "node-counts",
                                                 "channel",  "traffic",    "attachment",    "run-teardown"};
    return ids;
}

// ---------------------------------------------------------------------------
// Artifact

std::string GeneratedArtifact::file_name() const
{
    return dialect == Dialect::Cpp ? "genonet-scenario.cc" : "genonet-scenario.py";
}

std::string GeneratedArtifact::section_body(const std::string& id) const
{
    auto it = sections.find(id);
    if (it == sections.end()) throw InvalidArgument("artifact has no section '" + id + "'");
    return source.substr(it->second.begin, it->second.end - it->second.begin);
}

nlohmann::json to_json(const GeneratedArtifact& a)
{
    nlohmann::json sections = nlohmann::json::object();
    for (const auto& [id, r] : a.sections)
        sections[id] = {{"begin", r.begin}, {"end", r.end}, {"provenance", to_string(r.provenance)}};
    return {{"dialect", to_string(a.dialect)},
            {"file_name", a.file_name()},
            {"generated_at", a.generated_at},
            {"sections", sections},
            {"source", a.source},
            {"spec", to_json(a.spec)},
            {"spec_digest", a.spec_digest.hex()}};
}

GeneratedArtifact artifact_from_json(const nlohmann::json& j)
{
    GeneratedArtifact a;
    auto dialect = parse_dialect(j.at("dialect").get<std::string>());
    if (!dialect) throw InvalidArgument("unknown dialect " + j.at("dialect").dump());
    a.dialect = *dialect;
    a.source = j.at("source").get<std::string>();
    a.spec = scenario_from_json(j.at("spec"));
    a.spec_digest = Digest::from_hex(j.at("spec_digest").get<std::string>());
    a.generated_at = j.value("generated_at", "");
    for (const auto& [id, r] : j.at("sections").items()) {
        SectionRange range{r.at("begin").get<std::size_t>(), r.at("end").get<std::size_t>(),
                           r.at("provenance") == "llm" ? SectionProvenance::Llm : SectionProvenance::Scaffold};
        if (range.begin > range.end || range.end > a.source.size())
            throw InvalidArgument("section '" + id + "' range lies outside the source");
        a.sections[id] = range;
    }
    return a;
}

namespace {

const char* comment_prefix(Dialect d)
{
    return d == Dialect::Cpp ? "//" : "#";
}

} // namespace

std::map<std::string, SectionRange> scan_sections(const std::string& source, Dialect dialect,
                                                  const std::map<std::string, SectionRange>& previous)
{
    std::map<std::string, SectionRange> out;
    std::string prefix = comment_prefix(dialect);
    std::string begin_tag = prefix + " @genonet:begin ";
    std::string end_tag = prefix + " @genonet:end ";
    std::optional<std::pair<std::string, std::size_t>> open;

    std::size_t pos = 0;
    while (pos < source.size()) {
        auto nl = source.find('\n', pos);
        std::size_t next = nl == std::string::npos ? source.size() : nl + 1;
        auto line = trim(std::string_view(source).substr(pos, next - pos));
        if (line.rfind(begin_tag, 0) == 0) {
            auto id = trim(line.substr(begin_tag.size()));
            if (open) throw InvalidArgument("section '" + id + "' opens inside '" + open->first + "'");
            if (out.count(id)) throw InvalidArgument("section '" + id + "' appears twice");
            open = std::make_pair(id, next);
        } else if (line.rfind(end_tag, 0) == 0) {
            auto id = trim(line.substr(end_tag.size()));
            if (!open || open->first != id) throw InvalidArgument("unbalanced end marker for section '" + id + "'");
            auto prev = previous.find(id);
            out[id] = SectionRange{open->second, pos,
                                   prev == previous.end() ? SectionProvenance::Scaffold : prev->second.provenance};
            open.reset();
        }
        pos = next;
    }
    if (open) throw InvalidArgument("section '" + open->first + "' is never closed");
    return out;
}

GeneratedArtifact replace_section_body(const GeneratedArtifact& a, const std::string& section, const std::string& body,
                                       SectionProvenance provenance)
{
    auto it = a.sections.find(section);
    if (it == a.sections.end()) throw InvalidArgument("artifact has no section '" + section + "'");
    std::string fixed = body;
    if (!fixed.empty() && fixed.back() != '\n') fixed += '\n';
    GeneratedArtifact out = a;
    out.source = a.source.substr(0, it->second.begin) + fixed + a.source.substr(it->second.end);
    out.sections = scan_sections(out.source, a.dialect, a.sections);
    out.sections.at(section).provenance = provenance;
    return out;
}

// ---------------------------------------------------------------------------
// Coverage

std::string to_string(const Combination& c)
{
    return "(" + std::string(to_string(c.stack)) + ", " + std::string(to_string(c.traffic)) + ", " +
           std::string(to_string(c.transport)) + ")";
}

const std::vector<Combination>& coverage_matrix()
{
    static const std::vector<Combination> m = {
        {HelperStack::NR_5GLENA, TrafficProfile::XR, Transport::TCP},
        {HelperStack::NR_5GLENA, TrafficProfile::CBR, Transport::UDP},
        {HelperStack::NR_5GLENA, TrafficProfile::BULK, Transport::TCP},
        {HelperStack::NR_5GLENA, TrafficProfile::ECHO, Transport::UDP},
        {HelperStack::WIFI, TrafficProfile::CBR, Transport::UDP},
        {HelperStack::P2P_CSMA, TrafficProfile::ECHO, Transport::UDP},
    };
    return m;
}

Combination nearest_supported(const Combination& c)
{
    const auto& m = coverage_matrix();
    auto distance = [&](const Combination& x) {
        return 4 * (x.stack != c.stack) + 2 * (x.traffic != c.traffic) + (x.transport != c.transport);
    };
    return *std::min_element(m.begin(), m.end(),
                             [&](const Combination& a, const Combination& b) { return distance(a) < distance(b); });
}

UnsupportedCombination::UnsupportedCombination(Combination requested, Combination nearest)
    : Error("UnsupportedCombination",
            "no template for " + to_string(requested) + "; nearest supported is " + to_string(nearest)),
      requested_(requested),
      nearest_(nearest)
{
}

// ---------------------------------------------------------------------------
// Lint

namespace {

std::string channel_scenario(ChannelModel m)
{
    switch (m) {
    case ChannelModel::UMi: return "UMi_StreetCanyon";
    case ChannelModel::UMa: return "UMa";
    case ChannelModel::RMa: return "RMa";
    case ChannelModel::InHOffice: return "InH_OfficeMixed";
    }
    return "UMi_StreetCanyon";
}

struct CheckRule {
    std::string id;
    std::vector<std::string> literals;  ///< all required; anchor is the earliest
    std::optional<std::string> after{}; ///< must appear after the anchor
    bool applicable = true;
    std::vector<std::string> present{}; ///< required anywhere, not ordered
};

std::vector<CheckRule> rules_for(Dialect d, const ScenarioSpec& s)
{
    bool cpp = d == Dialect::Cpp;
    auto stmt = [&](const std::string& text) { return text + (cpp ? ";" : "\n"); };
    auto scope = [&](const std::string& cls, const std::string& member) { return cls + (cpp ? "::" : ".") + member; };
    std::string g = std::to_string(s.gnb_count);
    std::string u = std::to_string(s.ue_count);

    std::vector<CheckRule> r;

    CheckRule includes{"includes", {}};
    if (cpp) {
        includes.literals.push_back("#include \"ns3/core-module.h\"");
        switch (s.helper_stack) {
        case HelperStack::NR_5GLENA: includes.literals.push_back("#include \"ns3/nr-module.h\""); break;
        case HelperStack::WIFI: includes.literals.push_back("#include \"ns3/wifi-module.h\""); break;
        case HelperStack::P2P_CSMA:
            includes.literals.push_back("#include \"ns3/point-to-point-module.h\"");
            includes.literals.push_back("#include \"ns3/csma-module.h\"");
            break;
        }
    } else {
        includes.literals.push_back("from ns import ns");
    }
    r.push_back(includes);

    r.push_back({"namespace", {"using namespace ns3;"}, std::nullopt, cpp, {}});
    r.push_back({"log-component", {cpp ? "NS_LOG_COMPONENT_DEFINE(" : "ns.LogComponentEnable(\"Genonet"}});

    CheckRule helper{"helper", {}};
    CheckRule nodes{"node-counts", {}};
    CheckRule channel{"channel",
                      {stmt("centralFrequency = " + format_engineering(s.frequency_hz)),
                       stmt("bandwidth = " + format_engineering(s.bandwidth_hz))}};
    CheckRule attachment{"attachment", {}};
    switch (s.helper_stack) {
    case HelperStack::NR_5GLENA:
        helper.literals.push_back(cpp ? "CreateObject<NrHelper>()" : "ns.CreateObject[ns.NrHelper]()");
        nodes.literals = {"gnbNodes.Create(" + g + ")", "ueNodes.Create(" + u + ")"};
        channel.literals.push_back(stmt("numCcPerBand = " + std::to_string(s.cc_count)));
        channel.literals.push_back(stmt("numerology = " + std::to_string(s.numerology)));
        channel.literals.push_back(scope("BandwidthPartInfo", channel_scenario(s.channel_model)));
        attachment.literals.push_back(cpp ? "nrHelper->AttachToClosestGnb(" : "nrHelper.AttachToClosestGnb(");
        break;
    case HelperStack::WIFI:
        helper.literals.push_back(cpp ? "WifiHelper wifi;" : "ns.WifiHelper()");
        nodes.literals = {"apNodes.Create(" + g + ")", "staNodes.Create(" + u + ")"};
        attachment.literals.push_back(scope("Ipv4GlobalRoutingHelper", "PopulateRoutingTables()"));
        break;
    case HelperStack::P2P_CSMA:
        helper.literals = {cpp ? "PointToPointHelper pointToPoint;" : "ns.PointToPointHelper()",
                           cpp ? "CsmaHelper csma;" : "ns.CsmaHelper()"};
        nodes.literals = {"clientNodes.Create(" + u + ")", "csmaNodes.Create(" + g + ")"};
        attachment.literals.push_back(scope("Ipv4GlobalRoutingHelper", "PopulateRoutingTables()"));
        break;
    }
    r.push_back(helper);
    r.push_back(nodes);
    r.push_back(channel);

    CheckRule traffic{"traffic", {}};
    switch (s.traffic_profile) {
    case TrafficProfile::XR:
    case TrafficProfile::BULK:
        traffic.literals = {"BulkSendHelper", "PacketSinkHelper"};
        break;
    case TrafficProfile::CBR: traffic.literals = {"UdpClientHelper", "UdpServerHelper"}; break;
    case TrafficProfile::ECHO: traffic.literals = {"UdpEchoClientHelper", "UdpEchoServerHelper"}; break;
    }
    traffic.literals.push_back(s.transport == Transport::TCP ? "\"ns3::TcpSocketFactory\"" : "Udp");
    r.push_back(traffic);
    r.push_back(attachment);

    std::string sim = cpp ? "Simulator::" : "ns.Simulator.";
    r.push_back({"run-teardown", {sim + "Run()"}, sim + "Destroy()", true,
                 {stmt("simTime = " + format_plain(s.sim_duration_s))}});
    return r;
}

} // namespace

const StructureCheck* StructureReport::find(const std::string& id) const
{
    for (const auto& c : checks)
        if (c.id == id) return &c;
    return nullptr;
}

nlohmann::json to_json(const StructureReport& r)
{
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks) checks.push_back({{"detail", c.detail}, {"id", c.id}, {"passed", c.passed}});
    return {{"checks", checks}, {"ok", r.ok}};
}

StructureReport lint_structure(const std::string& source, Dialect dialect, const ScenarioSpec& spec)
{
    StructureReport report;
    std::optional<std::pair<std::string, std::size_t>> previous; // nearest preceding present element
    for (const auto& rule : rules_for(dialect, spec)) {
        StructureCheck c{rule.id, true, ""};
        if (!rule.applicable) {
            c.detail = "not applicable";
            report.checks.push_back(c);
            continue;
        }
        std::optional<std::size_t> anchor;
        std::vector<std::string> missing;
        for (const auto& lit : rule.literals) {
            auto p = source.find(lit);
            if (p == std::string::npos) missing.push_back(lit);
            else if (!anchor || p < *anchor) anchor = p;
        }
        bool anchored = missing.empty();
        for (const auto& lit : rule.present)
            if (source.find(lit) == std::string::npos) missing.push_back(lit);
        if (!missing.empty()) {
            c.passed = false;
            c.detail = "missing: " + missing.front();
        }
        if (c.passed && rule.after) {
            auto p = source.find(*rule.after);
            if (p == std::string::npos) {
                c.passed = false;
                c.detail = "missing: " + *rule.after;
            } else if (p < *anchor) {
                c.passed = false;
                c.detail = *rule.after + " precedes " + rule.literals.front();
            }
        }
        if (c.passed && previous && *anchor < previous->second) {
            c.passed = false;
            c.detail = "appears before " + previous->first;
        }
        if (anchored && anchor) previous = std::make_pair(rule.id, *anchor);
        report.checks.push_back(c);
    }
    report.ok = std::all_of(report.checks.begin(), report.checks.end(), [](const auto& c) { return c.passed; });
    return report;
}

StructureReport lint_structure(const GeneratedArtifact& artifact)
{
    return lint_structure(artifact.source, artifact.dialect, artifact.spec);
}

// ---------------------------------------------------------------------------
// Templates

namespace {

std::string stack_dir(HelperStack s)
{
    switch (s) {
    case HelperStack::NR_5GLENA: return "nr";
    case HelperStack::WIFI: return "wifi";
    case HelperStack::P2P_CSMA: return "p2p-csma";
    }
    return "nr";
}

std::string wifi_band(double hz)
{
    if (hz < 3e9) return "BAND_2_4GHZ";
    if (hz < 5.925e9) return "BAND_5GHZ";
    return "BAND_6GHZ";
}

class Renderer {
public:
    Renderer(const TemplateLibrary& lib, HelperStack stack, Dialect dialect, std::map<std::string, std::string> vars)
        : lib_(lib), stack_(stack), dialect_(dialect), vars_(std::move(vars))
    {
    }

    void render(const std::string& text, const std::string& indent, bool allow_sections)
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            auto first = line.find_first_not_of(" \t");
            std::string lead = first == std::string::npos ? "" : line.substr(0, first);
            std::string body = first == std::string::npos ? "" : line.substr(first);
            if (body.rfind("@@#", 0) == 0) continue;
            if (body.rfind("@@begin ", 0) == 0 || body.rfind("@@end ", 0) == 0) {
                if (!allow_sections) throw InvalidArgument("section marker inside a template fragment");
                bool begin = body[2] == 'b';
                auto id = trim(body.substr(begin ? 8 : 6));
                out_ += indent + lead + comment_prefix(dialect_) + (begin ? " @genonet:begin " : " @genonet:end ") + id +
                        "\n";
                continue;
            }
            if (body.rfind("{{>", 0) == 0 && body.size() > 5 && body.compare(body.size() - 2, 2, "}}") == 0) {
                auto var = body.substr(3, body.size() - 5);
                render(lib_.load(stack_, dialect_, value(var)), indent + lead, false);
                continue;
            }
            if (body.empty()) out_ += "\n";
            else out_ += indent + substitute(line) + "\n";
        }
    }

    const std::string& output() const { return out_; }

private:
    const std::string& value(const std::string& name) const
    {
        auto it = vars_.find(name);
        if (it == vars_.end()) throw InvalidArgument("template placeholder '" + name + "' has no value");
        return it->second;
    }

    std::string substitute(const std::string& line) const
    {
        std::string out;
        std::size_t pos = 0;
        while (true) {
            auto open = line.find("{{", pos);
            if (open == std::string::npos) break;
            auto close = line.find("}}", open);
            if (close == std::string::npos) throw InvalidArgument("unterminated placeholder in template");
            out += line.substr(pos, open - pos);
            out += value(line.substr(open + 2, close - open - 2));
            pos = close + 2;
        }
        return out + line.substr(pos);
    }

    const TemplateLibrary& lib_;
    HelperStack stack_;
    Dialect dialect_;
    std::map<std::string, std::string> vars_;
    std::string out_;
};

} // namespace

TemplateLibrary::TemplateLibrary(std::filesystem::path root) : root_(std::move(root)) {}

const TemplateLibrary& TemplateLibrary::builtin()
{
    static const TemplateLibrary lib(data_dir() / "templates");
    return lib;
}

std::string TemplateLibrary::load(HelperStack stack, Dialect dialect, const std::string& name) const
{
    return read_file(root_ / stack_dir(stack) / std::string(to_string(dialect)) / (name + ".tmpl"));
}

GeneratedArtifact scaffold(const ScenarioSpec& spec, Dialect dialect, Clock& clock, const TemplateLibrary& library)
{
    auto validation = validate(spec);
    if (!validation.ok()) throw SpecInvalid(std::move(validation));

    Combination c{spec.helper_stack, spec.traffic_profile, spec.transport};
    const auto& m = coverage_matrix();
    if (std::find(m.begin(), m.end(), c) == m.end()) throw UnsupportedCombination(c, nearest_supported(c));

    std::map<std::string, std::string> vars = {
        {"frequency_hz", format_engineering(spec.frequency_hz)},
        {"bandwidth_hz", format_engineering(spec.bandwidth_hz)},
        {"cc_count", std::to_string(spec.cc_count)},
        {"numerology", std::to_string(spec.numerology)},
        {"gnb_count", std::to_string(spec.gnb_count)},
        {"ue_count", std::to_string(spec.ue_count)},
        {"sim_duration_s", format_plain(spec.sim_duration_s)},
        {"channel_model", std::string(to_string(spec.channel_model))},
        {"channel_scenario", channel_scenario(spec.channel_model)},
        {"traffic_profile", std::string(to_string(spec.traffic_profile))},
        {"transport", std::string(to_string(spec.transport))},
        {"beamforming", std::string(to_string(spec.beamforming))},
        {"helper_stack", std::string(to_string(spec.helper_stack))},
        {"wifi_band", wifi_band(spec.frequency_hz)},
        {"traffic_fragment",
         "traffic-" + std::string(to_string(spec.traffic_profile)) + "-" + std::string(to_string(spec.transport))},
        {"beam_fragment", "beam-" + std::string(to_string(spec.beamforming))},
    };

    Renderer r(library, spec.helper_stack, dialect, vars);
    r.render(library.load(spec.helper_stack, dialect, "script"), "", true);

    GeneratedArtifact a;
    a.dialect = dialect;
    a.source = r.output();
    a.sections = scan_sections(a.source, dialect);
    a.spec = spec;
    a.spec_digest = spec_hash(spec);
    a.generated_at = format_iso8601(clock.now());
    return a;
}

// ---------------------------------------------------------------------------
// Refinement

std::string strip_code_fence(const std::string& text)
{
    // First fenced block, with any prose around it dropped.
    static const std::regex fenced(R"((?:^|\n)[ \t]*```[A-Za-z0-9_+-]*[ \t]*\r?\n([\s\S]*?)\r?\n[ \t]*```[ \t]*(?:\r?\n|$))");
    std::smatch m;
    if (std::regex_search(text, m, fenced)) return m[1].str() + "\n";
    return text;
}

CodeGenerator::CodeGenerator(llm::LlmGateway& gateway, Clock& clock, const TemplateLibrary& library)
    : gateway_(gateway), clock_(clock), library_(library)
{
}

llm::LlmRequest CodeGenerator::refinement_request(const GeneratedArtifact& artifact, const std::string& section) const
{
    std::string lang = artifact.dialect == Dialect::Cpp ? "C++" : "Python";
    std::string system =
        "You are an ns-3 simulation engineer. You elaborate one section of a generated ns-3 " + lang +
        " script. Reply with the replacement body of that section only: no marker comments, no other "
        "sections. Keep every statement the section already contains, including numeric literals, "
        "and keep the indentation of the surrounding code.";
    std::string fence = artifact.dialect == Dialect::Cpp ? "cpp" : "python";
    std::string user = "Scenario: " + canonical_serialization(artifact.spec) + "\nSection: " + section +
                       "\n\nScript:\n```" + fence + "\n" + artifact.source + "```\n\nCurrent body of '" + section +
                       "':\n```" + fence + "\n" + artifact.section_body(section) + "```";
    auto req = gateway_.request(system, user);
    req.temperature = 0.0;
    req.max_tokens = 2048;
    return req;
}

GenerationResult CodeGenerator::generate_script(const ScenarioSpec& spec, Dialect dialect, GenerationMode mode,
                                                llm::ProviderMode provider) const
{
    GenerationResult result;
    result.artifact = scaffold(spec, dialect, clock_, library_);
    if (mode == GenerationMode::LlmRefine) {
        for (const auto& section : refinable_section_ids()) {
            if (!result.artifact.sections.count(section)) continue;
            auto resp = gateway_.complete(refinement_request(result.artifact, section), provider);
            auto body = strip_code_fence(resp.text);
            if (body == result.artifact.section_body(section)) continue;
            if (body.find("@genonet:") != std::string::npos) {
                result.rejected.push_back({section, "refined body contains section markers"});
                continue;
            }
            if (trim(body).empty()) {
                result.rejected.push_back({section, "refined body is empty"});
                continue;
            }
            auto candidate = replace_section_body(result.artifact, section, body, SectionProvenance::Llm);
            auto lint = lint_structure(candidate);
            if (!lint.ok) {
                std::string failed;
                for (const auto& c : lint.checks)
                    if (!c.passed) failed += (failed.empty() ? "" : ", ") + c.id;
                result.rejected.push_back({section, "structure checks failed: " + failed});
                continue;
            }
            result.artifact = std::move(candidate);
        }
    }
    result.report = lint_structure(result.artifact);
    return result;
}

} // namespace genonet
