#include "genonet/codegen.hpp"
#include "genonet/text.hpp"

#include <doctest.h>

#include <atomic>
#include <random>

using namespace genonet;

namespace {

ScenarioSpec xr_spec()
{
    ScenarioSpec s;
    s.frequency_hz = 28e9;
    s.bandwidth_hz = 200e6;
    s.cc_count = 1;
    s.numerology = 2;
    s.ue_count = 100;
    s.gnb_count = 1;
    s.channel_model = ChannelModel::UMi;
    s.traffic_profile = TrafficProfile::XR;
    s.transport = Transport::TCP;
    s.beamforming = Beamforming::SCANNING;
    s.helper_stack = HelperStack::NR_5GLENA;
    return s;
}

std::vector<std::string> lines_of(const std::string& text)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        out.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return out;
}

// Index of the first line equal to `want` after trimming, or -1.
long line_index(const std::vector<std::string>& lines, const std::string& want)
{
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (trim(lines[i]) == want) return static_cast<long>(i);
    return -1;
}

std::string remove_line(const std::string& src, const std::string& needle)
{
    auto p = src.find(needle);
    REQUIRE(p != std::string::npos);
    auto b = src.rfind('\n', p);
    auto e = src.find('\n', p);
    return src.substr(0, b == std::string::npos ? 0 : b + 1) + src.substr(e + 1);
}

std::string replace_once(std::string src, const std::string& from, const std::string& to)
{
    auto p = src.find(from);
    REQUIRE(p != std::string::npos);
    return src.replace(p, from.size(), to);
}

std::vector<std::string> failing(const StructureReport& r)
{
    std::vector<std::string> out;
    for (const auto& c : r.checks)
        if (!c.passed) out.push_back(c.id);
    return out;
}

struct SectionTransport : llm::Transport {
    std::function<std::string(const std::string& section, const std::string& body)> reply;
    std::atomic<int> calls{0};

    llm::LlmResponse send(const llm::LlmRequest& req, std::chrono::milliseconds) override
    {
        ++calls;
        const auto& user = req.messages.at(1).content;
        auto s = user.find("\nSection: ") + 10;
        auto section = user.substr(s, user.find('\n', s) - s);
        auto b = user.find("':\n```");
        b = user.find('\n', b + 3) + 1;
        auto body = user.substr(b, user.rfind("```") - b);
        llm::LlmResponse r;
        r.text = reply(section, body);
        return r;
    }
};

} // namespace

TEST_CASE("XR scaffold carries the structural checklist in order")
{
    SteppingClock clock;
    auto a = scaffold(xr_spec(), Dialect::Cpp, clock);
    auto lines = lines_of(a.source);

    // Hand-written checklist over the emitted lines.
    std::vector<std::string> expected_in_order = {
        "#include \"ns3/core-module.h\"",
        "#include \"ns3/nr-module.h\"",
        "using namespace ns3;",
        "NS_LOG_COMPONENT_DEFINE(\"GenonetNrScenario\");",
        "Ptr<NrHelper> nrHelper = CreateObject<NrHelper>();",
        "gnbNodes.Create(1);",
        "ueNodes.Create(100);",
        "double centralFrequency = 28e9;",
        "double bandwidth = 200e6;",
        "const uint8_t numCcPerBand = 1;",
        "BandwidthPartInfo::UMi_StreetCanyon);",
        "PacketSinkHelper sink(\"ns3::TcpSocketFactory\", InetSocketAddress(Ipv4Address::GetAny(), sinkPort));",
        "BulkSendHelper bulkSend(\"ns3::TcpSocketFactory\", InetSocketAddress(ueIpIface.GetAddress(u), sinkPort));",
        "nrHelper->AttachToClosestGnb(ueNetDev, gnbNetDev);",
        "Simulator::Run();",
        "Simulator::Destroy();",
    };
    long prev = -1;
    for (const auto& want : expected_in_order) {
        long at = line_index(lines, want);
        CHECK_MESSAGE(at > prev, want);
        prev = at;
    }
    CHECK(a.section_body("channel").find("28e9") != std::string::npos);
    CHECK(a.section_body("channel").find("200e6") != std::string::npos);
    CHECK(a.section_body("helpers").find("CellScanBeamforming") != std::string::npos);
    CHECK(a.spec_digest == spec_hash(xr_spec()));
    CHECK(a.generated_at == "2024-01-01T00:00:00.000Z");

    auto report = lint_structure(a);
    CHECK(report.ok);
    REQUIRE(report.checks.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(report.checks[i].id == structure_check_ids()[i]);
        CHECK_MESSAGE(report.checks[i].passed, report.checks[i].id << ": " << report.checks[i].detail);
    }
}

TEST_CASE("each injected fault trips exactly its own check")
{
    SteppingClock clock;
    auto spec = xr_spec();
    auto src = scaffold(spec, Dialect::Cpp, clock).source;

    struct Fault {
        std::string check;
        std::string source;
    };
    std::vector<Fault> faults = {
        {"includes", remove_line(src, "#include \"ns3/nr-module.h\"")},
        {"namespace", remove_line(src, "using namespace ns3;")},
        {"log-component", remove_line(src, "NS_LOG_COMPONENT_DEFINE(")},
        {"helper", remove_line(src, "Ptr<NrHelper> nrHelper = CreateObject<NrHelper>();")},
        {"node-counts", replace_once(src, "ueNodes.Create(100)", "ueNodes.Create(10)")},
        {"channel", replace_once(src, "centralFrequency = 28e9", "centralFrequency = 2.8e10")},
        {"channel", replace_once(src, "bandwidth = 200e6", "bandwidth = 100e6")},
        {"traffic", replace_once(src, "BulkSendHelper bulkSend", "OnOffHelper bulkSend")},
        {"attachment", remove_line(src, "AttachToClosestGnb(")},
        {"run-teardown", replace_once(replace_once(src, "Simulator::Run();", "@@SWAP@@"), "Simulator::Destroy();",
                                      "Simulator::Run();")},
    };
    // Finish the run/teardown swap.
    faults.back().source = replace_once(faults.back().source, "@@SWAP@@", "Simulator::Destroy();");

    for (const auto& f : faults) {
        auto r = lint_structure(f.source, Dialect::Cpp, spec);
        CHECK_FALSE(r.ok);
        CHECK_MESSAGE(failing(r) == std::vector<std::string>{f.check}, f.check);
    }

    // A log component hoisted above the includes is out of order.
    auto moved = remove_line(src, "NS_LOG_COMPONENT_DEFINE(");
    moved = "NS_LOG_COMPONENT_DEFINE(\"Early\");\n" + moved;
    auto r = lint_structure(moved, Dialect::Cpp, spec);
    CHECK(failing(r) == std::vector<std::string>{"log-component"});
}

TEST_CASE("defaults scaffold in the python dialect")
{
    SteppingClock clock;
    ScenarioSpec spec;
    auto a = scaffold(spec, Dialect::Python, clock);
    CHECK(a.source.find("from ns import ns\n") != std::string::npos);
    CHECK(a.source.find("gnbNodes.Create(1)\n") != std::string::npos);
    CHECK(a.source.find("ueNodes.Create(1)\n") != std::string::npos);
    auto run = a.source.find("ns.Simulator.Run()");
    auto destroy = a.source.find("ns.Simulator.Destroy()");
    CHECK(run < destroy);
    CHECK(destroy != std::string::npos);
    CHECK_FALSE(a.sections.count("namespace"));
    CHECK(a.source.find("# @genonet:begin traffic\n") != std::string::npos);
    CHECK(a.source.find("//") == std::string::npos);
    auto r = lint_structure(a);
    CHECK(r.ok);
    CHECK(r.find("namespace")->detail == "not applicable");
    CHECK(a.file_name() == "genonet-scenario.py");
}

TEST_CASE("uncovered combinations name the nearest template")
{
    SteppingClock clock;
    ScenarioSpec spec;
    spec.helper_stack = HelperStack::WIFI;
    spec.traffic_profile = TrafficProfile::XR;
    spec.transport = Transport::TCP;
    try {
        scaffold(spec, Dialect::Cpp, clock);
        FAIL("expected UnsupportedCombination");
    } catch (const UnsupportedCombination& e) {
        CHECK(e.nearest() == Combination{HelperStack::WIFI, TrafficProfile::CBR, Transport::UDP});
        CHECK(std::string(e.what()).find("(WIFI, CBR, UDP)") != std::string::npos);
    }

    // Weighted distance, checked against a table built by hand.
    CHECK(nearest_supported({HelperStack::P2P_CSMA, TrafficProfile::CBR, Transport::UDP}) ==
          Combination{HelperStack::P2P_CSMA, TrafficProfile::ECHO, Transport::UDP});
    CHECK(nearest_supported({HelperStack::NR_5GLENA, TrafficProfile::XR, Transport::UDP}) ==
          Combination{HelperStack::NR_5GLENA, TrafficProfile::XR, Transport::TCP});
    CHECK(nearest_supported({HelperStack::WIFI, TrafficProfile::ECHO, Transport::UDP}) ==
          Combination{HelperStack::WIFI, TrafficProfile::CBR, Transport::UDP});

    ScenarioSpec bad;
    bad.ue_count = 0;
    CHECK_THROWS_AS(scaffold(bad, Dialect::Cpp, clock), SpecInvalid);
}

TEST_CASE("scaffold is byte-identical across runs and matches the golden file")
{
    SteppingClock c1;
    SteppingClock c2;
    auto a = scaffold(xr_spec(), Dialect::Cpp, c1);
    auto b = scaffold(xr_spec(), Dialect::Cpp, c2);
    CHECK(a.source == b.source);
    CHECK(a.source == read_file(std::filesystem::path(GENONET_TEST_SOURCE_DIR) / "golden" / "xr-nr.cc"));
    CHECK(sha256(a.source) == sha256(b.source));
}

TEST_CASE("every covered spec keeps its literals and lints clean")
{
    std::mt19937 rng(42);
    SteppingClock clock;
    const std::vector<double> freqs = {0.7e9, 2.6e9, 3.5e9, 3.75e9, 5.18e9, 28e9, 39e9, 60.48e9, 100e9};
    const std::vector<double> bws = {5e6, 20e6, 40e6, 100e6, 200e6, 400e6, 1.5e9};
    const std::vector<double> durations = {0.5, 1, 2.25, 10, 60};
    for (int i = 0; i < 200; ++i) {
        const auto& combo = coverage_matrix()[rng() % coverage_matrix().size()];
        ScenarioSpec s;
        s.helper_stack = combo.stack;
        s.traffic_profile = combo.traffic;
        s.transport = combo.transport;
        s.frequency_hz = freqs[rng() % freqs.size()];
        s.bandwidth_hz = bws[rng() % bws.size()];
        s.cc_count = 1 + static_cast<int>(rng() % 4);
        s.numerology = static_cast<int>(rng() % 5);
        s.gnb_count = 1 + static_cast<int>(rng() % 7);
        s.ue_count = 1 + static_cast<int>(rng() % 300);
        s.sim_duration_s = durations[rng() % durations.size()];
        s.channel_model = static_cast<ChannelModel>(rng() % 4);
        s.beamforming = static_cast<Beamforming>(rng() % 3);
        for (auto d : {Dialect::Cpp, Dialect::Python}) {
            auto a = scaffold(s, d, clock);
            auto r = lint_structure(a);
            CHECK_MESSAGE(r.ok, canonical_serialization(s) << " " << to_string(d));
            CHECK(a.source.find(format_engineering(s.frequency_hz)) != std::string::npos);
            CHECK(a.source.find(format_engineering(s.bandwidth_hz)) != std::string::npos);
            CHECK(a.source.find("Create(" + std::to_string(s.ue_count) + ")") != std::string::npos);
            CHECK(a.source.find("Create(" + std::to_string(s.gnb_count) + ")") != std::string::npos);
            CHECK(a.source.find("simTime = " + format_plain(s.sim_duration_s)) != std::string::npos);
            if (s.helper_stack == HelperStack::NR_5GLENA) {
                CHECK(a.source.find("numCcPerBand = " + std::to_string(s.cc_count)) != std::string::npos);
                CHECK(a.source.find("numerology = " + std::to_string(s.numerology)) != std::string::npos);
            }

            // Sections: in order, non-overlapping, inside the source, framed by markers.
            std::size_t last_end = 0;
            for (const auto& id : section_ids()) {
                auto it = a.sections.find(id);
                if (it == a.sections.end()) {
                    CHECK((id == "namespace" && d == Dialect::Python));
                    continue;
                }
                CHECK(it->second.begin >= last_end);
                CHECK(it->second.begin <= it->second.end);
                CHECK(it->second.end <= a.source.size());
                CHECK(it->second.provenance == SectionProvenance::Scaffold);
                last_end = it->second.end;
                std::string prefix = d == Dialect::Cpp ? "// " : "# ";
                auto before = a.source.rfind('\n', it->second.begin - 2);
                CHECK(trim(a.source.substr(before + 1, it->second.begin - before - 1)) ==
                      prefix + "@genonet:begin " + id);
            }
        }
    }
}

TEST_CASE("refinement keeps good bodies and rejects structural damage")
{
    SteppingClock clock;
    auto transport = std::make_shared<SectionTransport>();
    transport->reply = [](const std::string& section, const std::string& body) -> std::string {
        if (section == "traffic") return "```cpp\n    // Saturating TCP stream per UE.\n" + body + "```";
        if (section == "attachment") return "    // attachment is implicit\n";
        if (section == "nodes") return "    // @genonet:end nodes\n" + body;
        return body;
    };
    llm::LlmGateway gw(llm::GatewayConfig{}, nullptr, transport);
    CodeGenerator gen(gw, clock);
    auto result = gen.generate_script(xr_spec(), Dialect::Cpp, GenerationMode::LlmRefine, llm::ProviderMode::Live);

    CHECK(transport->calls == static_cast<int>(refinable_section_ids().size()));
    CHECK(result.report.ok);
    CHECK(result.artifact.sections.at("traffic").provenance == SectionProvenance::Llm);
    CHECK(result.artifact.section_body("traffic").find("Saturating TCP stream") != std::string::npos);
    CHECK(result.artifact.sections.at("attachment").provenance == SectionProvenance::Scaffold);
    CHECK(result.artifact.sections.at("nodes").provenance == SectionProvenance::Scaffold);
    CHECK(result.artifact.sections.at("channel").provenance == SectionProvenance::Scaffold);
    REQUIRE(result.rejected.size() == 2);
    CHECK(result.rejected[0].section == "nodes");
    CHECK(result.rejected[1].section == "attachment");
    CHECK(result.rejected[1].reason.find("attachment") != std::string::npos);
    CHECK(lint_structure(result.artifact).ok);

    auto scaffold_only =
        gen.generate_script(xr_spec(), Dialect::Cpp, GenerationMode::ScaffoldOnly, llm::ProviderMode::Live);
    CHECK(transport->calls == static_cast<int>(refinable_section_ids().size()));
    CHECK(scaffold_only.report.ok);
    CHECK(scaffold_only.rejected.empty());
}

TEST_CASE("refinement in replay surfaces a cassette miss")
{
    SteppingClock clock;
    llm::LlmGateway gw(llm::GatewayConfig{}, std::make_shared<llm::Cassette>());
    CodeGenerator gen(gw, clock);
    CHECK_THROWS_AS(gen.generate_script(xr_spec(), Dialect::Cpp, GenerationMode::LlmRefine, llm::ProviderMode::Replay),
                    llm::CassetteMiss);
}

TEST_CASE("artifact json round trip and section editing")
{
    SteppingClock clock;
    auto a = scaffold(xr_spec(), Dialect::Cpp, clock);
    auto back = artifact_from_json(nlohmann::json::parse(to_json(a).dump()));
    CHECK(back.source == a.source);
    CHECK(back.spec == a.spec);
    CHECK(back.spec_digest == a.spec_digest);
    CHECK(back.sections.size() == a.sections.size());
    for (const auto& [id, r] : a.sections) {
        CHECK(back.sections.at(id).begin == r.begin);
        CHECK(back.sections.at(id).end == r.end);
    }

    auto edited = replace_section_body(a, "internet", "    // trimmed", SectionProvenance::Llm);
    CHECK(edited.section_body("internet") == "    // trimmed\n");
    CHECK(edited.section_body("run") == a.section_body("run"));
    CHECK(edited.sections.at("internet").provenance == SectionProvenance::Llm);
    CHECK_THROWS_AS(replace_section_body(a, "nope", "x", SectionProvenance::Llm), InvalidArgument);

    CHECK(strip_code_fence("```python\nx = 1\n```") == "x = 1\n");
    CHECK(strip_code_fence("plain") == "plain");
    CHECK(strip_code_fence("Fixed it.\n```cpp\nint x;\n```\nThe semicolon was missing.") == "int x;\n");
    CHECK(strip_code_fence("```\nprint(\"```\")\nok\n```\n") == "print(\"```\")\nok\n");
    CHECK_THROWS_AS(scan_sections("// @genonet:begin a\n// @genonet:end b\n", Dialect::Cpp), InvalidArgument);
}
