#include "genonet/interpret.hpp"
#include "genonet/sandbox.hpp"
#include "genonet/text.hpp"

#include "support.hpp"

#include <doctest.h>

#include <dirent.h>
#include <sys/stat.h>

#include <fstream>
#include <future>
#include <thread>

using namespace genonet;
namespace fs = std::filesystem;

namespace {

const char* kFakeNs3 = R"(#!/bin/sh
cmd=$1; shift
case "$cmd" in
configure)
  echo configured
  touch cmake-cache
  exit 0;;
build)
  src="scratch/$1.cc"
  if grep -q BROKEN "$src"; then
    echo "$src:3:1: error: 'BROKEN' was not declared in this scope" >&2
    exit 1
  fi
  echo "built $1"
  exit 0;;
run)
  prog=$1; shift
  for a; do case "$a" in --cwd=*) cwd="${a#--cwd=}";; esac; done
  src="scratch/$prog.cc"
  [ -f "$src" ] || src="$prog"
  if grep -q SLEEP "$src" 2>/dev/null; then
    echo partial
    sleep 3017 &
    sleep 3018
  fi
  if grep -q CRASH "$src" 2>/dev/null; then
    echo "assert failed" >&2
    exit 134
  fi
  echo '<FlowMonitor><FlowStats/></FlowMonitor>' > "$cwd/flowmon.xml"
  echo ran
  exit 0;;
esac
exit 2
)";

fs::path make_fake_ns3(const fs::path& root, bool configured = true)
{
    fs::create_directories(root / "scratch");
    write_file(root / "ns3", kFakeNs3);
    ::chmod((root / "ns3").c_str(), 0755);
    if (configured) fs::create_directories(root / "cmake-cache");
    return root;
}

// Live processes whose command line is exactly `sleep <arg>`.
int count_sleepers(const std::string& arg)
{
    int n = 0;
    for (const auto& e : fs::directory_iterator("/proc")) {
        auto name = e.path().filename().string();
        if (name.find_first_not_of("0123456789") != std::string::npos) continue;
        std::ifstream in(e.path() / "cmdline", std::ios::binary);
        std::string cmd((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (cmd == "sleep" + std::string(1, '\0') + arg + std::string(1, '\0')) {
            std::ifstream st(e.path() / "stat");
            std::string stat((std::istreambuf_iterator<char>(st)), std::istreambuf_iterator<char>());
            auto rp = stat.rfind(')');
            if (rp != std::string::npos && stat.size() > rp + 2 && stat[rp + 2] == 'Z') continue;
            ++n;
        }
    }
    return n;
}

GeneratedArtifact xr_artifact(const std::string& extra = "")
{
    SteppingClock clock;
    auto a = scaffold(support::xr_spec(), Dialect::Cpp, clock);
    a.source += extra;
    return a;
}

void add_fixture(const fs::path& root, const std::string& name, const std::string& phase, int exit_status,
                 const std::string& err, bool flowmon)
{
    nlohmann::json report{{"phase", phase}, {"exit_status", exit_status}, {"wall_time_s", 1.5},
                          {"peak_memory_bytes", 1024}, {"artifacts", nlohmann::json::array()}};
    if (flowmon) {
        report["artifacts"].push_back({{"name", "flowmon"}, {"file", "flowmon.xml"}});
        write_file(root / name / "flowmon.xml", "<FlowMonitor><FlowStats/></FlowMonitor>\n");
    }
    write_file(root / name / "report.json", report.dump(2));
    write_file(root / name / "stdout.txt", "");
    write_file(root / name / "stderr.txt", err);
}

std::string fenced(const std::string& source)
{
    return "Here is the fix.\n```cpp\n" + source + "```\n";
}

} // namespace

TEST_CASE("processes run with a clean environment and limits")
{
    support::TempDir dir("proc");
    ::setenv("GENONET_TEST_SECRET", "leak", 1);
    auto env = allowed_environment();
    CHECK(env.count("PATH") == 1);
    CHECK(env.count("GENONET_TEST_SECRET") == 0);

    auto r = run_process({{"sh", "-c", "echo out; echo err >&2; pwd; echo \"[$GENONET_TEST_SECRET]\"; exit 3"},
                          dir.path(), env},
                         {});
    CHECK(r.exit_status == 3);
    CHECK_FALSE(r.timed_out);
    CHECK(r.out == "out\n" + fs::canonical(dir.path()).string() + "\n[]\n");
    CHECK(r.err == "err\n");

    auto missing = run_process({{"/nonexistent/binary"}, dir.path(), env}, {});
    CHECK(missing.exit_status == 127);
    CHECK(missing.err.find("exec") != std::string::npos);

    ProcessLimits small;
    small.memory_bytes = 64ull << 20;
    auto big = run_process({{"python3", "-c", "x = bytearray(512 * 1024 * 1024); print('allocated')"}, dir.path(),
                            env},
                           small);
    CHECK(big.exit_status != 0);
    CHECK(big.out.find("allocated") == std::string::npos);
}

TEST_CASE("timeout kills the whole process group and keeps partial output")
{
    support::TempDir dir("timeout");
    ProcessLimits limits;
    limits.timeout = std::chrono::milliseconds(500);
    auto start = std::chrono::steady_clock::now();
    auto r = run_process({{"sh", "-c", "echo partial; sleep 3011 & sleep 3012"}, dir.path(), allowed_environment()},
                         limits);
    auto took = std::chrono::steady_clock::now() - start;
    CHECK(r.timed_out);
    CHECK(r.out == "partial\n");
    CHECK(took < std::chrono::seconds(5));
    CHECK(count_sleepers("3011") == 0);
    CHECK(count_sleepers("3012") == 0);

    // A background child left behind by a clean exit is swept too.
    auto clean = run_process({{"sh", "-c", "sleep 3013 > /dev/null 2>&1 & echo done"}, dir.path(),
                              allowed_environment()},
                             limits);
    CHECK(clean.exit_status == 0);
    CHECK_FALSE(clean.timed_out);
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK(count_sleepers("3013") == 0);
}

TEST_CASE("stub backend replays registered fixtures")
{
    support::TempDir work("stub");
    SteppingClock clock;
    Sandbox sandbox(std::make_shared<StubBackend>(StubBackend::default_root(), clock), work.path());

    auto demo = sandbox.execute(ExecutionTarget::example("cttc-nr-demo"));
    CHECK(demo.status == ExecStatus::Ok);
    CHECK(demo.exit_status == 0);
    CHECK(demo.phase == Phase::Run);
    CHECK(demo.attempt == 1);
    CHECK(demo.backend == BackendKind::Stub);
    REQUIRE(demo.artifact("flowmon"));
    CHECK(fs::exists(demo.artifact("flowmon")->path));
    CHECK(parse_flowmonitor(read_file(demo.artifact("flowmon")->path)).size() == 2);
    CHECK(demo.started_at == "2024-01-01T00:00:00.000Z");

    auto again = sandbox.execute(ExecutionTarget::example("cttc-nr-demo"), {}, 2);
    CHECK(again.attempt == 2);
    CHECK(again.stdout_text == demo.stdout_text);
    CHECK(again.stderr_text == demo.stderr_text);
    CHECK(again.artifact("flowmon")->path != demo.artifact("flowmon")->path);
    CHECK(read_file(again.artifact("flowmon")->path) == read_file(demo.artifact("flowmon")->path));
    CHECK(to_record(again)["artifacts"] == to_record(demo)["artifacts"]);

    auto echo = sandbox.execute(ExecutionTarget::example("second"));
    CHECK(parse_event_log(echo.stderr_text).events.size() == 4);

    CHECK_THROWS_AS(sandbox.execute(ExecutionTarget::example("no-such-example")), FixtureMissing);
    CHECK_THROWS_AS(sandbox.execute(ExecutionTarget::example("../second")), FixtureMissing);
    auto other = xr_artifact();
    other.spec.ue_count = 7;
    other.spec_digest = sha256("unregistered");
    CHECK_THROWS_AS(sandbox.execute(ExecutionTarget::of(other)), FixtureMissing);

    ExecutionLimits bad;
    bad.run_timeout = std::chrono::milliseconds(0);
    CHECK_THROWS_AS(sandbox.execute(ExecutionTarget::example("second"), bad), InvalidArgument);
}

TEST_CASE("stub lookup prefers the source digest over spec_digest")
{
    support::TempDir root("fixtures");
    support::TempDir work("work");
    auto artifact = xr_artifact();
    auto variant = xr_artifact("// variant\n");
    add_fixture(root.path(), "by-spec", "run", 0, "", true);
    add_fixture(root.path(), "by-source", "build", 1, "broken\n", false);
    write_file(root.path() / "aliases.tsv", "# key\tdir\n" + artifact.spec_digest.hex() + "\tby-spec\n" +
                                                sha256(variant.source).hex() + "\tby-source\n");
    SteppingClock clock;
    StubBackend stub(root.path(), clock);
    CHECK(stub.resolve(ExecutionTarget::of(artifact)) == root.path() / "by-spec");
    CHECK(stub.resolve(ExecutionTarget::of(variant)) == root.path() / "by-source");
    CHECK(stub.resolve(ExecutionTarget::example("by-spec")) == root.path() / "by-spec");

    Sandbox sandbox(std::make_shared<StubBackend>(root.path(), clock), work.path());
    auto r = sandbox.execute(ExecutionTarget::of(variant));
    CHECK(r.status == ExecStatus::BuildFailed);
    CHECK(r.stderr_text == "broken\n");
    CHECK(r.artifacts.empty());
}

TEST_CASE("ns3 backend stages, builds and runs through the driver")
{
    SteppingClock clock;
    CHECK_THROWS_AS(Ns3Backend("", clock), BackendUnavailable);
    support::TempDir empty("empty-ns3");
    CHECK_THROWS_AS(Ns3Backend(empty.path(), clock), BackendUnavailable);

    support::TempDir ns3("ns3");
    support::TempDir work("ns3-work");
    make_fake_ns3(ns3.path());
    Sandbox sandbox(std::make_shared<Ns3Backend>(ns3.path(), clock), work.path());

    auto ok = sandbox.execute(ExecutionTarget::of(xr_artifact()));
    CHECK(ok.status == ExecStatus::Ok);
    CHECK(ok.phase == Phase::Run);
    CHECK(ok.stdout_text.find("built genonet-") != std::string::npos);
    CHECK(ok.stdout_text.find("ran") != std::string::npos);
    REQUIRE(ok.artifact("flowmon"));
    CHECK(parse_flowmonitor(read_file(ok.artifact("flowmon")->path)).empty());
    CHECK(fs::is_empty(ns3.path() / "scratch"));

    auto broken = sandbox.execute(ExecutionTarget::of(xr_artifact("BROKEN\n")));
    CHECK(broken.status == ExecStatus::BuildFailed);
    CHECK(broken.phase == Phase::Build);
    CHECK(broken.exit_status == 1);
    CHECK(broken.stderr_text.find("error: 'BROKEN' was not declared") != std::string::npos);
    CHECK(broken.artifacts.empty());

    auto crash = sandbox.execute(ExecutionTarget::of(xr_artifact("// CRASH\n")));
    CHECK(crash.status == ExecStatus::RunFailed);
    CHECK(crash.exit_status == 134);

    ExecutionLimits quick;
    quick.run_timeout = std::chrono::milliseconds(700);
    auto slow = sandbox.execute(ExecutionTarget::of(xr_artifact("// SLEEP\n")), quick);
    CHECK(slow.status == ExecStatus::Timeout);
    CHECK(slow.phase == Phase::Run);
    CHECK(slow.stdout_text.find("partial") != std::string::npos);
    CHECK(count_sleepers("3017") == 0);
    CHECK(count_sleepers("3018") == 0);
    CHECK(fs::is_empty(ns3.path() / "scratch"));

    support::TempDir fresh("ns3-fresh");
    make_fake_ns3(fresh.path(), false);
    Sandbox first(std::make_shared<Ns3Backend>(fresh.path(), clock), work.path());
    auto configured = first.execute(ExecutionTarget::example("examples/tutorial/second"));
    CHECK(configured.status == ExecStatus::Ok);
    CHECK(configured.stdout_text.find("configured") == 0);
}

TEST_CASE("sandbox slots cap concurrent attempts")
{
    struct Counting final : ExecutionBackend {
        std::atomic<int> active{0};
        std::atomic<int> peak{0};
        BackendKind kind() const override { return BackendKind::Stub; }
        ExecutionReport execute(const ExecutionTarget&, const ExecutionLimits&, const fs::path&) override
        {
            int now = ++active;
            int p = peak.load();
            while (now > p && !peak.compare_exchange_weak(p, now)) {}
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
            --active;
            return {};
        }
    };
    support::TempDir work("slots");
    auto backend = std::make_shared<Counting>();
    Sandbox sandbox(backend, work.path());
    std::vector<std::future<ExecutionReport>> runs;
    for (int i = 0; i < 6; ++i)
        runs.push_back(std::async(std::launch::async, [&] { return sandbox.execute(ExecutionTarget::example("x")); }));
    for (auto& f : runs) f.get();
    CHECK(backend->peak == 2);
}

TEST_CASE("debug loop repairs, exhausts and rejects regressions")
{
    support::TempDir root("debug-fixtures");
    support::TempDir work("debug-work");
    auto good = xr_artifact();
    auto broken = good;
    auto pos = broken.source.find("monitor->CheckForLostPackets();");
    REQUIRE(pos != std::string::npos);
    broken.source.erase(pos + std::string("monitor->CheckForLostPackets()").size(), 1);
    broken.sections = scan_sections(broken.source, broken.dialect, good.sections);
    auto stuck = xr_artifact("int BROKEN\n");
    const std::string semi_err = "genonet-scenario.cc:170:35: error: expected ';' before 'monitor'\n";
    const std::string stuck_err = "genonet-scenario.cc:182:1: error: expected initializer at end of input\n";
    add_fixture(root.path(), "ok", "run", 0, "", true);
    add_fixture(root.path(), "semi", "build", 1, semi_err, false);
    add_fixture(root.path(), "stuck", "build", 1, stuck_err, false);
    write_file(root.path() / "aliases.tsv", good.spec_digest.hex() + "\tok\n" + sha256(broken.source).hex() +
                                                "\tsemi\n" + sha256(stuck.source).hex() + "\tstuck\n");

    SteppingClock clock;
    Sandbox sandbox(std::make_shared<StubBackend>(root.path(), clock), work.path());
    auto cassette = std::make_shared<llm::Cassette>("test-model");
    llm::LlmGateway gw(llm::GatewayConfig{}, cassette);
    auto teach = [&](const GeneratedArtifact& a, const std::string& reply) {
        auto report = sandbox.execute(ExecutionTarget::of(a));
        auto req = repair_request(gw, a, report);
        llm::LlmResponse resp;
        resp.text = reply;
        cassette->append(llm::normalize_request(req), req, resp);
    };
    teach(broken, fenced(good.source));
    teach(stuck, fenced(stuck.source));

    auto fixed = sandbox.debug_loop(broken, gw, llm::ProviderMode::Replay, 3);
    CHECK(fixed.resolved);
    CHECK(fixed.stop_reason == "success");
    REQUIRE(fixed.attempts.size() == 2);
    CHECK(fixed.attempts[0].report.status == ExecStatus::BuildFailed);
    CHECK(fixed.attempts[0].report.attempt == 1);
    CHECK(fixed.attempts[1].report.attempt == 2);
    REQUIRE(fixed.attempts[0].repair_prompt);
    CHECK(fixed.attempts[0].repair_prompt->find(semi_err) != std::string::npos);
    CHECK(fixed.attempts[0].repair_prompt->find(broken.source) != std::string::npos);
    CHECK_FALSE(fixed.attempts[1].repair_prompt);
    CHECK(fixed.final_artifact.source == good.source);
    CHECK(fixed.attempts.back().report.exit_status == 0);

    auto once = sandbox.debug_loop(good, gw, llm::ProviderMode::Replay, 3);
    CHECK(once.resolved);
    CHECK(once.attempts.size() == 1);

    auto exhausted = sandbox.debug_loop(stuck, gw, llm::ProviderMode::Replay, 3);
    CHECK_FALSE(exhausted.resolved);
    CHECK(exhausted.stop_reason == "exhausted");
    REQUIRE(exhausted.attempts.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(exhausted.attempts[i].report.attempt == i + 1);
    for (int i = 0; i < 2; ++i) {
        REQUIRE(exhausted.attempts[i].repair_prompt);
        CHECK(exhausted.attempts[i].repair_prompt->find(exhausted.attempts[i].report.stderr_text) != std::string::npos);
    }
    CHECK(exhausted.attempts.back().report.status == ExecStatus::BuildFailed);

    auto single = sandbox.debug_loop(stuck, gw, llm::ProviderMode::Replay, 1);
    CHECK(single.attempts.size() == 1);
    CHECK_FALSE(single.resolved);
    CHECK_THROWS_AS(sandbox.debug_loop(stuck, gw, llm::ProviderMode::Replay, 0), InvalidArgument);

    // A "fix" that drops the bulk-send block loses the traffic check.
    auto damaged = broken.source;
    auto t0 = damaged.find("        BulkSendHelper");
    auto t1 = damaged.find("clientApps.Add(bulkSend.Install(remoteHost));");
    REQUIRE(t0 != std::string::npos);
    damaged.erase(t0, t1 - t0);
    auto regress_root = xr_artifact("// regress\n");
    write_file(root.path() / "aliases.tsv", read_file(root.path() / "aliases.tsv") +
                                                sha256(regress_root.source).hex() + "\tsemi\n");
    Sandbox sandbox2(std::make_shared<StubBackend>(root.path(), clock), work.path());
    auto report = sandbox2.execute(ExecutionTarget::of(regress_root));
    auto req = repair_request(gw, regress_root, report);
    cassette->append(llm::normalize_request(req), req, llm::LlmResponse{fenced(damaged)});
    auto regressed = sandbox2.debug_loop(regress_root, gw, llm::ProviderMode::Replay, 3);
    CHECK_FALSE(regressed.resolved);
    CHECK(regressed.stop_reason == "lint-regression");
    CHECK(regressed.attempts.size() == 1);
    REQUIRE(regressed.rejected_artifact);
    CHECK(regressed.rejected_artifact->source == damaged);
    CHECK(regressed.final_artifact.source == regress_root.source);

    // Unknown repair request in replay ends the loop instead of throwing.
    auto unknown = xr_artifact("// unknown\n");
    write_file(root.path() / "aliases.tsv",
               read_file(root.path() / "aliases.tsv") + sha256(unknown.source).hex() + "\tsemi\n");
    Sandbox sandbox3(std::make_shared<StubBackend>(root.path(), clock), work.path());
    auto miss = sandbox3.debug_loop(unknown, gw, llm::ProviderMode::Replay, 3);
    CHECK_FALSE(miss.resolved);
    CHECK(miss.stop_reason == "gateway-error: CassetteMiss");
    CHECK(to_json(miss)["attempts"].size() == 1);
}
