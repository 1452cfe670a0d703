#include "genonet/interpret.hpp"

#include "oracle.hpp"

#include <doctest.h>

#include <random>
#include <regex>

using namespace genonet;

namespace {

const std::string kEchoLog = "At time +2s client sent 1024 bytes to 10.1.2.4 port 9\n"
                             "At time +2.0118s server received 1024 bytes from 10.1.1.1 port 49153\n"
                             "At time +2.0118s server sent 1024 bytes to 10.1.1.1 port 49153\n"
                             "At time +2.02161s client received 1024 bytes from 10.1.2.4 port 9\n";

std::string fixture_flowmon()
{
    return read_file(std::filesystem::path(GENONET_TEST_DATA_DIR) / "fixtures/stub/cttc-nr-demo/flowmon.xml");
}

FlowRecord to_record(const oracle::Flow& f, std::uint32_t id)
{
    FlowRecord r;
    r.flow_id = id;
    r.src_addr = "10.0.0.1";
    r.dst_addr = "10.0.0.2";
    r.protocol = 17;
    r.time_first_tx = f.first_tx;
    r.time_last_rx = f.last_rx;
    r.tx_bytes = f.tx_bytes;
    r.rx_bytes = f.rx_bytes;
    r.tx_packets = f.tx_packets;
    r.rx_packets = f.rx_packets;
    r.lost_packets = f.lost_packets;
    r.delay_sum = f.delay_sum;
    r.jitter_sum = f.jitter_sum;
    return r;
}

std::string flow_xml(const std::string& first_tx, const std::string& last_rx, const std::string& delay,
                     const std::string& jitter)
{
    return "<?xml version=\"1.0\" ?>\n<FlowMonitor>\n  <FlowStats>\n"
           "    <Flow flowId=\"3\" timeFirstTxPacket=\"" + first_tx + "\" timeLastRxPacket=\"" + last_rx +
           "\" delaySum=\"" + delay + "\" jitterSum=\"" + jitter +
           "\" txBytes=\"2000\" rxBytes=\"1000\" txPackets=\"2\" rxPackets=\"1\" lostPackets=\"1\"/>\n"
           "  </FlowStats>\n  <Ipv4FlowClassifier>\n"
           "    <Flow flowId=\"3\" sourceAddress=\"10.1.1.1\" destinationAddress=\"10.1.2.4\" protocol=\"17\" "
           "sourcePort=\"49153\" destinationPort=\"9\"/>\n"
           "  </Ipv4FlowClassifier>\n</FlowMonitor>\n";
}

// "+<n>.0ns" and the same instant written in seconds by moving the point.
std::pair<std::string, std::string> ns_and_s(std::uint64_t ns)
{
    std::string digits = std::to_string(ns);
    if (digits.size() < 10) digits.insert(0, 10 - digits.size(), '0');
    std::string s = digits.substr(0, digits.size() - 9) + "." + digits.substr(digits.size() - 9);
    return {"+" + std::to_string(ns) + ".0ns", "+" + s + "s"};
}

std::unique_ptr<llm::LlmGateway> replay_gateway(const std::string& template_text, const std::string& reply)
{
    auto cassette = std::make_shared<llm::Cassette>("test-model");
    auto gw = std::make_unique<llm::LlmGateway>(llm::GatewayConfig{}, cassette);
    auto req = polish_request(*gw, template_text);
    llm::LlmResponse resp;
    resp.text = reply;
    cassette->append(llm::normalize_request(req), req, resp);
    return gw;
}

} // namespace

TEST_CASE("time attributes normalize to seconds")
{
    CHECK(parse_time_seconds("+1000000000.0ns") == 1.0);
    CHECK(parse_time_seconds("+1.2e9ns") == parse_time_seconds("+1.2s"));
    CHECK(parse_time_seconds("250ms") == 0.25);
    CHECK(parse_time_seconds("+2021610us") == parse_time_seconds("+2.02161s"));
    CHECK(parse_time_seconds("0s") == 0.0);
    CHECK_FALSE(parse_time_seconds("1.5"));
    CHECK_FALSE(parse_time_seconds("+5parsecs"));
    CHECK_FALSE(parse_time_seconds(""));
}

TEST_CASE("two-flow fixture parses to hand-computed metrics")
{
    auto flows = parse_flowmonitor(fixture_flowmon());
    REQUIRE(flows.size() == 2);
    CHECK(flows[0].src_port != flows[1].src_port);
    CHECK(flows[0].dst_addr == "7.0.0.2");
    CHECK(flows[1].dst_addr == "7.0.0.3");
    CHECK(flows[0].protocol == 17);
    CHECK(flows[1].lost_packets == 2);
    CHECK(flows[0].time_first_tx == 0.4);

    auto m1 = compute_metrics(flows[0]);
    auto m2 = compute_metrics(flows[1]);
    CHECK(oracle::close(m1.throughput_bps, 4.8e6, 1e-9));
    CHECK(oracle::close(*m1.mean_delay_s, 0.000512, 1e-9));
    CHECK(oracle::close(*m1.mean_jitter_s, 2e-5, 1e-9));
    CHECK(*m1.loss_ratio == 0.0);
    CHECK(oracle::close(m2.throughput_bps, 9995968.0, 1e-9));
    CHECK(oracle::close(*m2.mean_delay_s, 0.00125, 1e-9));
    CHECK(oracle::close(*m2.mean_jitter_s, 3e-5, 1e-9));
    CHECK(*m2.loss_ratio == 0.002);
}

TEST_CASE("FlowMonitor edge cases and errors")
{
    CHECK(parse_flowmonitor("<FlowMonitor><FlowStats/></FlowMonitor>").empty());
    CHECK(parse_flowmonitor("<FlowMonitor><FlowStats></FlowStats><Ipv4FlowClassifier/></FlowMonitor>").empty());

    try {
        parse_flowmonitor("<FlowMonitor>\n<FlowStats>\n<Flow flowId=\"1\"\n");
        FAIL("expected MalformedXml");
    } catch (const MalformedXml& e) {
        CHECK(e.code() == "MalformedXml");
        CHECK(e.position().rfind("line ", 0) == 0);
    }
    CHECK_THROWS_AS(parse_flowmonitor("<Other/>"), MalformedXml);
    CHECK_THROWS_AS(parse_flowmonitor("<FlowMonitor/>"), MalformedXml);

    auto xml = flow_xml("+1s", "+2s", "+0.1s", "+0s");
    try {
        parse_flowmonitor(std::regex_replace(xml, std::regex("<Ipv4FlowClassifier>[^]*</Ipv4FlowClassifier>"), ""));
        FAIL("expected MissingClassifier");
    } catch (const MissingClassifier& e) {
        CHECK(e.flow_id() == 3);
    }
    try {
        parse_flowmonitor(flow_xml("+1s", "+2s", "+5parsecs", "+0s"));
        FAIL("expected UnitParseError");
    } catch (const UnitParseError& e) {
        CHECK(e.attribute() == "delaySum");
    }
    CHECK_THROWS_AS(parse_flowmonitor(std::regex_replace(xml, std::regex("rxBytes=\"1000\""), "rxBytes=\"-4\"")),
                    UnitParseError);
}

TEST_CASE("ns and s encodings give identical records")
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::uint64_t> dist(0, 90'000'000'000ull);
    for (int i = 0; i < 200; ++i) {
        auto a = ns_and_s(dist(rng));
        auto b = ns_and_s(dist(rng));
        auto c = ns_and_s(dist(rng));
        auto d = ns_and_s(dist(rng) / 1000);
        auto ns = parse_flowmonitor(flow_xml(a.first, b.first, c.first, d.first));
        auto s = parse_flowmonitor(flow_xml(a.second, b.second, c.second, d.second));
        REQUIRE(ns.size() == 1);
        CHECK(ns == s);
    }
}

TEST_CASE("metric examples")
{
    FlowRecord r;
    r.rx_bytes = 125000;
    r.time_first_tx = 1.0;
    r.time_last_rx = 2.0;
    r.tx_packets = 100;
    r.rx_packets = 100;
    r.delay_sum = 0.5;
    r.jitter_sum = 0.099;
    auto m = compute_metrics(r);
    CHECK(m.throughput_bps == 1'000'000.0);
    CHECK(*m.mean_delay_s == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(*m.mean_jitter_s == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(*m.loss_ratio == 0.0);

    FlowRecord empty;
    empty.tx_packets = 4;
    empty.lost_packets = 4;
    auto e = compute_metrics(empty);
    CHECK(e.throughput_bps == 0.0);
    CHECK_FALSE(e.mean_delay_s);
    CHECK_FALSE(e.mean_jitter_s);
    CHECK(*e.loss_ratio == 1.0);
    CHECK(to_json(e)["mean_delay_s"].is_null());

    FlowRecord one = r;
    one.rx_packets = 1;
    CHECK(compute_metrics(one).mean_delay_s);
    CHECK_FALSE(compute_metrics(one).mean_jitter_s);

    FlowRecord flat = r;
    flat.time_last_rx = flat.time_first_tx;
    CHECK(compute_metrics(flat).throughput_bps == 0.0);

    CHECK_FALSE(compute_metrics(FlowRecord{}).loss_ratio);
}

TEST_CASE("metrics agree with the oracle on random flows")
{
    auto flows = oracle::random_flows(100, 2024);
    int degenerate = 0;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        const auto& f = flows[i];
        auto got = compute_metrics(to_record(f, static_cast<std::uint32_t>(i + 1)));
        auto want = oracle::metrics(f);
        CHECK(oracle::close(got.throughput_bps, want.throughput, 1e-12));
        REQUIRE(got.mean_delay_s.has_value() == want.has_delay);
        REQUIRE(got.mean_jitter_s.has_value() == want.has_jitter);
        REQUIRE(got.loss_ratio.has_value() == want.has_loss);
        if (want.has_delay) CHECK(oracle::close(*got.mean_delay_s, want.delay, 1e-12));
        if (want.has_jitter) CHECK(oracle::close(*got.mean_jitter_s, want.jitter, 1e-12));
        if (want.has_loss) CHECK(oracle::close(*got.loss_ratio, want.loss, 1e-12));
        if (!want.has_jitter || want.throughput == 0) ++degenerate;
    }
    CHECK(degenerate > 0);
}

TEST_CASE("echo log timeline")
{
    auto log = parse_event_log(kEchoLog);
    REQUIRE(log.events.size() == 4);
    CHECK(log.skipped == 0);
    CHECK(log.line_count == 4);
    const auto& first = log.events.front();
    CHECK(first.time.to_double() == 2.0);
    CHECK(first.actor == Actor::Client);
    CHECK(first.action == Action::Sent);
    CHECK(first.bytes == 1024);
    CHECK(first.peer_address == "10.1.2.4");
    CHECK(first.peer_port == 9);
    CHECK(log.events[1].time.str() == "2.0118");
    CHECK(log.events[1].actor == Actor::Server);
    CHECK(log.events[2].action == Action::Sent);
    CHECK(log.events[3].time.str() == "2.02161");
    CHECK(log.events[3].action == Action::Received);
    REQUIRE(round_trip_time(log));
    CHECK(round_trip_time(log)->str() == "0.02161");

    auto empty = parse_event_log("");
    CHECK(empty.events.empty());
    CHECK(empty.skipped == 0);

    auto noisy = parse_event_log("At time +2s client sent 1024 bytes to 10.1.2.4 port 9\n"
                                 "PacketSink: unrelated line\r\n"
                                 "At time +2.02161s client received 1024 bytes from 10.1.2.4 port 9");
    CHECK(noisy.events.size() == 2);
    CHECK(noisy.skipped == 1);

    CHECK(parse_event_log("At time +2s client sent 0 bytes to 10.1.2.4 port 9").skipped == 1);
    CHECK(parse_event_log("At time +2s client sent 5 bytes from 10.1.2.4 port 9").skipped == 1);
    CHECK(parse_event_log("At time +2s client sent 5 bytes to 10.1.2.4 port 70000").skipped == 1);
}

TEST_CASE("event log parser is total")
{
    const std::vector<std::string> pieces = {
        "At time +2s client sent 1024 bytes to 10.1.2.4 port 9",
        "At time 3.5s server received 12 bytes from 10.1.1.1 port 49153",
        "", "   ", "At time +xs client sent 1 bytes to a port 1", "garbage \x01\xff",
        "At time +1e-05s client sent 1 bytes to a port 1", "At time +99999999999999999999999s client sent 1 bytes to a port 1",
        "At time +1s client sent 99999999999999999999999 bytes to a port 1",
    };
    std::mt19937 rng(11);
    for (int i = 0; i < 300; ++i) {
        std::string text;
        std::size_t n = rng() % 12;
        std::string last;
        for (std::size_t j = 0; j < n; ++j) {
            last = pieces[rng() % pieces.size()];
            text += last + (rng() % 2 ? "\n" : "\r\n");
        }
        // an unterminated final line still counts unless it is empty
        if (n > 0 && !last.empty() && rng() % 2) text.pop_back();
        EventLog log;
        CHECK_NOTHROW(log = parse_event_log(text));
        CHECK(log.events.size() + log.skipped == log.line_count);
        CHECK(log.line_count == n);
    }
}

TEST_CASE("template summaries")
{
    auto log = parse_event_log(kEchoLog);
    auto s = summarize(log, SummaryStyle::Template);
    CHECK_FALSE(s.fell_back);
    CHECK(s.style == SummaryStyle::Template);
    CHECK(s.text.find("Round-trip time: 0.02161 s") != std::string::npos);
    CHECK(s.text.find("10.1.2.4 port 9") != std::string::npos);
    auto nums = source_numbers(log);
    for (const auto& tok : numeric_tokens(s.text)) CHECK_MESSAGE(nums.count(tok), tok);

    auto flows = parse_flowmonitor(fixture_flowmon());
    auto t = summarize(flows, SummaryStyle::Template);
    int rows = 0;
    for (std::size_t p = t.text.find("\n| "); p != std::string::npos; p = t.text.find("\n| ", p + 1)) ++rows;
    CHECK(rows == 2);
    CHECK(t.text.find("Throughput (bit/s)") != std::string::npos);
    CHECK(t.text.find("Mean jitter (s)") != std::string::npos);
    CHECK(t.text.find("4800000") != std::string::npos);
    auto fnums = source_numbers(flows);
    for (const auto& tok : numeric_tokens(t.text)) CHECK_MESSAGE(fnums.count(tok), tok);

    CHECK_THROWS_AS(summarize(std::vector<FlowRecord>{}, SummaryStyle::Template), InvalidArgument);
    CHECK_THROWS_AS(summarize(EventLog{}, SummaryStyle::Template), InvalidArgument);
}

TEST_CASE("numeric preservation holds for random flows")
{
    auto raw = oracle::random_flows(100, 99);
    std::vector<FlowRecord> flows;
    for (std::size_t i = 0; i < raw.size(); ++i) flows.push_back(to_record(raw[i], static_cast<std::uint32_t>(i)));
    auto text = template_summary(flows);
    auto nums = source_numbers(flows);
    for (const auto& tok : numeric_tokens(text)) CHECK_MESSAGE(nums.count(tok), tok);
}

TEST_CASE("polished summary keeps numbers or falls back")
{
    auto log = parse_event_log(kEchoLog);
    auto base = template_summary(log);

    std::string good = "The client sent 1024 bytes to 10.1.2.4 port 9 at 2 s. The server at 10.1.1.1 port 49153 "
                       "got it at 2.0118 s and echoed it back at 2.0118 s; the reply arrived at 2.02161 s, a "
                       "round-trip time of 0.02161 s.";
    auto gw = replay_gateway(base, good);
    auto s = summarize(log, SummaryStyle::LlmPolished, gw.get());
    CHECK_FALSE(s.fell_back);
    CHECK(s.style == SummaryStyle::LlmPolished);
    CHECK(s.text == good);

    auto dropped = replay_gateway(base, "The echo took about 21 ms from 10.1.2.4 port 9.");
    auto d = summarize(log, SummaryStyle::LlmPolished, dropped.get());
    CHECK(d.fell_back);
    CHECK(d.style == SummaryStyle::Template);
    CHECK(d.text == base);
    CHECK_FALSE(d.fallback_reason.empty());

    llm::LlmGateway empty(llm::GatewayConfig{}, std::make_shared<llm::Cassette>());
    auto miss = summarize(log, SummaryStyle::LlmPolished, &empty);
    CHECK(miss.fell_back);
    CHECK(miss.fallback_reason.rfind("CassetteMiss", 0) == 0);
}

TEST_CASE("metrics document is key-sorted JSON")
{
    auto doc = metrics_document(parse_flowmonitor(fixture_flowmon()));
    REQUIRE(doc["flows"].size() == 2);
    CHECK(doc["flows"][1]["metrics"]["loss_ratio"] == 0.002);
    auto dumped = doc.dump();
    CHECK(dumped.find("\"flows\"") != std::string::npos);
    CHECK(dumped.find("\"metrics\"") < dumped.find("\"record\""));
}
