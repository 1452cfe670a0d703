#include "genonet/interpret.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <map>
#include <regex>
#include <sstream>

namespace genonet {

namespace pt = boost::property_tree;

MalformedXml::MalformedXml(std::string position, const std::string& detail)
    : Error("MalformedXml", "malformed FlowMonitor XML at " + position + ": " + detail),
      position_(std::move(position))
{
}

MissingClassifier::MissingClassifier(std::uint32_t flow_id)
    : Error("MissingClassifier", "no classifier entry for flow " + std::to_string(flow_id)),
      flow_id_(flow_id)
{
}

UnitParseError::UnitParseError(std::string attribute, const std::string& value)
    : Error("UnitParseError", "cannot parse " + attribute + "=\"" + value + "\""),
      attribute_(std::move(attribute))
{
}

std::optional<double> parse_time_seconds(std::string_view text)
{
    static const std::regex re(R"(^\s*([-+]?)(\d+(?:\.\d*)?|\.\d+)(?:[eE]([-+]?\d+))?\s*(fs|ps|ns|us|ms|s)\s*$)");
    std::string s(text);
    std::smatch m;
    if (!std::regex_match(s, m, re)) return std::nullopt;
    static const std::map<std::string, int> unit_exp{
        {"fs", -15}, {"ps", -12}, {"ns", -9}, {"us", -6}, {"ms", -3}, {"s", 0}};
    long exp = unit_exp.at(m[4].str());
    if (m[3].matched) {
        long e = 0;
        auto str = m[3].str();
        const char* b = str.data() + (str.front() == '+' ? 1 : 0);
        auto [p, ec] = std::from_chars(b, str.data() + str.size(), e);
        if (ec != std::errc() || p != str.data() + str.size()) return std::nullopt;
        exp += e;
    }
    std::string shifted = m[1].str() == "-" ? "-" : "";
    shifted += m[2].str() + "e" + std::to_string(exp);
    double v = 0;
    auto [p, ec] = std::from_chars(shifted.data(), shifted.data() + shifted.size(), v);
    if (ec != std::errc() || p != shifted.data() + shifted.size()) return std::nullopt;
    return v;
}

namespace {

const pt::ptree& attributes(const pt::ptree& node)
{
    static const pt::ptree empty;
    auto a = node.get_child_optional("<xmlattr>");
    return a ? *a : empty;
}

std::string required(const pt::ptree& attrs, const std::string& name, const std::string& where)
{
    auto v = attrs.get_optional<std::string>(name);
    if (!v) throw MalformedXml(where, "missing attribute " + name);
    return *v;
}

template <typename T>
T parse_unsigned(const std::string& name, const std::string& value)
{
    std::string s = trim(value);
    if (!s.empty() && s.front() == '+') s.erase(0, 1);
    T out{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) throw UnitParseError(name, value);
    return out;
}

double parse_time_attr(const pt::ptree& attrs, const std::string& name, const std::string& where)
{
    auto raw = required(attrs, name, where);
    auto v = parse_time_seconds(raw);
    if (!v) throw UnitParseError(name, raw);
    return *v;
}

struct Classifier {
    std::string src_addr;
    std::uint16_t src_port = 0;
    std::string dst_addr;
    std::uint16_t dst_port = 0;
    int protocol = 0;
};

} // namespace

std::vector<FlowRecord> parse_flowmonitor(const std::string& xml)
{
    pt::ptree doc;
    try {
        std::istringstream in(xml);
        pt::read_xml(in, doc);
    } catch (const pt::xml_parser_error& e) {
        throw MalformedXml("line " + std::to_string(e.line()), e.message());
    }
    auto root = doc.get_child_optional("FlowMonitor");
    if (!root) throw MalformedXml("document", "no FlowMonitor root element");
    auto stats = root->get_child_optional("FlowStats");
    if (!stats) throw MalformedXml("FlowMonitor", "no FlowStats element");

    std::map<std::uint32_t, Classifier> classifiers;
    for (const char* kind : {"Ipv4FlowClassifier", "Ipv6FlowClassifier"}) {
        auto cls = root->get_child_optional(kind);
        if (!cls) continue;
        for (const auto& [tag, node] : *cls) {
            if (tag != "Flow") continue;
            const auto& a = attributes(node);
            std::string where = std::string(kind) + "/Flow";
            auto id = parse_unsigned<std::uint32_t>("flowId", required(a, "flowId", where));
            Classifier c;
            c.src_addr = required(a, "sourceAddress", where);
            c.dst_addr = required(a, "destinationAddress", where);
            c.src_port = parse_unsigned<std::uint16_t>("sourcePort", required(a, "sourcePort", where));
            c.dst_port = parse_unsigned<std::uint16_t>("destinationPort", required(a, "destinationPort", where));
            c.protocol = parse_unsigned<int>("protocol", required(a, "protocol", where));
            classifiers[id] = std::move(c);
        }
    }

    std::vector<FlowRecord> out;
    std::size_t index = 0;
    for (const auto& [tag, node] : *stats) {
        if (tag != "Flow") continue;
        ++index;
        std::string where = "FlowStats/Flow[" + std::to_string(index) + "]";
        const auto& a = attributes(node);
        FlowRecord r;
        r.flow_id = parse_unsigned<std::uint32_t>("flowId", required(a, "flowId", where));
        auto c = classifiers.find(r.flow_id);
        if (c == classifiers.end()) throw MissingClassifier(r.flow_id);
        r.src_addr = c->second.src_addr;
        r.src_port = c->second.src_port;
        r.dst_addr = c->second.dst_addr;
        r.dst_port = c->second.dst_port;
        r.protocol = c->second.protocol;
        r.time_first_tx = parse_time_attr(a, "timeFirstTxPacket", where);
        r.time_last_rx = parse_time_attr(a, "timeLastRxPacket", where);
        r.delay_sum = parse_time_attr(a, "delaySum", where);
        r.jitter_sum = parse_time_attr(a, "jitterSum", where);
        r.tx_bytes = parse_unsigned<std::uint64_t>("txBytes", required(a, "txBytes", where));
        r.rx_bytes = parse_unsigned<std::uint64_t>("rxBytes", required(a, "rxBytes", where));
        r.tx_packets = parse_unsigned<std::uint64_t>("txPackets", required(a, "txPackets", where));
        r.rx_packets = parse_unsigned<std::uint64_t>("rxPackets", required(a, "rxPackets", where));
        r.lost_packets = parse_unsigned<std::uint64_t>("lostPackets", required(a, "lostPackets", where));
        out.push_back(std::move(r));
    }
    return out;
}

FlowMetrics compute_metrics(const FlowRecord& r)
{
    FlowMetrics m;
    m.flow_id = r.flow_id;
    double duration = r.time_last_rx - r.time_first_tx;
    m.throughput_bps = duration > 0 ? static_cast<double>(r.rx_bytes) * 8.0 / duration : 0.0;
    if (r.rx_packets > 0) m.mean_delay_s = r.delay_sum / static_cast<double>(r.rx_packets);
    if (r.rx_packets >= 2) m.mean_jitter_s = r.jitter_sum / static_cast<double>(r.rx_packets - 1);
    if (r.tx_packets > 0) m.loss_ratio = static_cast<double>(r.lost_packets) / static_cast<double>(r.tx_packets);
    return m;
}

std::string_view to_string(Actor a)
{
    return a == Actor::Client ? "client" : "server";
}

std::string_view to_string(Action a)
{
    return a == Action::Sent ? "sent" : "received";
}

EventLog parse_event_log(const std::string& text)
{
    static const std::regex re(
        R"(^\s*At time \+?(\d+(?:\.\d+)?)s (client|server) (sent|received) (\d+) bytes (to|from) (\S+) port (\d+)\s*$)");
    EventLog log;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++log.line_count;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::smatch m;
        bool ok = std::regex_match(line, m, re);
        // "sent ... from" and "received ... to" are not echo-app phrasing
        if (ok) ok = (m[3] == "sent") == (m[5] == "to");
        TimelineEvent e;
        if (ok) {
            try {
                e.time = Decimal::parse(m[1].str());
                e.bytes = std::stoull(m[4].str());
                unsigned long port = std::stoul(m[7].str());
                ok = e.bytes > 0 && port <= 65535;
                e.peer_port = static_cast<std::uint16_t>(port);
            } catch (const std::exception&) {
                ok = false;
            }
        }
        if (!ok) {
            ++log.skipped;
            continue;
        }
        e.actor = m[2] == "client" ? Actor::Client : Actor::Server;
        e.action = m[3] == "sent" ? Action::Sent : Action::Received;
        e.peer_address = m[6].str();
        log.events.push_back(std::move(e));
    }
    return log;
}

std::optional<Decimal> round_trip_time(const EventLog& log)
{
    const TimelineEvent* first_sent = nullptr;
    const TimelineEvent* last_received = nullptr;
    for (const auto& e : log.events) {
        if (e.actor != Actor::Client) continue;
        if (e.action == Action::Sent && !first_sent) first_sent = &e;
        if (e.action == Action::Received) last_received = &e;
    }
    if (!first_sent || !last_received) return std::nullopt;
    return last_received->time - first_sent->time;
}

std::string_view to_string(SummaryStyle s)
{
    return s == SummaryStyle::Template ? "template" : "llm_polished";
}

std::optional<SummaryStyle> parse_summary_style(std::string_view s)
{
    if (s == "template") return SummaryStyle::Template;
    if (s == "llm_polished") return SummaryStyle::LlmPolished;
    return std::nullopt;
}

namespace {

std::string protocol_name(int p)
{
    if (p == 6) return "TCP";
    if (p == 17) return "UDP";
    return std::to_string(p);
}

std::string or_marker(const std::optional<double>& v)
{
    return v ? format_plain(*v) : "n/a";
}

} // namespace

std::string template_summary(const std::vector<FlowRecord>& flows)
{
    if (flows.empty()) throw InvalidArgument("no flows to summarize");
    std::string out = "| Flow | Source | Destination | Protocol | Throughput (bit/s) | Mean delay (s) | "
                      "Mean jitter (s) | Loss ratio |\n"
                      "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : flows) {
        auto m = compute_metrics(r);
        out += "| " + std::to_string(r.flow_id) + " | " + r.src_addr + " port " + std::to_string(r.src_port) +
               " | " + r.dst_addr + " port " + std::to_string(r.dst_port) + " | " + protocol_name(r.protocol) +
               " | " + format_plain(m.throughput_bps) + " | " + or_marker(m.mean_delay_s) + " | " +
               or_marker(m.mean_jitter_s) + " | " + or_marker(m.loss_ratio) + " |\n";
    }
    return out;
}

std::string template_summary(const EventLog& log)
{
    if (log.events.empty()) throw InvalidArgument("no events to summarize");
    std::string out = "| Time (s) | Actor | Action | Bytes | Peer |\n|---|---|---|---|---|\n";
    for (const auto& e : log.events) {
        out += "| " + e.time.str() + " | " + std::string(to_string(e.actor)) + " | " +
               std::string(to_string(e.action)) + " | " + std::to_string(e.bytes) + " | " + e.peer_address +
               " port " + std::to_string(e.peer_port) + " |\n";
    }
    if (auto rtt = round_trip_time(log)) out += "\nRound-trip time: " + rtt->str() + " s\n";
    return out;
}

std::set<std::string> source_numbers(const std::vector<FlowRecord>& flows)
{
    std::set<std::string> out;
    for (const auto& r : flows) {
        auto m = compute_metrics(r);
        out.insert(std::to_string(r.flow_id));
        out.insert(r.src_addr);
        out.insert(r.dst_addr);
        out.insert(std::to_string(r.src_port));
        out.insert(std::to_string(r.dst_port));
        out.insert(std::to_string(r.protocol));
        out.insert(format_plain(m.throughput_bps));
        for (const auto& v : {m.mean_delay_s, m.mean_jitter_s, m.loss_ratio})
            if (v) out.insert(format_plain(*v));
    }
    return out;
}

std::set<std::string> source_numbers(const EventLog& log)
{
    std::set<std::string> out;
    for (const auto& e : log.events) {
        out.insert(e.time.str());
        out.insert(std::to_string(e.bytes));
        out.insert(e.peer_address);
        out.insert(std::to_string(e.peer_port));
    }
    if (auto rtt = round_trip_time(log)) out.insert(rtt->str());
    return out;
}

llm::LlmRequest polish_request(const llm::LlmGateway& gateway, const std::string& template_text)
{
    auto req = gateway.request(
        "You turn ns-3 simulation results into a short readable summary for a network engineer. "
        "Keep every number exactly as written, add no new numbers, and keep the markdown table.",
        template_text);
    req.temperature = 0.0;
    req.max_tokens = 1024;
    return req;
}

namespace {

std::multiset<std::string> number_set(const std::string& text)
{
    auto toks = numeric_tokens(text);
    return {toks.begin(), toks.end()};
}

Summary finish(std::string template_text, SummaryStyle style, llm::LlmGateway* gateway,
               llm::ProviderMode provider)
{
    Summary s;
    s.text = std::move(template_text);
    if (style == SummaryStyle::Template) return s;
    s.fell_back = true;
    if (!gateway) {
        s.fallback_reason = "no gateway configured";
        return s;
    }
    try {
        auto resp = gateway->complete(polish_request(*gateway, s.text), provider);
        auto want = number_set(s.text);
        auto got = number_set(resp.text);
        std::set<std::string> want_u(want.begin(), want.end());
        std::set<std::string> got_u(got.begin(), got.end());
        if (want_u != got_u) {
            s.fallback_reason = "polished text changed the set of numbers";
            return s;
        }
        s.text = resp.text;
        s.style = SummaryStyle::LlmPolished;
        s.fell_back = false;
    } catch (const Error& e) {
        s.fallback_reason = e.code() + ": " + e.what();
    }
    return s;
}

} // namespace

Summary summarize(const std::vector<FlowRecord>& flows, SummaryStyle style, llm::LlmGateway* gateway,
                  llm::ProviderMode provider)
{
    return finish(template_summary(flows), style, gateway, provider);
}

Summary summarize(const EventLog& log, SummaryStyle style, llm::LlmGateway* gateway, llm::ProviderMode provider)
{
    return finish(template_summary(log), style, gateway, provider);
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace

nlohmann::json to_json(const FlowRecord& r)
{
    return {
        {"flow_id", r.flow_id},
        {"src_addr", r.src_addr},
        {"src_port", r.src_port},
        {"dst_addr", r.dst_addr},
        {"dst_port", r.dst_port},
        {"protocol", r.protocol},
        {"time_first_tx_s", r.time_first_tx},
        {"time_last_rx_s", r.time_last_rx},
        {"tx_bytes", r.tx_bytes},
        {"rx_bytes", r.rx_bytes},
        {"tx_packets", r.tx_packets},
        {"rx_packets", r.rx_packets},
        {"lost_packets", r.lost_packets},
        {"delay_sum_s", r.delay_sum},
        {"jitter_sum_s", r.jitter_sum},
    };
}

nlohmann::json to_json(const FlowMetrics& m)
{
    return {
        {"flow_id", m.flow_id},
        {"throughput_bps", m.throughput_bps},
        {"mean_delay_s", optional_number(m.mean_delay_s)},
        {"mean_jitter_s", optional_number(m.mean_jitter_s)},
        {"loss_ratio", optional_number(m.loss_ratio)},
    };
}

nlohmann::json to_json(const TimelineEvent& e)
{
    return {
        {"time_s", e.time.str()},
        {"actor", to_string(e.actor)},
        {"action", to_string(e.action)},
        {"bytes", e.bytes},
        {"peer_address", e.peer_address},
        {"peer_port", e.peer_port},
    };
}

nlohmann::json to_json(const EventLog& log)
{
    auto events = nlohmann::json::array();
    for (const auto& e : log.events) events.push_back(to_json(e));
    nlohmann::json j{{"events", events}, {"skipped", log.skipped}, {"lines", log.line_count}};
    auto rtt = round_trip_time(log);
    j["round_trip_time_s"] = rtt ? nlohmann::json(rtt->str()) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const Summary& s)
{
    return {
        {"text", s.text},
        {"style", to_string(s.style)},
        {"fell_back", s.fell_back},
        {"fallback_reason", s.fallback_reason},
    };
}

nlohmann::json metrics_document(const std::vector<FlowRecord>& flows)
{
    auto arr = nlohmann::json::array();
    for (const auto& r : flows) arr.push_back({{"record", to_json(r)}, {"metrics", to_json(compute_metrics(r))}});
    return {{"flows", arr}};
}

} // namespace genonet
