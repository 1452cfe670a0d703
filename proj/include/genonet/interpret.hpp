#pragma once

#include "genonet/error.hpp"
#include "genonet/llm.hpp"
#include "genonet/text.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace genonet {

/// One flow from a FlowMonitor document joined with its classifier entry.
/// Times are seconds.
struct FlowRecord {
    std::uint32_t flow_id = 0;
    std::string src_addr;
    std::uint16_t src_port = 0;
    std::string dst_addr;
    std::uint16_t dst_port = 0;
    int protocol = 0; ///< IP protocol number, 6 = TCP, 17 = UDP
    double time_first_tx = 0;
    double time_last_rx = 0;
    std::uint64_t tx_bytes = 0;
    std::uint64_t rx_bytes = 0;
    std::uint64_t tx_packets = 0;
    std::uint64_t rx_packets = 0;
    std::uint64_t lost_packets = 0;
    double delay_sum = 0;
    double jitter_sum = 0;

    bool operator==(const FlowRecord&) const = default;
};

/// Empty optionals are the undefined marker: rendered `n/a` in text and
/// `null` in JSON.
struct FlowMetrics {
    std::uint32_t flow_id = 0;
    double throughput_bps = 0;
    std::optional<double> mean_delay_s;
    std::optional<double> mean_jitter_s;
    std::optional<double> loss_ratio; ///< empty when txPackets is 0
};

class MalformedXml : public Error {
public:
    MalformedXml(std::string position, const std::string& detail);
    const std::string& position() const { return position_; }

private:
    std::string position_;
};

class MissingClassifier : public Error {
public:
    explicit MissingClassifier(std::uint32_t flow_id);
    std::uint32_t flow_id() const { return flow_id_; }

private:
    std::uint32_t flow_id_;
};

/// Raised for a flow attribute whose value cannot be read, time units included.
class UnitParseError : public Error {
public:
    UnitParseError(std::string attribute, const std::string& value);
    const std::string& attribute() const { return attribute_; }

private:
    std::string attribute_;
};

/// ns-3 Time text ("+1.2e9ns", "+1.2s", "250ms") to seconds. The decimal
/// exponent is shifted before conversion so equivalent encodings give the
/// same double. Returns nullopt for anything else.
std::optional<double> parse_time_seconds(std::string_view text);

/// Records in document order. Accepts Ipv4FlowClassifier and Ipv6FlowClassifier.
std::vector<FlowRecord> parse_flowmonitor(const std::string& xml);

FlowMetrics compute_metrics(const FlowRecord& r);

enum class Actor { Client, Server };
enum class Action { Sent, Received };

std::string_view to_string(Actor a);
std::string_view to_string(Action a);

struct TimelineEvent {
    Decimal time; ///< seconds, exact as logged
    Actor actor = Actor::Client;
    Action action = Action::Sent;
    std::uint64_t bytes = 0;
    std::string peer_address;
    std::uint16_t peer_port = 0;
};

struct EventLog {
    std::vector<TimelineEvent> events;
    std::size_t skipped = 0;
    std::size_t line_count = 0; ///< events.size() + skipped
};

/// Line grammar: `At time [+]<t>s <client|server> <sent|received> <n> bytes <to|from> <addr> port <p>`.
/// A trailing newline does not start another line. Never throws.
EventLog parse_event_log(const std::string& text);

/// Last client-received time minus first client-sent time.
std::optional<Decimal> round_trip_time(const EventLog& log);

enum class SummaryStyle { Template, LlmPolished };

std::string_view to_string(SummaryStyle s);
std::optional<SummaryStyle> parse_summary_style(std::string_view s);

struct Summary {
    std::string text;
    SummaryStyle style = SummaryStyle::Template; ///< style actually delivered
    bool fell_back = false;
    std::string fallback_reason;
};

/// Deterministic markdown renderings. Throws InvalidArgument on empty input.
std::string template_summary(const std::vector<FlowRecord>& flows);
std::string template_summary(const EventLog& log);

/// Decimal renderings of every input value and derived statement value. A
/// template summary only contains numbers from this set.
std::set<std::string> source_numbers(const std::vector<FlowRecord>& flows);
std::set<std::string> source_numbers(const EventLog& log);

/// Polishing request: one gateway call that must keep every number verbatim.
llm::LlmRequest polish_request(const llm::LlmGateway& gateway, const std::string& template_text);

/// Template style never touches the gateway. Polished output is kept only if
/// its numeric token set equals the template's; otherwise, and on any
/// gateway error, the template text is returned with `fell_back` set.
Summary summarize(const std::vector<FlowRecord>& flows, SummaryStyle style,
                  llm::LlmGateway* gateway = nullptr,
                  llm::ProviderMode provider = llm::ProviderMode::Replay);
Summary summarize(const EventLog& log, SummaryStyle style, llm::LlmGateway* gateway = nullptr,
                  llm::ProviderMode provider = llm::ProviderMode::Replay);

nlohmann::json to_json(const FlowRecord& r);
nlohmann::json to_json(const FlowMetrics& m);
nlohmann::json to_json(const TimelineEvent& e);
nlohmann::json to_json(const EventLog& log);
nlohmann::json to_json(const Summary& s);

/// Machine-readable metrics file: `{"flows": [{record fields, metrics}]}`,
/// keys sorted.
nlohmann::json metrics_document(const std::vector<FlowRecord>& flows);

} // namespace genonet
