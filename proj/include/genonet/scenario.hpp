#pragma once

#include "genonet/digest.hpp"
#include "genonet/error.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace genonet {

enum class ChannelModel { UMi, UMa, RMa, InHOffice };
enum class TrafficProfile { XR, CBR, BULK, ECHO };
enum class Transport { TCP, UDP };
enum class Beamforming { SCANNING, IDEAL, NONE };
enum class HelperStack { NR_5GLENA, WIFI, P2P_CSMA };

std::string_view to_string(ChannelModel v);
std::string_view to_string(TrafficProfile v);
std::string_view to_string(Transport v);
std::string_view to_string(Beamforming v);
std::string_view to_string(HelperStack v);

// Parsers accept canonical names and aliases ("UMi-StreetCanyon" -> UMi),
// case-insensitively. They return nullopt for unknown text.
std::optional<ChannelModel> parse_channel_model(std::string_view s);
std::optional<TrafficProfile> parse_traffic_profile(std::string_view s);
std::optional<Transport> parse_transport(std::string_view s);
std::optional<Beamforming> parse_beamforming(std::string_view s);
std::optional<HelperStack> parse_helper_stack(std::string_view s);

/// Lower edge of FR2 in hertz; carriers at or above are FR2+.
inline constexpr double kFr2LowerEdgeHz = 24.25e9;

/// Validated, unit-normalized scenario description. Frequencies in hertz,
/// times in seconds.
struct ScenarioSpec {
    double frequency_hz = 3.5e9;
    double bandwidth_hz = 20e6;
    int cc_count = 1;
    int numerology = 1;
    int gnb_count = 1;
    int ue_count = 1;
    ChannelModel channel_model = ChannelModel::UMi;
    TrafficProfile traffic_profile = TrafficProfile::CBR;
    Transport transport = Transport::UDP;
    Beamforming beamforming = Beamforming::NONE;
    double sim_duration_s = 10.0;
    HelperStack helper_stack = HelperStack::NR_5GLENA;

    bool is_fr2() const { return frequency_hz >= kFr2LowerEdgeHz; }

    bool operator==(const ScenarioSpec&) const = default;
};

/// Field-wise equality with 1e-6 relative tolerance on real-valued fields.
bool equivalent(const ScenarioSpec& a, const ScenarioSpec& b);

/// Canonical field names, in canonical (sorted) order.
const std::vector<std::string>& scenario_field_names();

/// Unvalidated draft: field name -> textual value ("28 GHz", "100", "UMi").
/// Keys are canonical field names; short aliases (frequency, bandwidth,
/// cc, ue, gnb, sim_duration) are accepted.
class RawSpecDraft {
public:
    RawSpecDraft() = default;
    RawSpecDraft(std::initializer_list<std::pair<const std::string, std::string>> init);

    RawSpecDraft& set(std::string_view field, std::string value);
    const std::map<std::string, std::string>& fields() const { return fields_; }
    bool empty() const { return fields_.empty(); }

private:
    std::map<std::string, std::string> fields_;
};

/// Maps an accepted draft key to its canonical ScenarioSpec field name.
std::optional<std::string> canonical_field(std::string_view key);

class UnknownUnit : public Error {
public:
    UnknownUnit(std::string field, std::string suffix);
    const std::string& suffix() const { return suffix_; }

private:
    std::string suffix_;
};

class NegativeMagnitude : public Error {
public:
    NegativeMagnitude(std::string field, const std::string& text);
};

/// Unknown key, unparseable number, or unknown enumeration value.
class InvalidField : public Error {
public:
    InvalidField(std::string field, const std::string& detail);
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Converts magnitudes to SI units and fills unspecified fields from the
/// defaults table. Does not validate.
ScenarioSpec normalize_units(const RawSpecDraft& raw);

/// Parses one magnitude ("28 GHz", "200MHz", "1e9") in hertz.
double parse_frequency(std::string_view field, std::string_view text);
/// Parses one duration ("10 s", "500 ms") in seconds.
double parse_duration(std::string_view field, std::string_view text);

struct Violation {
    std::string field;
    std::string rule_id;
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate(const ScenarioSpec& spec);

class SpecInvalid : public Error {
public:
    explicit SpecInvalid(ValidationReport report);
    const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

/// Key-sorted JSON form used for hashing, persistence and the HTTP API.
nlohmann::json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);
std::string canonical_serialization(const ScenarioSpec& spec);

Digest spec_hash(const ScenarioSpec& spec);

} // namespace genonet
