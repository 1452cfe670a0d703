#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace genonet {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Collapses every whitespace run to one space and strips both ends.
std::string collapse_whitespace(std::string_view s);

/// Shortest decimal string that round-trips to `v`.
std::string format_shortest(double v);

/// Engineering-notation literal with an exponent that is a multiple of
/// three and no trailing zeros: 2.8e10 -> "28e9", 2e8 -> "200e6", 1 -> "1e0".
/// The literal parses back to exactly `v`.
std::string format_engineering(double v);

/// Plain decimal rendering (no exponent) of the shortest round-trip digits:
/// 10 -> "10", 0.5 -> "0.5", 1e-3 -> "0.001".
std::string format_plain(double v);

/// Numeric tokens as they appear in running text (integers, decimals,
/// exponents, dotted addresses). Used for numeric-preservation checks.
std::vector<std::string> numeric_tokens(std::string_view text);

/// Exact fixed-point decimal, enough for log timestamps.
struct Decimal {
    std::int64_t units = 0; ///< value = units / 10^scale
    int scale = 0;

    static Decimal parse(std::string_view text);
    Decimal operator-(const Decimal& rhs) const;
    double to_double() const;
    std::string str() const; ///< trailing zeros trimmed, at least one integer digit
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Data directory holding keyword tables, templates, corpus and fixtures.
/// `GENONET_DATA_DIR` overrides the build-time default.
std::filesystem::path data_dir();

/// Value of an environment variable, or `fallback` when unset or empty.
std::string env_or(const char* name, std::string fallback);

} // namespace genonet
