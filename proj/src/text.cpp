#include "genonet/text.hpp"

#include "genonet/clock.hpp"
#include "genonet/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>

#ifndef GENONET_DEFAULT_DATA_DIR
#define GENONET_DEFAULT_DATA_DIR "data"
#endif

namespace genonet {

std::string to_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n\f\v");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n\f\v");
    return std::string(s.substr(b, e - b + 1));
}

std::string collapse_whitespace(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::string format_shortest(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw InvalidArgument("cannot format number");
    return std::string(buf, end);
}

namespace {

// Shortest round-trip digits of |v| and the decimal exponent of the last
// digit: v = digits * 10^exp.
struct DecimalDigits {
    bool negative = false;
    std::string digits;
    int exp = 0;
};

DecimalDigits decompose(double v)
{
    DecimalDigits d;
    d.negative = std::signbit(v);
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, std::fabs(v), std::chars_format::scientific);
    if (ec != std::errc()) throw InvalidArgument("cannot format number");
    std::string s(buf, end); // e.g. "2.8e+10"
    auto epos = s.find('e');
    std::string mant = s.substr(0, epos);
    int e10 = std::stoi(s.substr(epos + 1));
    auto dot = mant.find('.');
    int frac = 0;
    if (dot != std::string::npos) {
        frac = static_cast<int>(mant.size() - dot - 1);
        mant.erase(dot, 1);
    }
    while (mant.size() > 1 && mant.back() == '0') {
        mant.pop_back();
        if (frac > 0) --frac; else ++e10;
    }
    d.digits = mant;
    d.exp = e10 - frac;
    return d;
}

// Renders digits * 10^exp as a plain decimal.
std::string plain_from(const std::string& digits, int exp)
{
    if (digits == "0") return "0";
    if (exp >= 0) return digits + std::string(static_cast<std::size_t>(exp), '0');
    auto frac = static_cast<std::size_t>(-exp);
    if (digits.size() > frac)
        return digits.substr(0, digits.size() - frac) + "." + digits.substr(digits.size() - frac);
    return "0." + std::string(frac - digits.size(), '0') + digits;
}

} // namespace

std::string format_engineering(double v)
{
    auto d = decompose(v);
    if (d.digits == "0") return "0e0";
    // Position of the leading digit: v = 0.d1d2... * 10^(lead).
    int lead = d.exp + static_cast<int>(d.digits.size());
    int e3 = static_cast<int>(std::floor((lead - 1) / 3.0)) * 3;
    std::string mant = plain_from(d.digits, d.exp - e3);
    return (d.negative ? "-" : "") + mant + "e" + std::to_string(e3);
}

std::string format_plain(double v)
{
    auto d = decompose(v);
    return (d.negative && d.digits != "0" ? "-" : "") + plain_from(d.digits, d.exp);
}

std::vector<std::string> numeric_tokens(std::string_view text)
{
    static const std::regex re(R"((?:^|[^A-Za-z0-9_.])([-+]?\d+(?:\.\d+)*(?:[eE][-+]?\d+)?))");
    std::vector<std::string> out;
    std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        std::string tok = (*it)[1].str();
        if (!tok.empty() && tok.front() == '+') tok.erase(0, 1);
        out.push_back(tok);
    }
    return out;
}

Decimal Decimal::parse(std::string_view text)
{
    std::string s = trim(text);
    Decimal d;
    bool neg = false;
    std::size_t i = 0;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) neg = s[i++] == '-';
    bool any = false;
    bool frac = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (c == '.' && !frac) {
            frac = true;
            continue;
        }
        if (c < '0' || c > '9') throw InvalidArgument("not a decimal: " + s);
        d.units = d.units * 10 + (c - '0');
        if (frac) ++d.scale;
        any = true;
    }
    if (!any) throw InvalidArgument("not a decimal: " + s);
    if (neg) d.units = -d.units;
    return d;
}

Decimal Decimal::operator-(const Decimal& rhs) const
{
    Decimal a = *this;
    Decimal b = rhs;
    while (a.scale < b.scale) { a.units *= 10; ++a.scale; }
    while (b.scale < a.scale) { b.units *= 10; ++b.scale; }
    return Decimal{a.units - b.units, a.scale};
}

double Decimal::to_double() const
{
    return std::strtod(str().c_str(), nullptr);
}

std::string Decimal::str() const
{
    std::int64_t u = units < 0 ? -units : units;
    std::string digits = std::to_string(u);
    int sc = scale;
    while (sc > 0 && digits.size() > 1 && digits.back() == '0') {
        digits.pop_back();
        --sc;
    }
    if (u == 0) return "0";
    return (units < 0 ? "-" : "") + plain_from(digits, -sc);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::filesystem::path data_dir()
{
    return env_or("GENONET_DATA_DIR", GENONET_DEFAULT_DATA_DIR);
}

std::string env_or(const char* name, std::string fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

std::string format_iso8601(TimePoint t)
{
    using namespace std::chrono;
    auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
    std::time_t secs = static_cast<std::time_t>(ms / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
    return out;
}

} // namespace genonet
