#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace genonet {

struct ProcessSpec {
    std::vector<std::string> argv;
    std::filesystem::path cwd;
    /// Complete child environment. Nothing is inherited implicitly.
    std::map<std::string, std::string> env;
};

struct ProcessLimits {
    std::chrono::milliseconds timeout{std::chrono::seconds(600)};
    std::uint64_t memory_bytes = 4ull << 30; ///< RLIMIT_AS; 0 disables
};

struct ProcessResult {
    int exit_status = -1; ///< exit code, or 128 + signal
    bool timed_out = false;
    std::string out;
    std::string err;
    double wall_time_s = 0;
    std::uint64_t peak_rss_bytes = 0;
};

/// Variables copied from the parent when set: PATH, HOME, LANG, LC_ALL,
/// TMPDIR, NS3_ROOT, CXX, CC, PYTHONPATH.
std::map<std::string, std::string> allowed_environment();

/// Runs `spec` in its own process group. On timeout the whole group gets
/// SIGKILL and the streams read so far are kept; after a normal exit the
/// group is swept as well so no descendant survives the call.
/// A failing exec reports exit status 127 with the reason on stderr.
ProcessResult run_process(const ProcessSpec& spec, const ProcessLimits& limits);

} // namespace genonet
