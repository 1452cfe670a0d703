#pragma once

// Shared fixtures for the unit tests.

#include "genonet/scenario.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace support {

inline genonet::ScenarioSpec xr_spec()
{
    using namespace genonet;
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

/// Directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static std::atomic<int> n{0};
        path_ = std::filesystem::temp_directory_path() /
                ("genonet-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(++n));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace support
