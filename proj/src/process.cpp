#include "genonet/process.hpp"

#include "genonet/error.hpp"

#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

namespace genonet {

std::map<std::string, std::string> allowed_environment()
{
    std::map<std::string, std::string> env;
    for (const char* name : {"PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "NS3_ROOT", "CXX", "CC", "PYTHONPATH"}) {
        if (const char* v = std::getenv(name)) env[name] = v;
    }
    return env;
}

namespace {

struct Pipe {
    int fd[2] = {-1, -1};

    Pipe()
    {
        if (::pipe2(fd, O_CLOEXEC) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
    }
    ~Pipe()
    {
        close_read();
        close_write();
    }
    void close_read()
    {
        if (fd[0] >= 0) ::close(fd[0]);
        fd[0] = -1;
    }
    void close_write()
    {
        if (fd[1] >= 0) ::close(fd[1]);
        fd[1] = -1;
    }
};

[[noreturn]] void child_fail(const char* what)
{
    std::string msg = std::string(what) + ": " + std::strerror(errno) + "\n";
    (void)!::write(STDERR_FILENO, msg.data(), msg.size());
    ::_exit(127);
}

} // namespace

ProcessResult run_process(const ProcessSpec& spec, const ProcessLimits& limits)
{
    if (spec.argv.empty()) throw InvalidArgument("empty argv");

    // Everything the child needs is built before fork.
    std::vector<std::string> env_strings;
    for (const auto& [k, v] : spec.env) env_strings.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);
    std::vector<std::string> args = spec.argv;
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    std::string cwd = spec.cwd.string();

    Pipe out;
    Pipe err;
    auto start = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out.fd[1], STDOUT_FILENO);
        ::dup2(err.fd[1], STDERR_FILENO);
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) child_fail("chdir");
        if (limits.memory_bytes > 0) {
            rlimit rl{limits.memory_bytes, limits.memory_bytes};
            if (::setrlimit(RLIMIT_AS, &rl) != 0) child_fail("setrlimit");
        }
        if (argv[0][0] == '/' || std::strchr(argv[0], '/')) {
            ::execve(argv[0], argv.data(), envp.data());
        } else {
            // PATH lookup against the child environment, not ours
            auto path_it = spec.env.find("PATH");
            std::string path = path_it == spec.env.end() ? "/usr/bin:/bin" : path_it->second;
            std::size_t s = 0;
            while (s <= path.size()) {
                auto e = path.find(':', s);
                if (e == std::string::npos) e = path.size();
                std::string cand = path.substr(s, e - s) + "/" + argv[0];
                ::execve(cand.c_str(), argv.data(), envp.data());
                s = e + 1;
            }
        }
        child_fail("exec");
    }
    ::setpgid(pid, pid); // also done in the child; whichever runs first wins
    out.close_write();
    err.close_write();

    ProcessResult result;
    auto deadline = start + limits.timeout;
    pollfd fds[2] = {{out.fd[0], POLLIN, 0}, {err.fd[0], POLLIN, 0}};
    std::string* sinks[2] = {&result.out, &result.err};
    int open_fds = 2;
    bool killed = false;
    int status = 0;
    bool reaped = false;
    rusage usage{};
    char buf[65536];

    while (open_fds > 0) {
        int wait_ms = -1;
        if (!killed) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) {
                ::kill(-pid, SIGKILL);
                killed = true;
                result.timed_out = true;
                continue;
            }
            wait_ms = static_cast<int>(std::min<long long>(left.count(), 100));
        } else {
            wait_ms = 100;
        }
        int n = ::poll(fds, 2, wait_ms);
        if (n < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            ssize_t got = ::read(fds[i].fd, buf, sizeof buf);
            if (got > 0) {
                sinks[i]->append(buf, static_cast<std::size_t>(got));
            } else if (got == 0 || (errno != EINTR && errno != EAGAIN)) {
                fds[i].fd = -1;
                --open_fds;
            }
        }
        // A descendant may hold the pipes open after the main child exits.
        if (!reaped && ::wait4(pid, &status, WNOHANG, &usage) == pid) {
            reaped = true;
            ::kill(-pid, SIGKILL);
        }
    }
    if (!reaped) ::wait4(pid, &status, 0, &usage);
    ::kill(-pid, SIGKILL);

    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.peak_rss_bytes = static_cast<std::uint64_t>(usage.ru_maxrss) * 1024;
    if (WIFEXITED(status)) result.exit_status = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) result.exit_status = 128 + WTERMSIG(status);
    return result;
}

} // namespace genonet
