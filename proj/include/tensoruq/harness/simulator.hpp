#pragma once

// Black-box simulator adapters.
//
// External protocol (LF-terminated text):
//   stdin  of the child: one line per point, d comma-separated decimals in raw
//                        parameter space, e.g. "0.5,-1.25\n3.0,0.0\n";
//   stdout of the child: one decimal per line, in the same order.
// The child is run through /bin/sh -c and killed when the batch exceeds the
// timeout.

#include <tensoruq/errors.hpp>
#include <tensoruq/harness/benchmark.hpp>
#include <tensoruq/surrogate.hpp>

#include <Eigen/Dense>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstring>
#include <functional>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace tensoruq::harness {

/// Maps raw points (N x d) to N responses.
using Simulator = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Shortest round-trip decimal; integral values keep a trailing ".0".
inline std::string format_decimal(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline std::string format_points(const Eigen::MatrixXd& raw)
{
    std::string out;
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (Eigen::Index k = 0; k < raw.cols(); ++k) {
            if (k > 0) out += ',';
            out += format_decimal(raw(i, k));
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_double(std::string_view s, double& out)
{
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

} // namespace detail

/// Parses one finite decimal per line; errors name the 1-based offending line.
inline Eigen::VectorXd parse_values(std::string_view text, Eigen::Index expected)
{
    Eigen::VectorXd out(expected);
    Eigen::Index line = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const auto end = nl == std::string_view::npos ? text.size() : nl;
        const std::string_view row = text.substr(pos, end - pos);
        pos = end + 1;
        if (line >= expected) {
            if (detail::trim(row).empty() && pos >= text.size()) break;
            throw protocol_error("simulator protocol error at line " + std::to_string(line + 1) +
                                 ": unexpected extra output");
        }
        double v = 0.0;
        if (!detail::parse_double(row, v))
            throw protocol_error("simulator protocol error at line " + std::to_string(line + 1) +
                                 ": malformed value '" + std::string(row) + "'");
        out[line++] = v;
    }
    if (line < expected)
        throw protocol_error("simulator protocol error at line " + std::to_string(line + 1) +
                             ": expected " + std::to_string(expected) + " values, got " + std::to_string(line));
    return out;
}

namespace detail {

class FdGuard {
public:
    explicit FdGuard(int fd = -1) : fd_(fd) {}
    FdGuard(const FdGuard&) = delete;
    FdGuard& operator=(const FdGuard&) = delete;
    ~FdGuard() { reset(); }
    int get() const { return fd_; }
    void reset(int fd = -1)
    {
        if (fd_ >= 0) ::close(fd_);
        fd_ = fd;
    }

private:
    int fd_;
};

// Ignores SIGPIPE for the lifetime of the object so a child that exits early
// surfaces as EPIPE instead of terminating the harness.
class SigpipeIgnore {
public:
    SigpipeIgnore()
    {
        struct sigaction ign {};
        ign.sa_handler = SIG_IGN;
        ::sigaction(SIGPIPE, &ign, &saved_);
    }
    ~SigpipeIgnore() { ::sigaction(SIGPIPE, &saved_, nullptr); }

private:
    struct sigaction saved_ {};
};

inline std::string errno_text(const char* what)
{
    return std::string(what) + ": " + std::strerror(errno);
}

} // namespace detail

struct ProcessOutput {
    std::string stdout_text;
    int exit_status = 0;
};

/// Runs `command` via /bin/sh -c, feeding `input` on stdin and collecting stdout.
inline ProcessOutput run_process(const std::string& command, const std::string& input,
                                 std::chrono::milliseconds timeout)
{
    detail::SigpipeIgnore sigpipe;
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) throw protocol_error(detail::errno_text("pipe"));
    detail::FdGuard in_r(in_pipe[0]), in_w(in_pipe[1]);
    if (::pipe(out_pipe) != 0) throw protocol_error(detail::errno_text("pipe"));
    detail::FdGuard out_r(out_pipe[0]), out_w(out_pipe[1]);

    const pid_t pid = ::fork();
    if (pid < 0) throw protocol_error(detail::errno_text("fork"));
    if (pid == 0) {
        ::dup2(in_r.get(), STDIN_FILENO);
        ::dup2(out_w.get(), STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    in_r.reset();
    out_w.reset();
    ::fcntl(in_w.get(), F_SETFL, O_NONBLOCK);

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    ProcessOutput result;
    std::size_t written = 0;
    if (input.empty()) in_w.reset();
    char buf[65536];

    auto kill_child = [&](const std::string& why) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
        throw protocol_error(why);
    };

    while (out_r.get() >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) kill_child("simulator timed out after " + std::to_string(timeout.count()) + " ms");
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();

        pollfd fds[2];
        nfds_t n = 0;
        fds[n++] = {out_r.get(), POLLIN, 0};
        if (in_w.get() >= 0) fds[n++] = {in_w.get(), POLLOUT, 0};
        const int rc = ::poll(fds, n, static_cast<int>(std::min<long long>(left, 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            kill_child(detail::errno_text("poll"));
        }
        if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
            const ssize_t w = ::write(in_w.get(), input.data() + written, input.size() - written);
            if (w > 0) written += static_cast<std::size_t>(w);
            if (w < 0 && errno != EAGAIN && errno != EINTR) in_w.reset();   // child closed stdin early
            if (written == input.size()) in_w.reset();
        }
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            const ssize_t r = ::read(out_r.get(), buf, sizeof buf);
            if (r > 0) result.stdout_text.append(buf, static_cast<std::size_t>(r));
            else if (r == 0 || (errno != EAGAIN && errno != EINTR)) out_r.reset();
        }
    }
    in_w.reset();

    int status = 0;
    while (true) {
        const pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (w < 0 && errno != EINTR) throw protocol_error(detail::errno_text("waitpid"));
        if (std::chrono::steady_clock::now() >= deadline)
            kill_child("simulator timed out after " + std::to_string(timeout.count()) + " ms");
        ::usleep(1000);
    }
    result.exit_status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return result;
}

/// Evaluates raw points with an external command following the line protocol.
inline Eigen::VectorXd external_simulator(const std::string& command, const Eigen::MatrixXd& raw,
                                          std::chrono::milliseconds timeout = std::chrono::minutes(10))
{
    const ProcessOutput out = run_process(command, format_points(raw), timeout);
    if (out.exit_status != 0)
        throw protocol_error("simulator exited with status " + std::to_string(out.exit_status));
    return parse_values(out.stdout_text, raw.rows());
}

inline Simulator make_external_simulator(std::string command, std::chrono::milliseconds timeout)
{
    return [command = std::move(command), timeout](const Eigen::MatrixXd& raw) {
        return external_simulator(command, raw, timeout);
    };
}

/// Wraps a black box of standardized parameters as a raw-space simulator.
inline Simulator make_builtin_simulator(BlackBox fn, std::vector<Standardization> standardization)
{
    return [fn = std::move(fn), st = std::move(standardization)](const Eigen::MatrixXd& raw) {
        Eigen::VectorXd y(raw.rows());
        Eigen::VectorXd xi(raw.cols());
        for (Eigen::Index i = 0; i < raw.rows(); ++i) {
            for (Eigen::Index k = 0; k < raw.cols(); ++k) {
                const auto& s = st[static_cast<std::size_t>(k)];
                xi[k] = (raw(i, k) - s.mean) / s.std;
            }
            y[i] = fn(xi);
        }
        return y;
    };
}

} // namespace tensoruq::harness
