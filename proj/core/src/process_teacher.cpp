#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "idcm/teacher.hpp"
#include "idcm/util.hpp"

namespace idcm {

namespace {

void close_fd(int& fd) noexcept {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

std::string join_ids(std::span<const TokenId> ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i != 0) {
            out += ' ';
        }
        out += std::to_string(ids[i]);
    }
    return out;
}

} // namespace

ProcessTeacher::ProcessTeacher(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout), info_{"proc:" + command_, 40.0} {
    // a dead scorer must surface as a write error, not terminate the engine
    std::signal(SIGPIPE, SIG_IGN);

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) {
        throw Error("pipe() failed: " + std::string(std::strerror(errno)));
    }
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error("pipe() failed: " + std::string(std::strerror(errno)));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) {
            ::close(fd);
        }
        throw Error("fork() failed: " + std::string(std::strerror(errno)));
    }
    if (pid_ == 0) {
        // own process group, so shutdown also reaches whatever the shell spawned
        ::setpgid(0, 0);
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) {
            ::close(fd);
        }
        ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid_, pid_);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);

    try {
        send_line("HELLO idcm/1");
        auto reply = read_line();
        if (reply.rfind("OK", 0) != 0) {
            throw Error("scorer '" + command_ + "' rejected handshake: '" + reply + "'");
        }
        auto name = std::string(trim(std::string_view(reply).substr(2)));
        if (!name.empty()) {
            info_.name = name;
        }
    } catch (...) {
        shutdown();
        throw;
    }
}

ProcessTeacher::~ProcessTeacher() { shutdown(); }

void ProcessTeacher::shutdown() noexcept {
    close_fd(to_child_);
    close_fd(from_child_);
    if (pid_ > 0) {
        int status = 0;
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) != 0) {
                pid_ = -1;
                return;
            }
            ::usleep(2000);
        }
        ::kill(-pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

void ProcessTeacher::send_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        auto n = ::write(to_child_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw Error("scorer '" + info_.name + "': write failed: " + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

std::string ProcessTeacher::read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    while (true) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            auto line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            return line;
        }
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            throw Error("scorer '" + info_.name + "' timed out after " + std::to_string(timeout_.count()) + " ms");
        }
        pollfd pfd{from_child_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw Error("scorer '" + info_.name + "': poll failed: " + std::strerror(errno));
        }
        if (rc == 0) {
            continue;
        }
        char buf[4096];
        auto n = ::read(from_child_, buf, sizeof(buf));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw Error("scorer '" + info_.name + "': read failed: " + std::strerror(errno));
        }
        if (n == 0) {
            throw Error("scorer '" + info_.name + "' closed its output");
        }
        buffer_.append(buf, static_cast<std::size_t>(n));
    }
}

std::string ProcessTeacher::format_request(const Query& query, const TokenizedDocument& doc,
                                           const PassageWindow& window) {
    return "S\t" + query.query_id + "\t" + doc.doc_id + "\t" + std::to_string(window.window_index) + "\t" +
           join_ids(query.tokens) + "\t" + join_ids(window.tokens);
}

double ProcessTeacher::score(const Query& query, const TokenizedDocument& doc, const PassageWindow& window) {
    send_line(format_request(query, doc, window));
    auto reply = read_line();
    double value = 0;
    if (!parse_real(reply, value)) {
        throw Error("scorer '" + info_.name + "' sent an invalid score: '" + reply + "'");
    }
    return value;
}

std::unique_ptr<ExpensiveScorer> ProcessTeacher::clone() const {
    return std::make_unique<ProcessTeacher>(command_, timeout_);
}

} // namespace idcm
