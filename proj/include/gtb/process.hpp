#pragma once

// Child-process spawning with piped standard output/error.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gtb/error.hpp"

extern char** environ;

namespace gtb {

struct ExitStatus {
  int code = 0;        // exit code, or the signal number when `signaled`
  bool signaled = false;

  bool success() const { return !signaled && code == 0; }
  std::string describe() const {
    return signaled ? "killed by signal " + std::to_string(code) : "exit status " + std::to_string(code);
  }
};

struct SpawnError : Error {
  SpawnError(const std::string& what, int err) : Error(ErrorKind::device, what), errno_value(err) {}
  int errno_value;
};

inline std::string join_argv(const std::vector<std::string>& argv) {
  std::string s;
  for (const auto& a : argv) {
    if (!s.empty()) s += ' ';
    s += a;
  }
  return s;
}

/// Owns one child process. The destructor kills and reaps a still-running child.
class ChildProcess {
 public:
  struct Options {
    bool capture_stdout = true;
    bool capture_stderr = false;  // otherwise inherited
    std::vector<std::string> extra_env;  // "KEY=VALUE"
  };

  ChildProcess() = default;
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;
  ChildProcess(ChildProcess&& o) noexcept { *this = std::move(o); }
  ChildProcess& operator=(ChildProcess&& o) noexcept {
    if (this != &o) {
      kill_and_reap();
      close_fds();
      pid_ = std::exchange(o.pid_, -1);
      out_fd_ = std::exchange(o.out_fd_, -1);
      err_fd_ = std::exchange(o.err_fd_, -1);
      status_ = std::exchange(o.status_, std::nullopt);
    }
    return *this;
  }
  ~ChildProcess() {
    kill_and_reap();
    close_fds();
  }

  static ChildProcess spawn(const std::vector<std::string>& argv, const Options& opts) {
    if (argv.empty()) throw UsageError("cannot spawn an empty command");
    int out_pipe[2] = {-1, -1};
    int err_pipe[2] = {-1, -1};
    if (opts.capture_stdout && pipe2(out_pipe, O_CLOEXEC) != 0) throw SpawnError("pipe failed", errno);
    if (opts.capture_stderr && pipe2(err_pipe, O_CLOEXEC) != 0) {
      int e = errno;
      if (out_pipe[0] >= 0) ::close(out_pipe[0]), ::close(out_pipe[1]);
      throw SpawnError("pipe failed", e);
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    if (opts.capture_stdout) posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    if (opts.capture_stderr) posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);

    // New process group so terminate() reaches shell-wrapped workloads too.
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);

    std::vector<std::string> env_store;
    for (char** e = environ; e && *e; ++e) env_store.emplace_back(*e);
    for (const auto& kv : opts.extra_env) env_store.push_back(kv);
    std::vector<char*> envp;
    for (auto& s : env_store) envp.push_back(s.data());
    envp.push_back(nullptr);

    std::vector<std::string> args = argv;
    std::vector<char*> cargv;
    for (auto& a : args) cargv.push_back(a.data());
    cargv.push_back(nullptr);

    pid_t pid = -1;
    int rc = posix_spawnp(&pid, cargv[0], &actions, &attr, cargv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    if (out_pipe[1] >= 0) ::close(out_pipe[1]);
    if (err_pipe[1] >= 0) ::close(err_pipe[1]);
    if (rc != 0) {
      if (out_pipe[0] >= 0) ::close(out_pipe[0]);
      if (err_pipe[0] >= 0) ::close(err_pipe[0]);
      throw SpawnError("cannot launch '" + argv[0] + "': " + std::strerror(rc), rc);
    }
    ChildProcess child;
    child.pid_ = pid;
    child.out_fd_ = out_pipe[0];
    child.err_fd_ = err_pipe[0];
    return child;
  }

  pid_t pid() const { return pid_; }
  int stdout_fd() const { return out_fd_; }
  int stderr_fd() const { return err_fd_; }

  /// Hands the stdout descriptor to the caller, who becomes responsible for closing it.
  int release_stdout() { return std::exchange(out_fd_, -1); }

  /// Non-blocking exit check.
  std::optional<ExitStatus> poll_exit() {
    if (status_ || pid_ < 0) return status_;
    int st = 0;
    pid_t r = ::waitpid(pid_, &st, WNOHANG);
    if (r == pid_) status_ = decode(st);
    return status_;
  }

  ExitStatus wait() {
    if (status_) return *status_;
    int st = 0;
    while (::waitpid(pid_, &st, 0) < 0 && errno == EINTR) {
    }
    status_ = decode(st);
    return *status_;
  }

  /// SIGTERM to the process group, then SIGKILL once `grace` has elapsed.
  ExitStatus terminate(std::chrono::milliseconds grace) {
    if (auto s = poll_exit()) return *s;
    ::kill(-pid_, SIGTERM);
    auto deadline = std::chrono::steady_clock::now() + grace;
    while (std::chrono::steady_clock::now() < deadline) {
      if (auto s = poll_exit()) return *s;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(-pid_, SIGKILL);
    return wait();
  }

 private:
  static ExitStatus decode(int st) {
    if (WIFSIGNALED(st)) return {WTERMSIG(st), true};
    return {WEXITSTATUS(st), false};
  }

  void kill_and_reap() {
    if (pid_ > 0 && !status_) {
      ::kill(-pid_, SIGKILL);
      wait();
    }
  }

  void close_fds() {
    if (out_fd_ >= 0) ::close(out_fd_), out_fd_ = -1;
    if (err_fd_ >= 0) ::close(err_fd_), err_fd_ = -1;
  }

  pid_t pid_ = -1;
  int out_fd_ = -1;
  int err_fd_ = -1;
  std::optional<ExitStatus> status_;
};

struct CapturedRun {
  ExitStatus status;
  std::string out;
  std::string err;
};

/// Runs a command to completion, collecting both output streams.
inline CapturedRun run_capture(const std::vector<std::string>& argv, const std::vector<std::string>& extra_env = {}) {
  ChildProcess child = ChildProcess::spawn(argv, {.capture_stdout = true, .capture_stderr = true, .extra_env = extra_env});
  CapturedRun result;
  pollfd fds[2] = {{child.stdout_fd(), POLLIN, 0}, {child.stderr_fd(), POLLIN, 0}};
  std::string* sinks[2] = {&result.out, &result.err};
  int open_count = 2;
  char buf[4096];
  while (open_count > 0) {
    if (::poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        fds[i].fd = -1;
        --open_count;
      }
    }
  }
  result.status = child.wait();
  return result;
}

/// Reads a descriptor line by line on a background thread, reporting each
/// line together with its receipt time. Owns and closes the descriptor.
class LineReader {
 public:
  using Callback = std::function<void(std::string line, std::chrono::steady_clock::time_point received)>;

  LineReader() = default;
  LineReader(int fd, Callback cb) : fd_(fd) {
    thread_ = std::thread([this, cb = std::move(cb)] { loop(cb); });
  }
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;
  ~LineReader() { join(); }

  /// Blocks until the writer side closes (the child exits or is killed).
  void join() {
    if (thread_.joinable()) thread_.join();
    if (fd_ >= 0) ::close(fd_), fd_ = -1;
  }

 private:
  void loop(const Callback& cb) {
    std::string pending;
    char buf[4096];
    for (;;) {
      ssize_t n = ::read(fd_, buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      auto now = std::chrono::steady_clock::now();
      pending.append(buf, static_cast<std::size_t>(n));
      std::size_t pos;
      while ((pos = pending.find('\n')) != std::string::npos) {
        cb(pending.substr(0, pos), now);
        pending.erase(0, pos + 1);
      }
    }
    if (!pending.empty()) cb(pending, std::chrono::steady_clock::now());
  }

  int fd_ = -1;
  std::thread thread_;
};

}  // namespace gtb
