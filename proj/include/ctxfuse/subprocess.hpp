#pragma once

// Bridge to an external scorer over newline-delimited JSON on the child's
// standard input/output:
//
//   -> {"op":"hello"}                                  <- {"vocab_size":N}
//   -> {"op":"dist","conditioning":[ids],"prefix":[ids]} <- {"logp":[N floats]}
//   -> {"op":"quit"}
//
// Floats are base-10 text with at least 9 significant digits; the logp
// vector must encode a normalized distribution (use large negative values
// for near-zero probabilities, -inf is not representable in JSON).
// Requests are stateless, so one connection serves many sessions; access
// is serialized per connection. Run one connection per worker when
// decoding concurrently.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxfuse/core.hpp"
#include "ctxfuse/scorer.hpp"

namespace ctxfuse {

class SubprocessScorer final : public Model {
 public:
  // command = executable plus arguments, resolved via PATH.
  SubprocessScorer(std::vector<std::string> command, Vocabulary vocab)
      : vocab_(std::move(vocab)), command_(std::move(command)) {
    if (command_.empty()) fail(errc::invalid_config, "empty backend command");
    spawn();
    handshake();
  }

  ~SubprocessScorer() override { shutdown(); }

  SubprocessScorer(const SubprocessScorer&) = delete;
  SubprocessScorer& operator=(const SubprocessScorer&) = delete;

  const Vocabulary& vocab() const override { return vocab_; }
  const char* backend_name() const override { return "subprocess"; }

  NextTokenDistribution next_dist(std::span<const TokenId> conditioning,
                                  std::span<const TokenId> prefix) const override {
    nlohmann::json req;
    req["op"] = "dist";
    req["conditioning"] = std::vector<TokenId>(conditioning.begin(), conditioning.end());
    req["prefix"] = std::vector<TokenId>(prefix.begin(), prefix.end());

    std::lock_guard<std::mutex> lock(wire_mutex_);
    send_line(req.dump());
    nlohmann::json reply = parse_reply(recv_line(errc::backend_io));
    auto it = reply.find("logp");
    if (it == reply.end() || !it->is_array())
      fail(errc::backend_protocol, "reply lacks 'logp' array");
    NextTokenDistribution dist;
    dist.logp.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_number()) fail(errc::backend_protocol, "non-numeric logp entry");
      dist.logp.push_back(v.get<double>());
    }
    if (dist.logp.size() != vocab_.size())
      fail(errc::backend_protocol,
           "logp length " + std::to_string(dist.logp.size()) + " != vocabulary size " +
               std::to_string(vocab_.size()));
    double mass = dist.prob_mass();
    if (std::abs(mass - 1.0) > 1e-6)
      fail(errc::backend_protocol, "distribution mass " + format_double(mass));
    return dist;
  }

 private:
  void spawn() {
    int to_child[2], from_child[2], err_pipe[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0 || pipe(err_pipe) != 0)
      fail(errc::backend_spawn, std::string("pipe: ") + std::strerror(errno));
    fcntl(err_pipe[1], F_SETFD, FD_CLOEXEC);

    pid_ = fork();
    if (pid_ < 0) fail(errc::backend_spawn, std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      close(err_pipe[0]);
      std::vector<char*> argv;
      argv.reserve(command_.size() + 1);
      for (std::string& a : command_) argv.push_back(a.data());
      argv.push_back(nullptr);
      execvp(argv[0], argv.data());
      int err = errno;
      ssize_t n = write(err_pipe[1], &err, sizeof(err));
      (void)n;
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    close(err_pipe[1]);
    stdin_fd_ = to_child[1];
    stdout_fd_ = from_child[0];

    int exec_errno = 0;
    ssize_t n = read(err_pipe[0], &exec_errno, sizeof(exec_errno));
    close(err_pipe[0]);
    if (n > 0) {
      reap();
      fail(errc::backend_spawn,
           "'" + command_[0] + "': " + std::strerror(exec_errno));
    }
  }

  void handshake() {
    try {
      send_line(R"({"op":"hello"})");
      nlohmann::json reply = parse_reply(recv_line(errc::backend_protocol));
      auto it = reply.find("vocab_size");
      if (it == reply.end() || !it->is_number_unsigned())
        fail(errc::backend_protocol, "handshake reply lacks 'vocab_size'");
      std::size_t reported = it->get<std::size_t>();
      if (reported != vocab_.size())
        fail(errc::vocab_mismatch,
             "backend reports " + std::to_string(reported) + ", expected " +
                 std::to_string(vocab_.size()));
    } catch (...) {
      shutdown();
      throw;
    }
  }

  static nlohmann::json parse_reply(const std::string& line) {
    nlohmann::json reply = nlohmann::json::parse(line, nullptr, false);
    if (reply.is_discarded() || !reply.is_object())
      fail(errc::backend_protocol, "reply is not a JSON object: " + line);
    return reply;
  }

  void send_line(const std::string& payload) const {
    std::string msg = payload + "\n";
    std::size_t off = 0;
    while (off < msg.size()) {
      ssize_t n = write(stdin_fd_, msg.data() + off, msg.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(errc::backend_io, std::string("write: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string recv_line(errc eof_code) const {
    std::string line;
    for (;;) {
      std::size_t nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[4096];
      ssize_t n = read(stdout_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(errc::backend_io, std::string("read: ") + std::strerror(errno));
      }
      if (n == 0) fail(eof_code, "backend closed its output stream");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() noexcept {
    if (stdin_fd_ >= 0) {
      try {
        send_line(R"({"op":"quit"})");
      } catch (...) {
      }
      close(stdin_fd_);
      stdin_fd_ = -1;
    }
    if (stdout_fd_ >= 0) {
      close(stdout_fd_);
      stdout_fd_ = -1;
    }
    reap();
  }

  void reap() noexcept {
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  Vocabulary vocab_;
  std::vector<std::string> command_;
  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  mutable std::string buffer_;
  mutable std::mutex wire_mutex_;
};

// Splits a command line on spaces and connects. Matches the CLI's
// proc:<command> backend specification.
inline std::vector<std::string> split_command(const std::string& command_line) {
  std::vector<std::string> parts;
  for (const std::string& p : split_spaces(command_line)) {
    if (!p.empty()) parts.push_back(p);
  }
  return parts;
}

}  // namespace ctxfuse
