#include "kipg/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "kipg/errors.hpp"

namespace kipg::exec {

namespace fs = std::filesystem;

bool VariableBindings::value_matches_type(const Json& value, program::SemanticType type) {
  using program::SemanticType;
  switch (type) {
    case SemanticType::integer:
      return value.is_number_integer();
    case SemanticType::decimal:
      return value.is_number();
    case SemanticType::boolean:
      return value.is_boolean();
    case SemanticType::string:
      return value.is_string();
    case SemanticType::list_of_decimal:
      if (!value.is_array()) return false;
      for (const auto& v : value) {
        if (!v.is_number()) return false;
      }
      return true;
  }
  return false;
}

bool VariableBindings::bind(const std::string& name, Json value,
                            const program::ProgramMetadata& metadata) {
  const auto* spec = metadata.find_input(name);
  if (spec == nullptr) return false;
  if (!value_matches_type(value, spec->semantic_type)) return false;
  values_[name] = std::move(value);
  return true;
}

const Json* VariableBindings::find(const std::string& name) const {
  auto it = values_.find(name);
  return it == values_.end() ? nullptr : &it->second;
}

Json VariableBindings::to_wire(const program::ProgramMetadata& metadata) const {
  Json inputs = Json::object();
  for (const auto& spec : metadata.inputs) {
    auto it = values_.find(spec.name);
    inputs[spec.name] = it == values_.end() ? Json(nullptr) : it->second;
  }
  Json wire;
  wire["inputs"] = std::move(inputs);
  return wire;
}

Json VariableBindings::to_json() const {
  Json out = Json::object();
  for (const auto& [name, value] : values_) out[name] = value;
  return out;
}

const Json* OutcomeMap::find(const std::string& name) const {
  auto it = values.find(name);
  return it == values.end() ? nullptr : &it->second;
}

Json OutcomeMap::to_json() const {
  Json out = Json::object();
  for (const auto& [name, value] : values) out[name] = value;
  return out;
}

const char* exec_status_name(ExecStatus status) {
  switch (status) {
    case ExecStatus::success: return "success";
    case ExecStatus::runtime_error: return "runtime_error";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::protocol_error: return "protocol_error";
  }
  return "runtime_error";
}

namespace {

std::vector<std::string> build_argv(const std::string& command_template,
                                    const std::string& source_path) {
  std::vector<std::string> argv;
  std::string token;
  for (char c : command_template) {
    if (c == ' ' || c == '\t') {
      if (!token.empty()) {
        argv.push_back(std::move(token));
        token.clear();
      }
    } else {
      token.push_back(c);
    }
  }
  if (!token.empty()) argv.push_back(std::move(token));
  for (auto& arg : argv) {
    if (auto pos = arg.find("{source_path}"); pos != std::string::npos) {
      arg.replace(pos, std::strlen("{source_path}"), source_path);
    }
  }
  return argv;
}

struct TempDir {
  fs::path path;

  explicit TempDir(const char* prefix) {
    std::string tmpl = (fs::temp_directory_path() / (std::string(prefix) + "XXXXXX")).string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
      throw Error(ErrorCode::host_fault,
                  std::string("mkdtemp failed: ") + std::strerror(errno));
    }
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

struct Pipe {
  int read_fd = -1;
  int write_fd = -1;

  Pipe() {
    int fds[2];
    if (::pipe(fds) != 0) {
      throw Error(ErrorCode::host_fault, std::string("pipe failed: ") + std::strerror(errno));
    }
    read_fd = fds[0];
    write_fd = fds[1];
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (read_fd >= 0) ::close(read_fd);
    read_fd = -1;
  }
  void close_write() {
    if (write_fd >= 0) ::close(write_fd);
    write_fd = -1;
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;
};

// Reads whatever is available; appends up to cap bytes, discards the rest.
// Returns false on EOF.
bool drain_fd(int fd, std::string& sink, std::size_t cap, bool& truncated) {
  char buf[4096];
  for (;;) {
    ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n > 0) {
      std::size_t keep = static_cast<std::size_t>(n);
      if (sink.size() + keep > cap) {
        keep = cap > sink.size() ? cap - sink.size() : 0;
        truncated = true;
      }
      sink.append(buf, keep);
      continue;
    }
    if (n == 0) return false;
    if (errno == EAGAIN || errno == EWOULDBLOCK) return true;
    if (errno == EINTR) continue;
    return false;
  }
}

std::string truncate_for_detail(std::string text, std::size_t limit = 8 * 1024) {
  if (text.size() > limit) {
    text.resize(limit);
    text += "\n...[truncated]";
  }
  return text;
}

// Run directories are random; scrub them so results from identical runs are
// byte-identical.
void scrub_workdir(std::string& text, const std::string& workdir) {
  std::size_t pos = 0;
  while ((pos = text.find(workdir, pos)) != std::string::npos) {
    text.replace(pos, workdir.size(), "<workdir>");
    pos += std::strlen("<workdir>");
  }
}

}  // namespace

ExecutionResult execute(const program::KnowledgeIntensiveProgram& program,
                        const VariableBindings& bindings, const ExecutionLimits& limits) {
  ExecutionResult result;
  const auto started = std::chrono::steady_clock::now();

  TempDir workdir("kipg-exec-");
  const fs::path source_path = workdir.path / "program.src";
  const fs::path stdin_path = workdir.path / "input.json";
  {
    std::ofstream src(source_path, std::ios::binary);
    src << program.source_text;
    std::ofstream in(stdin_path, std::ios::binary);
    in << bindings.to_wire(program.metadata).dump();
    if (!src || !in) {
      throw Error(ErrorCode::host_fault, "failed to stage program run directory");
    }
  }

  auto argv_strings = build_argv(limits.interpreter_command, source_path.string());
  if (argv_strings.empty()) {
    throw Error(ErrorCode::config_invalid, "interpreter_command is empty");
  }
  std::vector<char*> argv;
  argv.reserve(argv_strings.size() + 1);
  for (auto& s : argv_strings) argv.push_back(s.data());
  argv.push_back(nullptr);

  Pipe out_pipe;
  Pipe err_pipe;
  int stdin_fd = ::open(stdin_path.c_str(), O_RDONLY);
  if (stdin_fd < 0) {
    throw Error(ErrorCode::host_fault, "failed to open staged stdin file");
  }

  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(stdin_fd);
    throw Error(ErrorCode::host_fault, std::string("fork failed: ") + std::strerror(errno));
  }

  if (pid == 0) {
    // Child: own process group so the whole tree can be killed at once.
    ::setpgid(0, 0);
    ::dup2(stdin_fd, STDIN_FILENO);
    ::dup2(out_pipe.write_fd, STDOUT_FILENO);
    ::dup2(err_pipe.write_fd, STDERR_FILENO);
    ::close(stdin_fd);
    out_pipe.close_read();
    out_pipe.close_write();
    err_pipe.close_read();
    err_pipe.close_write();
    if (::chdir(workdir.path.c_str()) != 0) _exit(127);
    ::execvp(argv[0], argv.data());
    const char* msg = "kipg-executor: failed to launch interpreter\n";
    ssize_t ignored = ::write(STDERR_FILENO, msg, std::strlen(msg));
    (void)ignored;
    _exit(127);
  }

  // Parent.
  ::close(stdin_fd);
  out_pipe.close_write();
  err_pipe.close_write();
  ::fcntl(out_pipe.read_fd, F_SETFL, O_NONBLOCK);
  ::fcntl(err_pipe.read_fd, F_SETFL, O_NONBLOCK);

  const auto deadline =
      started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    limits.wall_timeout);
  std::string stdout_data;
  std::string stderr_data;
  bool stdout_truncated = false;
  bool stderr_truncated = false;
  bool timed_out = false;
  bool stdout_open = true;
  bool stderr_open = true;
  bool exited = false;
  int wait_status = 0;

  while (stdout_open || stderr_open || !exited) {
    auto now = std::chrono::steady_clock::now();
    if (!timed_out && now >= deadline) {
      timed_out = true;
      ::kill(-pid, SIGKILL);
    }

    if (!exited) {
      pid_t r = ::waitpid(pid, &wait_status, WNOHANG);
      if (r == pid) exited = true;
    }

    struct pollfd fds[2];
    nfds_t nfds = 0;
    int stdout_slot = -1, stderr_slot = -1;
    if (stdout_open) {
      stdout_slot = static_cast<int>(nfds);
      fds[nfds++] = {out_pipe.read_fd, POLLIN, 0};
    }
    if (stderr_open) {
      stderr_slot = static_cast<int>(nfds);
      fds[nfds++] = {err_pipe.read_fd, POLLIN, 0};
    }

    if (nfds == 0) {
      if (exited) break;
      if (timed_out) {
        // Process group already killed; reap and stop.
        ::waitpid(pid, &wait_status, 0);
        exited = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      continue;
    }

    int timeout_ms = 10;
    int n = ::poll(fds, nfds, timeout_ms);
    if (n < 0 && errno != EINTR) break;

    if (stdout_slot >= 0 && (fds[stdout_slot].revents & (POLLIN | POLLHUP | POLLERR))) {
      if (!drain_fd(out_pipe.read_fd, stdout_data, limits.max_output_bytes, stdout_truncated)) {
        stdout_open = false;
      }
    }
    if (stderr_slot >= 0 && (fds[stderr_slot].revents & (POLLIN | POLLHUP | POLLERR))) {
      if (!drain_fd(err_pipe.read_fd, stderr_data, limits.max_output_bytes, stderr_truncated)) {
        stderr_open = false;
      }
    }
  }

  // Kill the group before final reaping: the zombie child pins the pgid, and
  // any grandchildren in the group die here.
  ::kill(-pid, SIGKILL);
  if (!exited) {
    ::waitpid(pid, &wait_status, 0);
  }

  result.wall_time = std::chrono::steady_clock::now() - started;
  result.exit_code = WIFEXITED(wait_status) ? WEXITSTATUS(wait_status) : -1;
  scrub_workdir(stdout_data, workdir.path.string());
  scrub_workdir(stderr_data, workdir.path.string());

  if (timed_out) {
    result.status = ExecStatus::timeout;
    result.detail = "wall timeout exceeded";
    if (!stderr_data.empty()) {
      result.detail += "; partial stderr: " + truncate_for_detail(stderr_data);
    }
    return result;
  }

  const bool signaled = WIFSIGNALED(wait_status);
  if (signaled || result.exit_code != 0) {
    result.status = ExecStatus::runtime_error;
    result.detail = signaled
                        ? std::string("killed by signal ") + std::to_string(WTERMSIG(wait_status))
                        : "exit code " + std::to_string(result.exit_code);
    if (!stderr_data.empty()) {
      result.detail += "\n" + truncate_for_detail(stderr_data);
    }
    return result;
  }

  // Exit 0: stdout must be exactly one JSON object {"outputs": {...}} whose
  // keys are declared output names, with at least one key.
  Json parsed = Json::parse(stdout_data, nullptr, false);
  auto protocol_fail = [&](const std::string& why) {
    result.status = ExecStatus::protocol_error;
    result.detail = why + "; raw stdout: " + truncate_for_detail(stdout_data);
    if (stdout_truncated) result.detail += " [stdout truncated at cap]";
  };

  if (parsed.is_discarded() || !parsed.is_object()) {
    protocol_fail("stdout is not a JSON object");
    return result;
  }
  auto outputs_it = parsed.find("outputs");
  if (outputs_it == parsed.end() || !outputs_it->is_object()) {
    protocol_fail("missing \"outputs\" object");
    return result;
  }
  if (outputs_it->empty()) {
    protocol_fail("\"outputs\" object is empty");
    return result;
  }
  OutcomeMap outcome;
  for (const auto& [name, value] : outputs_it->items()) {
    if (program.metadata.find_output(name) == nullptr) {
      protocol_fail("undeclared output name \"" + name + "\"");
      return result;
    }
    outcome.values[name] = value;
  }

  result.status = ExecStatus::success;
  result.outcome = std::move(outcome);
  return result;
}

std::vector<ExecutionResult> execute_batch(const std::vector<ExecutionJob>& jobs,
                                           const ExecutionLimits& limits, int parallelism) {
  if (parallelism < 1) {
    throw Error(ErrorCode::config_invalid, "parallelism must be >= 1");
  }
  std::vector<ExecutionResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = execute(*jobs[i].program, *jobs[i].bindings, limits);
      } catch (const std::exception& e) {
        ExecutionResult r;
        r.status = ExecStatus::runtime_error;
        r.detail = std::string("host fault: ") + e.what();
        results[i] = r;
      }
    }
  };

  std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism),
                                                std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace kipg::exec
