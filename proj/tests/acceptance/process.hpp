#pragma once

// Child processes for the CLI criteria: run the weedid binary in a given
// working directory with output sent to a log file.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

namespace weedid::acceptance {

inline pid_t spawn(const std::vector<std::string>& args, const std::filesystem::path& cwd,
                   const std::filesystem::path& log) {
  // Everything the child touches is prepared before fork.
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const std::string dir = cwd.string(), log_path = log.string();
  const pid_t pid = ::fork();
  if (pid == 0) {
    if (::chdir(dir.c_str()) != 0) ::_exit(126);
    const int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd >= 0) {
      ::dup2(fd, 1);
      ::dup2(fd, 2);
      ::close(fd);
    }
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  return pid;
}

/// Exit code, or 128 + signal number when the child was killed.
inline int wait_for(pid_t pid) {
  int status = 0;
  if (::waitpid(pid, &status, 0) < 0) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return -1;
}

inline int run_process(const std::vector<std::string>& args, const std::filesystem::path& cwd,
                       const std::filesystem::path& log) {
  return wait_for(spawn(args, cwd, log));
}

}  // namespace weedid::acceptance
