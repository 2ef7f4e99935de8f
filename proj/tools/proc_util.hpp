#pragma once

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cemu/config.hpp"
#include "cemu/net.hpp"

namespace cemu::tools {

// Directory holding the currently running binary; sibling tools live there.
inline std::string self_dir() {
  char buf[4096];
  const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n <= 0) throw std::runtime_error("cannot resolve /proc/self/exe");
  buf[n] = '\0';
  return std::filesystem::path(buf).parent_path().string();
}

// Path of a sibling tool binary, overridable via CEMU_BIN_DIR.
inline std::string tool_path(const std::string& name) {
  if (const char* dir = std::getenv("CEMU_BIN_DIR")) {
    const auto p = std::filesystem::path(dir) / name;
    if (std::filesystem::exists(p)) return p.string();
  }
  const auto sibling = std::filesystem::path(self_dir()) / name;
  if (std::filesystem::exists(sibling)) return sibling.string();
  // tests live in a sibling directory of tools/
  const auto tools =
      std::filesystem::path(self_dir()).parent_path() / "tools" / name;
  if (std::filesystem::exists(tools)) return tools.string();
  throw std::runtime_error("cannot locate tool binary '" + name + "'");
}

struct Child {
  pid_t pid = -1;
  std::string name;
};

inline Child spawn(const std::vector<std::string>& argv,
                   const std::string& stdout_path = "") {
  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  // the child re-opens stdout; flush first or it inherits buffered output
  std::fflush(stdout);
  std::fflush(stderr);
  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    if (!stdout_path.empty()) {
      FILE* f = std::freopen(stdout_path.c_str(), "w", stdout);
      if (f == nullptr) _exit(127);
    }
    ::execv(cargv[0], cargv.data());
    std::perror("execv");
    _exit(127);
  }
  return Child{pid, argv[0]};
}

// Waits and returns the exit code; signals map to 128+sig.
inline int wait_child(const Child& c) {
  int status = 0;
  if (::waitpid(c.pid, &status, 0) < 0) {
    throw std::runtime_error("waitpid failed for " + c.name);
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return -1;
}

inline void terminate_child(const Child& c) {
  if (c.pid > 0) {
    ::kill(c.pid, SIGTERM);
    int status = 0;
    ::waitpid(c.pid, &status, 0);
  }
}

// First base-port value from which `count` consecutive ports are bindable.
inline uint16_t find_free_ports(uint16_t base, int count) {
  for (uint16_t p = base; p < 65000; p = static_cast<uint16_t>(p + count)) {
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      Endpoint ep{"127.0.0.1", static_cast<uint16_t>(p + i)};
      ok = endpoint_bindable(ep);
    }
    if (ok) return p;
  }
  throw std::runtime_error("no free loopback ports found");
}

inline std::string write_temp_file(const std::string& dir,
                                   const std::string& name,
                                   const std::string& contents) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / name).string();
  FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot write " + path);
  std::fwrite(contents.data(), 1, contents.size(), f);
  std::fclose(f);
  return path;
}

}  // namespace cemu::tools
