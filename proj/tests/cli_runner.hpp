#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace cli {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string binary() {
  const char* p = std::getenv("TFNET_CLI_PATH");
  return p ? p : "tfnet";
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI with the given argument string inside scratch, capturing both
// streams into files there.
inline Result run(const std::string& args, const std::filesystem::path& scratch) {
  const auto out = scratch / "cli_stdout.txt", err = scratch / "cli_stderr.txt";
  const std::string cmd = "'" + binary() + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

}  // namespace cli
