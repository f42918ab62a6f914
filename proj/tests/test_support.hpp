#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "distillkit/corpus.hpp"

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("distillkit-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Corpus with the given per-document label bits; text is the id repeated.
inline distillkit::Corpus bits_corpus(const std::vector<std::vector<std::uint8_t>>& rows, std::size_t labels) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < labels; ++j) names.push_back("L" + std::to_string(j));
  distillkit::Corpus c{distillkit::LabelVocabulary(names), {}};
  for (std::size_t i = 0; i < rows.size(); ++i)
    c.documents.push_back({"d" + std::to_string(i), "text " + std::to_string(i), rows[i]});
  return c;
}

// Runs the command-line tool with arguments and returns its exit status.
inline int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(DISTILLKIT_CLI) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Text with every '#' comment line removed.
inline std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.empty() || line.front() != '#') out += line + "\n";
  return out;
}

// Lines of `text` that start with `prefix`.
inline std::vector<std::string> lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) out.push_back(line);
  return out;
}

}  // namespace testing_support
