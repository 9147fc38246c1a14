#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace confset::testing {

// Fresh, empty directory under the build tree for one test.
inline std::filesystem::path FreshDir(const std::string& name) {
  const auto dir = std::filesystem::path(CONFSET_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace confset::testing
