#pragma once

#include <filesystem>
#include <string>

#include "lastmile/digest.hpp"
#include <json.hpp>

namespace testing {

inline std::filesystem::path data_dir() { return LASTMILE_DATA_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return data_dir() / "fixtures" / name; }

inline nlohmann::json load_json(const std::filesystem::path& p) { return nlohmann::json::parse(lastmile::read_file(p)); }

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lastmile_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
