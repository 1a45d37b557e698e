#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace dmlp::io {

// Final training state: the resolved run configuration, the number of
// completed epochs, parameters as {path: {"shape", "values"}} and the SGD
// velocity in the same layout.
struct Checkpoint {
  nlohmann::json config;
  std::size_t epochs_completed = 0;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json optimizer = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& doc);
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws ValidationError when the file is missing or malformed.
Checkpoint read_checkpoint(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dmlp::io
