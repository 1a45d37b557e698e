#include "dmlp/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "dmlp/errors.hpp"

namespace dmlp::io {

namespace {
constexpr const char* kFormat = "dmlp-checkpoint/1";
}

nlohmann::json Checkpoint::to_json() const {
  return {{"format", kFormat},
          {"config", config},
          {"epochs_completed", epochs_completed},
          {"parameters", parameters},
          {"optimizer", optimizer}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kFormat)
    throw ValidationError("not a checkpoint document (expected format " + std::string(kFormat) + ")");
  Checkpoint c;
  try {
    c.config = doc.at("config");
    c.epochs_completed = doc.at("epochs_completed").get<std::size_t>();
    c.parameters = doc.at("parameters");
    c.optimizer = doc.value("optimizer", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_text_file(path, checkpoint.to_json().dump() + "\n");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return Checkpoint::from_json(read_json_file(path));
}

}  // namespace dmlp::io
