#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string_view>

#include <json.hpp>

namespace attribench {

/// Calls `fn(record, line_number)` for every non-blank line. Malformed JSON
/// raises ParseError carrying the 1-based line number; exceptions thrown by
/// `fn` that are not already ParseErrors are rewrapped with the line number.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn);

// Writes to "<path>.partial" and renames on commit(). An uncommitted writer
// leaves the .partial file behind so failed stages are visibly incomplete.
class OutputFile {
 public:
  explicit OutputFile(std::filesystem::path path, bool binary = false);
  OutputFile(const OutputFile&) = delete;
  OutputFile& operator=(const OutputFile&) = delete;

  std::ostream& stream() { return out_; }
  void write_json_line(const nlohmann::json& record);
  void commit();

  const std::filesystem::path& path() const { return path_; }
  static std::filesystem::path partial_path(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::filesystem::path partial_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace attribench
