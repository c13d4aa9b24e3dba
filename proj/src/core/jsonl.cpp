#include "jsonl.hpp"

#include <string>

#include "errors.hpp"

namespace attribench {

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    try {
      fn(record, line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

OutputFile::OutputFile(std::filesystem::path path, bool binary)
    : path_(std::move(path)), partial_(partial_path(path_)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(partial_, binary ? std::ios::out | std::ios::binary | std::ios::trunc
                             : std::ios::out | std::ios::trunc);
  if (!out_) throw IoError("cannot write " + partial_.string());
}

std::filesystem::path OutputFile::partial_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".partial";
  return p;
}

void OutputFile::write_json_line(const nlohmann::json& record) { out_ << record.dump() << '\n'; }

void OutputFile::commit() {
  if (committed_) return;
  out_.flush();
  if (!out_) throw IoError("write failed: " + partial_.string());
  out_.close();
  std::filesystem::rename(partial_, path_);
  committed_ = true;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  OutputFile out(path);
  out.stream() << doc.dump(2) << '\n';
  out.commit();
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

}  // namespace attribench
