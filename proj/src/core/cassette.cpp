#include <fstream>

#include "errors.hpp"
#include "gateway.hpp"
#include "jsonl.hpp"

namespace attribench {

using nlohmann::json;

void Cassette::load(const std::filesystem::path& path) {
  std::lock_guard lock(mu_);
  for_each_jsonl(path, [&](const json& record, std::size_t) {
    const auto hash = record.at("hash").get<std::string>();
    if (!record.contains("response")) throw ValidationError("cassette record without response");
    responses_[hash].push_back(record.at("response"));
    ++count_;
  });
}

void Cassette::record_to(const std::filesystem::path& path) {
  std::lock_guard lock(mu_);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write cassette " + path.string());
  path_ = path;
}

std::optional<json> Cassette::lookup(const std::string& hash, std::size_t occurrence) const {
  std::lock_guard lock(mu_);
  auto it = responses_.find(hash);
  if (it == responses_.end() || it->second.empty()) return std::nullopt;
  return it->second[std::min(occurrence, it->second.size() - 1)];
}

void Cassette::append(const std::string& hash, const json& request, const json& response) {
  std::lock_guard lock(mu_);
  responses_[hash].push_back(response);
  ++count_;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << json{{"hash", hash}, {"request", request}, {"response", response}}.dump() << '\n';
  if (!out) throw IoError("cannot append to cassette " + path_.string());
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mu_);
  return count_;
}

}  // namespace attribench
