#include <attribench/attribench.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitStage = 2;
constexpr int kExitEndpoint = 3;

struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw Failure{kExitUsage, message}; }

void check(ab_status status, const std::string& stage) {
  if (status == AB_OK) return;
  const std::string message = stage + ": " + ab_status_name(status) + ": " + ab_last_error();
  switch (status) {
    case AB_ERR_INVALID_ARGUMENT: throw Failure{kExitUsage, message};
    case AB_ERR_ENDPOINT: throw Failure{kExitEndpoint, message};
    default: throw Failure{kExitStage, message};
  }
}

// Owns a string returned by the library.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { ab_string_free(p); }
  std::string str() const { return p ? p : ""; }
  json as_json() const { return p ? json::parse(p) : json(nullptr); }
};

std::string sha256_of(const fs::path& path) {
  OwnedString hex;
  check(ab_sha256_file(path.c_str(), &hex.p), "hash " + path.string());
  return hex.str();
}

// Config value kinds; the key table doubles as the list of accepted fields.
enum class Kind { text, integer, real, boolean, real_list, text_list };

const std::map<std::string, Kind>& config_keys() {
  static const std::map<std::string, Kind> keys{
      {"chat_url", Kind::text},
      {"embedding_url", Kind::text},
      {"chat_model", Kind::text},
      {"embedding_model", Kind::text},
      {"mode", Kind::text},
      {"cassette", Kind::text},
      {"api_key_env", Kind::text},
      {"max_attempts", Kind::integer},
      {"base_delay_ms", Kind::integer},
      {"max_delay_ms", Kind::integer},
      {"max_in_flight", Kind::integer},
      {"embed_batch_limit", Kind::integer},
      {"generation_temperature", Kind::real},
      {"attribution_temperature", Kind::real},
      {"max_tokens", Kind::integer},
      {"timeout_s", Kind::integer},
      {"seed", Kind::integer},
      {"chains", Kind::integer},
      {"dialogues", Kind::integer},
      {"max_hops", Kind::integer},
      {"max_retries", Kind::integer},
      {"workers", Kind::integer},
      {"index_batch_size", Kind::integer},
      {"pool_size", Kind::integer},
      {"per_source", Kind::integer},
      {"dialogue_distractors", Kind::boolean},
      {"leak_threshold", Kind::real},
      {"num_perms", Kind::integer},
      {"bands", Kind::integer},
      {"shingle_size", Kind::integer},
      {"threshold_grid", Kind::real_list},
      {"synatt_models", Kind::text_list},
      {"export_style", Kind::text},
  };
  return keys;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json typed_value(const std::string& key, const std::string& raw) {
  const auto it = config_keys().find(key);
  if (it == config_keys().end()) usage_error("config: unknown field '" + key + "'");
  auto bad = [&](const char* what) -> json { usage_error("config: field '" + key + "' must be " + what); };
  try {
    switch (it->second) {
      case Kind::text: return raw;
      case Kind::integer: {
        std::size_t used = 0;
        const long long v = std::stoll(raw, &used);
        if (used != raw.size() || v < 0) return bad("a non-negative integer");
        return static_cast<std::uint64_t>(v);
      }
      case Kind::real: {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) return bad("a number");
        return v;
      }
      case Kind::boolean:
        if (raw == "true") return true;
        if (raw == "false") return false;
        return bad("true or false");
      case Kind::real_list: {
        json out = json::array();
        for (const auto& item : split_list(raw)) {
          std::size_t used = 0;
          out.push_back(std::stod(item, &used));
          if (used != item.size()) return bad("a comma-separated list of numbers");
        }
        return out;
      }
      case Kind::text_list: return split_list(raw);
    }
  } catch (const std::logic_error&) {
    return bad(it->second == Kind::integer ? "a non-negative integer" : "a number");
  }
  return bad("valid");
}

// Key-value configuration: "key = value" lines, '#' comments. Later sources
// (--set flags) override earlier ones (the config file).
class Config {
 public:
  void load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) usage_error("config: cannot read " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) usage_error(path.string() + ":" + std::to_string(n) + ": expected key = value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  void set(const std::string& key, const std::string& raw) { values_[key] = typed_value(key, raw); }

  void apply_overrides(const std::vector<std::string>& pairs) {
    for (const auto& p : pairs) {
      const auto eq = p.find('=');
      if (eq == std::string::npos) usage_error("--set expects key=value, got '" + p + "'");
      set(trim(p.substr(0, eq)), trim(p.substr(eq + 1)));
    }
  }

  bool has(const std::string& key) const { return values_.contains(key); }
  const json& at(const std::string& key) const { return values_.at(key); }
  std::string text(const std::string& key, const std::string& fallback = "") const {
    return has(key) ? at(key).get<std::string>() : fallback;
  }
  std::uint64_t seed() const { return has("seed") ? at("seed").get<std::uint64_t>() : 0; }

  // Copies the listed config fields into an options object, renaming where
  // the stage option differs from the config field.
  json pick(std::initializer_list<std::pair<const char*, const char*>> fields) const {
    json out = json::object();
    for (const auto& [key, option] : fields) {
      if (has(key)) out[option] = at(key);
    }
    return out;
  }

  json all() const {
    json out = json::object();
    for (const auto& [k, v] : values_) out[k] = v;
    return out;
  }

 private:
  std::map<std::string, json> values_;
};

struct StoreHandle {
  ab_store* p = nullptr;
  ~StoreHandle() { ab_store_free(p); }
};

struct GatewayHandle {
  ab_gateway* p = nullptr;
  GatewayHandle() = default;
  GatewayHandle(const GatewayHandle&) = delete;
  GatewayHandle& operator=(const GatewayHandle&) = delete;
  ~GatewayHandle() { ab_gateway_free(p); }
};

enum Need : unsigned { kChat = 1, kEmbedding = 2 };

std::unique_ptr<GatewayHandle> open_gateway(const Config& cfg, unsigned need,
                                            const std::optional<std::string>& chat_model = std::nullopt,
                                            const std::string& cassette_suffix = "") {
  const std::string mode = cfg.text("mode", "live");
  if (mode != "replay") {
    if ((need & kChat) && cfg.text("chat_url").empty()) usage_error("config: field 'chat_url' is required");
    if ((need & kEmbedding) && cfg.text("embedding_url").empty()) {
      usage_error("config: field 'embedding_url' is required");
    }
  }
  if ((need & kChat) && cfg.text("chat_model").empty() && !chat_model) {
    usage_error("config: field 'chat_model' is required");
  }
  json gw = cfg.pick({{"chat_url", "chat_url"},
                      {"embedding_url", "embedding_url"},
                      {"chat_model", "chat_model"},
                      {"embedding_model", "embedding_model"},
                      {"mode", "mode"},
                      {"cassette", "cassette"},
                      {"api_key_env", "api_key_env"},
                      {"max_attempts", "max_attempts"},
                      {"base_delay_ms", "base_delay_ms"},
                      {"max_delay_ms", "max_delay_ms"},
                      {"max_in_flight", "max_in_flight"},
                      {"embed_batch_limit", "embed_batch_limit"},
                      {"generation_temperature", "generation_temperature"},
                      {"attribution_temperature", "attribution_temperature"},
                      {"max_tokens", "max_tokens"},
                      {"timeout_s", "timeout_s"}});
  if (chat_model) gw["chat_model"] = *chat_model;
  if (!cassette_suffix.empty() && gw.contains("cassette")) {
    gw["cassette"] = gw["cassette"].get<std::string>() + cassette_suffix;
  }
  auto handle = std::make_unique<GatewayHandle>();
  check(ab_gateway_create(gw.dump().c_str(), &handle->p), "gateway");
  return handle;
}

std::unique_ptr<StoreHandle> load_store(const std::string& path) {
  auto store = std::make_unique<StoreHandle>();
  check(ab_store_load(path.c_str(), &store->p), "load corpus");
  return store;
}

// Records what a stage read and wrote so the run can be reproduced and
// checked: "<first output>.run.json".
class RunManifest {
 public:
  RunManifest(std::string command, const Config& cfg) : command_(std::move(command)), cfg_(cfg) {}

  void input(const std::string& path) { inputs_.push_back(path); }
  void output(const std::string& path) { outputs_.push_back(path); }
  void summary(const std::string& stage, json s) { summary_[stage] = std::move(s); }
  void write_to(std::string path) { path_ = std::move(path); }

  void write() const {
    if (outputs_.empty()) return;
    const std::string config_text = cfg_.all().dump();
    OwnedString config_hash;
    check(ab_sha256_bytes(config_text.data(), config_text.size(), &config_hash.p), "hash config");
    json doc{{"command", command_},
             {"version", ab_version()},
             {"seed", cfg_.seed()},
             {"config", cfg_.all()},
             {"config_sha256", config_hash.str()},
             {"inputs", files(inputs_)},
             {"outputs", files(outputs_)},
             {"summary", summary_}};
    const fs::path path = path_.empty() ? outputs_.front() + ".run.json" : path_;
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
    if (!out) throw Failure{kExitStage, "cannot write " + path.string()};
  }

 private:
  static json files(const std::vector<std::string>& paths) {
    json out = json::array();
    for (const auto& p : paths) {
      if (fs::exists(p)) out.push_back({{"path", p}, {"sha256", sha256_of(p)}});
    }
    return out;
  }

  std::string command_;
  const Config& cfg_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::string path_;
  json summary_ = json::object();
};

void report(const std::string& stage, const json& summary) {
  std::cerr << stage << ": " << summary.dump() << '\n';
}

void run_ingest(const Config& cfg, const std::string& corpus, const std::string& out, bool filter) {
  RunManifest m("ingest", cfg);
  m.input(corpus);
  m.output(out);
  auto store = load_store(corpus);
  StoreHandle filtered;
  check(ab_store_filter(store->p, &filtered.p), "filter");
  const json summary{{"articles", ab_store_size(store->p)}, {"linkable", ab_store_size(filtered.p)}};
  check(ab_store_save(filter ? filtered.p : store->p, out.c_str()), "save corpus");
  report("ingest", summary);
  m.summary("ingest", summary);
  m.write();
}

json stage_hop(const Config& cfg, const std::string& corpus, const std::string& out, RunManifest& m) {
  auto store = load_store(corpus);
  StoreHandle filtered;
  check(ab_store_filter(store->p, &filtered.p), "filter");
  const json opts = cfg.pick({{"seed", "seed"}, {"chains", "chains"}, {"dialogues", "dialogues"}, {"max_hops", "max_hops"}});
  OwnedString summary;
  check(ab_sample_contexts(filtered.p, opts.dump().c_str(), out.c_str(), &summary.p), "hop-sample");
  m.input(corpus);
  m.output(out);
  return summary.as_json();
}

json stage_generate(const Config& cfg, const std::string& corpus, GatewayHandle& gw, const std::string& contexts,
                    const std::string& out, const std::string& audit, RunManifest& m) {
  auto store = load_store(corpus);
  const json opts = cfg.pick({{"max_retries", "max_retries"}, {"workers", "workers"}});
  OwnedString summary;
  check(ab_generate(store->p, gw.p, contexts.c_str(), opts.dump().c_str(), out.c_str(),
                    audit.empty() ? nullptr : audit.c_str(), &summary.p),
        "generate");
  m.input(corpus);
  m.input(contexts);
  m.output(out);
  if (!audit.empty()) m.output(audit);
  return summary.as_json();
}

json stage_distract(const Config& cfg, const std::string& corpus, GatewayHandle& gw, const std::string& records,
                    const std::string& index, const std::string& out, RunManifest& m) {
  auto store = load_store(corpus);
  const std::size_t batch = cfg.has("index_batch_size") ? cfg.at("index_batch_size").get<std::size_t>() : 32;
  OwnedString index_summary;
  check(ab_build_index(store->p, gw.p, batch, index.c_str(), &index_summary.p), "build index");
  const json opts = cfg.pick({{"seed", "seed"}, {"pool_size", "pool_size"}, {"per_source", "per_source"}});
  OwnedString summary;
  check(ab_mine_distractors(records.c_str(), index.c_str(), opts.dump().c_str(), out.c_str(), &summary.p),
        "mine distractors");
  m.input(corpus);
  m.input(records);
  m.output(out);
  m.output(index);
  return {{"index", index_summary.as_json()}, {"mine", summary.as_json()}};
}

json stage_leak(const Config& cfg, const std::string& train, const std::string& test, const std::string& out,
                RunManifest& m) {
  const json opts = cfg.pick({{"leak_threshold", "threshold"},
                              {"num_perms", "num_perms"},
                              {"bands", "bands"},
                              {"shingle_size", "shingle_size"},
                              {"workers", "workers"}});
  OwnedString summary;
  check(ab_flag_leaks(train.c_str(), test.c_str(), opts.dump().c_str(), out.c_str(), &summary.p), "leak-check");
  m.input(train);
  m.input(test);
  m.output(out);
  return summary.as_json();
}

json stage_assemble(const Config& cfg, const std::string& corpus, const std::string& records,
                    const std::string& distractors, const std::string& leak_report, const std::string& out,
                    const std::string& manifest, RunManifest& m) {
  auto store = load_store(corpus);
  json opts = cfg.pick({{"seed", "seed"}, {"dialogue_distractors", "dialogue_distractors"}});
  if (!leak_report.empty()) opts["leak_report"] = leak_report;
  OwnedString summary;
  check(ab_assemble(store->p, records.c_str(), distractors.empty() ? nullptr : distractors.c_str(),
                    opts.dump().c_str(), out.c_str(), manifest.c_str(), &summary.p),
        "assemble");
  m.input(corpus);
  m.input(records);
  if (!distractors.empty()) m.input(distractors);
  if (!leak_report.empty()) m.input(leak_report);
  m.output(out);
  m.output(manifest);
  return summary.as_json();
}

json stage_export(const Config& cfg, const std::string& dataset, const std::string& out,
                  const std::string& manifest, RunManifest& m) {
  const std::string style = cfg.text("export_style", "chat_sft");
  OwnedString summary;
  check(ab_export_train(dataset.c_str(), style.c_str(), out.c_str(), manifest.c_str(), &summary.p), "export-train");
  m.input(dataset);
  m.output(out);
  m.output(manifest);
  return summary.as_json();
}

std::string default_path(const std::string& given, const std::string& base, const std::string& suffix) {
  return given.empty() ? base + suffix : given;
}

volatile std::sig_atomic_t g_stop_requested = 0;
ab_study* g_study = nullptr;

void on_signal(int) {
  g_stop_requested = 1;
  if (g_study != nullptr) ab_study_stop(g_study);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic attribution data factory and evaluation bench"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("-c,--config", config_path, "Key-value config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a config field (key=value), repeatable");
  app.add_option("--seed", seed_flag, "Master seed (overrides the config)");
  app.set_version_flag("--version", std::string(ab_version()));

  Config cfg;
  std::function<void()> action;

  // ingest
  std::string corpus, out, contexts, records, audit, index, distractors, leak_report, manifest, dataset;
  std::string train, test, predictions, name, table;
  bool filter = false;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus file and write it normalized");
  ingest->add_option("--corpus", corpus, "Input corpus (JSON lines)")->required()->check(CLI::ExistingFile);
  ingest->add_option("-o,--out", out, "Normalized corpus")->required();
  ingest->add_flag("--filter", filter, "Keep only linkable articles");
  ingest->callback([&] { action = [&] { run_ingest(cfg, corpus, out, filter); }; });

  auto* hop = app.add_subcommand("hop-sample", "Sample hop chains and dialogue contexts");
  hop->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  hop->add_option("-o,--out", out, "Contexts (JSON lines)")->required();
  hop->callback([&] {
    action = [&] {
      RunManifest m("hop-sample", cfg);
      auto s = stage_hop(cfg, corpus, out, m);
      report("hop-sample", s);
      m.summary("hop-sample", s);
      m.write();
    };
  });

  auto* gen = app.add_subcommand("generate", "Generate QA pairs for sampled contexts");
  gen->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  gen->add_option("--contexts", contexts)->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", out, "Generated records (JSON lines)")->required();
  gen->add_option("--audit", audit, "Per-context attempt log");
  gen->callback([&] {
    action = [&] {
      RunManifest m("generate", cfg);
      auto gw = open_gateway(cfg, kChat);
      auto s = stage_generate(cfg, corpus, *gw, contexts, out, audit, m);
      report("generate", s);
      m.summary("generate", s);
      m.write();
    };
  });

  auto* dis = app.add_subcommand("distract", "Embed the corpus and mine distractors per record");
  dis->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  dis->add_option("--records", records)->required()->check(CLI::ExistingFile);
  dis->add_option("-o,--out", out, "Distractors (JSON lines)")->required();
  dis->add_option("--index", index, "Vector index path (default <out>.index)");
  dis->callback([&] {
    action = [&] {
      RunManifest m("distract", cfg);
      auto gw = open_gateway(cfg, kEmbedding);
      auto s = stage_distract(cfg, corpus, *gw, records, default_path(index, out, ".index"), out, m);
      report("distract", s);
      m.summary("distract", s);
      m.write();
    };
  });

  auto* leak = app.add_subcommand("leak-check", "Flag near-duplicate train/test documents");
  leak->add_option("--train", train, "Train documents ({id,text} or corpus records)")->required()->check(CLI::ExistingFile);
  leak->add_option("--test", test, "Test documents")->required()->check(CLI::ExistingFile);
  leak->add_option("-o,--out", out, "Leak report CSV")->required();
  leak->callback([&] {
    action = [&] {
      RunManifest m("leak-check", cfg);
      auto s = stage_leak(cfg, train, test, out, m);
      report("leak-check", s);
      m.summary("leak-check", s);
      m.write();
    };
  });

  auto* asmb = app.add_subcommand("assemble", "Build training samples from generated records");
  asmb->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  asmb->add_option("--records", records)->required()->check(CLI::ExistingFile);
  asmb->add_option("--distractors", distractors)->check(CLI::ExistingFile);
  asmb->add_option("--leak-report", leak_report, "Drop samples using flagged train articles")
      ->check(CLI::ExistingFile);
  asmb->add_option("-o,--out", out, "Dataset (JSON lines)")->required();
  asmb->add_option("--manifest", manifest, "Dataset manifest (default <out>.manifest.json)");
  asmb->callback([&] {
    action = [&] {
      RunManifest m("assemble", cfg);
      auto s = stage_assemble(cfg, corpus, records, distractors, leak_report, out,
                              default_path(manifest, out, ".manifest.json"), m);
      report("assemble", s);
      m.summary("assemble", s);
      m.write();
    };
  });

  auto* exp = app.add_subcommand("export-train", "Export chat fine-tuning records and hyperparameters");
  exp->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  exp->add_option("-o,--out", out)->required();
  exp->add_option("--manifest", manifest, "Export manifest (default <out>.manifest.json)");
  exp->callback([&] {
    action = [&] {
      RunManifest m("export-train", cfg);
      auto s = stage_export(cfg, dataset, out, default_path(manifest, out, ".manifest.json"), m);
      report("export-train", s);
      m.summary("export-train", s);
      m.write();
    };
  });

  auto* reph = app.add_subcommand("rephrase", "Rewrite dialogue turns as standalone QA pairs");
  reph->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  reph->add_option("-o,--out", out)->required();
  reph->callback([&] {
    action = [&] {
      RunManifest m("rephrase", cfg);
      auto gw = open_gateway(cfg, kChat);
      const json opts = cfg.pick({{"max_retries", "max_retries"}, {"workers", "workers"}});
      OwnedString s;
      check(ab_rephrase(gw->p, dataset.c_str(), opts.dump().c_str(), out.c_str(), &s.p), "rephrase");
      m.input(dataset);
      m.output(out);
      report("rephrase", s.as_json());
      m.summary("rephrase", s.as_json());
      m.write();
    };
  });

  auto* syn = app.add_subcommand("synatt", "Relabel samples by majority vote of zero-shot models");
  syn->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  syn->add_option("-o,--out", out)->required();
  syn->callback([&] {
    action = [&] {
      if (!cfg.has("synatt_models")) usage_error("config: field 'synatt_models' is required");
      const auto models = cfg.at("synatt_models").get<std::vector<std::string>>();
      if (models.empty()) usage_error("config: field 'synatt_models' must list at least one model");
      RunManifest m("synatt", cfg);
      std::vector<std::unique_ptr<GatewayHandle>> gws;
      std::vector<ab_gateway*> raw;
      for (const auto& model : models) {
        gws.push_back(open_gateway(cfg, kChat, model, models.size() > 1 ? "." + model : ""));
        raw.push_back(gws.back()->p);
      }
      const json opts = cfg.pick({{"workers", "workers"}});
      OwnedString s;
      check(ab_synatt(raw.data(), raw.size(), dataset.c_str(), opts.dump().c_str(), out.c_str(), &s.p), "synatt");
      m.input(dataset);
      m.output(out);
      report("synatt", s.as_json());
      m.summary("synatt", s.as_json());
      m.write();
    };
  });

  std::string method, model, validation;
  std::vector<std::string> members;
  std::optional<double> p_opt, threshold_opt;
  auto* att = app.add_subcommand("attribute", "Run an attribution method over a dataset");
  att->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  att->add_option("-o,--out", out, "Predictions (JSON lines)")->required();
  att->add_option("--method", method, "random | embed_threshold | zero_shot | ensemble")
      ->required()
      ->check(CLI::IsMember({"random", "embed_threshold", "zero_shot", "ensemble"}));
  att->add_option("--validation", validation, "Dataset used to set p or tune the threshold")
      ->check(CLI::ExistingFile);
  att->add_option("--p", p_opt, "Inclusion probability for random");
  att->add_option("--threshold", threshold_opt, "Similarity threshold for embed_threshold");
  att->add_option("--model", model, "Chat model id for zero_shot (default: chat_model)");
  att->add_option("--members", members, "Model ids for ensemble")->delimiter(',');
  att->callback([&] {
    action = [&] {
      RunManifest m("attribute", cfg);
      json opts{{"method", method}, {"seed", cfg.seed()}};
      if (cfg.has("threshold_grid")) opts["grid"] = cfg.at("threshold_grid");
      if (cfg.has("workers")) opts["workers"] = cfg.at("workers");
      if (!validation.empty()) {
        opts["validation"] = validation;
        m.input(validation);
      }
      if (p_opt) opts["p"] = *p_opt;
      if (threshold_opt) opts["threshold"] = *threshold_opt;
      if (!model.empty()) opts["model"] = model;
      if (!members.empty()) opts["members"] = members;
      std::unique_ptr<GatewayHandle> gw;
      if (method == "embed_threshold") gw = open_gateway(cfg, kEmbedding);
      if (method == "zero_shot") gw = open_gateway(cfg, kChat, model.empty() ? std::nullopt : std::optional(model));
      if (method == "ensemble") gw = open_gateway(cfg, kChat, members.empty() ? std::nullopt : std::optional(members[0]));
      OwnedString s;
      check(ab_attribute(gw ? gw->p : nullptr, dataset.c_str(), opts.dump().c_str(), out.c_str(), &s.p), "attribute");
      m.input(dataset);
      m.output(out);
      report("attribute", s.as_json());
      m.summary("attribute", s.as_json());
      m.write();
    };
  });

  auto* ev = app.add_subcommand("eval", "Score predictions against a dataset");
  ev->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  ev->add_option("--predictions", predictions)->required()->check(CLI::ExistingFile);
  ev->add_option("--name", name, "Dataset name for the report")->required();
  ev->add_option("-o,--out", out, "Report CSV")->required();
  ev->add_option("--table", table, "Human-readable table");
  ev->callback([&] {
    action = [&] {
      RunManifest m("eval", cfg);
      OwnedString s;
      check(ab_evaluate(dataset.c_str(), predictions.c_str(), name.c_str(), out.c_str(),
                        table.empty() ? nullptr : table.c_str(), &s.p),
            "eval");
      m.input(dataset);
      m.input(predictions);
      m.output(out);
      if (!table.empty()) m.output(table);
      m.summary("eval", s.as_json());
      m.write();
      if (table.empty()) std::cout << s.as_json().dump(2) << '\n';
    };
  });

  std::vector<std::string> report_inputs;
  auto* rep = app.add_subcommand("report", "Merge report CSVs into one CSV and table");
  rep->add_option("inputs", report_inputs, "Report CSVs")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--out", out)->required();
  rep->add_option("--table", table);
  rep->callback([&] {
    action = [&] {
      RunManifest m("report", cfg);
      std::vector<const char*> paths;
      for (const auto& p : report_inputs) {
        paths.push_back(p.c_str());
        m.input(p);
      }
      check(ab_render_report(paths.data(), paths.size(), out.c_str(), table.empty() ? nullptr : table.c_str()),
            "report");
      m.output(out);
      if (!table.empty()) m.output(table);
      m.write();
    };
  });

  std::string study_config, study_log, host = "127.0.0.1", results;
  int port = 8080;
  auto* serve = app.add_subcommand("study-serve", "Serve the verification study API");
  serve->add_option("--study", study_config, "Study config (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--log", study_log, "Session log; sessions resume from it");
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port")->check(CLI::Range(0, 65535));
  serve->callback([&] {
    action = [&] {
      ab_study* study = nullptr;
      check(ab_study_create(study_config.c_str(), study_log.empty() ? nullptr : study_log.c_str(), &study),
            "study-serve");
      std::unique_ptr<ab_study, void (*)(ab_study*)> owner(study, ab_study_free);
      int bound = 0;
      check(ab_study_bind(study, host.c_str(), port, &bound), "study-serve");
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      g_study = study;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto status = ab_study_run(study);
      g_study = nullptr;
      if (!g_stop_requested) check(status, "study-serve");
    };
  });

  auto* analyze = app.add_subcommand("study-analyze", "Per-scenario time and accuracy from study results");
  analyze->add_option("--study", study_config)->required()->check(CLI::ExistingFile);
  analyze->add_option("--results", results, "results.csv from the study service")->required()->check(CLI::ExistingFile);
  analyze->add_option("-o,--out", out)->required();
  analyze->callback([&] {
    action = [&] {
      RunManifest m("study-analyze", cfg);
      OwnedString s;
      check(ab_study_analyze(study_config.c_str(), results.c_str(), out.c_str(), &s.p), "study-analyze");
      const auto summary = s.as_json();
      for (const auto& w : summary.at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
      m.input(study_config);
      m.input(results);
      m.output(out);
      m.summary("study-analyze", summary);
      m.write();
    };
  });

  std::string workdir, test_docs;
  auto* pipe = app.add_subcommand("pipeline", "ingest, hop-sample, generate, distract, leak-check, assemble, export-train");
  pipe->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  pipe->add_option("--workdir", workdir, "Directory for every stage output")->required();
  pipe->add_option("--test-docs", test_docs, "Evaluation documents for the leak check")->check(CLI::ExistingFile);
  pipe->callback([&] {
    action = [&] {
      fs::create_directories(workdir);
      const auto at = [&](const char* name) { return (fs::path(workdir) / name).string(); };
      RunManifest m("pipeline", cfg);
      m.write_to(at("pipeline.run.json"));
      auto gw = open_gateway(cfg, kChat | kEmbedding);
      const std::string normalized = at("corpus.jsonl");
      {
        auto store = load_store(corpus);
        check(ab_store_save(store->p, normalized.c_str()), "ingest");
        m.input(corpus);
        m.output(normalized);
        m.summary("ingest", {{"articles", ab_store_size(store->p)}});
      }
      auto step = [&](const char* stage, json s) {
        report(stage, s);
        m.summary(stage, std::move(s));
      };
      step("hop-sample", stage_hop(cfg, normalized, at("contexts.jsonl"), m));
      step("generate", stage_generate(cfg, normalized, *gw, at("contexts.jsonl"), at("records.jsonl"),
                                      at("generation_audit.jsonl"), m));
      step("distract", stage_distract(cfg, normalized, *gw, at("records.jsonl"), at("corpus.index"),
                                      at("distractors.jsonl"), m));
      std::string leaks;
      if (!test_docs.empty()) {
        leaks = at("leaks.csv");
        step("leak-check", stage_leak(cfg, normalized, test_docs, leaks, m));
      }
      step("assemble", stage_assemble(cfg, normalized, at("records.jsonl"), at("distractors.jsonl"), leaks,
                                      at("dataset.jsonl"), at("dataset.manifest.json"), m));
      step("export-train", stage_export(cfg, at("dataset.jsonl"), at("train.jsonl"), at("train.manifest.json"), m));
      OwnedString stats;
      check(ab_gateway_stats(gw->p, &stats.p), "gateway");
      m.summary("gateway", stats.as_json());
      m.write();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.apply_overrides(overrides);
    if (seed_flag) cfg.set("seed", std::to_string(*seed_flag));
    if (action) action();
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitOk;
}
