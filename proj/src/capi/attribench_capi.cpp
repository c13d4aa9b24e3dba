#include "attribench/attribench.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attribution.hpp"
#include "context_select.hpp"
#include "corpus.hpp"
#include "csv.hpp"
#include "datasets.hpp"
#include "distractor.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "hashing.hpp"
#include "http_backend.hpp"
#include "jsonl.hpp"
#include "leakage.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "study.hpp"
#include "study_server.hpp"
#include "synthesis.hpp"

namespace ab = attribench;
using nlohmann::json;

struct ab_store {
  ab::ArticleStore store;
};

struct ab_gateway {
  std::shared_ptr<ab::Gateway> gateway;
};

struct ab_study {
  ab_study(ab::StudyConfig config, std::filesystem::path log)
      : service(std::move(config), {}, std::move(log)), server(service) {}
  ab::StudyService service;
  ab::StudyServer server;
};

namespace {

thread_local std::string g_last_error;

// A caller-supplied argument or option is unusable.
class ArgumentError : public ab::Error {
 public:
  using Error::Error;
};

ab_status status_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ArgumentError&) {
    return AB_ERR_INVALID_ARGUMENT;
  } catch (const ab::ParseError&) {
    return AB_ERR_PARSE;
  } catch (const ab::ValidationError&) {
    return AB_ERR_VALIDATION;
  } catch (const ab::StudyError&) {
    return AB_ERR_VALIDATION;
  } catch (const ab::IoError&) {
    return AB_ERR_IO;
  } catch (const ab::TransportError&) {
    return AB_ERR_ENDPOINT;
  } catch (const ab::EndpointError&) {
    return AB_ERR_ENDPOINT;
  } catch (const ab::TransientError&) {
    return AB_ERR_ENDPOINT;
  } catch (const ab::ReplayMissError&) {
    return AB_ERR_ENDPOINT;
  } catch (const json::exception&) {
    return AB_ERR_PARSE;
  } catch (...) {
    return AB_ERR_INTERNAL;
  }
}

template <class Fn>
ab_status guard(Fn&& fn) noexcept {
  g_last_error.clear();
  try {
    fn();
    return AB_OK;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return status_of(std::current_exception());
  } catch (...) {
    g_last_error = "unknown error";
    return AB_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw ArgumentError(std::string(name) + " must not be NULL");
}

std::string path_arg(const char* p, const char* name) {
  if (p == nullptr || *p == '\0') throw ArgumentError(std::string(name) + " must be a non-empty path");
  return p;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  if (out != nullptr) *out = dup_string(j.dump());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ab::IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Stages that call endpoints create "<out>.partial" before any remote work;
// the final save reuses and renames it, so only failed runs leave it behind.
void mark_partial(const std::filesystem::path& out) {
  std::ofstream marker(ab::OutputFile::partial_path(out), std::ios::binary);
  if (!marker) throw ab::IoError("cannot write " + ab::OutputFile::partial_path(out).string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  ab::OutputFile file(path, true);
  file.stream() << text;
  file.commit();
}

// Typed access to an options object. Unknown keys are rejected so that a
// misspelled option fails instead of silently taking its default.
class Options {
 public:
  Options(const char* text, std::initializer_list<const char*> known) {
    if (text != nullptr && *text != '\0') {
      try {
        j_ = json::parse(text);
      } catch (const json::exception& e) {
        throw ArgumentError(std::string("options are not valid JSON: ") + e.what());
      }
    }
    if (j_.is_null()) j_ = json::object();
    if (!j_.is_object()) throw ArgumentError("options must be a JSON object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.contains(key)) throw ArgumentError("unknown option '" + key + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  std::uint64_t u64(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ArgumentError(std::string("option '") + key + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::size_t positive(const char* key, std::size_t fallback) const {
    const auto v = u64(key, fallback);
    if (v == 0) throw ArgumentError(std::string("option '") + key + "' must be at least 1");
    return static_cast<std::size_t>(v);
  }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ArgumentError(std::string("option '") + key + "' must be a number");
    return v.get<double>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ArgumentError(std::string("option '") + key + "' must be true or false");
    return v.get<bool>();
  }

  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ArgumentError(std::string("option '") + key + "' must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ArgumentError(std::string("option '") + key + "' must be an array of numbers");
    for (const auto& x : v) {
      if (!x.is_number()) throw ArgumentError(std::string("option '") + key + "' must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::string> strings(const char* key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ArgumentError(std::string("option '") + key + "' must be an array of strings");
    for (const auto& x : v) {
      if (!x.is_string()) throw ArgumentError(std::string("option '") + key + "' must be an array of strings");
      out.push_back(x.get<std::string>());
    }
    return out;
  }

 private:
  json j_;
};

json stats_json(const ab::Gateway& gateway) {
  const auto s = gateway.stats();
  return {{"calls", s.calls}, {"attempts", s.attempts}, {"replayed", s.replayed},
          {"peak_in_flight", s.peak_in_flight}};
}

struct ContextEntry {
  std::string id;
  ab::GenerationContext context;
};

std::vector<ContextEntry> load_contexts(const std::filesystem::path& path) {
  std::vector<ContextEntry> out;
  std::set<std::string> seen;
  ab::for_each_jsonl(path, [&](const json& j, std::size_t) {
    ContextEntry e{j.at("id").get<std::string>(), ab::context_from_json(j)};
    if (!seen.insert(e.id).second) throw ab::ValidationError("duplicate context id '" + e.id + "'");
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<ab::GeneratedRecord> load_records(const std::filesystem::path& path) {
  std::vector<ab::GeneratedRecord> out;
  std::set<std::string> seen;
  ab::for_each_jsonl(path, [&](const json& j, std::size_t) {
    auto r = ab::record_from_json(j);
    if (!seen.insert(r.id).second) throw ab::ValidationError("duplicate record id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<ab::LeakDocument> load_leak_documents(const std::filesystem::path& path) {
  std::vector<ab::LeakDocument> out;
  ab::for_each_jsonl(path, [&](const json& j, std::size_t) {
    ab::LeakDocument doc{j.at("id").get<std::string>(), {}};
    if (j.contains("text")) {
      doc.text = j.at("text").get<std::string>();
    } else if (j.contains("sentences") || j.contains("paragraphs")) {
      for (const auto& s : ab::article_from_json(j).sentences) {
        if (!doc.text.empty()) doc.text += ' ';
        doc.text += s;
      }
    } else {
      throw ab::ValidationError("document '" + doc.id + "' has no \"text\", \"sentences\" or \"paragraphs\"");
    }
    out.push_back(std::move(doc));
  });
  return out;
}

std::set<std::string> leaked_train_ids(const std::filesystem::path& report) {
  std::set<std::string> out;
  std::istringstream in(read_text(report));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto fields = ab::split_csv_line(line);
    if (fields.empty()) throw ab::ParseError(0, "malformed leak report line: " + line);
    out.insert(fields[0]);
  }
  return out;
}

ab::GenerationOptions generation_options(const ab::Gateway& gateway, const Options& opts) {
  ab::GenerationOptions g;
  g.prompt = {gateway.config().chat_model, gateway.config().generation_temperature, gateway.config().max_tokens};
  g.max_retries = static_cast<int>(opts.positive("max_retries", 3));
  return g;
}

ab::CassetteMode parse_mode(const std::string& s) {
  try {
    return ab::cassette_mode_from_string(s);
  } catch (const ab::Error& e) {
    throw ArgumentError(std::string("gateway mode: ") + e.what());
  }
}

}  // namespace

extern "C" {

const char* ab_version(void) { return ATTRIBENCH_VERSION; }

const char* ab_status_name(ab_status status) {
  switch (status) {
    case AB_OK: return "ok";
    case AB_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case AB_ERR_PARSE: return "parse_error";
    case AB_ERR_VALIDATION: return "validation_error";
    case AB_ERR_IO: return "io_error";
    case AB_ERR_ENDPOINT: return "endpoint_error";
    case AB_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* ab_last_error(void) { return g_last_error.c_str(); }

void ab_string_free(char* s) { std::free(s); }

ab_status ab_sha256_file(const char* path, char** out_hex) {
  return guard([&] {
    require(out_hex, "out_hex");
    *out_hex = dup_string(ab::sha256_file(path_arg(path, "path")));
  });
}

ab_status ab_sha256_bytes(const void* data, size_t size, char** out_hex) {
  return guard([&] {
    require(out_hex, "out_hex");
    if (size > 0) require(data, "data");
    *out_hex = dup_string(ab::sha256_hex(std::string_view(static_cast<const char*>(data), size)));
  });
}

ab_status ab_store_load(const char* path, ab_store** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    auto store = std::make_unique<ab_store>(ab_store{ab::ingest(path_arg(path, "path"))});
    *out = store.release();
  });
}

ab_status ab_store_save(const ab_store* store, const char* path) {
  return guard([&] {
    require(store, "store");
    ab::save(store->store, path_arg(path, "path"));
  });
}

ab_status ab_store_filter(const ab_store* store, ab_store** out) {
  return guard([&] {
    require(store, "store");
    require(out, "out");
    *out = nullptr;
    auto filtered = std::make_unique<ab_store>(ab_store{ab::filter_linkable(store->store)});
    *out = filtered.release();
  });
}

size_t ab_store_size(const ab_store* store) { return store ? store->store.size() : 0; }

size_t ab_store_reference_size(const ab_store* store) {
  return store ? store->store.reference_articles().size() : 0;
}

void ab_store_free(ab_store* store) { delete store; }

ab_status ab_gateway_create(const char* config_json, ab_gateway** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    const Options o(config_json, {"chat_url", "embedding_url", "chat_model", "embedding_model", "mode", "cassette",
                                  "max_attempts", "base_delay_ms", "max_delay_ms", "max_in_flight",
                                  "embed_batch_limit", "generation_temperature", "attribution_temperature",
                                  "max_tokens", "timeout_s", "api_key_env"});
    ab::GatewayConfig config;
    config.chat_model = o.string("chat_model", "");
    config.embedding_model = o.string("embedding_model", "");
    config.mode = parse_mode(o.string("mode", "live"));
    config.cassette = o.string("cassette", "");
    config.retry.max_attempts = static_cast<int>(o.positive("max_attempts", 3));
    config.retry.base_delay = std::chrono::milliseconds(o.u64("base_delay_ms", 500));
    config.retry.max_delay = std::chrono::milliseconds(o.u64("max_delay_ms", 8000));
    config.max_in_flight = o.positive("max_in_flight", 4);
    config.embed_batch_limit = o.positive("embed_batch_limit", 64);
    config.generation_temperature = o.number("generation_temperature", 0.7);
    config.attribution_temperature = o.number("attribution_temperature", 0.0);
    config.max_tokens = static_cast<int>(o.positive("max_tokens", 1024));
    if (config.mode != ab::CassetteMode::live && config.cassette.empty()) {
      throw ArgumentError("option 'cassette' is required in record and replay mode");
    }

    ab::HttpEndpoint chat;
    ab::HttpEndpoint embedding;
    chat.url = o.string("chat_url", "");
    embedding.url = o.string("embedding_url", "");
    chat.api_key_env = embedding.api_key_env = o.string("api_key_env", "ATTRIBENCH_API_KEY");
    chat.timeout = embedding.timeout = std::chrono::seconds(o.positive("timeout_s", 120));
    if (config.mode != ab::CassetteMode::replay && chat.url.empty() && embedding.url.empty()) {
      throw ArgumentError("option 'chat_url' or 'embedding_url' is required unless mode is replay");
    }
    auto gw = std::make_unique<ab_gateway>(ab_gateway{ab::make_http_gateway(std::move(config), chat, embedding)});
    *out = gw.release();
  });
}

ab_status ab_gateway_stats(const ab_gateway* gateway, char** out_json) {
  return guard([&] {
    require(gateway, "gateway");
    require(out_json, "out_json");
    emit(out_json, stats_json(*gateway->gateway));
  });
}

void ab_gateway_free(ab_gateway* gateway) { delete gateway; }

ab_status ab_sample_contexts(const ab_store* store, const char* options_json, const char* out_path,
                             char** out_summary) {
  return guard([&] {
    require(store, "store");
    const std::string out = path_arg(out_path, "out_path");
    const Options o(options_json, {"seed", "chains", "dialogues", "max_hops"});
    const auto seed = o.u64("seed", 0);
    const auto chains = o.u64("chains", 100);
    const auto dialogues = o.u64("dialogues", 0);
    const auto max_hops = o.u64("max_hops", 2);
    if (max_hops < 1 || max_hops > 2) throw ArgumentError("option 'max_hops' must be 1 or 2");
    const auto& s = store->store;

    // Duplicates are redrawn up to a bounded number of attempts so a small
    // corpus yields fewer contexts instead of looping forever.
    ab::OutputFile file(out);
    std::size_t duplicates = 0;
    std::size_t written_chains = 0;
    if (chains > 0) {
      const ab::HopSampler sampler(s);
      std::set<std::string> seen;
      const std::uint64_t stream = ab::derive_seed(seed, 0);
      for (std::uint64_t attempt = 0; written_chains < chains && attempt < chains * 20; ++attempt) {
        auto chain = sampler.sample(ab::derive_seed(stream, attempt), static_cast<int>(max_hops));
        json ctx = ab::context_to_json(ab::GenerationContext(chain));
        if (!seen.insert(ctx.dump()).second) {
          ++duplicates;
          continue;
        }
        char id[32];
        std::snprintf(id, sizeof id, "hop-%06zu", ++written_chains);
        ctx["id"] = id;
        file.write_json_line(ctx);
      }
    }
    std::size_t written_dialogues = 0;
    if (dialogues > 0) {
      std::set<std::string> seen;
      const std::uint64_t stream = ab::derive_seed(seed, 1);
      for (std::uint64_t attempt = 0; written_dialogues < dialogues && attempt < dialogues * 20; ++attempt) {
        auto ctx = ab::select_dialogue_context(s, ab::derive_seed(stream, attempt));
        if (!seen.insert(ctx.article_id).second) {
          ++duplicates;
          continue;
        }
        json j = ab::context_to_json(ab::GenerationContext(ctx));
        char id[32];
        std::snprintf(id, sizeof id, "dlg-%06zu", ++written_dialogues);
        j["id"] = id;
        file.write_json_line(j);
      }
    }
    file.commit();
    emit(out_summary, {{"chains", written_chains},
                       {"dialogues", written_dialogues},
                       {"duplicates_skipped", duplicates},
                       {"chains_requested", chains},
                       {"dialogues_requested", dialogues}});
  });
}

ab_status ab_generate(const ab_store* store, ab_gateway* gateway, const char* contexts_path,
                      const char* options_json, const char* out_path, const char* audit_path, char** out_summary) {
  return guard([&] {
    require(store, "store");
    require(gateway, "gateway");
    const std::string out = path_arg(out_path, "out_path");
    auto& gw = *gateway->gateway;
    const Options o(options_json, {"max_retries", "workers"});
    const auto gen = generation_options(gw, o);
    const auto workers = o.positive("workers", gw.config().max_in_flight);
    const auto contexts = load_contexts(path_arg(contexts_path, "contexts_path"));

    ab::OutputFile file(out);
    std::vector<ab::GenerationBatch> batches(contexts.size());
    ab::parallel_for(contexts.size(), workers, [&](std::size_t i) {
      batches[i] = ab::run_generation(contexts[i].context, store->store, gw, gen);
    });

    std::size_t records = 0;
    std::size_t failed = 0;
    std::size_t attempts = 0;
    std::map<std::string, std::size_t> rejections;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      const auto& b = batches[i];
      failed += b.failed;
      attempts += b.attempts.size();
      for (const auto& a : b.attempts) {
        if (a.rejection) ++rejections[std::string(ab::to_string(*a.rejection))];
      }
      for (std::size_t k = 0; k < b.pairs.size(); ++k) {
        const ab::GeneratedRecord rec{contexts[i].id + "-q" + std::to_string(k + 1), b.context, b.pairs[k],
                                      gen.prompt.model, b.prompt_hash};
        file.write_json_line(ab::record_to_json(rec));
        ++records;
      }
    }
    if (audit_path != nullptr && *audit_path != '\0') {
      ab::OutputFile audit(audit_path);
      for (std::size_t i = 0; i < contexts.size(); ++i) {
        json j = ab::batch_to_json(batches[i]);
        j["id"] = contexts[i].id;
        audit.write_json_line(j);
      }
      audit.commit();
    }
    file.commit();
    emit(out_summary, {{"contexts", contexts.size()},
                       {"records", records},
                       {"failed_contexts", failed},
                       {"model_calls", attempts},
                       {"rejections", rejections},
                       {"gateway", stats_json(gw)}});
  });
}

ab_status ab_build_index(const ab_store* store, ab_gateway* gateway, size_t batch_size, const char* out_path,
                         char** out_summary) {
  return guard([&] {
    require(store, "store");
    require(gateway, "gateway");
    const std::string out = path_arg(out_path, "out_path");
    mark_partial(out);
    const auto index = ab::build_index(store->store, *gateway->gateway, batch_size);
    ab::save_index(index, out);
    emit(out_summary, {{"articles", index.size()},
                       {"dimension", index.dimension()},
                       {"gateway", stats_json(*gateway->gateway)}});
  });
}

ab_status ab_mine_distractors(const char* records_path, const char* index_path, const char* options_json,
                              const char* out_path, char** out_summary) {
  return guard([&] {
    const std::string out = path_arg(out_path, "out_path");
    const Options o(options_json, {"seed", "pool_size", "per_source"});
    const auto seed = o.u64("seed", 0);
    ab::MineOptions mine_opts;
    mine_opts.pool_size = o.positive("pool_size", mine_opts.pool_size);
    mine_opts.per_source = o.u64("per_source", mine_opts.per_source);
    const auto records = load_records(path_arg(records_path, "records_path"));
    const auto index = ab::load_index(path_arg(index_path, "index_path"));

    ab::OutputFile file(out);
    std::size_t total = 0;
    for (const auto& r : records) {
      const auto sources = ab::source_article_ids(r.context);
      const auto mined = ab::mine(sources, index, mine_opts, seed);
      total += mined.size();
      file.write_json_line({{"id", r.id}, {"sources", sources}, {"distractors", mined}});
    }
    file.commit();
    emit(out_summary, {{"records", records.size()}, {"distractors", total}});
  });
}

ab_status ab_flag_leaks(const char* train_path, const char* test_path, const char* options_json, const char* out_csv,
                        char** out_summary) {
  return guard([&] {
    const std::string out = path_arg(out_csv, "out_csv");
    const Options o(options_json, {"threshold", "num_perms", "bands", "shingle_size", "seed", "workers"});
    ab::LeakOptions opts;
    opts.threshold = o.number("threshold", opts.threshold);
    opts.num_perms = o.positive("num_perms", opts.num_perms);
    opts.bands = o.positive("bands", opts.bands);
    opts.shingle_size = o.positive("shingle_size", opts.shingle_size);
    opts.seed = o.u64("seed", opts.seed);
    opts.workers = o.positive("workers", opts.workers);
    if (opts.num_perms % opts.bands != 0) throw ArgumentError("option 'bands' must divide 'num_perms'");
    const auto train = load_leak_documents(path_arg(train_path, "train_path"));
    const auto test = load_leak_documents(path_arg(test_path, "test_path"));
    const auto flags = ab::flag_leaks(train, test, opts);
    ab::write_leak_report(flags, out);
    std::set<std::string> train_ids;
    for (const auto& f : flags) train_ids.insert(f.train_id);
    emit(out_summary, {{"train", train.size()},
                       {"test", test.size()},
                       {"flagged_pairs", flags.size()},
                       {"flagged_train", train_ids.size()}});
  });
}

ab_status ab_assemble(const ab_store* store, const char* records_path, const char* distractors_path,
                      const char* options_json, const char* out_path, const char* manifest_path,
                      char** out_summary) {
  return guard([&] {
    require(store, "store");
    const std::string out = path_arg(out_path, "out_path");
    const std::string manifest = path_arg(manifest_path, "manifest_path");
    const Options o(options_json, {"seed", "dialogue_distractors", "leak_report"});
    ab::AssembleOptions opts;
    opts.seed = o.u64("seed", 0);
    opts.dialogue_distractors = o.boolean("dialogue_distractors", true);
    const auto records = load_records(path_arg(records_path, "records_path"));

    std::map<std::string, std::vector<std::string>> distractors;
    if (distractors_path != nullptr && *distractors_path != '\0') {
      ab::for_each_jsonl(distractors_path, [&](const json& j, std::size_t) {
        distractors[j.at("id").get<std::string>()] = j.at("distractors").get<std::vector<std::string>>();
      });
    }

    auto samples = ab::assemble(records, store->store, distractors, opts);
    ab::DatasetMeta meta{opts.seed, std::nullopt};
    std::size_t dropped = 0;
    if (o.has("leak_report")) {
      const std::string report = o.string("leak_report", "");
      const auto leaked = leaked_train_ids(report);
      std::erase_if(samples, [&](const ab::TrainingSample& s) {
        const bool hit = std::any_of(s.documents.begin(), s.documents.end(),
                                     [&](const auto& d) { return leaked.contains(d.article_id); });
        dropped += hit;
        return hit;
      });
      meta.leakage_report = "sha256:" + ab::sha256_file(report);
    }
    ab::save_samples(samples, out);
    json m = ab::dataset_manifest(samples, meta);
    m["dropped_by_leak_check"] = dropped;
    ab::write_json_file(manifest, m);
    emit(out_summary, {{"records", records.size()}, {"samples", samples.size()}, {"dropped_by_leak_check", dropped}});
  });
}

ab_status ab_export_train(const char* dataset_path, const char* style, const char* out_path,
                          const char* manifest_path, char** out_summary) {
  return guard([&] {
    const auto samples = ab::load_samples(path_arg(dataset_path, "dataset_path"));
    const std::string st = (style == nullptr || *style == '\0') ? "chat_sft" : style;
    ab::export_train(samples, st, path_arg(out_path, "out_path"), path_arg(manifest_path, "manifest_path"));
    emit(out_summary, {{"records", samples.size()}, {"style", st}});
  });
}

ab_status ab_rephrase(ab_gateway* gateway, const char* dataset_path, const char* options_json, const char* out_path,
                      char** out_summary) {
  return guard([&] {
    require(gateway, "gateway");
    const std::string out = path_arg(out_path, "out_path");
    auto& gw = *gateway->gateway;
    const Options o(options_json, {"max_retries", "workers"});
    const auto gen = generation_options(gw, o);
    const auto workers = o.positive("workers", gw.config().max_in_flight);
    auto samples = ab::load_samples(path_arg(dataset_path, "dataset_path"));
    mark_partial(out);

    std::vector<char> changed(samples.size(), 0);
    ab::parallel_for(samples.size(), workers, [&](std::size_t i) {
      auto& qa = samples[i].qa;
      if (samples[i].kind != ab::SampleKind::dialogue || qa.dialogue_history.empty()) return;
      auto [q, a] = ab::rephrase_multiturn(qa.dialogue_history, qa.question, qa.answer, gw, gen);
      qa.question = std::move(q);
      qa.answer = std::move(a);
      qa.dialogue_history.clear();
      changed[i] = 1;
    });
    ab::save_samples(samples, out);
    const auto n = static_cast<std::size_t>(std::count(changed.begin(), changed.end(), 1));
    emit(out_summary, {{"samples", samples.size()}, {"rephrased", n}, {"gateway", stats_json(gw)}});
  });
}

ab_status ab_synatt(ab_gateway* const* gateways, size_t n_gateways, const char* dataset_path,
                    const char* options_json, const char* out_path, char** out_summary) {
  return guard([&] {
    require(gateways, "gateways");
    if (n_gateways == 0) throw ArgumentError("at least one gateway is required");
    const std::string out = path_arg(out_path, "out_path");
    std::vector<ab::Gateway*> gws;
    for (std::size_t i = 0; i < n_gateways; ++i) {
      require(gateways[i], "gateway");
      gws.push_back(gateways[i]->gateway.get());
    }
    const Options o(options_json, {"workers"});
    const auto workers = o.positive("workers", gws.front()->config().max_in_flight);
    auto samples = ab::load_samples(path_arg(dataset_path, "dataset_path"));
    mark_partial(out);

    std::vector<char> keep(samples.size(), 1);
    ab::parallel_for(samples.size(), workers, [&](std::size_t i) {
      auto& s = samples[i];
      s.gold = ab::synatt_labels(s.qa.question, s.qa.answer, s.documents, gws, s.qa.dialogue_history);
      keep[i] = !s.gold.empty();
    });
    std::vector<ab::TrainingSample> kept;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (keep[i]) kept.push_back(std::move(samples[i]));
    }
    ab::save_samples(kept, out);
    emit(out_summary, {{"samples", kept.size()}, {"dropped_empty_vote", samples.size() - kept.size()}});
  });
}

ab_status ab_attribute(ab_gateway* gateway, const char* dataset_path, const char* options_json, const char* out_path,
                       char** out_summary) {
  return guard([&] {
    const std::string out = path_arg(out_path, "out_path");
    const Options o(options_json,
                    {"method", "seed", "p", "validation", "threshold", "grid", "model", "members", "workers"});
    const std::string method = o.string("method", "");
    const auto samples = ab::load_samples(path_arg(dataset_path, "dataset_path"));
    std::vector<ab::TrainingSample> validation;
    if (o.has("validation")) validation = ab::load_samples(o.string("validation", ""));
    mark_partial(out);
    auto need_gateway = [&]() -> ab::Gateway& {
      if (gateway == nullptr) throw ArgumentError("method '" + method + "' needs a gateway");
      return *gateway->gateway;
    };

    json summary{{"method", method}};
    std::unique_ptr<ab::Attributor> attributor;
    std::size_t workers = 1;
    if (method == "random") {
      double p = 0.0;
      if (o.has("p")) {
        p = o.number("p", 0.0);
      } else if (!validation.empty()) {
        p = ab::default_random_p(validation);
      } else {
        throw ArgumentError("method 'random' needs option 'p' or 'validation'");
      }
      summary["p"] = p;
      attributor = std::make_unique<ab::RandomAttributor>(p, o.u64("seed", 0));
    } else if (method == "embed_threshold") {
      auto& gw = need_gateway();
      workers = gw.config().max_in_flight;
      double threshold = 0.0;
      if (o.has("threshold")) {
        threshold = o.number("threshold", 0.0);
      } else if (!validation.empty()) {
        auto grid = o.numbers("grid");
        if (grid.empty()) {
          for (int i = 0; i <= 20; ++i) grid.push_back(i * 0.05);
        }
        threshold = ab::tune_threshold(validation, gw, grid);
      } else {
        throw ArgumentError("method 'embed_threshold' needs option 'threshold' or 'validation'");
      }
      summary["threshold"] = threshold;
      attributor = std::make_unique<ab::EmbeddingThresholdAttributor>(gw, threshold);
    } else if (method == "zero_shot") {
      auto& gw = need_gateway();
      workers = gw.config().max_in_flight;
      attributor = std::make_unique<ab::PromptAttributor>(gw, o.string("model", ""));
    } else if (method == "ensemble") {
      auto& gw = need_gateway();
      workers = gw.config().max_in_flight;
      const auto models = o.strings("members");
      if (models.size() < 2) throw ArgumentError("option 'members' must list at least two model ids");
      std::vector<std::shared_ptr<ab::Attributor>> members;
      for (const auto& m : models) members.push_back(std::make_shared<ab::PromptAttributor>(gw, m));
      attributor = std::make_unique<ab::EnsembleAttributor>(std::move(members));
      summary["members"] = models;
    } else {
      throw ArgumentError("option 'method' must be random, embed_threshold, zero_shot or ensemble");
    }
    workers = o.positive("workers", workers);

    const auto predictions = ab::attribute_all(*attributor, samples, workers);
    ab::save_predictions(predictions, out);
    std::size_t unparseable = 0;
    double latency = 0.0;
    for (const auto& p : predictions) {
      unparseable += p.unparseable;
      latency += p.latency_ms;
    }
    summary["predictions"] = predictions.size();
    summary["unparseable"] = unparseable;
    summary["mean_latency_ms"] = predictions.empty() ? 0.0 : latency / static_cast<double>(predictions.size());
    if (gateway != nullptr) summary["gateway"] = stats_json(*gateway->gateway);
    emit(out_summary, summary);
  });
}

ab_status ab_evaluate(const char* dataset_path, const char* predictions_path, const char* dataset_name,
                      const char* out_csv, const char* table_path, char** out_summary) {
  return guard([&] {
    const std::string out = path_arg(out_csv, "out_csv");
    const auto samples = ab::load_samples(path_arg(dataset_path, "dataset_path"));
    const auto predictions = ab::load_predictions(path_arg(predictions_path, "predictions_path"));
    const std::string name = (dataset_name == nullptr || *dataset_name == '\0') ? "dataset" : dataset_name;
    const auto rows = ab::evaluate(predictions, samples, name);
    write_text(out, ab::render_report_csv(rows));
    if (table_path != nullptr && *table_path != '\0') write_text(table_path, ab::render_report_table(rows));
    json summary = json::array();
    for (const auto& r : rows) {
      summary.push_back({{"method", r.method},
                         {"dataset", r.dataset},
                         {"mode", ab::to_string(r.mode)},
                         {"precision", r.precision},
                         {"recall", r.recall},
                         {"f1", r.f1},
                         {"n_examples", r.n_examples},
                         {"n_unparseable", r.n_unparseable}});
    }
    emit(out_summary, summary);
  });
}

ab_status ab_render_report(const char* const* csv_paths, size_t n_paths, const char* out_csv,
                           const char* table_path) {
  return guard([&] {
    if (n_paths > 0) require(csv_paths, "csv_paths");
    const std::string out = path_arg(out_csv, "out_csv");
    std::vector<ab::ReportRow> rows;
    for (std::size_t i = 0; i < n_paths; ++i) {
      auto part = ab::parse_report_csv(read_text(path_arg(csv_paths[i], "csv_paths[i]")));
      rows.insert(rows.end(), part.begin(), part.end());
    }
    write_text(out, ab::render_report_csv(rows));
    if (table_path != nullptr && *table_path != '\0') write_text(table_path, ab::render_report_table(rows));
  });
}

ab_status ab_study_create(const char* config_path, const char* log_path, ab_study** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    auto config = ab::study_config_from_json(ab::read_json_file(path_arg(config_path, "config_path")));
    std::filesystem::path log = (log_path != nullptr) ? log_path : "";
    *out = new ab_study(std::move(config), std::move(log));
  });
}

ab_status ab_study_bind(ab_study* study, const char* host, int port, int* out_port) {
  return guard([&] {
    require(study, "study");
    if (port < 0 || port > 65535) throw ArgumentError("port must be in [0, 65535]");
    const std::string h = (host == nullptr || *host == '\0') ? "127.0.0.1" : host;
    const int bound = study->server.bind(h, port);
    if (bound < 0) throw ab::IoError("cannot bind " + h + ":" + std::to_string(port));
    if (out_port != nullptr) *out_port = bound;
  });
}

ab_status ab_study_run(ab_study* study) {
  return guard([&] {
    require(study, "study");
    if (!study->server.listen()) throw ab::IoError("study server stopped with an error");
  });
}

void ab_study_stop(ab_study* study) {
  if (study != nullptr) study->server.stop();
}

void ab_study_free(ab_study* study) { delete study; }

ab_status ab_study_analyze(const char* config_path, const char* results_csv, const char* out_csv,
                           char** out_summary) {
  return guard([&] {
    const std::string out = path_arg(out_csv, "out_csv");
    const auto config = ab::study_config_from_json(ab::read_json_file(path_arg(config_path, "config_path")));
    const auto records = ab::parse_results_csv(read_text(path_arg(results_csv, "results_csv")));
    std::vector<std::string> warnings;
    const auto summaries = ab::analyze(records, config, &warnings);
    write_text(out, ab::analysis_csv(summaries));
    json rows = json::array();
    for (const auto& s : summaries) {
      rows.push_back({{"scenario", s.scenario},
                      {"label", s.label},
                      {"n", s.n},
                      {"mean_time_s", s.mean_time_s},
                      {"accuracy", s.accuracy}});
    }
    emit(out_summary, {{"scenarios", rows}, {"warnings", warnings}});
  });
}

}  // extern "C"
