#include "study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "csv.hpp"
#include "hashing.hpp"
#include "jsonl.hpp"
#include "rng.hpp"

namespace attribench {

using nlohmann::json;

namespace {

double steady_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string number(double v) {
  // Integral milliseconds print without a fraction.
  if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

json documents_to_json(const std::vector<DocumentExcerpt>& docs) {
  json out = json::array();
  for (const auto& d : docs) out.push_back({{"article_id", d.article_id}, {"title", d.title}, {"sentences", d.sentences}});
  return out;
}

}  // namespace

std::string StudyConfig::label(const std::string& scenario) const {
  auto it = labels.find(scenario);
  return it == labels.end() ? scenario : it->second;
}

void validate(const StudyConfig& config) {
  if (config.scenarios.empty()) throw ValidationError("study needs at least one scenario");
  const std::set<std::string> scenarios(config.scenarios.begin(), config.scenarios.end());
  if (scenarios.size() != config.scenarios.size()) throw ValidationError("duplicate scenario in study config");
  if (config.examples.empty()) throw ValidationError("study needs at least one example");
  std::set<std::string> ids;
  for (const auto& ex : config.examples) {
    if (!ids.insert(ex.id).second) throw ValidationError("duplicate study example '" + ex.id + "'");
    for (const auto& scenario : config.scenarios) {
      if (scenario == kNoAlignment) continue;
      auto it = ex.highlights.find(scenario);
      if (it == ex.highlights.end()) {
        throw ValidationError("example '" + ex.id + "' has no highlights for scenario '" + scenario + "'");
      }
      for (const auto& ref : it->second) {
        if (ref.document >= ex.documents.size() || ref.sentence >= ex.documents[ref.document].sentences.size()) {
          throw ValidationError("example '" + ex.id + "' highlights a sentence outside its documents");
        }
      }
    }
  }
}

StudyConfig study_config_from_json(const json& j) {
  StudyConfig c;
  if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
  if (j.contains("labels")) c.labels = j.at("labels").get<std::map<std::string, std::string>>();
  c.participants_expected = j.value("participants_expected", c.participants_expected);
  c.seed = j.value("seed", c.seed);
  for (const auto& e : j.at("examples")) {
    StudyExample ex;
    ex.id = e.at("id").get<std::string>();
    ex.question = e.at("question").get<std::string>();
    ex.answer = e.at("answer").get<std::string>();
    for (const auto& d : e.at("documents")) {
      ex.documents.push_back({d.value("article_id", ""), d.value("title", ""),
                              d.at("sentences").get<std::vector<std::string>>()});
    }
    if (e.contains("highlights")) {
      for (const auto& [scenario, refs] : e.at("highlights").items()) {
        auto& set = ex.highlights[scenario];
        for (const auto& r : refs) set.insert({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
      }
    }
    if (!e.contains("gold_correct")) throw ValidationError("example '" + ex.id + "' has no gold_correct flag");
    ex.gold_correct = e.at("gold_correct").get<bool>();
    c.examples.push_back(std::move(ex));
  }
  validate(c);
  return c;
}

std::vector<std::string> latin_square(std::span<const std::string> scenarios, std::size_t participant_index) {
  std::vector<std::string> row;
  const std::size_t k = scenarios.size();
  for (std::size_t p = 0; p < k; ++p) row.push_back(scenarios[(participant_index + p) % k]);
  return row;
}

std::vector<PlannedTrial> trial_plan(const StudyConfig& config, std::size_t participant_index) {
  const auto order = latin_square(config.scenarios, participant_index);
  const std::size_t k = order.size();
  const std::size_t n = config.examples.size();
  std::vector<PlannedTrial> plan;
  for (std::size_t p = 0; p < k; ++p) {
    std::vector<std::size_t> group;
    for (std::size_t e = p * n / k; e < (p + 1) * n / k; ++e) group.push_back(e);
    Rng rng(derive_seed(derive_seed(config.seed, participant_index), fnv1a64(order[p])));
    rng.shuffle(group);
    for (std::size_t e : group) plan.push_back({order[p], e});
  }
  return plan;
}

std::string_view to_string(Judgment j) { return j == Judgment::correct ? "correct" : "incorrect"; }

Judgment judgment_from_string(std::string_view s) {
  if (s == "correct") return Judgment::correct;
  if (s == "incorrect") return Judgment::incorrect;
  throw ValidationError("judgment must be 'correct' or 'incorrect'");
}

json trial_record_to_json(const TrialRecord& r) {
  return {{"participant", r.participant},
          {"participant_index", r.participant_index},
          {"scenario", r.scenario},
          {"example", r.example},
          {"position", r.position},
          {"judgment", to_string(r.judgment)},
          {"gold", r.gold ? "correct" : "incorrect"},
          {"elapsed_ms_client", r.elapsed_ms_client},
          {"elapsed_ms_server", r.elapsed_ms_server},
          {"flagged", r.flagged}};
}

TrialRecord trial_record_from_json(const json& j) {
  return {j.at("participant").get<std::string>(),
          j.at("participant_index").get<std::size_t>(),
          j.at("scenario").get<std::string>(),
          j.at("example").get<std::string>(),
          j.at("position").get<std::size_t>(),
          judgment_from_string(j.at("judgment").get<std::string>()),
          j.at("gold").get<std::string>() == "correct",
          j.at("elapsed_ms_client").get<double>(),
          j.at("elapsed_ms_server").get<double>(),
          j.at("flagged").get<bool>()};
}

std::string results_csv(std::span<const TrialRecord> records) {
  std::string out = "participant,scenario,example,judgment,gold,elapsed_ms_client,elapsed_ms_server\n";
  for (const auto& r : records) {
    out += csv_field(r.participant) + ',' + csv_field(r.scenario) + ',' + csv_field(r.example) + ',' +
           std::string(to_string(r.judgment)) + ',' + (r.gold ? "correct" : "incorrect") + ',' +
           number(r.elapsed_ms_client) + ',' + number(r.elapsed_ms_server) + '\n';
  }
  return out;
}

std::vector<TrialRecord> parse_results_csv(std::string_view text) {
  std::vector<TrialRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw ParseError(line_no, "expected 7 result columns, got " + std::to_string(f.size()));
    try {
      TrialRecord r;
      r.participant = f[0];
      r.scenario = f[1];
      r.example = f[2];
      r.judgment = judgment_from_string(f[3]);
      r.gold = judgment_from_string(f[4]) == Judgment::correct;
      r.elapsed_ms_client = std::stod(f[5]);
      r.elapsed_ms_server = std::stod(f[6]);
      r.flagged = std::abs(r.elapsed_ms_client - r.elapsed_ms_server) > kElapsedDivergenceMs;
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

StudyService::StudyService(StudyConfig config, Clock clock, std::filesystem::path log)
    : config_(std::move(config)), clock_(clock ? std::move(clock) : Clock(steady_ms)), log_path_(std::move(log)) {
  validate(config_);
  if (!log_path_.empty()) {
    if (std::filesystem::exists(log_path_)) replay_log();
    log_.open(log_path_, std::ios::app);
    if (!log_) throw IoError("cannot open study log " + log_path_.string());
  }
}

void StudyService::append_log(const json& entry) {
  if (!log_.is_open()) return;
  log_ << entry.dump() << '\n';
  log_.flush();
}

void StudyService::replay_log() {
  for_each_jsonl(log_path_, [&](const json& j, std::size_t) {
    const auto type = j.at("type").get<std::string>();
    if (type == "session") {
      auto& s = open_session(j.at("participant").get<std::string>());
      if (s.id != j.at("session_id").get<std::string>()) throw ValidationError("study log does not match config");
    } else if (type == "record") {
      auto& s = session(j.at("session_id").get<std::string>());
      auto record = trial_record_from_json(j.at("record"));
      if (s.next >= s.plan.size() || config_.examples[s.plan[s.next].example].id != record.example) {
        throw ValidationError("study log record out of plan order");
      }
      ++s.next;
      records_.push_back(std::move(record));
    } else {
      throw ValidationError("unknown study log entry '" + type + "'");
    }
  });
}

StudyService::Session& StudyService::session(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw StudyError(StudyError::Kind::not_found, "unknown session '" + id + "'");
  return it->second;
}

StudyService::Session& StudyService::open_session(const std::string& participant_id) {
  Session s;
  s.participant = participant_id;
  s.participant_index = sessions_.size();
  s.id = "s" + sha256_hex(std::to_string(config_.seed) + "/" + std::to_string(s.participant_index) + "/" +
                          participant_id).substr(0, 16);
  s.order = latin_square(config_.scenarios, s.participant_index);
  s.plan = trial_plan(config_, s.participant_index);
  by_participant_[participant_id] = s.id;
  return sessions_[s.id] = std::move(s);
}

json StudyService::create_session(const std::string& participant_id) {
  if (participant_id.empty()) throw StudyError(StudyError::Kind::bad_request, "participant_id is required");
  std::lock_guard lock(mu_);
  bool resumed = true;
  Session* s;
  if (auto it = by_participant_.find(participant_id); it != by_participant_.end()) {
    s = &sessions_.at(it->second);
  } else {
    resumed = false;
    s = &open_session(participant_id);
    append_log({{"type", "session"}, {"participant", participant_id}, {"session_id", s->id}});
  }
  return {{"session_id", s->id},
          {"participant_index", s->participant_index},
          {"scenario_order", s->order},
          {"total_trials", s->plan.size()},
          {"completed", s->next},
          {"resumed", resumed}};
}

json StudyService::next_trial(const std::string& session_id) {
  std::lock_guard lock(mu_);
  Session& s = session(session_id);
  if (s.next >= s.plan.size()) return {{"done", true}, {"total_trials", s.plan.size()}};
  const auto& trial = s.plan[s.next];
  const auto& ex = config_.examples[trial.example];
  s.served_at = clock_();
  json highlights = json::array();
  if (trial.scenario != kNoAlignment) {
    for (const auto& r : ex.highlights.at(trial.scenario)) highlights.push_back({r.document, r.sentence});
  }
  return {{"done", false},
          {"trial_index", s.next},
          {"total_trials", s.plan.size()},
          {"scenario", trial.scenario},
          {"example_id", ex.id},
          {"question", ex.question},
          {"answer", ex.answer},
          {"documents", documents_to_json(ex.documents)},
          {"highlights", std::move(highlights)}};
}

json StudyService::submit(const std::string& session_id, const std::string& example_id, Judgment judgment,
                          double client_elapsed_ms) {
  if (!(client_elapsed_ms > 0.0) || !std::isfinite(client_elapsed_ms)) {
    throw StudyError(StudyError::Kind::bad_request, "elapsed_ms must be positive");
  }
  std::lock_guard lock(mu_);
  Session& s = session(session_id);
  std::size_t planned = s.plan.size();
  for (std::size_t i = 0; i < s.plan.size(); ++i) {
    if (config_.examples[s.plan[i].example].id == example_id) planned = i;
  }
  if (planned == s.plan.size()) throw StudyError(StudyError::Kind::not_found, "unknown example '" + example_id + "'");
  if (planned < s.next) throw StudyError(StudyError::Kind::conflict, "example '" + example_id + "' already judged");
  if (planned > s.next || !s.served_at) {
    throw StudyError(StudyError::Kind::conflict, "example '" + example_id + "' has not been served");
  }

  const auto& trial = s.plan[planned];
  TrialRecord r;
  r.participant = s.participant;
  r.participant_index = s.participant_index;
  r.scenario = trial.scenario;
  r.example = example_id;
  r.position = planned;
  r.judgment = judgment;
  r.gold = config_.examples[trial.example].gold_correct;
  r.elapsed_ms_client = client_elapsed_ms;
  r.elapsed_ms_server = clock_() - *s.served_at;
  r.flagged = std::abs(r.elapsed_ms_client - r.elapsed_ms_server) > kElapsedDivergenceMs;

  append_log({{"type", "record"}, {"session_id", s.id}, {"record", trial_record_to_json(r)}});
  records_.push_back(r);
  ++s.next;
  s.served_at.reset();
  json ack = trial_record_to_json(r);
  ack["remaining"] = s.plan.size() - s.next;
  return ack;
}

std::vector<TrialRecord> StudyService::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::vector<ScenarioSummary> analyze(std::span<const TrialRecord> records, const StudyConfig& config,
                                     std::vector<std::string>* warnings) {
  std::vector<std::string> scenarios = config.scenarios;
  for (const auto& r : records) {
    if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) scenarios.push_back(r.scenario);
  }
  std::vector<ScenarioSummary> out;
  for (const auto& scenario : scenarios) {
    ScenarioSummary s{scenario, config.label(scenario), 0, 0.0, 0.0};
    double total_ms = 0.0;
    std::size_t right = 0;
    for (const auto& r : records) {
      if (r.scenario != scenario) continue;
      ++s.n;
      total_ms += r.elapsed_ms_client;
      right += (r.judgment == Judgment::correct) == r.gold;
    }
    if (s.n == 0) {
      if (warnings) warnings->push_back("scenario '" + scenario + "' has no records");
      continue;
    }
    s.mean_time_s = total_ms / static_cast<double>(s.n) / 1000.0;
    s.accuracy = static_cast<double>(right) / static_cast<double>(s.n);
    out.push_back(std::move(s));
  }
  return out;
}

std::string analysis_csv(std::span<const ScenarioSummary> summaries) {
  std::string out = "scenario,time_s,accuracy_pct\n";
  for (const auto& s : summaries) {
    out += csv_field(s.label) + ',' + fixed1(s.mean_time_s) + ',' + fixed1(s.accuracy * 100.0) + '\n';
  }
  return out;
}

}  // namespace attribench
