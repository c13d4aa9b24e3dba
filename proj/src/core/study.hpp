#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "qa_types.hpp"

namespace attribench {

inline constexpr std::string_view kNoAlignment = "no_alignment";

struct StudyExample {
  std::string id;
  std::string question;
  std::string answer;
  std::vector<DocumentExcerpt> documents;
  std::map<std::string, std::set<DocSentRef>> highlights;  // per highlighting scenario
  bool gold_correct = false;
};

struct StudyConfig {
  std::vector<std::string> scenarios{"no_alignment", "baseline_model", "synqa_model"};
  std::map<std::string, std::string> labels;  // display names for reports
  std::size_t participants_expected = 12;
  std::uint64_t seed = 0;
  std::vector<StudyExample> examples;

  std::string label(const std::string& scenario) const;
};

/// Throws ValidationError on duplicate scenarios or examples, missing
/// highlight sets, or highlights outside an example's documents.
StudyConfig study_config_from_json(const nlohmann::json& j);
void validate(const StudyConfig& config);

/// Row participant_index mod k of the cyclic Latin square: scenarios rotated
/// left by that amount.
std::vector<std::string> latin_square(std::span<const std::string> scenarios, std::size_t participant_index);

struct PlannedTrial {
  std::string scenario;
  std::size_t example;  // index into config.examples
};

// Examples are split into k contiguous groups, one per scenario position. The
// participant sees group p under the scenario at position p of their Latin
// square row, so every example is seen under every scenario across a block of
// k participants. Within a group the order is shuffled per
// (participant, scenario).
std::vector<PlannedTrial> trial_plan(const StudyConfig& config, std::size_t participant_index);

enum class Judgment { correct, incorrect };
std::string_view to_string(Judgment j);
Judgment judgment_from_string(std::string_view s);

struct TrialRecord {
  std::string participant;
  std::size_t participant_index = 0;
  std::string scenario;
  std::string example;
  std::size_t position = 0;  // trial index within the session
  Judgment judgment = Judgment::correct;
  bool gold = false;
  double elapsed_ms_client = 0.0;
  double elapsed_ms_server = 0.0;
  bool flagged = false;  // client and server elapsed differ by more than 10 s

  bool operator==(const TrialRecord&) const = default;
};

nlohmann::json trial_record_to_json(const TrialRecord& r);
TrialRecord trial_record_from_json(const nlohmann::json& j);

/// Columns participant,scenario,example,judgment,gold,elapsed_ms_client,elapsed_ms_server.
std::string results_csv(std::span<const TrialRecord> records);
std::vector<TrialRecord> parse_results_csv(std::string_view text);

class StudyError : public Error {
 public:
  enum class Kind { bad_request, not_found, conflict };
  StudyError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr double kElapsedDivergenceMs = 10'000.0;

// Session state for one study. Thread-safe; all mutations go through one
// mutex and, when a log path is given, are appended to it as JSON lines so a
// restarted service resumes where it stopped.
class StudyService {
 public:
  using Clock = std::function<double()>;  // milliseconds, monotonic

  explicit StudyService(StudyConfig config, Clock clock = {}, std::filesystem::path log = {});

  /// {"session_id", "participant_index", "scenario_order", "total_trials",
  /// "completed", "resumed"}. A known participant_id resumes its session.
  nlohmann::json create_session(const std::string& participant_id);
  /// The first unjudged trial, or {"done": true}.
  nlohmann::json next_trial(const std::string& session_id);
  nlohmann::json submit(const std::string& session_id, const std::string& example_id, Judgment judgment,
                        double client_elapsed_ms);

  std::vector<TrialRecord> records() const;
  const StudyConfig& config() const { return config_; }

 private:
  struct Session {
    std::string id;
    std::string participant;
    std::size_t participant_index = 0;
    std::vector<std::string> order;
    std::vector<PlannedTrial> plan;
    std::size_t next = 0;
    std::optional<double> served_at;
  };

  Session& session(const std::string& id);
  Session& open_session(const std::string& participant_id);
  void append_log(const nlohmann::json& entry);
  void replay_log();

  StudyConfig config_;
  Clock clock_;
  std::filesystem::path log_path_;
  std::ofstream log_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::string> by_participant_;
  std::vector<TrialRecord> records_;
};

struct ScenarioSummary {
  std::string scenario;
  std::string label;
  std::size_t n = 0;
  double mean_time_s = 0.0;
  double accuracy = 0.0;  // fraction
};

/// Scenarios in `scenarios` order; scenarios without records are omitted and
/// named in `warnings`.
std::vector<ScenarioSummary> analyze(std::span<const TrialRecord> records, const StudyConfig& config,
                                     std::vector<std::string>* warnings = nullptr);

/// "scenario,time_s,accuracy_pct" with labels and one decimal.
std::string analysis_csv(std::span<const ScenarioSummary> summaries);

}  // namespace attribench
