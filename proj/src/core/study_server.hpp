#pragma once

#include <memory>
#include <string>

#include "study.hpp"

namespace attribench {

// HTTP front end for a StudyService:
//   POST /sessions                 {"participant_id"}
//   GET  /sessions/{id}/next
//   POST /sessions/{id}/judgments  {"example_id", "judgment", "elapsed_ms"}
//   GET  /results.csv
// Errors are JSON {"error": message} with 400, 404 or 409.
class StudyServer {
 public:
  explicit StudyServer(StudyService& service);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace attribench
