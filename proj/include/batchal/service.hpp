#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "batchal/orchestrator.hpp"

namespace batchal {

struct ServiceConfig {
  std::filesystem::path payload_root = ".";
  std::filesystem::path store_dir = "sessions";
  // Dataset used by GET /payloads/{id} when no ?session= is given.
  std::optional<std::filesystem::path> default_dataset;
};

enum class SessionPhase { Training, AwaitingLabels, Finished, Failed };

std::string_view to_string(SessionPhase phase) noexcept;

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Human-in-the-loop annotation sessions. Each session runs the active
// learning cycle with label_source = human-session: training runs on a
// background thread, the queried batch is published, and the cycle resumes
// once every pending id has a label. State is checkpointed under store_dir
// after each phase change and reloaded on construction.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig config);
  ~AnnotationService();

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  ApiResponse create_session(std::string_view body);
  ApiResponse get_status(const std::string& session_id);
  ApiResponse get_query_batch(const std::string& session_id);
  ApiResponse submit_labels(const std::string& session_id, std::string_view body);
  ApiResponse get_metrics(const std::string& session_id);
  ApiResponse get_payload(SampleId sample_id, const std::optional<std::string>& session_id);

  // Blocks until no session is training (test and shutdown helper).
  void wait_idle();

  // Binds and serves on a background thread; returns the bound port (useful
  // with port 0). Throws Error(Io) when the address is unavailable.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop() is called.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Session;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace batchal
