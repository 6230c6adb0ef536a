// Copyright 2026 The cqdraw Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CQDRAW_SERVICE_H_
#define CQDRAW_SERVICE_H_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "cqdraw/clarification.h"
#include "cqdraw/dialogue.h"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace cqdraw {

inline constexpr double kDefaultServiceTheta = 0.7;

// An API failure with its HTTP status and a stable machine-readable code.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : Error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ServiceOptions {
  // Closed sessions are written here as JSONL when non-empty.
  std::string transcript_dir;
};

// In-memory sessions for interactive play. Calls on one session are
// serialized by that session's mutex; the drawer weights are shared
// read-only. Every method validates before mutating, so a rejected call
// leaves the session unchanged.
class SessionManager {
 public:
  SessionManager(const Gallery& gallery, std::shared_ptr<const Ensemble> default_drawer, ServiceOptions options = {});
  ~SessionManager();

  // {theta?, seed?, drawer_weights?} -> {session_id, target_scene, gallery, theta}
  nlohmann::json create_session(const nlohmann::json& request);
  // -> {drawer_reply, question: null | {text, targets}, canvas, uncertainty}
  nlohmann::json post_instruction(const std::string& session_id, const std::string& text);
  // -> {drawer_reply, canvas, uncertainty}
  nlohmann::json post_answer(const std::string& session_id, const std::string& text);
  // {theta} -> {ok, theta}
  nlohmann::json patch_config(const std::string& session_id, const nlohmann::json& request);
  nlohmann::json get_state(const std::string& session_id) const;
  nlohmann::json get_gallery() const;
  // Removes the session, persisting its transcript when configured.
  nlohmann::json close_session(const std::string& session_id);

  // Transcript of the committed turns, as the batch engine would record it.
  DialogueTranscript transcript(const std::string& session_id) const;
  std::size_t session_count() const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& session_id) const;
  std::shared_ptr<const Ensemble> load_weights(const std::string& path);

  const Gallery* gallery_;
  std::shared_ptr<const Ensemble> default_drawer_;
  ServiceOptions options_;
  mutable std::mutex mutex_;  // guards sessions_, weights_cache_ and counter_
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<const Ensemble>> weights_cache_;
  uint64_t counter_ = 0;
};

// Registers the JSON routes, and static files from `static_dir` under "/"
// when it is non-empty.
void install_routes(httplib::Server& server, SessionManager& manager, const std::string& static_dir = "");

// Blocks serving on host:port.
void run_service(SessionManager& manager, const std::string& host, int port, const std::string& static_dir);

}  // namespace cqdraw

#endif  // CQDRAW_SERVICE_H_
