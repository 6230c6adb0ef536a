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

#include "cqdraw/service.h"

#include <cmath>
#include <filesystem>

#include "cqdraw/random.h"
#include "cqdraw/text_util.h"
#include "httplib.h"

namespace cqdraw {

struct SessionManager::Session {
  std::mutex mutex;
  std::string id;
  uint64_t seed = 0;
  double theta = kDefaultServiceTheta;
  std::string drawer_ref;
  Scene target;
  std::unique_ptr<DialogueEngine> engine;
  Rng rng;
  // Set between a question and its answer.
  std::optional<std::vector<int>> pending_targets;
  std::string pending_question;
  std::vector<std::string> human_answers;  // raw text, in turn order
};

namespace {

double checked_theta(const nlohmann::json& value) {
  if (!value.is_number()) throw ServiceError(400, "invalid_theta", "theta must be a number");
  const double theta = value.get<double>();
  if (!std::isfinite(theta) || theta < 0.0) throw ServiceError(400, "invalid_theta", "theta must be finite and >= 0");
  return theta;
}

nlohmann::json gallery_json(const Gallery& gallery) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : gallery.entries()) {
    entries.push_back({{"id", e.id},
                       {"name", e.name},
                       {"is_person", e.is_person},
                       {"is_symmetric", e.is_symmetric},
                       {"expression_count", e.expression_count},
                       {"pose_count", e.pose_count}});
  }
  return {{"entries", entries}, {"hash", gallery.hash()}};
}

nlohmann::json targets_json(const std::vector<int>& targets, const Gallery& gallery) {
  nlohmann::json out = nlohmann::json::array();
  for (int id : targets) out.push_back({{"clipart", id}, {"name", gallery.at(id).name}});
  return out;
}

}  // namespace

SessionManager::SessionManager(const Gallery& gallery, std::shared_ptr<const Ensemble> default_drawer,
                               ServiceOptions options)
    : gallery_(&gallery), default_drawer_(std::move(default_drawer)), options_(std::move(options)) {
  if (!default_drawer_) throw Error("session manager needs default drawer weights");
}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& session_id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown_session", "no session '" + session_id + "'");
  return it->second;
}

std::shared_ptr<const Ensemble> SessionManager::load_weights(const std::string& path) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = weights_cache_.find(path);
    if (it != weights_cache_.end()) return it->second;
  }
  std::shared_ptr<const Ensemble> drawer;
  try {
    drawer = std::make_shared<const Ensemble>(load_ensemble(read_file(path), *gallery_));
  } catch (const std::exception& e) {
    throw ServiceError(400, "bad_weights", std::string("cannot load drawer weights: ") + e.what());
  }
  std::lock_guard<std::mutex> lock(mutex_);
  return weights_cache_.emplace(path, drawer).first->second;
}

nlohmann::json SessionManager::create_session(const nlohmann::json& request) {
  if (!request.is_object()) throw ServiceError(400, "bad_request", "request body must be a JSON object");
  double theta = kDefaultServiceTheta;
  if (request.contains("theta") && !request["theta"].is_null()) theta = checked_theta(request["theta"]);
  std::optional<uint64_t> seed;
  if (request.contains("seed") && !request["seed"].is_null()) {
    if (!request["seed"].is_number_integer()) throw ServiceError(400, "invalid_seed", "seed must be an integer");
    seed = request["seed"].get<uint64_t>();
  }
  std::shared_ptr<const Ensemble> drawer = default_drawer_;
  std::string drawer_ref = "default";
  if (request.contains("drawer_weights") && !request["drawer_weights"].is_null()) {
    if (!request["drawer_weights"].is_string()) {
      throw ServiceError(400, "bad_weights", "drawer_weights must be a path string");
    }
    drawer_ref = request["drawer_weights"].get<std::string>();
    drawer = load_weights(drawer_ref);
  }

  uint64_t n;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    n = counter_++;
  }
  auto session = std::make_shared<Session>();
  session->id = "s" + hex64(mix64(n ^ 0x5e55));
  session->seed = seed.value_or(n);
  session->theta = theta;
  session->drawer_ref = drawer_ref;
  session->target = random_scene(*gallery_, session->seed);
  session->rng = make_rng(derive_seed(session->seed, fnv1a64(session->id)));
  try {
    session->engine = std::make_unique<DialogueEngine>(*gallery_, drawer, session->id, session->target);
  } catch (const Error& e) {
    throw ServiceError(400, "bad_weights", e.what());
  }
  {
    std::lock_guard<std::mutex> lock(mutex_);
    sessions_[session->id] = session;
  }
  return {{"session_id", session->id},
          {"target_scene", scene_to_json(session->target)},
          {"gallery", gallery_json(*gallery_)},
          {"theta", theta},
          {"seed", session->seed}};
}

namespace {

nlohmann::json uncertainty_payload(const TurnUncertainty& u, const DialogueEngine& engine, const Gallery& gallery,
                                   double theta) {
  nlohmann::json j = uncertainty_to_json(u);
  const auto& beliefs = engine.transcript().size_beliefs;
  for (auto& item : j["cliparts"]) {
    const int id = item["clipart"].get<int>();
    item["name"] = gallery.at(id).name;
    auto it = beliefs.find(id);
    item["size_dist"] = it == beliefs.end() ? nlohmann::json() : nlohmann::json(it->second);
    item["would_ask"] = item["h_size"].get<double>() > theta;
  }
  return j;
}

}  // namespace

nlohmann::json SessionManager::post_instruction(const std::string& session_id, const std::string& text) {
  auto s = find(session_id);
  std::lock_guard<std::mutex> lock(s->mutex);
  if (s->pending_targets) {
    throw ServiceError(409, "pending_question", "answer the pending question first: " + s->pending_question);
  }
  if (trim(text).empty()) throw ServiceError(400, "empty_instruction", "instruction text must not be empty");
  const TurnUncertainty u = s->engine->instruct(text);
  DecisionContext ctx{s->id, s->engine->turn_count(), s->rng, std::nullopt, s->engine->asked()};
  Decision d = decide(ClarificationPolicy::threshold(s->theta), u, std::move(ctx));
  s->rng = d.rng;
  nlohmann::json response;
  response["uncertainty"] = uncertainty_payload(u, *s->engine, *gallery_, s->theta);
  if (d.targets.empty()) {
    s->engine->finish_silent();
    response["drawer_reply"] = std::string(kDrawerAck);
    response["question"] = nullptr;
  } else {
    s->pending_question = render_question(d.targets, *gallery_);
    s->pending_targets = d.targets;
    response["drawer_reply"] = s->pending_question;
    response["question"] = {{"text", s->pending_question}, {"targets", targets_json(d.targets, *gallery_)}};
  }
  response["canvas"] = scene_to_json(s->engine->canvas());
  return response;
}

nlohmann::json SessionManager::post_answer(const std::string& session_id, const std::string& text) {
  auto s = find(session_id);
  std::lock_guard<std::mutex> lock(s->mutex);
  if (!s->pending_targets) throw ServiceError(409, "no_pending_question", "there is no question to answer");
  const std::vector<int>& targets = *s->pending_targets;
  std::vector<Size> sizes;
  try {
    sizes = parse_answer(text, targets, *gallery_);
  } catch (const Error& e) {
    throw ServiceError(400, "unparseable_answer",
                       std::string(e.what()) + ". Answer with a size word (small, medium or large)" +
                           (targets.size() > 1 ? " for each clipart, e.g. 'the " + gallery_->at(targets[0]).name +
                                                     " is small and the " + gallery_->at(targets[1]).name +
                                                     " is large'"
                                               : ", e.g. 'the " + gallery_->at(targets[0]).name + " is small'"));
  }
  // The drawer reads the canonical template answer, as in batch runs.
  std::vector<std::pair<int, Size>> pairs;
  ClarificationExchange ex;
  ex.question_text = s->pending_question;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    pairs.emplace_back(targets[i], sizes[i]);
    ex.targets.push_back({targets[i], sizes[i]});
  }
  ex.answer_text = render_answer_text(pairs, *gallery_);
  s->engine->answer(std::move(ex));
  s->human_answers.push_back(text);
  s->pending_targets.reset();
  s->pending_question.clear();
  const TranscriptTurn& turn = s->engine->transcript().turns.back();
  return {{"drawer_reply", std::string(kDrawerAck)},
          {"canvas", scene_to_json(s->engine->canvas())},
          {"uncertainty", uncertainty_payload(*turn.post_cq_uncertainty, *s->engine, *gallery_, s->theta)}};
}

nlohmann::json SessionManager::patch_config(const std::string& session_id, const nlohmann::json& request) {
  auto s = find(session_id);
  if (!request.is_object() || !request.contains("theta")) {
    throw ServiceError(400, "invalid_theta", "request must contain theta");
  }
  const double theta = checked_theta(request["theta"]);
  std::lock_guard<std::mutex> lock(s->mutex);
  s->theta = theta;
  return {{"ok", true}, {"theta", theta}};
}

nlohmann::json SessionManager::get_state(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard<std::mutex> lock(s->mutex);
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : s->engine->transcript().turns) turns.push_back(turn_to_json(t));
  nlohmann::json pending = nullptr;
  if (s->pending_targets) {
    pending = {{"text", s->pending_question}, {"targets", targets_json(*s->pending_targets, *gallery_)}};
  }
  return {{"session_id", s->id},
          {"seed", s->seed},
          {"theta", s->theta},
          {"drawer_weights", s->drawer_ref},
          {"target_scene", scene_to_json(s->target)},
          {"canvas", scene_to_json(s->engine->canvas())},
          {"pending_question", pending},
          {"transcript", turns},
          {"human_answers", s->human_answers}};
}

nlohmann::json SessionManager::get_gallery() const { return gallery_json(*gallery_); }

nlohmann::json SessionManager::close_session(const std::string& session_id) {
  auto s = find(session_id);
  std::string path;
  {
    std::lock_guard<std::mutex> lock(s->mutex);
    if (!options_.transcript_dir.empty()) {
      DialogueTranscript t = s->engine->transcript();
      t.final_scene = s->engine->canvas();
      path = options_.transcript_dir + "/" + s->id + ".jsonl";
      write_file(path, transcript_to_jsonl(t));
    }
  }
  std::lock_guard<std::mutex> lock(mutex_);
  sessions_.erase(session_id);
  return {{"ok", true}, {"transcript_path", path.empty() ? nlohmann::json() : nlohmann::json(path)}};
}

DialogueTranscript SessionManager::transcript(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard<std::mutex> lock(s->mutex);
  DialogueTranscript t = s->engine->transcript();
  t.final_scene = s->engine->canvas();
  return t;
}

std::size_t SessionManager::session_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return sessions_.size();
}

// ---- HTTP.

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

nlohmann::json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return nlohmann::json::object();
    throw ServiceError(400, "bad_request", "request body must be JSON");
  }
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, "bad_request", std::string("malformed JSON: ") + e.what());
  }
}

std::string text_field(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    throw ServiceError(400, "bad_request", "request must contain a text string");
  }
  return body["text"].get<std::string>();
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, 200, fn(req));
    } catch (const ServiceError& e) {
      send_json(res, e.status(), {{"error", e.code()}, {"message", e.what()}});
    } catch (const Error& e) {
      send_json(res, 400, {{"error", "invalid_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

void install_routes(httplib::Server& server, SessionManager& m, const std::string& static_dir) {
  server.Post("/api/session", guarded([&m](const httplib::Request& req) { return m.create_session(parse_body(req, true)); }));
  server.Post(R"(/api/session/([^/]+)/message)", guarded([&m](const httplib::Request& req) {
                return m.post_instruction(req.matches[1], text_field(parse_body(req, false)));
              }));
  server.Post(R"(/api/session/([^/]+)/answer)", guarded([&m](const httplib::Request& req) {
                return m.post_answer(req.matches[1], text_field(parse_body(req, false)));
              }));
  server.Patch(R"(/api/session/([^/]+)/config)", guarded([&m](const httplib::Request& req) {
                 return m.patch_config(req.matches[1], parse_body(req, false));
               }));
  server.Get(R"(/api/session/([^/]+))",
             guarded([&m](const httplib::Request& req) { return m.get_state(req.matches[1]); }));
  server.Delete(R"(/api/session/([^/]+))",
                guarded([&m](const httplib::Request& req) { return m.close_session(req.matches[1]); }));
  server.Get("/api/gallery", guarded([&m](const httplib::Request&) { return m.get_gallery(); }));
  if (!static_dir.empty()) {
    if (!std::filesystem::is_directory(static_dir)) throw Error("static directory does not exist: " + static_dir);
    server.set_mount_point("/", static_dir);
  }
}

void run_service(SessionManager& manager, const std::string& host, int port, const std::string& static_dir) {
  httplib::Server server;
  install_routes(server, manager, static_dir);
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace cqdraw
