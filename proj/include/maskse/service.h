// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Listening-test backend. Raters get anonymous ids, then pull MOS tasks and
// paired-comparison trials one at a time. Audio is addressed by opaque ids
// so payloads never reveal the recording condition.
//
//   POST /api/session                 -> {rater_id}
//   GET  /api/task?rater_id=R         -> {task_id, audio_url, progress} | {done}
//   POST /api/rating        {rater_id, task_id, score}
//   GET  /api/pair?rater_id=R         -> {pair_id, first_url, second_url, progress} | {done}
//   POST /api/pair-response {rater_id, pair_id, answer}
//   GET  /api/status                  -> counts, per-cell accuracy, per-audio MOS
//   GET  /audio/{id}                  -> audio/wav

#ifndef MASKSE_SERVICE_H_
#define MASKSE_SERVICE_H_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "maskse/condition.h"
#include "maskse/datastore.h"

namespace maskse::service {

struct AudioItem {
  std::string utterance_id;
  std::string path;
  std::string speaker;
  std::string content;  // sentence identifier
};

// One distorted (masked or enhanced) item against one clean item of a
// different speaker and sentence. The presented order is randomized per
// rater.
struct PairSpec {
  std::string pair_id;
  Condition mask = Condition::kN95;
  bool enhanced = false;
  std::string distorted_id;
  std::string clean_id;
};

struct Campaign {
  std::string store_dir;
  std::vector<AudioItem> audio;
  std::vector<std::string> rating_items;
  std::vector<PairSpec> pairs;
  std::uint64_t seed = 0;

  // InvalidInput on unknown ids or pairs sharing a speaker or sentence.
  void Validate() const;
  const AudioItem* FindAudio(const std::string& id) const;
  nlohmann::json ToJson() const;
  // Relative paths resolve against `base_dir`.
  static Campaign FromJson(const nlohmann::json& j, const std::string& base_dir);
  static Campaign Load(const std::string& path);
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

class RatingService {
 public:
  explicit RatingService(Campaign campaign);

  Response NewSession();
  Response NextTask(const std::string& rater_id);
  Response SubmitRating(const nlohmann::json& body);
  Response NextPair(const std::string& rater_id);
  Response SubmitPair(const nlohmann::json& body);
  Response Status();
  // Path of the audio behind an opaque id.
  std::optional<std::string> AudioPath(const std::string& audio_id) const;

  const datastore::RatingStore& store() const { return store_; }
  std::string AudioId(const std::string& utterance_id) const;

 private:
  struct Rater {
    std::vector<std::string> items;       // rating order
    std::set<std::string> rated;          // utterance ids
    std::set<std::string> served_tasks;   // task ids
    std::vector<std::size_t> pairs;       // pair order
    std::set<std::string> answered;       // pair ids
    std::set<std::string> served_pairs;   // pair tokens
  };

  Rater& RaterFor(const std::string& rater_id);  // NotFound when unknown
  Rater MakeRater(const std::string& rater_id) const;
  std::string TaskId(const std::string& rater_id, const std::string& utt) const;
  std::string PairToken(const std::string& pair_id) const;
  bool Flipped(const std::string& rater_id, const std::string& pair_id) const;
  nlohmann::json Progress(const Rater& r) const;
  nlohmann::json PairProgress(const Rater& r) const;

  Campaign campaign_;
  datastore::RatingStore store_;
  std::string raters_path_;
  mutable std::mutex mu_;
  std::map<std::string, Rater> raters_;
  std::map<std::string, std::string> audio_by_id_;   // opaque -> utterance
  std::map<std::string, std::size_t> pair_by_token_;
};

// HTTP front end over a RatingService.
class HttpServer {
 public:
  explicit HttpServer(RatingService& service);
  ~HttpServer();
  // Binds and serves on a background thread; returns the bound port
  // (port 0 picks a free one).
  int Start(const std::string& host, int port);
  // Blocks until Stop().
  void Listen(const std::string& host, int port);
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace maskse::service

#endif  // MASKSE_SERVICE_H_
