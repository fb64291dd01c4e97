// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/service.h"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "maskse/error.h"
#include "maskse/evaluation.h"

namespace maskse::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t Hash(std::uint64_t seed, const std::string& s) {
  std::uint64_t h = 1469598103934665603ull ^ (seed * 0x9e3779b97f4a7c15ull);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h ^= h >> 29;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 32;
  return h;
}

std::string Hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::int64_t Now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Response Fail(int status, const Error& e) {
  return {status, {{"error", e.kind()}, {"message", e.what()}}};
}

}  // namespace

// ---------------------------------------------------------------- campaign

const AudioItem* Campaign::FindAudio(const std::string& id) const {
  for (const auto& a : audio)
    if (a.utterance_id == id) return &a;
  return nullptr;
}

void Campaign::Validate() const {
  std::set<std::string> ids;
  for (const auto& a : audio)
    if (!ids.insert(a.utterance_id).second)
      throw InvalidInput("duplicate audio id " + a.utterance_id);
  for (const auto& r : rating_items)
    if (!ids.count(r)) throw InvalidInput("rating item without audio: " + r);
  std::set<std::string> pair_ids;
  for (const auto& p : pairs) {
    if (!pair_ids.insert(p.pair_id).second)
      throw InvalidInput("duplicate pair id " + p.pair_id);
    if (p.mask == Condition::kClean)
      throw InvalidInput("pair " + p.pair_id + " needs a mask condition");
    const auto* d = FindAudio(p.distorted_id);
    const auto* c = FindAudio(p.clean_id);
    if (!d || !c) throw InvalidInput("pair " + p.pair_id + " references unknown audio");
    if (d->speaker == c->speaker || d->content == c->content)
      throw InvalidInput("pair " + p.pair_id +
                         " must use different speakers and sentences");
  }
}

json Campaign::ToJson() const {
  json a = json::array(), p = json::array();
  for (const auto& x : audio)
    a.push_back({{"utterance_id", x.utterance_id}, {"path", x.path},
                 {"speaker", x.speaker}, {"content", x.content}});
  for (const auto& x : pairs)
    p.push_back({{"pair_id", x.pair_id}, {"mask", ConditionName(x.mask)},
                 {"enhanced", x.enhanced}, {"distorted", x.distorted_id},
                 {"clean", x.clean_id}});
  return {{"store_dir", store_dir}, {"audio", a}, {"rating_items", rating_items},
          {"pairs", p}, {"seed", seed}};
}

Campaign Campaign::FromJson(const json& j, const std::string& base_dir) {
  auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (fs::path(base_dir) / p).string();
  };
  Campaign c;
  try {
    c.store_dir = resolve(j.at("store_dir").get<std::string>());
    for (const auto& x : j.at("audio"))
      c.audio.push_back({x.at("utterance_id").get<std::string>(),
                         resolve(x.at("path").get<std::string>()),
                         x.at("speaker").get<std::string>(),
                         x.at("content").get<std::string>()});
    c.rating_items = j.value("rating_items", std::vector<std::string>{});
    for (const auto& x : j.value("pairs", json::array())) {
      const auto mask = ParseCondition(x.at("mask").get<std::string>());
      if (!mask) throw InvalidInput("unknown mask in pair");
      c.pairs.push_back({x.at("pair_id").get<std::string>(), *mask,
                         x.at("enhanced").get<bool>(),
                         x.at("distorted").get<std::string>(),
                         x.at("clean").get<std::string>()});
    }
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("campaign: ") + e.what());
  }
  c.Validate();
  return c;
}

Campaign Campaign::Load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("campaign file not found: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw InvalidInput("campaign " + path + ": " + e.what());
  }
  return FromJson(j, fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------- service

RatingService::RatingService(Campaign campaign)
    : campaign_(std::move(campaign)), store_(campaign_.store_dir) {
  campaign_.Validate();
  std::set<std::string> items(campaign_.rating_items.begin(), campaign_.rating_items.end());
  store_.SetUtteranceValidator([items](const std::string& id) { return items.count(id) > 0; });
  for (const auto& a : campaign_.audio) audio_by_id_[AudioId(a.utterance_id)] = a.utterance_id;
  for (std::size_t i = 0; i < campaign_.pairs.size(); ++i)
    pair_by_token_[PairToken(campaign_.pairs[i].pair_id)] = i;

  raters_path_ = (fs::path(campaign_.store_dir) / "raters.jsonl").string();
  std::ifstream is(raters_path_);
  std::string line;
  while (std::getline(is, line)) {
    try {
      const auto id = json::parse(line).at("rater_id").get<std::string>();
      raters_.emplace(id, MakeRater(id));
    } catch (const json::exception&) {
      // torn trailing line
    }
  }
  for (const auto& r : store_.LoadRatings()) {
    auto it = raters_.find(r.rater_id);
    if (it != raters_.end()) it->second.rated.insert(r.utterance_id);
  }
  for (const auto& p : store_.LoadPairs()) {
    auto it = raters_.find(p.subject_id);
    if (it != raters_.end()) it->second.answered.insert(p.pair_id);
  }
}

std::string RatingService::AudioId(const std::string& utterance_id) const {
  return "a" + Hex(Hash(campaign_.seed, "audio|" + utterance_id));
}

std::string RatingService::TaskId(const std::string& rater, const std::string& utt) const {
  return "t" + Hex(Hash(campaign_.seed, "task|" + rater + "|" + utt));
}

std::string RatingService::PairToken(const std::string& pair_id) const {
  return "p" + Hex(Hash(campaign_.seed, "pair|" + pair_id));
}

bool RatingService::Flipped(const std::string& rater, const std::string& pair_id) const {
  return Hash(campaign_.seed, "flip|" + rater + "|" + pair_id) & 1;
}

RatingService::Rater RatingService::MakeRater(const std::string& rater_id) const {
  Rater r;
  std::mt19937_64 rng(Hash(campaign_.seed, "order|" + rater_id));
  r.items = campaign_.rating_items;
  std::shuffle(r.items.begin(), r.items.end(), rng);
  r.pairs.resize(campaign_.pairs.size());
  for (std::size_t i = 0; i < r.pairs.size(); ++i) r.pairs[i] = i;
  std::shuffle(r.pairs.begin(), r.pairs.end(), rng);
  return r;
}

RatingService::Rater& RatingService::RaterFor(const std::string& rater_id) {
  auto it = raters_.find(rater_id);
  if (it == raters_.end()) throw NotFound("unknown rater '" + rater_id + "'");
  return it->second;
}

json RatingService::Progress(const Rater& r) const {
  return {{"done", r.rated.size()}, {"total", r.items.size()}};
}

json RatingService::PairProgress(const Rater& r) const {
  return {{"done", r.answered.size()}, {"total", r.pairs.size()}};
}

Response RatingService::NewSession() {
  std::lock_guard lock(mu_);
  std::random_device rd;
  std::string id;
  do {
    id = "r" + Hex((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  } while (raters_.count(id));
  datastore::AppendLine(raters_path_, json{{"rater_id", id}, {"created", Now()}}.dump());
  raters_.emplace(id, MakeRater(id));
  return {200, {{"rater_id", id}}};
}

Response RatingService::NextTask(const std::string& rater_id) {
  std::lock_guard lock(mu_);
  try {
    Rater& r = RaterFor(rater_id);
    for (const auto& utt : r.items) {
      if (r.rated.count(utt)) continue;
      const auto task = TaskId(rater_id, utt);
      r.served_tasks.insert(task);
      return {200, {{"task_id", task},
                    {"audio_url", "/audio/" + AudioId(utt)},
                    {"progress", Progress(r)}}};
    }
    return {200, {{"done", true}, {"progress", Progress(r)}}};
  } catch (const NotFound& e) {
    return Fail(404, e);
  }
}

Response RatingService::SubmitRating(const json& body) {
  std::lock_guard lock(mu_);
  try {
    if (!body.is_object() || !body.contains("rater_id") || !body.contains("task_id") ||
        !body.contains("score"))
      throw InvalidInput("body needs rater_id, task_id and score");
    const auto rater_id = body.at("rater_id").get<std::string>();
    const auto task_id = body.at("task_id").get<std::string>();
    const auto& score = body.at("score");
    if (!score.is_number_integer()) throw InvalidInput("score must be an integer 1..5");
    const int s = score.get<int>();
    if (s < 1 || s > 5) throw InvalidInput("score " + std::to_string(s) + " outside 1..5");
    Rater& r = RaterFor(rater_id);
    std::string utt;
    for (const auto& u : r.items)
      if (TaskId(rater_id, u) == task_id) utt = u;
    if (utt.empty()) throw NotFound("unknown task " + task_id);
    if (r.rated.count(utt)) throw ConflictError("task " + task_id + " already rated");
    if (!r.served_tasks.count(task_id))
      throw InvalidInput("task " + task_id + " was not served to this rater");
    datastore::Rating rating{utt, rater_id, s, Now(), rater_id};
    store_.RecordRating(rating);
    r.rated.insert(utt);
    return {200, {{"ok", true}, {"progress", Progress(r)}}};
  } catch (const NotFound& e) {
    return Fail(404, e);
  } catch (const ConflictError& e) {
    return Fail(409, e);
  } catch (const InvalidInput& e) {
    return Fail(400, e);
  } catch (const json::exception& e) {
    return Fail(400, InvalidInput(e.what()));
  }
}

Response RatingService::NextPair(const std::string& rater_id) {
  std::lock_guard lock(mu_);
  try {
    Rater& r = RaterFor(rater_id);
    for (std::size_t idx : r.pairs) {
      const auto& p = campaign_.pairs[idx];
      if (r.answered.count(p.pair_id)) continue;
      const auto token = PairToken(p.pair_id);
      r.served_pairs.insert(token);
      const bool flip = Flipped(rater_id, p.pair_id);
      const auto& first = flip ? p.clean_id : p.distorted_id;
      const auto& second = flip ? p.distorted_id : p.clean_id;
      return {200, {{"pair_id", token},
                    {"first_url", "/audio/" + AudioId(first)},
                    {"second_url", "/audio/" + AudioId(second)},
                    {"progress", PairProgress(r)}}};
    }
    return {200, {{"done", true}, {"progress", PairProgress(r)}}};
  } catch (const NotFound& e) {
    return Fail(404, e);
  }
}

Response RatingService::SubmitPair(const json& body) {
  std::lock_guard lock(mu_);
  try {
    if (!body.is_object() || !body.contains("rater_id") || !body.contains("pair_id") ||
        !body.contains("answer"))
      throw InvalidInput("body needs rater_id, pair_id and answer");
    const auto rater_id = body.at("rater_id").get<std::string>();
    const auto token = body.at("pair_id").get<std::string>();
    const auto answer = datastore::ParsePairAnswer(body.at("answer").get<std::string>());
    if (!answer) throw InvalidInput("answer must be first, second, both or none");
    Rater& r = RaterFor(rater_id);
    auto it = pair_by_token_.find(token);
    if (it == pair_by_token_.end()) throw NotFound("unknown pair " + token);
    const auto& p = campaign_.pairs[it->second];
    if (r.answered.count(p.pair_id)) throw ConflictError("pair already answered");
    if (!r.served_pairs.count(token))
      throw InvalidInput("pair " + token + " was not served to this rater");
    const auto truth = Flipped(rater_id, p.pair_id) ? datastore::PairAnswer::kSecond
                                                     : datastore::PairAnswer::kFirst;
    datastore::PairRecord rec{p.pair_id, p.mask, p.enhanced, rater_id, *answer,
                              *answer == truth, Now()};
    store_.RecordPair(rec);
    r.answered.insert(p.pair_id);
    return {200, {{"ok", true}, {"progress", PairProgress(r)}}};
  } catch (const NotFound& e) {
    return Fail(404, e);
  } catch (const ConflictError& e) {
    return Fail(409, e);
  } catch (const InvalidInput& e) {
    return Fail(400, e);
  } catch (const json::exception& e) {
    return Fail(400, InvalidInput(e.what()));
  }
}

Response RatingService::Status() {
  std::lock_guard lock(mu_);
  const auto ratings = store_.LoadRatings();
  const auto pairs = store_.LoadPairs();
  json cells = json::array();
  for (const auto& [k, c] : evaluation::PairedAccuracy(pairs))
    cells.push_back({{"cell", evaluation::CellName(k)},
                     {"responses", c.responses},
                     {"correct", c.correct},
                     {"pairs", c.pairs},
                     {"subjects", c.subjects},
                     {"accuracy", c.accuracy}});
  std::map<std::string, int> counts;
  for (const auto& r : ratings) ++counts[r.utterance_id];
  json mos = json::array();
  for (const auto& [utt, mean] : datastore::MeanScores(ratings))
    mos.push_back({{"audio_id", AudioId(utt)}, {"ratings", counts[utt]}, {"mean", mean}});
  return {200, {{"ratings", ratings.size()},
                {"pair_responses", pairs.size()},
                {"raters", raters_.size()},
                {"cells", cells},
                {"mos", mos}}};
}

std::optional<std::string> RatingService::AudioPath(const std::string& audio_id) const {
  auto it = audio_by_id_.find(audio_id);
  if (it == audio_by_id_.end()) return std::nullopt;
  return campaign_.FindAudio(it->second)->path;
}

// ---------------------------------------------------------------- http

struct HttpServer::Impl {
  RatingService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(RatingService& s) : service(s) {
    auto reply = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const httplib::Request& req) {
      return json::parse(req.body, nullptr, /*allow_exceptions=*/false);
    };
    server.Post("/api/session", [=, this](const httplib::Request&, httplib::Response& res) {
      reply(res, service.NewSession());
    });
    server.Get("/api/task", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.NextTask(req.get_param_value("rater_id")));
    });
    server.Post("/api/rating", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.SubmitRating(parse(req)));
    });
    server.Get("/api/pair", [=, this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.NextPair(req.get_param_value("rater_id")));
    });
    server.Post("/api/pair-response",
                [=, this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, service.SubmitPair(parse(req)));
                });
    server.Get("/api/status", [=, this](const httplib::Request&, httplib::Response& res) {
      reply(res, service.Status());
    });
    server.Get(R"(/audio/([A-Za-z0-9]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 const auto path = service.AudioPath(req.matches[1]);
                 std::ifstream is;
                 if (path) is.open(*path, std::ios::binary);
                 if (!is.is_open()) {
                   res.status = 404;
                   res.set_content(R"({"error":"not-found"})", "application/json");
                   return;
                 }
                 std::stringstream ss;
                 ss << is.rdbuf();
                 res.set_content(ss.str(), "audio/wav");
               });
  }
};

HttpServer::HttpServer(RatingService& service)
    : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { Stop(); }

int HttpServer::Start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::Listen(const std::string& host, int port) {
  spdlog::info("serving ratings on {}:{}", host, port);
  if (!impl_->server.listen(host, port))
    throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::Stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace maskse::service
