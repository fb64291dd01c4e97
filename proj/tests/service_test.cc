// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>
#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "maskse/error.h"
#include "maskse/service.h"
#include "testing.h"

using namespace maskse;
using namespace maskse::service;
using nlohmann::json;

namespace {

// Six utterances over two speakers and six sentences; clean and masked
// copies of each plus two paired trials.
Campaign MakeCampaign(const testing::TempDir& dir) {
  Campaign c;
  c.store_dir = dir.str("store");
  c.seed = 99;
  const char* conds[] = {"clean", "n95", "cotton", "plastic", "clean", "clean"};
  for (int i = 0; i < 6; ++i) {
    AudioItem a;
    a.utterance_id = std::string(conds[i]) + "/spk" + std::to_string(i % 2) + "/c" + std::to_string(i);
    a.path = dir.str("a" + std::to_string(i) + ".wav");
    a.speaker = "spk" + std::to_string(i % 2);
    a.content = "c" + std::to_string(i);
    wav::Write(a.path, testing::Sine(200 + 50 * i, 1600, 0.2));
    c.audio.push_back(a);
    c.rating_items.push_back(a.utterance_id);
  }
  c.pairs.push_back({"pair-n95", Condition::kN95, false, c.audio[1].utterance_id,
                     c.audio[0].utterance_id});
  c.pairs.push_back({"pair-cotton-enh", Condition::kCotton, true, c.audio[2].utterance_id,
                     c.audio[5].utterance_id});
  return c;
}

struct Server {
  explicit Server(Campaign c) : svc(std::move(c)), http(svc) {
    port = http.Start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  json Post(const std::string& path, const json& body, int expect) {
    auto r = client->Post(path, body.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == expect);
    bodies.push_back(r->body);
    return json::parse(r->body);
  }
  json Get(const std::string& path, int expect = 200) {
    INFO(path);
    auto r = client->Get(path);
    REQUIRE(r);
    CHECK(r->status == expect);
    if (r->get_header_value("Content-Type") == "application/json") bodies.push_back(r->body);
    return r->get_header_value("Content-Type") == "application/json" ? json::parse(r->body)
                                                                      : json(r->body.size());
  }

  RatingService svc;
  HttpServer http;
  int port = 0;
  std::unique_ptr<httplib::Client> client;
  std::vector<std::string> bodies;  // rater-facing payloads
};

const std::vector<std::string> kLabels{"clean", "n95", "cotton", "plastic", "Enhanced",
                                       "Mask", "spk", ".wav"};

// Rates everything available to one rater with a fixed score.
int RateAll(Server& s, const std::string& rater, int score) {
  int n = 0;
  for (;;) {
    auto task = s.Get("/api/task?rater_id=" + rater);
    if (task.contains("done")) break;
    CHECK(s.Get(task["audio_url"].get<std::string>()).get<std::size_t>() > 44);
    s.Post("/api/rating", {{"rater_id", rater}, {"task_id", task["task_id"]}, {"score", score}},
           200);
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("campaign validation") {
  testing::TempDir dir;
  auto c = MakeCampaign(dir);
  CHECK_NOTHROW(c.Validate());
  auto same_speaker = c;
  same_speaker.pairs[1].clean_id = c.audio[4].utterance_id;  // spk0 vs spk0
  CHECK_THROWS_AS(same_speaker.Validate(), InvalidInput);
  auto unknown = c;
  unknown.rating_items.push_back("ghost");
  CHECK_THROWS_AS(unknown.Validate(), InvalidInput);

  std::ofstream(dir.str("campaign.json")) << c.ToJson().dump();
  auto back = Campaign::Load(dir.str("campaign.json"));
  CHECK(back.audio.size() == 6);
  CHECK(back.pairs.size() == 2);
  CHECK_THROWS_AS(Campaign::Load(dir.str("none.json")), NotFound);
}

TEST_CASE("two raters complete a six-utterance campaign over http") {
  testing::QuietLogs();
  testing::TempDir dir;
  Server s(MakeCampaign(dir));
  const auto r1 = s.Post("/api/session", json::object(), 200)["rater_id"].get<std::string>();
  const auto r2 = s.Post("/api/session", json::object(), 200)["rater_id"].get<std::string>();
  CHECK(r1 != r2);
  CHECK(RateAll(s, r1, 4) == 6);
  CHECK(RateAll(s, r2, 2) == 6);
  CHECK(s.svc.store().LoadRatings().size() == 12);

  auto status = s.Get("/api/status");
  s.bodies.pop_back();  // operator view, not shown to raters
  CHECK(status["ratings"] == 12);
  REQUIRE(status["mos"].size() == 6);
  for (const auto& m : status["mos"]) {
    CHECK(m["mean"] == 3.0);
    CHECK(m["ratings"] == 2);
  }

  // Paired trials; answer with the true position for r1 and "none" for r2.
  for (const auto& rater : {r1, r2}) {
    for (;;) {
      auto p = s.Get("/api/pair?rater_id=" + rater);
      if (p.contains("done")) break;
      std::string answer = "none";
      if (rater == r1) {
        // The distorted item is the one whose audio is not the clean reference.
        const auto first = p["first_url"].get<std::string>().substr(7);
        const bool first_is_clean = first == s.svc.AudioId("clean/spk0/c0") ||
                                    first == s.svc.AudioId("clean/spk1/c5");
        answer = first_is_clean ? "second" : "first";
      }
      s.Post("/api/pair-response", {{"rater_id", rater}, {"pair_id", p["pair_id"]}, {"answer", answer}},
             200);
    }
  }
  status = s.Get("/api/status");
  s.bodies.pop_back();
  REQUIRE(status["cells"].size() == 2);
  for (const auto& c : status["cells"]) {
    CHECK(c["subjects"] == 2);
    CHECK(c["accuracy"] == 0.5);
  }

  for (const auto& b : s.bodies)
    for (const auto& label : kLabels) {
      INFO(b);
      CHECK(b.find(label) == std::string::npos);
    }
}

TEST_CASE("bad submissions") {
  testing::QuietLogs();
  testing::TempDir dir;
  Server s(MakeCampaign(dir));
  const auto r = s.Post("/api/session", json::object(), 200)["rater_id"].get<std::string>();
  auto task = s.Get("/api/task?rater_id=" + r);
  s.Post("/api/rating", {{"rater_id", r}, {"task_id", task["task_id"]}, {"score", 6}}, 400);
  s.Post("/api/rating", {{"rater_id", r}, {"task_id", task["task_id"]}, {"score", 2.5}}, 400);
  s.Post("/api/rating", {{"rater_id", r}, {"task_id", task["task_id"]}}, 400);
  s.Post("/api/rating", {{"rater_id", "nobody"}, {"task_id", task["task_id"]}, {"score", 3}}, 404);
  s.Post("/api/rating", {{"rater_id", r}, {"task_id", "tdeadbeef"}, {"score", 3}}, 404);
  s.Post("/api/rating", {{"rater_id", r}, {"task_id", task["task_id"]}, {"score", 3}}, 200);
  s.Post("/api/rating", {{"rater_id", r}, {"task_id", task["task_id"]}, {"score", 3}}, 409);
  auto bad = s.client->Post("/api/rating", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  s.Get("/api/task?rater_id=nobody", 404);
  s.Get("/audio/a0000", 404);

  auto p = s.Get("/api/pair?rater_id=" + r);
  s.Post("/api/pair-response", {{"rater_id", r}, {"pair_id", p["pair_id"]}, {"answer", "maybe"}}, 400);
  s.Post("/api/pair-response", {{"rater_id", r}, {"pair_id", p["pair_id"]}, {"answer", "both"}}, 200);
  s.Post("/api/pair-response", {{"rater_id", r}, {"pair_id", p["pair_id"]}, {"answer", "both"}}, 409);
  CHECK(s.svc.store().LoadRatings().size() == 1);
}

TEST_CASE("sessions and ratings survive a restart") {
  testing::QuietLogs();
  testing::TempDir dir;
  const auto campaign = MakeCampaign(dir);
  std::string rater, second_task;
  {
    Server s(campaign);
    rater = s.Post("/api/session", json::object(), 200)["rater_id"].get<std::string>();
    for (int i = 0; i < 2; ++i) {
      auto task = s.Get("/api/task?rater_id=" + rater);
      s.Post("/api/rating", {{"rater_id", rater}, {"task_id", task["task_id"]}, {"score", 5}}, 200);
      second_task = task["task_id"];
    }
  }
  Server s(campaign);
  auto task = s.Get("/api/task?rater_id=" + rater);
  CHECK(task["progress"]["done"] == 2);
  CHECK(task["task_id"] != second_task);
  s.Post("/api/rating", {{"rater_id", rater}, {"task_id", second_task}, {"score", 1}}, 409);
  CHECK(RateAll(s, rater, 3) == 4);
  CHECK(s.svc.store().LoadRatings().size() == 6);
}

TEST_CASE("presentation order differs between raters") {
  testing::TempDir dir;
  RatingService svc(MakeCampaign(dir));
  std::set<std::vector<std::string>> orders;
  for (int i = 0; i < 6; ++i) {
    const auto r = svc.NewSession().body["rater_id"].get<std::string>();
    std::vector<std::string> order;
    for (;;) {
      auto t = svc.NextTask(r).body;
      if (t.contains("done")) break;
      order.push_back(t["audio_url"]);
      CHECK(svc.SubmitRating({{"rater_id", r}, {"task_id", t["task_id"]}, {"score", 3}}).status == 200);
    }
    orders.insert(order);
  }
  CHECK(orders.size() > 1);
}
