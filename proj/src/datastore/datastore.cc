// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/datastore.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "maskse/error.h"
#include "maskse/wav.h"

namespace maskse::datastore {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t Fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

json EntryToJson(const ManifestEntry& e) {
  return json{{"utterance_id", e.utterance_id},
              {"path", e.path},
              {"speaker_id", e.speaker_id},
              {"condition", ConditionName(e.condition)},
              {"split", SplitName(e.split)},
              {"duration_s", e.duration_s},
              {"needs_resample", e.needs_resample}};
}

ManifestEntry EntryFromJson(const json& j) {
  ManifestEntry e;
  e.utterance_id = j.at("utterance_id").get<std::string>();
  e.path = j.at("path").get<std::string>();
  e.speaker_id = j.at("speaker_id").get<std::string>();
  auto c = ParseCondition(j.at("condition").get<std::string>());
  if (!c) throw InvalidInput("unknown condition in manifest: " +
                             j.at("condition").get<std::string>());
  e.condition = *c;
  e.split = ParseSplit(j.at("split").get<std::string>());
  e.duration_s = j.at("duration_s").get<double>();
  e.needs_resample = j.value("needs_resample", false);
  return e;
}

std::string RatingKey(const Rating& r) {
  return r.utterance_id + '\x1f' + r.rater_id + '\x1f' + r.session_id;
}

json RatingToJson(const Rating& r) {
  return json{{"utterance_id", r.utterance_id},
              {"rater_id", r.rater_id},
              {"score", r.score},
              {"timestamp", r.timestamp},
              {"session_id", r.session_id}};
}

Rating RatingFromJson(const json& j) {
  Rating r;
  r.utterance_id = j.at("utterance_id").get<std::string>();
  r.rater_id = j.at("rater_id").get<std::string>();
  r.score = j.at("score").get<int>();
  r.timestamp = j.at("timestamp").get<std::int64_t>();
  r.session_id = j.at("session_id").get<std::string>();
  return r;
}

json PairToJson(const PairRecord& p) {
  return json{{"pair_id", p.pair_id},
              {"mask", ConditionName(p.mask)},
              {"enhanced", p.enhanced},
              {"subject_id", p.subject_id},
              {"answer", PairAnswerName(p.answer)},
              {"correct", p.correct},
              {"timestamp", p.timestamp}};
}

PairRecord PairFromJson(const json& j) {
  PairRecord p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.mask = ParseCondition(j.at("mask").get<std::string>()).value();
  p.enhanced = j.at("enhanced").get<bool>();
  p.subject_id = j.at("subject_id").get<std::string>();
  p.answer = ParsePairAnswer(j.at("answer").get<std::string>()).value();
  p.correct = j.at("correct").get<bool>();
  p.timestamp = j.at("timestamp").get<std::int64_t>();
  return p;
}

// Complete lines only; a torn final line from a crash is ignored.
template <class F>
void ForEachLine(const std::string& path, F&& f) {
  std::ifstream is(path);
  if (!is) return;
  std::string content((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = content.find('\n', start);
    if (nl == std::string::npos) break;
    if (nl > start) f(content.substr(start, nl - start));
    start = nl + 1;
  }
}

}  // namespace

const char* SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split ParseSplit(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw InvalidInput("unknown split: " + s);
}

const char* PairAnswerName(PairAnswer a) {
  switch (a) {
    case PairAnswer::kFirst: return "first";
    case PairAnswer::kSecond: return "second";
    case PairAnswer::kBoth: return "both";
    case PairAnswer::kNone: return "none";
  }
  return "?";
}

std::optional<PairAnswer> ParsePairAnswer(const std::string& s) {
  for (PairAnswer a : {PairAnswer::kFirst, PairAnswer::kSecond,
                       PairAnswer::kBoth, PairAnswer::kNone})
    if (s == PairAnswerName(a)) return a;
  return std::nullopt;
}

CorpusManifest::CorpusManifest(std::vector<ManifestEntry> entries) {
  for (auto& e : entries) Add(std::move(e));
}

void CorpusManifest::Add(ManifestEntry e) {
  if (index_.count(e.utterance_id))
    throw ConflictError("duplicate utterance id " + e.utterance_id);
  index_[e.utterance_id] = entries_.size();
  entries_.push_back(std::move(e));
}

const ManifestEntry* CorpusManifest::Find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::vector<ManifestEntry> CorpusManifest::WithCondition(Condition c) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries_)
    if (e.condition == c) out.push_back(e);
  return out;
}

std::vector<ManifestEntry> CorpusManifest::WithSplit(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries_)
    if (e.split == s) out.push_back(e);
  return out;
}

bool CorpusManifest::HasAllConditions() const {
  for (Condition c : kAllConditions) {
    bool found = std::any_of(entries_.begin(), entries_.end(),
                             [c](const ManifestEntry& e) { return e.condition == c; });
    if (!found) return false;
  }
  return true;
}

void CorpusManifest::Save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest " + path);
  for (const auto& e : entries_) os << EntryToJson(e).dump() << '\n';
  if (!os) throw IoError("write failed for " + path);
}

CorpusManifest CorpusManifest::Load(const std::string& path) {
  if (!fs::exists(path)) throw NotFound("manifest not found: " + path);
  CorpusManifest m;
  std::size_t line_no = 0;
  ForEachLine(path, [&](const std::string& line) {
    ++line_no;
    try {
      m.Add(EntryFromJson(json::parse(line)));
    } catch (const json::exception& ex) {
      throw InvalidInput(path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  });
  return m;
}

IngestResult Ingest(const std::string& root, const SplitRules& rules) {
  if (!fs::is_directory(root)) throw NotFound("corpus root not found: " + root);
  IngestResult result;
  std::vector<fs::path> cond_dirs;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) cond_dirs.push_back(d.path());
  std::sort(cond_dirs.begin(), cond_dirs.end());
  for (const auto& cdir : cond_dirs) {
    auto cond = ParseCondition(cdir.filename().string());
    if (!cond)
      throw InvalidInput("unknown condition directory '" +
                         cdir.filename().string() + "' under " + root);
    std::vector<fs::path> files;
    for (const auto& f : fs::recursive_directory_iterator(cdir))
      if (f.is_regular_file() && f.path().extension() == ".wav")
        files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto rel = fs::relative(f, cdir);
      if (std::distance(rel.begin(), rel.end()) != 2) {
        result.skipped.push_back(f.string() + ": not at <condition>/<speaker>/<utt>.wav");
        continue;
      }
      const std::string speaker = rel.begin()->string();
      const std::string stem = f.stem().string();
      try {
        const wav::WavInfo info = wav::ReadInfo(f.string());
        if (info.channels != 1 || info.bits_per_sample != 16)
          throw IoError("expected 16-bit mono PCM");
        if (info.sample_rate != 16000 && info.sample_rate != 48000)
          throw IoError("unsupported sample rate " + std::to_string(info.sample_rate));
        ManifestEntry e;
        e.utterance_id = cdir.filename().string() + "/" + speaker + "/" + stem;
        e.path = fs::absolute(f).string();
        e.speaker_id = speaker;
        e.condition = *cond;
        e.duration_s = static_cast<double>(info.frames) / info.sample_rate;
        e.needs_resample = info.sample_rate == 48000;
        const double u = static_cast<double>(
                             SplitMix(Fnv1a(speaker + "/" + stem) ^ rules.seed) >> 11) *
                         0x1.0p-53;
        e.split = u < rules.test_fraction ? Split::kTest
                  : u < rules.test_fraction + rules.validation_fraction
                      ? Split::kValidation
                      : Split::kTrain;
        result.manifest.Add(std::move(e));
      } catch (const Error& ex) {
        result.skipped.push_back(f.string() + ": " + ex.what());
      }
    }
  }
  return result;
}

void AppendLine(const std::string& path, const std::string& line) {
  const std::string buf = line + "\n";
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw IoError("cannot open " + path + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < buf.size()) {
    const ssize_t n = ::write(fd, buf.data() + done, buf.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw IoError("append failed for " + path + ": " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  ::fdatasync(fd);
  ::close(fd);
}

RatingStore::RatingStore(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  ratings_path_ = (fs::path(dir_) / "ratings.jsonl").string();
  pairs_path_ = (fs::path(dir_) / "pair_responses.jsonl").string();
  ForEachLine(ratings_path_, [&](const std::string& line) {
    Rating r = RatingFromJson(json::parse(line));
    seen_keys_[RatingKey(r)] = true;
    ratings_.push_back(std::move(r));
  });
  ForEachLine(pairs_path_, [&](const std::string& line) {
    pairs_.push_back(PairFromJson(json::parse(line)));
  });
}

void RatingStore::SetUtteranceValidator(
    std::function<bool(const std::string&)> exists) {
  std::lock_guard lock(mu_);
  validator_ = std::move(exists);
}

std::size_t RatingStore::RecordRating(const Rating& r) {
  if (r.score < 1 || r.score > 5)
    throw InvalidInput("score " + std::to_string(r.score) + " outside 1..5");
  std::lock_guard lock(mu_);
  if (validator_ && !validator_(r.utterance_id))
    throw InvalidInput("unknown utterance " + r.utterance_id);
  const std::string key = RatingKey(r);
  if (seen_keys_.count(key))
    throw ConflictError("rating already recorded for " + r.utterance_id +
                        " by " + r.rater_id + " in session " + r.session_id);
  AppendLine(ratings_path_, RatingToJson(r).dump());
  seen_keys_[key] = true;
  ratings_.push_back(r);
  return ratings_.size() - 1;
}

std::size_t RatingStore::RecordPair(const PairRecord& p) {
  std::lock_guard lock(mu_);
  AppendLine(pairs_path_, PairToJson(p).dump());
  pairs_.push_back(p);
  return pairs_.size() - 1;
}

std::vector<Rating> RatingStore::LoadRatings(
    const std::function<bool(const Rating&)>& filter) const {
  std::lock_guard lock(mu_);
  if (!filter) return ratings_;
  std::vector<Rating> out;
  for (const auto& r : ratings_)
    if (filter(r)) out.push_back(r);
  return out;
}

std::vector<PairRecord> RatingStore::LoadPairs() const {
  std::lock_guard lock(mu_);
  return pairs_;
}

std::optional<double> RatingStore::MeanMos(const std::string& utterance_id) const {
  std::lock_guard lock(mu_);
  double sum = 0;
  int n = 0;
  for (const auto& r : ratings_) {
    if (r.utterance_id != utterance_id) continue;
    sum += r.score;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::map<std::string, double> MeanScores(const std::vector<Rating>& ratings) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : ratings) {
    acc[r.utterance_id].first += r.score;
    acc[r.utterance_id].second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [id, s] : acc) out[id] = s.first / s.second;
  return out;
}

}  // namespace maskse::datastore
