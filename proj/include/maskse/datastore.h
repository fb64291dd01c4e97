// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Durable state shared by training, evaluation and the rating service:
// corpus manifests (JSON lines), append-only rating and pair-response logs
// (JSON lines), and checkpoints (see checkpoint.h).

#ifndef MASKSE_DATASTORE_H_
#define MASKSE_DATASTORE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "maskse/condition.h"

namespace maskse::datastore {

enum class Split { kTrain, kValidation, kTest };
const char* SplitName(Split s);
Split ParseSplit(const std::string& s);

struct ManifestEntry {
  std::string utterance_id;
  std::string path;
  std::string speaker_id;
  Condition condition = Condition::kClean;
  Split split = Split::kTrain;
  double duration_s = 0.0;
  bool needs_resample = false;  // source is 48 kHz

  bool operator==(const ManifestEntry&) const = default;
};

class CorpusManifest {
 public:
  CorpusManifest() = default;
  explicit CorpusManifest(std::vector<ManifestEntry> entries);

  // Throws ConflictError on a duplicate id.
  void Add(ManifestEntry e);
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ManifestEntry* Find(const std::string& utterance_id) const;

  std::vector<ManifestEntry> WithCondition(Condition c) const;
  std::vector<ManifestEntry> WithSplit(Split s) const;
  bool HasAllConditions() const;

  // One JSON object per line.
  void Save(const std::string& path) const;
  static CorpusManifest Load(const std::string& path);

  bool operator==(const CorpusManifest&) const = default;

 private:
  std::vector<ManifestEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct SplitRules {
  double validation_fraction = 0.0;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct IngestResult {
  CorpusManifest manifest;
  std::vector<std::string> skipped;  // "<path>: <reason>"
};

// Walks <root>/<condition>/<speaker>/<utt>.wav. Unknown condition
// directories raise InvalidInput naming the directory; malformed WAVs are
// skipped and reported. Splits are assigned per utterance name, so all
// conditions of one sentence share a split.
IngestResult Ingest(const std::string& root, const SplitRules& rules);

struct Rating {
  std::string utterance_id;
  std::string rater_id;
  int score = 0;  // 1..5
  std::int64_t timestamp = 0;
  std::string session_id;

  bool operator==(const Rating&) const = default;
};

// Answer to a paired-comparison trial.
enum class PairAnswer { kFirst, kSecond, kBoth, kNone };
const char* PairAnswerName(PairAnswer a);
std::optional<PairAnswer> ParsePairAnswer(const std::string& s);

struct PairRecord {
  std::string pair_id;
  Condition mask = Condition::kN95;  // n95, cotton or plastic
  bool enhanced = false;             // second condition: Enhanced vs Mask
  std::string subject_id;
  PairAnswer answer = PairAnswer::kNone;
  bool correct = false;
  std::int64_t timestamp = 0;
};

// Append-only line-delimited store. Appends go through one mutex and a
// single write() of a full line with O_APPEND, so concurrent writers never
// interleave partial records. There is no delete.
class RatingStore {
 public:
  // Opens (creating if needed) `<dir>/ratings.jsonl` and
  // `<dir>/pair_responses.jsonl` and loads existing records.
  explicit RatingStore(std::string dir);

  // When set, RecordRating rejects ids the predicate does not accept.
  void SetUtteranceValidator(std::function<bool(const std::string&)> exists);

  // Returns the record index. ConflictError on a duplicate
  // (utterance, rater, session); InvalidInput on a score outside 1..5 or an
  // unknown utterance.
  std::size_t RecordRating(const Rating& r);
  std::size_t RecordPair(const PairRecord& r);

  std::vector<Rating> LoadRatings(
      const std::function<bool(const Rating&)>& filter = nullptr) const;
  std::vector<PairRecord> LoadPairs() const;

  // Arithmetic mean of the utterance's scores; nullopt when unrated.
  std::optional<double> MeanMos(const std::string& utterance_id) const;

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::string ratings_path_;
  std::string pairs_path_;
  mutable std::mutex mu_;
  std::vector<Rating> ratings_;
  std::vector<PairRecord> pairs_;
  std::map<std::string, bool> seen_keys_;
  std::function<bool(const std::string&)> validator_;
};

// Mean score per utterance.
std::map<std::string, double> MeanScores(const std::vector<Rating>& ratings);

void AppendLine(const std::string& path, const std::string& line);

}  // namespace maskse::datastore

#endif  // MASKSE_DATASTORE_H_
