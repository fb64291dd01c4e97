// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/evaluation.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "maskse/error.h"
#include "maskse/trainer.h"
#include "maskse/wav.h"

namespace maskse::evaluation {

namespace {

void RequirePaired(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidInput("correlation: length mismatch");
  if (a.size() < 2) throw InvalidInput("correlation: need at least 2 values");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw InvalidInput("correlation: non-finite value");
}

}  // namespace

double Pcc(const std::vector<double>& a, const std::vector<double>& b) {
  RequirePaired(a, b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) throw UndefinedMetric("correlation of a constant sequence");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> Ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double Srcc(const std::vector<double>& a, const std::vector<double>& b) {
  RequirePaired(a, b);
  return Pcc(Ranks(a), Ranks(b));
}

std::string CellName(const CellKey& k) {
  return std::string(ConditionName(k.mask)) + (k.enhanced ? "/Enhanced" : "/Mask");
}

std::map<CellKey, Cell> PairedAccuracy(const std::vector<datastore::PairRecord>& records) {
  std::map<CellKey, std::set<std::string>> pairs, subjects;
  std::map<CellKey, Cell> cells;
  for (const auto& r : records) {
    if (r.mask == Condition::kClean)
      throw InvalidInput("pair response " + r.pair_id + " has no mask condition");
    const CellKey k{r.mask, r.enhanced};
    auto& c = cells[k];
    ++c.responses;
    if (r.correct) ++c.correct;
    pairs[k].insert(r.pair_id);
    subjects[k].insert(r.subject_id);
  }
  for (auto& [k, c] : cells) {
    c.pairs = static_cast<int>(pairs[k].size());
    c.subjects = static_cast<int>(subjects[k].size());
    c.accuracy = static_cast<double>(c.correct) / (static_cast<double>(c.pairs) * c.subjects);
  }
  return cells;
}

std::string Report::ToTsv() const {
  std::ostringstream os;
  os << "condition\tsignal\tutterances\tmean_score\n";
  for (const auto& r : rows)
    os << ConditionName(r.condition) << '\t' << (r.enhanced ? "enhanced" : "masked")
       << '\t' << r.utterances << '\t' << std::setprecision(10) << r.mean_score << '\n';
  return os.str();
}

std::string Report::ToTable() const {
  std::ostringstream os;
  os << std::left << std::setw(10) << "condition" << std::setw(10) << "signal"
     << std::right << std::setw(6) << "n" << std::setw(10) << "score" << '\n';
  for (const auto& r : rows)
    os << std::left << std::setw(10) << ConditionName(r.condition) << std::setw(10)
       << (r.enhanced ? "enhanced" : "masked") << std::right << std::setw(6)
       << r.utterances << std::setw(10) << std::fixed << std::setprecision(3)
       << std::clamp(r.mean_score, 1.0, 5.0) << '\n';
  return os.str();
}

nlohmann::json Report::ToJson() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"condition", ConditionName(r.condition)},
                      {"signal", r.enhanced ? "enhanced" : "masked"},
                      {"utterances", r.utterances},
                      {"mean_score", r.mean_score}});
  return {{"rows", rows_j}, {"warnings", warnings}};
}

Report EvaluateModels(const generator::Generator& gen, const FeatureNorm& norm,
                      const maskqss::MaskQss& mqss,
                      const datastore::CorpusManifest& testset) {
  Report rep;
  for (Condition c : kMaskConditions) {
    const auto entries = testset.WithCondition(c);
    if (entries.empty()) {
      rep.warnings.push_back(std::string("no ") + ConditionName(c) +
                             " utterances in the test set; rows omitted");
      continue;
    }
    double masked = 0, enhanced = 0;
    for (const auto& e : entries) {
      const auto w = wav::Read(e.path);
      masked += mqss.Predict(w).utterance_score;
      enhanced += mqss.Predict(trainer::Enhance(gen, norm, w)).utterance_score;
    }
    const int n = static_cast<int>(entries.size());
    rep.rows.push_back({c, false, n, masked / n});
    rep.rows.push_back({c, true, n, enhanced / n});
  }
  return rep;
}

std::size_t CountParameters(const checkpoint::Checkpoint& c) {
  std::size_t n = 0;
  const std::string prefix = "generator/param/";
  for (const auto& a : c.arrays)
    if (a.name.rfind(prefix, 0) == 0) n += a.data.size();
  return n;
}

}  // namespace maskse::evaluation
