// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Correlations between predicted and human scores, paired-comparison
// accuracy, per-condition predictor reports and parameter counts.

#ifndef MASKSE_EVALUATION_H_
#define MASKSE_EVALUATION_H_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "maskse/checkpoint.h"
#include "maskse/condition.h"
#include "maskse/datastore.h"
#include "maskse/generator.h"
#include "maskse/maskqss.h"

namespace maskse::evaluation {

// Pearson correlation. UndefinedMetric on zero variance, InvalidInput on
// length mismatch or fewer than 2 values.
double Pcc(const std::vector<double>& a, const std::vector<double>& b);
// Spearman correlation with average ranks for ties.
double Srcc(const std::vector<double>& a, const std::vector<double>& b);
// 1-based average ranks.
std::vector<double> Ranks(const std::vector<double>& v);

struct CellKey {
  Condition mask = Condition::kN95;
  bool enhanced = false;
  auto operator<=>(const CellKey&) const = default;
};

struct Cell {
  int correct = 0;
  int responses = 0;
  int pairs = 0;     // distinct pair ids
  int subjects = 0;  // distinct subject ids
  double accuracy = 0;  // correct / (pairs * subjects)
};

// Cells without responses are absent.
std::map<CellKey, Cell> PairedAccuracy(const std::vector<datastore::PairRecord>& r);
std::string CellName(const CellKey& k);  // e.g. "n95/Enhanced"

struct ReportRow {
  Condition condition = Condition::kN95;
  bool enhanced = false;
  int utterances = 0;
  double mean_score = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
  std::string ToTsv() const;
  std::string ToTable() const;
  nlohmann::json ToJson() const;
};

// Mean predictor score per mask condition for the raw masked inputs and for
// their enhancement by `gen`.
Report EvaluateModels(const generator::Generator& gen, const FeatureNorm& norm,
                      const maskqss::MaskQss& mqss,
                      const datastore::CorpusManifest& testset);

// Scalar count of the generator parameters stored in a checkpoint.
std::size_t CountParameters(const checkpoint::Checkpoint& c);

}  // namespace maskse::evaluation

#endif  // MASKSE_EVALUATION_H_
