// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "maskse/cli.h"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"
#include "maskse/checkpoint.h"
#include "maskse/config.h"
#include "maskse/error.h"
#include "maskse/evaluation.h"
#include "maskse/masksim.h"
#include "maskse/service.h"
#include "maskse/trainer.h"
#include "maskse/wav.h"

namespace maskse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  bool json_output = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

KeyValueConfig ResolveConfig(const Globals& g) {
  KeyValueConfig kv;
  if (!g.config_path.empty()) kv = KeyValueConfig::Load(g.config_path);
  for (const auto& o : g.overrides) kv.ApplyOverride(o);
  if (g.seed_given) kv.Set("seed", std::to_string(g.seed));
  return kv;
}

void LogConfig(const std::string& cmd, const json& resolved) {
  spdlog::info("{} config {}", cmd, resolved.dump());
}

std::string ManifestOutput(const std::string& requested, const std::string& fallback) {
  return requested.empty() ? fallback : requested;
}

// ---------------------------------------------------------------- commands

int Ingest(const Globals& g, const std::string& dir, const std::string& out_path,
           double val, double test, std::ostream& out) {
  datastore::SplitRules rules{
      val, test, static_cast<std::uint64_t>(ResolveConfig(g).GetInt("seed", 0))};
  LogConfig("ingest", {{"root", dir}, {"validation_fraction", val},
                       {"test_fraction", test}, {"seed", rules.seed}});
  auto result = datastore::Ingest(dir, rules);
  const auto path = ManifestOutput(out_path, (fs::path(dir) / "manifest.jsonl").string());
  result.manifest.Save(path);
  for (const auto& s : result.skipped) spdlog::warn("skipped {}", s);
  if (g.json_output)
    out << json{{"manifest", path}, {"entries", result.manifest.size()},
                {"skipped", result.skipped}}.dump()
        << '\n';
  else
    out << "wrote " << result.manifest.size() << " entries to " << path << " ("
        << result.skipped.size() << " skipped)\n";
  return kExitOk;
}

int SimulateMask(const Globals& g, const std::string& manifest_path,
                 const std::string& out_root, const std::string& profiles_path,
                 const std::string& out_manifest, std::ostream& out) {
  const auto kv = ResolveConfig(g);
  const auto seed = static_cast<std::uint64_t>(kv.GetInt("seed", 0));
  auto profiles = profiles_path.empty()
                      ? masksim::DefaultProfiles()
                      : masksim::ProfilesFromConfig(KeyValueConfig::Load(profiles_path));
  json pj = json::array();
  for (const auto& p : profiles)
    pj.push_back({{"name", p.name()}, {"cutoff_hz", p.cutoff_hz},
                  {"stopband_atten_db", p.stopband_atten_db},
                  {"tilt_db_per_octave", p.tilt_db_per_octave},
                  {"noise_floor_db", p.noise_floor_db}});
  LogConfig("simulate-mask", {{"seed", seed}, {"profiles", pj}});
  const auto manifest = datastore::CorpusManifest::Load(manifest_path);
  auto result = masksim::SynthesizeCorpus(manifest, profiles, seed, out_root);
  const auto path =
      ManifestOutput(out_manifest, (fs::path(out_root) / "manifest.jsonl").string());
  result.manifest.Save(path);
  for (const auto& e : result.errors) spdlog::warn("{}", e);
  if (g.json_output)
    out << json{{"manifest", path}, {"entries", result.manifest.size()},
                {"errors", result.errors}}.dump()
        << '\n';
  else
    out << "wrote " << result.manifest.size() << " entries to " << path << " ("
        << result.errors.size() << " errors)\n";
  return kExitOk;
}

struct TrainArgs {
  std::string phase = "all";
  std::string variant;
  std::string manifest;
  std::string out_dir;
  std::string from;
  std::string ratings_dir;
  std::string ratings_manifest;
};

std::unique_ptr<trainer::RatingsSource> MakeRatings(
    const TrainArgs& a, std::unique_ptr<datastore::RatingStore>& store) {
  if (a.ratings_dir.empty()) return std::make_unique<trainer::SyntheticRater>();
  store = std::make_unique<datastore::RatingStore>(a.ratings_dir);
  const auto manifest = datastore::CorpusManifest::Load(
      a.ratings_manifest.empty() ? a.manifest : a.ratings_manifest);
  return std::make_unique<trainer::StoredRatings>(*store, manifest);
}

int Train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  auto kv = ResolveConfig(g);
  if (!a.variant.empty()) kv.Set("variant", a.variant);
  const auto manifest = datastore::CorpusManifest::Load(a.manifest);
  const auto corpus = trainer::LoadCorpus(manifest, datastore::Split::kTrain);
  fs::create_directories(a.out_dir);
  std::ofstream log_file((fs::path(a.out_dir) / "train_log.tsv").string(), std::ios::app);
  trainer::TrainLog log(&log_file);

  std::optional<trainer::TrainState> state;
  if (!a.from.empty()) {
    state.emplace(trainer::TrainState::FromCheckpoint(checkpoint::Load(a.from)));
  } else {
    trainer::TrainConfig cfg;
    cfg.Apply(kv);
    state.emplace(trainer::TrainState::Create(cfg, trainer::FitNorm(corpus)));
  }
  LogConfig("train", {{"phase", a.phase}, {"train", state->cfg.ToJson()}});

  std::unique_ptr<datastore::RatingStore> store;
  auto ratings = MakeRatings(a, store);
  std::vector<std::string> written;
  auto save = [&](const std::string& name) {
    const auto path = (fs::path(a.out_dir) / name).string();
    checkpoint::Save(state->ToCheckpoint(), path);
    written.push_back(path);
  };
  if (a.phase == "all") {
    written = trainer::RunProtocol(*state, corpus, *ratings, a.out_dir, &log).checkpoints;
  } else if (a.phase == "1") {
    trainer::RunPhase1(*state, corpus, state->cfg.iterations_phase1, &log);
    state->phases.push_back(1);
    save("phase1.ckpt");
  } else if (a.phase == "2" || a.phase == "3") {
    if (state->cfg.variant != trainer::Variant::kFull)
      throw ConfigError(std::string("variant ") + trainer::VariantName(state->cfg.variant) +
                        " has no phase " + a.phase);
    const auto labels = ratings->Collect(*state, corpus);
    if (a.phase == "2") {
      ++state->round;
      trainer::RunPhase2(*state, labels, state->cfg.iterations_phase2, &log);
    } else {
      trainer::RunPhase3(*state, corpus, labels, state->cfg.iterations_phase3, &log);
    }
    state->phases.push_back(a.phase == "2" ? 2 : 3);
    save("phase" + a.phase + "-round" + std::to_string(state->round) + ".ckpt");
  } else {
    throw InvalidInput("phase must be 1, 2, 3 or all");
  }
  if (g.json_output)
    out << json{{"checkpoints", written}, {"phases", state->phases},
                {"generator_parameters", state->gen.ParameterCount()}}.dump()
        << '\n';
  else
    for (const auto& p : written) out << p << '\n';
  return kExitOk;
}

int EnhanceCmd(const std::string& ckpt, const std::string& in, const std::string& outp,
               std::ostream& out) {
  const auto bundle = trainer::LoadGenerator(checkpoint::Load(ckpt));
  const auto w = wav::Read(in);
  wav::Write(outp, trainer::Enhance(*bundle.gen, bundle.norm, w));
  out << outp << '\n';
  return kExitOk;
}

int Score(const Globals& g, const std::string& ckpt, const std::vector<std::string>& wavs,
          std::ostream& out) {
  const auto m = trainer::LoadMaskQss(checkpoint::Load(ckpt));
  json rows = json::array();
  for (const auto& p : wavs) {
    const double s = m->Predict(wav::Read(p)).utterance_score;
    if (g.json_output)
      rows.push_back({{"path", p}, {"score", s}});
    else
      out << p << '\t' << std::setprecision(6) << s << '\n';
  }
  if (g.json_output) out << rows.dump() << '\n';
  return kExitOk;
}

int Evaluate(const Globals& g, const std::string& gen_path, const std::string& mqss_path,
             const std::string& manifest_path, const std::string& out_tsv,
             std::ostream& out) {
  const auto gen_ckpt = checkpoint::Load(gen_path);
  const auto bundle = trainer::LoadGenerator(gen_ckpt);
  const auto m = trainer::LoadMaskQss(checkpoint::Load(mqss_path));
  const auto manifest = datastore::CorpusManifest::Load(manifest_path);
  auto test = manifest.WithSplit(datastore::Split::kTest);
  const datastore::CorpusManifest testset(test.empty() ? manifest.entries() : test);
  const auto rep = evaluation::EvaluateModels(*bundle.gen, bundle.norm, *m, testset);
  for (const auto& w : rep.warnings) spdlog::warn("{}", w);
  const auto params = evaluation::CountParameters(gen_ckpt);
  if (!out_tsv.empty()) {
    std::ofstream os(out_tsv);
    os << rep.ToTsv();
  }
  if (g.json_output) {
    json j = rep.ToJson();
    j["generator_parameters"] = params;
    out << j.dump() << '\n';
  } else {
    out << rep.ToTable() << "generator parameters: " << params << '\n';
  }
  return kExitOk;
}

int Serve(const std::string& campaign_path, const std::string& host, int port) {
  service::RatingService svc(service::Campaign::Load(campaign_path));
  service::HttpServer server(svc);
  server.Listen(host, port);
  return kExitOk;
}

// Summaries of training logs: per phase, row count and the mean generator
// objective over the first and last ten rows.
int Report(const Globals& g, const std::vector<std::string>& logs, std::ostream& out) {
  json result = json::array();
  for (const auto& path : logs) {
    std::ifstream is(path);
    if (!is) throw NotFound("log not found: " + path);
    std::string line;
    std::vector<std::string> header;
    std::map<int, std::vector<std::map<std::string, double>>> by_phase;
    while (std::getline(is, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string c;
      while (std::getline(ss, c, '\t')) cells.push_back(c);
      if (!cells.empty() && cells[0] == "iteration") {
        header = cells;
        continue;
      }
      if (header.empty() || cells.size() < 2) continue;
      std::map<std::string, double> row;
      for (std::size_t i = 0; i < cells.size() && i < header.size(); ++i)
        if (!cells[i].empty()) row[header[i]] = std::stod(cells[i]);
      by_phase[static_cast<int>(row["phase"])].push_back(row);
    }
    for (const auto& [phase, rows] : by_phase) {
      const std::string key = phase == 2 ? "mos" : (phase == 3 ? "total_hl" : "total_g");
      auto mean = [&](std::size_t b, std::size_t e) {
        double s = 0;
        int n = 0;
        for (std::size_t i = b; i < e; ++i)
          if (rows[i].count(key)) {
            s += rows[i].at(key);
            ++n;
          }
        return n ? s / n : 0.0;
      };
      const std::size_t n = rows.size(), w = std::min<std::size_t>(10, n);
      json entry = {{"log", path}, {"phase", phase}, {"rows", n}, {"metric", key},
                    {"first", mean(0, w)}, {"last", mean(n - w, n)}};
      result.push_back(entry);
      if (!g.json_output)
        out << path << "  phase " << phase << "  rows " << n << "  " << key
            << " first10 " << std::setprecision(5) << entry["first"].get<double>()
            << " last10 " << entry["last"].get<double>() << '\n';
    }
  }
  if (g.json_output) out << result.dump() << '\n';
  return kExitOk;
}

}  // namespace

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face-masked speech enhancement toolkit", "maskse"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "key = value config file");
  app.add_option("-o,--set", g.overrides, "override, key=value (repeatable)");
  app.add_flag("--json", g.json_output, "machine-readable output");
  auto* seed_opt = app.add_option("--seed", g.seed, "random seed");

  std::string dir, out_path, profiles, manifest, ckpt, in_wav, out_wav, mqss, campaign,
      host = "127.0.0.1", out_tsv;
  double val = 0, test = 0;
  int port = 8080;
  std::vector<std::string> paths;
  TrainArgs ta;

  auto* ingest = app.add_subcommand("ingest", "index <root>/<condition>/<speaker>/<utt>.wav");
  ingest->add_option("dir", dir)->required();
  ingest->add_option("--out", out_path, "manifest path");
  ingest->add_option("--validation-fraction", val);
  ingest->add_option("--test-fraction", test);

  auto* sim = app.add_subcommand("simulate-mask", "render masked copies of clean entries");
  sim->add_option("manifest", manifest)->required();
  sim->add_option("--out-root", dir, "output corpus root")->required();
  sim->add_option("--profiles", profiles, "mask profile config");
  sim->add_option("--manifest-out", out_path);

  auto* train = app.add_subcommand("train", "run training phases");
  train->add_option("--phase", ta.phase)->check(CLI::IsMember({"1", "2", "3", "all"}));
  train->add_option("--variant", ta.variant)->check(CLI::IsMember({"full", "noM", "noMA"}));
  train->add_option("--manifest", ta.manifest)->required();
  train->add_option("--out", ta.out_dir)->required();
  train->add_option("--from", ta.from, "continue from a checkpoint");
  train->add_option("--ratings", ta.ratings_dir, "rating store directory");
  train->add_option("--ratings-manifest", ta.ratings_manifest, "audio for rated ids");

  auto* enhance = app.add_subcommand("enhance", "enhance one file");
  enhance->add_option("checkpoint", ckpt)->required();
  enhance->add_option("input", in_wav)->required();
  enhance->add_option("output", out_wav)->required();

  auto* score = app.add_subcommand("score", "predict MOS for files");
  score->add_option("checkpoint", ckpt)->required();
  score->add_option("wavs", paths)->required();

  auto* evaluate = app.add_subcommand("evaluate", "per-condition predictor report");
  evaluate->add_option("generator", ckpt)->required();
  evaluate->add_option("maskqss", mqss)->required();
  evaluate->add_option("manifest", manifest)->required();
  evaluate->add_option("--tsv", out_tsv, "also write the report here");

  auto* serve = app.add_subcommand("serve-ratings", "run the listening-test API");
  serve->add_option("--campaign", campaign)->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  auto* report = app.add_subcommand("report", "summarize training logs");
  report->add_option("logs", paths)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (*ingest) return Ingest(g, dir, out_path, val, test, out);
    if (*sim) return SimulateMask(g, manifest, dir, profiles, out_path, out);
    if (*train) return Train(g, ta, out);
    if (*enhance) return EnhanceCmd(ckpt, in_wav, out_wav, out);
    if (*score) return Score(g, ckpt, paths, out);
    if (*evaluate) return Evaluate(g, ckpt, mqss, manifest, out_tsv, out);
    if (*serve) return Serve(campaign, host, port);
    if (*report) return Report(g, paths, out);
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace maskse::cli
