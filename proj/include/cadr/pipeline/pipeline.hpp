// Copyright (c) 2026 The cadr Authors
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

#pragma once

#include <algorithm>
#include <chrono>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cadr/align/label.hpp"
#include "cadr/clarify/agents.hpp"
#include "cadr/clarify/session.hpp"
#include "cadr/confidence/tsallis.hpp"
#include "cadr/core/bundle.hpp"
#include "cadr/core/manifest.hpp"
#include "cadr/core/wav.hpp"
#include "cadr/detector/predict.hpp"
#include "cadr/distortion/assets.hpp"
#include "cadr/distortion/distortion.hpp"
#include "cadr/eval/maj.hpp"
#include "cadr/eval/metrics.hpp"
#include "cadr/eval/report.hpp"
#include "cadr/eval/rounds.hpp"
#include "cadr/fusion/detectors.hpp"
#include "cadr/fusion/fusion.hpp"
#include "cadr/pipeline/config.hpp"
#include "cadr/pipeline/parallel.hpp"
#include "cadr/transducer/oracle.hpp"

namespace cadr {

// A stage could not complete. `artifact` names the file involved, if any.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string artifact, const std::string& what)
      : Error("stage '" + stage + "' failed" + (artifact.empty() ? "" : " (" + artifact + ")") + ": " + what),
        stage_(std::move(stage)),
        artifact_(std::move(artifact)) {}
  const std::string& stage() const { return stage_; }
  const std::string& artifact() const { return artifact_; }

 private:
  std::string stage_, artifact_;
};

enum class Stage { kSynth, kDistort, kDecode, kLabel, kTrain, kCalibrate, kDetect, kClarify, kEval, kReport };

inline constexpr std::array<Stage, 10> kAllStages = {Stage::kSynth,     Stage::kDistort, Stage::kDecode,
                                                     Stage::kLabel,     Stage::kTrain,   Stage::kCalibrate,
                                                     Stage::kDetect,    Stage::kClarify, Stage::kEval,
                                                     Stage::kReport};

inline std::string_view StageName(Stage s) {
  switch (s) {
    case Stage::kSynth: return "synth";
    case Stage::kDistort: return "distort";
    case Stage::kDecode: return "decode";
    case Stage::kLabel: return "label";
    case Stage::kTrain: return "train";
    case Stage::kCalibrate: return "calibrate";
    case Stage::kDetect: return "detect";
    case Stage::kClarify: return "clarify";
    case Stage::kEval: return "eval";
    case Stage::kReport: return "report";
  }
  return "?";
}

inline Stage StageFromName(std::string_view s) {
  for (auto st : kAllStages)
    if (StageName(st) == s) return st;
  throw ValidationError("stage", "unknown stage '" + std::string(s) + "'");
}

inline constexpr std::array<DetectorKind, 4> kAllDetectorKinds = {
    DetectorKind::kComprehension, DetectorKind::kPerception, DetectorKind::kDeletion, DetectorKind::kEvent};

inline constexpr std::string_view kMajInstruction = "Write down exactly what the user said.";

struct PipelineOptions {
  int jobs = 1;
  std::ostream* log = &std::cerr;  // progress lines; null for silence
  bool interactive = false;        // clarify with a person at the terminal
  std::istream* terminal_in = &std::cin;
  std::ostream* terminal_out = &std::cout;
};

// Reference utterance plus its split.
struct CorpusEntry {
  UtteranceRef utt;
  Split split = Split::kTrain;
};

namespace detail {

using OJson = nlohmann::ordered_json;

inline OJson ReportJson(const DetectionReport& r) {
  return OJson{{"tp", r.tp},         {"fp", r.fp},     {"fn", r.fn},
               {"tn", r.tn},         {"recall", r.recall()}, {"fpr", r.fpr()},
               {"precision", r.precision()}, {"f1", r.f1()}};
}

inline std::vector<bool> BoolsFromJson(const OJson& j) {
  std::vector<bool> out;
  for (const auto& v : j) out.push_back(v.get<int>() != 0);
  return out;
}

inline OJson BoolsJson(const std::vector<bool>& v) {
  OJson j = OJson::array();
  for (bool b : v) j.push_back(b ? 1 : 0);
  return j;
}

inline std::vector<bool> PercWordGold(const DecodeResult& d, const LabelSet& l) {
  std::vector<bool> tok(l.token_labels.size());
  for (std::size_t i = 0; i < tok.size(); ++i) tok[i] = l.token_labels[i] == TokenLabel::kPercError;
  return WordFlagsFromTokens(tok, d.words);
}

inline std::vector<bool> WordGold(const LabelSet& l) {
  std::vector<bool> out;
  for (auto w : l.word_labels) out.push_back(w == WordLabel::kError);
  return out;
}

// Deletion scoring over the words of the clean hypothesis: a word is positive
// when its frames are labelled deleted and predicted when an event overlaps
// its span.
inline DetectionReport DeletionWordReport(const DecodeResult& clean, const LabelSet& labels,
                                          const DeletionEvents& events) {
  std::vector<bool> gold, pred;
  for (int w = 0; w < static_cast<int>(clean.words.size()); ++w) {
    const auto [b, e] = clean.WordFrameSpan(w);
    bool g = false, p = false;
    for (int f = b; f < e && f < static_cast<int>(labels.deletion_frame_flags.size()); ++f)
      g = g || labels.deletion_frame_flags[f];
    for (const auto& ev : events) p = p || (ev.start_frame < e && ev.end_frame >= b);
    gold.push_back(g);
    pred.push_back(p);
  }
  return MakeDetectionReport(pred, gold, Level::kWord);
}

inline void WriteLabelFile(const fs::path& path, const std::string& id, const LabelSet& labels) {
  OJson j;
  j["utterance_id"] = id;
  const auto label_json = LabelSetToJson(labels);
  for (auto& [k, v] : label_json.items()) j[k] = v;
  WriteTextFile(path, j.dump() + "\n");
}

inline LabelSet ReadLabelFile(const fs::path& path, const DecodeResult& d) {
  const auto j = OJson::parse(ReadTextFile(path));
  LabelSet l = LabelSetFromJson(j);
  l.Validate(d);
  return l;
}

}  // namespace detail

// Reproducible run directory:
//   config.json  manifests/  bundles/  models/  sessions/  reports/
class Pipeline {
 public:
  Pipeline(fs::path root, RunConfig cfg, PipelineOptions opt = {})
      : root_(std::move(root)), cfg_(std::move(cfg)), opt_(opt) {
    cfg_.detectors.cnn.input_dim = cfg_.oracle.d_model;
    ValidateConfig(cfg_);
    hash_ = ConfigHash(cfg_);
  }

  // Opens an existing run with the configuration stored in it.
  static Pipeline Open(const fs::path& root, PipelineOptions opt = {}) {
    const fs::path p = root / "config.json";
    if (!fs::exists(p)) throw ValidationError("config", "no config.json in " + root.string());
    const auto j = nlohmann::ordered_json::parse(ReadTextFile(p));
    return Pipeline(root, RunConfigFromJson(j.at("config")), opt);
  }

  const RunConfig& config() const { return cfg_; }
  const std::string& config_hash() const { return hash_; }
  const fs::path& root() const { return root_; }

  // Writes config.json, or checks that an existing one matches.
  void Init() {
    const fs::path p = root_ / "config.json";
    if (fs::exists(p)) {
      const auto j = nlohmann::ordered_json::parse(ReadTextFile(p));
      const std::string stored = j.value("config_hash", "");
      if (stored != hash_)
        throw ValidationError("config", "run directory " + root_.string() + " holds configuration " + stored +
                                            ", not " + hash_);
      return;
    }
    nlohmann::ordered_json j;
    j["config_hash"] = hash_;
    j["config"] = ToJson(cfg_);
    WriteTextFile(p, j.dump(2) + "\n");
  }

  // Runs one stage unconditionally and marks later stages stale.
  void RunStage(Stage s) {
    Init();
    const auto t0 = std::chrono::steady_clock::now();
    Log(std::string("[") + std::string(StageName(s)) + "] start");
    std::vector<std::string> outputs;
    try {
      outputs = Execute(s);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(std::string(StageName(s)), "", e.what());
    }
    auto st = ReadStages();
    bool later = false;
    for (auto x : kAllStages) {
      if (later) st.erase(std::string(StageName(x)));
      if (x == s) later = true;
    }
    st[std::string(StageName(s))] = {{"config_hash", hash_}, {"outputs", outputs}};
    WriteStages(st);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Log(std::string("[") + std::string(StageName(s)) + "] done in " + Fmt2(secs) + " s");
  }

  bool UpToDate(Stage s) const {
    const auto st = ReadStages();
    const auto it = st.find(std::string(StageName(s)));
    if (it == st.end() || it->value("config_hash", "") != hash_) return false;
    for (const auto& o : it->at("outputs"))
      if (!fs::exists(root_ / o.get<std::string>())) return false;
    return true;
  }

  // Every stage in order, skipping those whose artifacts are current.
  void RunAll() {
    Init();
    bool stale = false;
    for (auto s : kAllStages) {
      if (!stale && UpToDate(s)) {
        Log(std::string("[") + std::string(StageName(s)) + "] up to date");
        continue;
      }
      stale = true;
      RunStage(s);
    }
  }

  // Dangling references and orphaned files; empty on a consistent run.
  std::vector<std::string> Validate() const {
    std::vector<std::string> v;
    std::set<fs::path> reachable;
    auto reach = [&](const fs::path& rel) { reachable.insert(fs::path(rel).lexically_normal()); };
    const fs::path cfg_path = root_ / "config.json";
    if (!fs::exists(cfg_path)) return {"missing config.json"};
    try {
      const auto j = nlohmann::ordered_json::parse(ReadTextFile(cfg_path));
      const auto c = RunConfigFromJson(j.at("config"));
      if (ConfigHash(c) != j.value("config_hash", "")) v.push_back("config.json: hash does not match content");
    } catch (const std::exception& e) {
      v.push_back(std::string("config.json: ") + e.what());
    }
    reach("config.json");
    reach("manifests/stages.json");
    const auto stages = ReadStages();
    for (auto it = stages.begin(); it != stages.end(); ++it)
      for (const auto& o : it.value().at("outputs")) {
        const fs::path rel = o.get<std::string>();
        reach(rel);
        if (!fs::exists(root_ / rel)) v.push_back("stage " + it.key() + ": missing output " + rel.string());
        else if (rel.extension() == ".json" && rel.parent_path() == "models" && fs::exists(SidecarPath(root_ / rel)))
          reach(SidecarPath(rel));
      }
    for (const char* name : {"clean", "distorted"}) {
      const fs::path rel = fs::path("manifests") / (std::string(name) + ".jsonl");
      if (!fs::exists(root_ / rel)) continue;
      CorpusManifest m;
      try {
        m = ReadManifest(root_ / rel);
      } catch (const std::exception& e) {
        v.push_back(rel.string() + ": " + e.what());
        continue;
      }
      for (auto& msg : ValidateManifest(m, root_)) v.push_back(rel.string() + ": " + msg);
      for (const auto& r : m.records) {
        if (!r.decode_path.empty()) {
          reach(r.decode_path);
          reach(SidecarPath(r.decode_path));
          if (fs::exists(root_ / r.decode_path)) {
            try {
              const auto b = ReadBundle(root_ / r.decode_path);
              if (!r.label_path.empty() && fs::exists(root_ / r.label_path))
                detail::ReadLabelFile(root_ / r.label_path, b.decode);
            } catch (const std::exception& e) {
              v.push_back(r.decode_path + ": " + e.what());
            }
          }
        }
        if (!r.label_path.empty()) reach(r.label_path);
        if (!r.audio_path.empty()) reach(r.audio_path);
      }
    }
    if (fs::exists(root_ / "manifests/distortions.jsonl"))
      for (const auto& line : ReadLines(root_ / "manifests/distortions.jsonl")) {
        const auto j = nlohmann::ordered_json::parse(line);
        for (const char* key : {"audio_path", "clean_audio_path"}) {
          const std::string a = j.value(key, "");
          if (a.empty()) continue;
          reach(a);
          if (!fs::exists(root_ / a)) v.push_back("manifests/distortions.jsonl: unresolvable " + a);
        }
      }
    if (fs::exists(root_ / "sessions/sessions.jsonl")) {
      try {
        SessionsFromJsonl(ReadTextFile(root_ / "sessions/sessions.jsonl"));
      } catch (const std::exception& e) {
        v.push_back(std::string("sessions/sessions.jsonl: ") + e.what());
      }
    }
    for (const auto& entry : fs::recursive_directory_iterator(root_)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), root_).lexically_normal();
      if (!reachable.count(rel)) v.push_back("orphaned file " + rel.string());
    }
    std::sort(v.begin(), v.end());
    return v;
  }

 private:
  using OJson = nlohmann::ordered_json;

  // ---- bookkeeping --------------------------------------------------------

  void Log(const std::string& line) const {
    if (opt_.log) *opt_.log << line << std::endl;
  }

  fs::path Path(const std::string& rel) const { return root_ / rel; }

  OJson ReadStages() const {
    const fs::path p = Path("manifests/stages.json");
    return fs::exists(p) ? OJson::parse(ReadTextFile(p)) : OJson::object();
  }

  void WriteStages(const OJson& j) const { WriteTextFile(Path("manifests/stages.json"), j.dump(2) + "\n"); }

  void Require(Stage s, const std::string& rel) const {
    if (!fs::exists(Path(rel)))
      throw StageError(std::string(StageName(s)), rel, "missing input; run the earlier stages first");
  }

  const Lexicon& Lex() {
    std::call_once(lex_once_, [&] { lex_ = std::make_unique<Lexicon>(Lexicon::Generate(cfg_.corpus.lexicon)); });
    return *lex_;
  }

  const ToyTransducer& Tx() {
    std::call_once(tx_once_, [&] { tx_ = std::make_unique<ToyTransducer>(Lex(), cfg_.oracle); });
    return *tx_;
  }

  std::uint64_t Seed(std::string_view key) const { return DeriveSeed(cfg_.seed, key); }

  std::vector<CorpusEntry> ReadCorpus(Stage s) const {
    Require(s, "manifests/utterances.jsonl");
    std::vector<CorpusEntry> out;
    for (const auto& line : ReadLines(Path("manifests/utterances.jsonl"))) {
      const auto j = OJson::parse(line);
      CorpusEntry e;
      e.utt.id = j.at("utterance_id");
      e.utt.words = j.at("words").get<std::vector<std::string>>();
      e.utt.hard_flags = detail::BoolsFromJson(j.at("hard_flags"));
      e.split = SplitFromName(j.at("split").get<std::string>());
      out.push_back(std::move(e));
    }
    return out;
  }

  std::map<std::string, std::size_t> IndexOf(const std::vector<CorpusEntry>& c) const {
    std::map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < c.size(); ++i) m[c[i].utt.id] = i;
    return m;
  }

  CorpusManifest ReadManifestFor(Stage s, const std::string& rel) const {
    Require(s, rel);
    return ReadManifest(Path(rel));
  }

  static std::string SourceId(const ManifestRecord& r) {
    const auto at = r.utterance_id.find('@');
    return at == std::string::npos ? r.utterance_id : r.utterance_id.substr(0, at);
  }

  std::vector<std::string> Execute(Stage s) {
    switch (s) {
      case Stage::kSynth: return StageSynth();
      case Stage::kDistort: return StageDistort();
      case Stage::kDecode: return StageDecode();
      case Stage::kLabel: return StageLabel();
      case Stage::kTrain: return StageTrain();
      case Stage::kCalibrate: return StageCalibrate();
      case Stage::kDetect: return StageDetect();
      case Stage::kClarify: return StageClarify();
      case Stage::kEval: return StageEval();
      case Stage::kReport: return StageReport();
    }
    return {};
  }

  // ---- synth ----------------------------------------------------------------

  std::vector<std::string> StageSynth() {
    const auto& co = cfg_.corpus;
    const auto& lex = Lex();
    const int n = co.n_utterances;
    Rng rng(Seed("utterances"));
    std::vector<CorpusEntry> corpus(n);
    for (int i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "u%05d", i);
      corpus[i].utt = GenerateUtterance(lex, id, rng, co.min_words, co.max_words, co.hard_rate);
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng split_rng(Seed("split"));
    Shuffle(order, split_rng);
    const int n_train = static_cast<int>(std::lround(n * co.train_fraction));
    const int n_valid = static_cast<int>(std::lround(n * co.valid_fraction));
    for (int p = 0; p < n; ++p)
      corpus[order[p]].split = p < n_train ? Split::kTrain : p < n_train + n_valid ? Split::kValid : Split::kTest;
    std::string text;
    for (const auto& e : corpus) {
      OJson j;
      j["utterance_id"] = e.utt.id;
      j["split"] = SplitName(e.split);
      j["words"] = e.utt.words;
      j["hard_flags"] = detail::BoolsJson(e.utt.hard_flags);
      text += j.dump() + "\n";
    }
    WriteTextFile(Path("manifests/utterances.jsonl"), text);

    // Each condition draws its own random subset of the clean corpus.
    OJson subsets = OJson::object();
    const int per = n / cfg_.distortion.subset_divisor;
    for (const auto& cond : cfg_.distortion.conditions) {
      std::vector<int> idx(n);
      for (int i = 0; i < n; ++i) idx[i] = i;
      Rng r(Seed("subset/" + cond));
      Shuffle(idx, r);
      idx.resize(per);
      std::sort(idx.begin(), idx.end());
      OJson ids = OJson::array();
      for (int i : idx) ids.push_back(corpus[i].utt.id);
      subsets[cond] = ids;
    }
    WriteTextFile(Path("manifests/subsets.json"), subsets.dump(2) + "\n");
    return {"manifests/utterances.jsonl", "manifests/subsets.json"};
  }

  // ---- distort --------------------------------------------------------------

  struct DistortionRow {
    std::string id, source, condition;
    Split split = Split::kTrain;
    std::size_t n_samples = 0;
    DistortionSpec spec;
    std::string audio_path, clean_audio_path;
  };

  std::vector<DistortionRow> PlanDistortions(Stage s) {
    const auto corpus = ReadCorpus(s);
    const auto index = IndexOf(corpus);
    Require(s, "manifests/subsets.json");
    const auto subsets = OJson::parse(ReadTextFile(Path("manifests/subsets.json")));
    std::vector<DistortionRow> rows;
    for (const auto& cond : cfg_.distortion.conditions) {
      if (!subsets.contains(cond)) throw StageError(std::string(StageName(s)), "manifests/subsets.json", "no subset for " + cond);
      for (const auto& idj : subsets.at(cond)) {
        const std::string src = idj.get<std::string>();
        const auto& e = corpus.at(index.at(src));
        DistortionRow r;
        r.id = src + "@" + cond;
        r.source = src;
        r.condition = cond;
        r.split = e.split;
        rows.push_back(std::move(r));
      }
    }
    return rows;
  }

  std::vector<std::string> StageDistort() {
    const auto corpus = ReadCorpus(Stage::kDistort);
    const auto index = IndexOf(corpus);
    auto rows = PlanDistortions(Stage::kDistort);
    const auto bank = AssetBank::Synthetic(Seed("assets"), cfg_.distortion.assets_per_kind);
    const ApplyOptions apply{cfg_.distortion.external_codec ? CodecMode::kExternal : CodecMode::kProxy};
    const auto& tx = Tx();
    const int spf = SamplesPerFrame();
    ParallelFor(rows.size(), opt_.jobs, [&](std::size_t i) {
      auto& r = rows[i];
      const Timeline tl = tx.MakeTimeline(corpus.at(index.at(r.source)).utt);
      r.n_samples = static_cast<std::size_t>(tl.num_frames) * spf;
      r.spec = SampleSpec(DistortionKindFromName(r.condition), static_cast<double>(r.n_samples) / kSampleRate, bank,
                          Seed("spec/" + r.id));
    });
    if (cfg_.corpus.keep_audio) {
      auto clean_audio = [&](const std::string& source) {
        return SynthesizeSpeech(tx.MakeTimeline(corpus.at(index.at(source)).utt), Lex(), Seed("speech/" + source));
      };
      std::vector<std::string> sources;
      for (const auto& r : rows) sources.push_back(r.source);
      std::sort(sources.begin(), sources.end());
      sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
      ParallelFor(sources.size(), opt_.jobs, [&](std::size_t i) {
        WriteWav(clean_audio(sources[i]), Path("bundles/clean/" + sources[i] + ".wav"));
      });
      ParallelFor(rows.size(), opt_.jobs, [&](std::size_t i) {
        auto& r = rows[i];
        auto [dist, track] = ApplySpec(clean_audio(r.source), r.spec, bank, apply);
        if (track != TrackForSpec(r.spec, r.n_samples)) throw Error("rendered track differs from its spec");
        r.audio_path = "bundles/" + r.condition + "/" + r.source + ".wav";
        r.clean_audio_path = "bundles/clean/" + r.source + ".wav";
        WriteWav(dist, Path(r.audio_path));
      });
    }
    std::string text;
    for (const auto& r : rows) {
      OJson j;
      j["utterance_id"] = r.id;
      j["source_id"] = r.source;
      j["condition"] = r.condition;
      j["split"] = SplitName(r.split);
      j["n_samples"] = r.n_samples;
      j["distortion_spec"] = ToJson(r.spec);
      j["audio_path"] = r.audio_path;
      j["clean_audio_path"] = r.clean_audio_path;
      text += j.dump() + "\n";
    }
    WriteTextFile(Path("manifests/distortions.jsonl"), text);
    return {"manifests/distortions.jsonl"};
  }

  std::vector<DistortionRow> ReadDistortions(Stage s) const {
    Require(s, "manifests/distortions.jsonl");
    std::vector<DistortionRow> rows;
    for (const auto& line : ReadLines(Path("manifests/distortions.jsonl"))) {
      const auto j = OJson::parse(line);
      DistortionRow r;
      r.id = j.at("utterance_id");
      r.source = j.at("source_id");
      r.condition = j.at("condition");
      r.split = SplitFromName(j.at("split").get<std::string>());
      r.n_samples = j.at("n_samples");
      r.spec = DistortionSpecFromJson(j.at("distortion_spec"));
      r.audio_path = j.value("audio_path", "");
      r.clean_audio_path = j.value("clean_audio_path", "");
      rows.push_back(std::move(r));
    }
    return rows;
  }

  // ---- decode ---------------------------------------------------------------

  std::vector<std::string> StageDecode() {
    const auto corpus = ReadCorpus(Stage::kDecode);
    const auto index = IndexOf(corpus);
    const auto rows = ReadDistortions(Stage::kDecode);
    const auto& tx = Tx();
    const std::uint64_t dseed = Seed("decode");
    std::map<std::string, std::string> clean_audio;
    for (const auto& r : rows)
      if (!r.clean_audio_path.empty()) clean_audio[r.source] = r.clean_audio_path;

    CorpusManifest clean_m, dist_m;
    clean_m.seed = dist_m.seed = cfg_.seed;
    clean_m.records.resize(corpus.size());
    ParallelFor(corpus.size(), opt_.jobs, [&](std::size_t i) {
      const auto& e = corpus[i];
      const int T = tx.MakeTimeline(e.utt).num_frames;
      auto track = UniformTrack(T, EventClass::kClean);
      auto [d, labels] = tx.Decode(e.utt, track, dseed);
      ManifestRecord r;
      r.utterance_id = e.utt.id;
      r.condition = "clean";
      r.split = e.split;
      r.vocab_size = d.vocab_size;
      r.decode_path = "bundles/clean/" + e.utt.id + ".json";
      if (auto it = clean_audio.find(e.utt.id); it != clean_audio.end()) r.audio_path = it->second;
      WriteBundle(d, track, labels, Path(r.decode_path));
      clean_m.records[i] = std::move(r);
    });
    dist_m.records.resize(rows.size());
    ParallelFor(rows.size(), opt_.jobs, [&](std::size_t i) {
      const auto& row = rows[i];
      const auto& utt = corpus.at(index.at(row.source)).utt;
      const auto track = TrackForSpec(row.spec, row.n_samples);
      // Draws are keyed by the source id so clean and distorted decodes share them.
      auto [d, labels] = tx.Decode(utt, track, dseed);
      d.utterance_id = row.id;
      ManifestRecord r;
      r.utterance_id = row.id;
      r.condition = row.condition;
      r.split = row.split;
      r.vocab_size = d.vocab_size;
      r.distortion_spec = ToJson(row.spec);
      r.audio_path = row.audio_path;
      r.decode_path = "bundles/" + row.condition + "/" + row.source + ".json";
      WriteBundle(d, track, labels, Path(r.decode_path));
      dist_m.records[i] = std::move(r);
    });
    WriteManifest(clean_m, Path("manifests/clean.jsonl"));
    WriteManifest(dist_m, Path("manifests/distorted.jsonl"));
    return {"manifests/clean.jsonl", "manifests/distorted.jsonl"};
  }

  // ---- label ----------------------------------------------------------------

  static std::string LabelPath(const ManifestRecord& r) {
    std::string p = r.decode_path;
    return p.substr(0, p.size() - 5) + ".labels.json";
  }

  std::vector<std::string> StageLabel() {
    const auto corpus = ReadCorpus(Stage::kLabel);
    const auto index = IndexOf(corpus);
    auto clean_m = ReadManifestFor(Stage::kLabel, "manifests/clean.jsonl");
    auto dist_m = ReadManifestFor(Stage::kLabel, "manifests/distorted.jsonl");
    std::vector<DecodeResult> clean(clean_m.records.size());
    std::map<std::string, std::size_t> clean_index;
    std::vector<int> clean_mismatch(clean.size(), 0), dist_mismatch(dist_m.records.size(), 0);
    for (std::size_t i = 0; i < clean.size(); ++i) clean_index[clean_m.records[i].utterance_id] = i;
    ParallelFor(clean.size(), opt_.jobs, [&](std::size_t i) {
      auto& r = clean_m.records[i];
      auto b = ReadBundle(Path(r.decode_path));
      const auto labels = LabelComprehension(corpus.at(index.at(r.utterance_id)).utt, b.decode).labels;
      clean_mismatch[i] = labels != b.labels;
      r.label_path = LabelPath(r);
      detail::WriteLabelFile(Path(r.label_path), r.utterance_id, labels);
      clean[i] = std::move(b.decode);
    });
    ParallelFor(dist_m.records.size(), opt_.jobs, [&](std::size_t i) {
      auto& r = dist_m.records[i];
      const auto b = ReadBundle(Path(r.decode_path));
      const std::string src = SourceId(r);
      const auto labels = LabelDistorted(corpus.at(index.at(src)).utt, clean.at(clean_index.at(src)), b.decode);
      dist_mismatch[i] = labels != b.labels;
      r.label_path = LabelPath(r);
      detail::WriteLabelFile(Path(r.label_path), r.utterance_id, labels);
    });
    WriteManifest(clean_m, Path("manifests/clean.jsonl"));
    WriteManifest(dist_m, Path("manifests/distorted.jsonl"));
    OJson audit;
    audit["clean_utterances"] = clean.size();
    audit["clean_mismatches"] = std::accumulate(clean_mismatch.begin(), clean_mismatch.end(), 0);
    audit["distorted_utterances"] = dist_m.records.size();
    audit["distorted_mismatches"] = std::accumulate(dist_mismatch.begin(), dist_mismatch.end(), 0);
    WriteTextFile(Path("manifests/label_audit.json"), audit.dump(2) + "\n");
    return {"manifests/clean.jsonl", "manifests/distorted.jsonl", "manifests/label_audit.json"};
  }

  // ---- shared loading -------------------------------------------------------

  struct Item {
    ManifestRecord record;
    Bundle bundle;   // decode, true track, channel labels
    LabelSet labels; // derived labels
  };

  std::vector<Item> LoadItems(Stage s, const std::string& manifest, const std::set<Split>& splits) {
    const auto m = ReadManifestFor(s, manifest);
    std::vector<const ManifestRecord*> keep;
    for (const auto& r : m.records)
      if (splits.count(r.split)) keep.push_back(&r);
    std::vector<Item> items(keep.size());
    ParallelFor(keep.size(), opt_.jobs, [&](std::size_t i) {
      const auto& r = *keep[i];
      if (r.label_path.empty()) throw StageError(std::string(StageName(s)), manifest, "records lack labels; run label first");
      items[i].record = r;
      items[i].bundle = ReadBundle(Path(r.decode_path));
      items[i].labels = detail::ReadLabelFile(Path(r.label_path), items[i].bundle.decode);
    });
    return items;
  }

  static std::string ModelPath(DetectorKind k) { return "models/" + std::string(DetectorKindName(k)) + ".json"; }

  DetectorModel LoadDetector(Stage s, DetectorKind k) const {
    Require(s, ModelPath(k));
    return LoadModel(Path(ModelPath(k)));
  }

  // ---- train ----------------------------------------------------------------

  std::vector<std::string> StageTrain() {
    const std::set<Split> fit{Split::kTrain, Split::kValid};
    const auto clean = LoadItems(Stage::kTrain, "manifests/clean.jsonl", fit);
    const auto dist = LoadItems(Stage::kTrain, "manifests/distorted.jsonl", fit);
    std::vector<OJson> summaries(kAllDetectorKinds.size());
    ParallelFor(kAllDetectorKinds.size(), opt_.jobs, [&](std::size_t k) {
      const DetectorKind kind = kAllDetectorKinds[k];
      const auto& items = kind == DetectorKind::kComprehension ? clean : dist;
      Dataset train, valid;
      for (const auto& it : items)
        (it.record.split == Split::kTrain ? train : valid)
            .Add(InputSequence(it.bundle.decode, kind),
                 TargetSequence(it.bundle.decode, it.labels, it.bundle.track, kind));
      CnnConfig cc = cfg_.detectors.cnn;
      cc.input_dim = cfg_.oracle.d_model;
      cc.classes = kind == DetectorKind::kEvent ? kNumEventClasses : 2;
      TrainConfig tc = cfg_.detectors.train;
      tc.seed = Seed("train/" + std::string(DetectorKindName(kind)));
      const auto res = Train(train, valid, cc, tc, std::string(DetectorKindName(kind)));
      SaveModel(res.model, Path(ModelPath(kind)));
      OJson j;
      j["train_sequences"] = train.size();
      j["valid_sequences"] = valid.size();
      j["data_hash"] = res.model.data_hash;
      j["averaged_steps"] = res.averaged_steps;
      j["valid_recall"] = res.averaged_score.recall;
      j["valid_fpr"] = res.averaged_score.fpr;
      j["first_loss"] = res.loss_curve.empty() ? 0.0 : res.loss_curve.front();
      j["last_loss"] = res.loss_curve.empty() ? 0.0 : res.loss_curve.back();
      summaries[k] = std::move(j);
      Log("[train] " + std::string(DetectorKindName(kind)) + " valid recall " + Fmt2(res.averaged_score.recall) +
          " fpr " + Fmt2(res.averaged_score.fpr));
    });
    OJson all;
    std::vector<std::string> outputs;
    for (std::size_t k = 0; k < kAllDetectorKinds.size(); ++k) {
      all[std::string(DetectorKindName(kAllDetectorKinds[k]))] = summaries[k];
      outputs.push_back(ModelPath(kAllDetectorKinds[k]));
    }
    WriteTextFile(Path("models/training.json"), all.dump(2) + "\n");
    outputs.push_back("models/training.json");
    return outputs;
  }

  // ---- calibrate ------------------------------------------------------------

  static OJson ThresholdJson(const Threshold& t) {
    return OJson{{"tau", t.tau}, {"fpr", t.achieved_fpr}, {"recall", t.achieved_recall}};
  }

  std::vector<std::string> StageCalibrate() {
    const double alpha = cfg_.baseline.alpha, beta = cfg_.baseline.beta;
    auto collect = [&](const std::vector<Item>& items, bool perception) {
      std::pair<std::vector<double>, std::vector<bool>> out;
      for (const auto& it : items) {
        const auto conf = WordConfidences(it.bundle.decode, alpha);
        const auto gold = perception ? detail::PercWordGold(it.bundle.decode, it.labels) : detail::WordGold(it.labels);
        out.first.insert(out.first.end(), conf.begin(), conf.end());
        out.second.insert(out.second.end(), gold.begin(), gold.end());
      }
      return out;
    };
    const auto clean = LoadItems(Stage::kCalibrate, "manifests/clean.jsonl", {Split::kValid});
    const auto dist = LoadItems(Stage::kCalibrate, "manifests/distorted.jsonl", {Split::kValid});
    const auto [cc, cg] = collect(clean, false);
    const auto [dc, dg] = collect(dist, true);
    OJson j;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["comprehension"] = ThresholdJson(CalibrateThreshold(cc, cg, beta));
    j["perception"] = ThresholdJson(CalibrateThreshold(dc, dg, beta));
    WriteTextFile(Path("models/baseline.json"), j.dump(2) + "\n");
    return {"models/baseline.json"};
  }

  // ---- detect ---------------------------------------------------------------

  std::vector<std::string> StageDetect() {
    const auto comp = LoadDetector(Stage::kDetect, DetectorKind::kComprehension);
    const auto perc = LoadDetector(Stage::kDetect, DetectorKind::kPerception);
    const auto del = LoadDetector(Stage::kDetect, DetectorKind::kDeletion);
    const auto ev = LoadDetector(Stage::kDetect, DetectorKind::kEvent);
    std::vector<std::string> lines;
    for (const char* manifest : {"manifests/clean.jsonl", "manifests/distorted.jsonl"}) {
      const auto m = ReadManifestFor(Stage::kDetect, manifest);
      std::vector<const ManifestRecord*> test;
      for (const auto& r : m.records)
        if (r.split == Split::kTest) test.push_back(&r);
      std::vector<std::string> out(test.size());
      ParallelFor(test.size(), opt_.jobs, [&](std::size_t i) {
        const auto& r = *test[i];
        const auto d = ReadBundle(Path(r.decode_path)).decode;
        const auto c = PredictTokenErrors(comp, d);
        const auto p = PredictTokenErrors(perc, d);
        const auto dl = PredictDeletions(del, d);
        const auto e = PredictEvents(ev, d);
        const auto profile = Fuse(c, p, dl, e, d);
        OJson j;
        j["utterance_id"] = r.utterance_id;
        j["condition"] = r.condition;
        j["comprehension"] = detail::BoolsJson(c);
        j["perception"] = detail::BoolsJson(p);
        OJson dj = OJson::array();
        for (const auto& x : dl) dj.push_back({x.start_frame, x.end_frame});
        j["deletions"] = dj;
        OJson ej = OJson::array();
        for (auto x : e) ej.push_back(static_cast<int>(x));
        j["events"] = ej;
        j["tagged"] = TagTranscript(d, profile).text;
        out[i] = j.dump();
      });
      lines.insert(lines.end(), out.begin(), out.end());
    }
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    WriteTextFile(Path("manifests/detections.jsonl"), text);
    return {"manifests/detections.jsonl"};
  }

  // ---- clarify --------------------------------------------------------------

  std::shared_ptr<ChatTransport> Chat() const {
    ChatConfig cc;
    cc.endpoint = cfg_.llm.endpoint;
    cc.model = cfg_.llm.model;
    cc.api_key_env = cfg_.llm.api_key_env;
    cc.timeout_s = cfg_.llm.timeout_s;
    cc.max_retries = cfg_.llm.max_retries;
    return std::make_shared<HttpChatClient>(cc);
  }

  std::vector<std::string> StageClarify() {
    std::string text;
    for (const auto& s : Sessions(cfg_.clarify)) text += SessionToJsonl(s);
    WriteTextFile(Path("sessions/sessions.jsonl"), text);
    return {"sessions/sessions.jsonl"};
  }

 public:
  // Clarification sessions over the test split with the given settings,
  // reusing this run's decodes and detectors. Writes nothing.
  std::vector<ClarifySession> Sessions(const ClarifyConfig& cc) {
    const auto corpus = ReadCorpus(Stage::kClarify);
    const auto index = IndexOf(corpus);
    auto items = LoadItems(Stage::kClarify, "manifests/distorted.jsonl", {Split::kTest});
    if (cc.max_sessions > 0 && static_cast<int>(items.size()) > cc.max_sessions) {
      std::vector<std::size_t> idx(items.size());
      std::iota(idx.begin(), idx.end(), 0);
      Rng r(Seed("clarify/subset"));
      Shuffle(idx, r);
      idx.resize(cc.max_sessions);
      std::sort(idx.begin(), idx.end());
      std::vector<Item> kept;
      for (auto i : idx) kept.push_back(std::move(items[i]));
      items = std::move(kept);
    }
    std::unique_ptr<DetectorPort> detectors;
    if (cc.detectors == "oracle") {
      detectors = std::make_unique<OracleDetectors>();
    } else {
      detectors = std::make_unique<ModelDetectors>(
          LoadDetector(Stage::kClarify, DetectorKind::kComprehension), LoadDetector(Stage::kClarify, DetectorKind::kPerception),
          LoadDetector(Stage::kClarify, DetectorKind::kDeletion), LoadDetector(Stage::kClarify, DetectorKind::kEvent));
    }
    const bool llm = cfg_.llm.enabled();
    std::shared_ptr<ChatTransport> chat = llm ? Chat() : nullptr;
    SessionOptions so;
    so.K = cc.K;
    so.mode = cc.text_bypass ? FeedbackMode::kTextBypass : FeedbackMode::kAcoustic;
    so.fidelity = cc.fidelity;
    so.seed = Seed("clarify");
    std::vector<ClarifySession> sessions(items.size());
    const int jobs = opt_.interactive ? 1 : opt_.jobs;
    ParallelFor(items.size(), jobs, [&](std::size_t i) {
      const auto& it = items[i];
      SessionInputs in;
      in.decode = AnalyzedDecode{it.bundle.decode, it.labels, it.bundle.track};
      UtteranceRef ref = corpus.at(index.at(SourceId(it.record))).utt;
      ref.id = it.record.utterance_id;
      in.reference = ref;
      in.detectors = detectors.get();
      in.channel = &Tx();
      std::unique_ptr<DialogueManagerPort> manager;
      if (llm && cfg_.llm.manager) manager = std::make_unique<LlmManager>(chat);
      else manager = std::make_unique<TemplatedManager>();
      std::unique_ptr<UserAgentPort> user;
      if (opt_.interactive) user = std::make_unique<TerminalUser>(*opt_.terminal_in, *opt_.terminal_out);
      else if (llm && cfg_.llm.user) user = std::make_unique<LlmUser>(chat);
      else user = std::make_unique<ScriptedUser>();
      sessions[i] = RunSession(in, *manager, *user, so);
    });
    return sessions;
  }

 private:

  // ---- eval -----------------------------------------------------------------

  std::vector<std::string> StageEval();
  std::vector<std::string> StageReport();

  fs::path root_;
  RunConfig cfg_;
  PipelineOptions opt_;
  std::string hash_;
  std::once_flag lex_once_, tx_once_;
  std::unique_ptr<Lexicon> lex_;
  std::unique_ptr<ToyTransducer> tx_;
};

}  // namespace cadr

#include "cadr/pipeline/evaluate.hpp"
