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

// Evaluation and report stages of Pipeline.

#include "cadr/pipeline/pipeline.hpp"

namespace cadr {

namespace detail {

inline OJson ThresholdReportJson(const Threshold& t) {
  return OJson{{"tau", t.tau}, {"recall", t.achieved_recall}, {"fpr", t.achieved_fpr}};
}

inline bool BothClasses(const std::vector<bool>& gold) {
  const auto pos = std::count(gold.begin(), gold.end(), true);
  return pos > 0 && pos < static_cast<long>(gold.size());
}

inline double Num(const OJson& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? std::nan("") : v.get<double>();
}

}  // namespace detail

inline std::vector<std::string> Pipeline::StageEval() {
  using detail::OJson;
  const Stage S = Stage::kEval;
  const double alpha = cfg_.baseline.alpha;
  OJson m;
  m["config_hash"] = hash_;
  Require(S, "manifests/label_audit.json");
  m["labels"] = OJson::parse(ReadTextFile(Path("manifests/label_audit.json")));
  Require(S, "models/baseline.json");
  const auto baseline = OJson::parse(ReadTextFile(Path("models/baseline.json")));

  Require(S, "manifests/detections.jsonl");
  std::map<std::string, OJson> det;
  for (const auto& line : ReadLines(Path("manifests/detections.jsonl"))) {
    auto j = OJson::parse(line);
    auto id = j.at("utterance_id").get<std::string>();
    det[std::move(id)] = std::move(j);
  }
  auto detection = [&](const std::string& id) -> const OJson& {
    const auto it = det.find(id);
    if (it == det.end()) throw StageError("eval", "manifests/detections.jsonl", "no detections for " + id);
    return it->second;
  };

  const auto clean = LoadItems(S, "manifests/clean.jsonl", {Split::kTest});
  const auto dist = LoadItems(S, "manifests/distorted.jsonl", {Split::kTest});

  // Comprehension on clean speech against the entropy baseline.
  {
    std::vector<double> conf;
    std::vector<bool> gold, pred;
    for (const auto& it : clean) {
      const auto& d = it.bundle.decode;
      const auto c = WordConfidences(d, alpha);
      const auto g = detail::WordGold(it.labels);
      const auto p = WordFlagsFromTokens(detail::BoolsFromJson(detection(it.record.utterance_id).at("comprehension")), d.words);
      conf.insert(conf.end(), c.begin(), c.end());
      gold.insert(gold.end(), g.begin(), g.end());
      pred.insert(pred.end(), p.begin(), p.end());
    }
    const auto rep = MakeDetectionReport(pred, gold, Level::kWord);
    OJson j;
    j["utterances"] = clean.size();
    j["words"] = gold.size();
    j["detector"] = detail::ReportJson(rep);
    const double tau = baseline.at("comprehension").at("tau");
    j["baseline_calibrated"] = detail::ReportJson(MakeDetectionReport(FlagByThreshold(conf, tau), gold, Level::kWord));
    j["baseline_calibrated"]["tau"] = tau;
    j["baseline_matched"] = nullptr;
    j["recall_ratio"] = nullptr;
    if (detail::BothClasses(gold)) {
      const auto th = MatchFpr(conf, gold, rep.fpr());
      j["baseline_matched"] = detail::ThresholdReportJson(th);
      if (th.achieved_recall > 0.0) j["recall_ratio"] = rep.recall() / th.achieved_recall;
    }
    m["comprehension"] = j;
  }

  // Clean decodes of the test sources, for deletion scoring.
  std::map<std::string, const DecodeResult*> clean_of;
  for (const auto& it : clean) clean_of[it.record.utterance_id] = &it.bundle.decode;

  // Perception and deletion per condition.
  {
    struct CondData {
      std::vector<double> conf;
      std::vector<bool> gold, pred;
      DetectionReport deletion;
      int utterances = 0;
    };
    std::map<std::string, CondData> by;
    EventReport events;
    for (const auto& it : dist) {
      const auto& d = it.bundle.decode;
      const auto& dj = detection(it.record.utterance_id);
      auto& c = by[it.record.condition];
      ++c.utterances;
      const auto conf = WordConfidences(d, alpha);
      const auto gold = detail::PercWordGold(d, it.labels);
      const auto pred = WordFlagsFromTokens(detail::BoolsFromJson(dj.at("perception")), d.words);
      c.conf.insert(c.conf.end(), conf.begin(), conf.end());
      c.gold.insert(c.gold.end(), gold.begin(), gold.end());
      c.pred.insert(c.pred.end(), pred.begin(), pred.end());
      DeletionEvents evs;
      for (const auto& e : dj.at("deletions")) evs.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
      const auto src = clean_of.find(SourceId(it.record));
      if (src == clean_of.end()) throw StageError("eval", it.record.decode_path, "clean decode of the source is not in the test split");
      c.deletion += detail::DeletionWordReport(*src->second, it.labels, evs);
      const auto tgt = TargetSequence(d, it.labels, it.bundle.track, DetectorKind::kEvent);
      const auto& pe = dj.at("events");
      if (pe.size() != tgt.size()) throw StageError("eval", "manifests/detections.jsonl", "event length mismatch");
      for (std::size_t t = 0; t < tgt.size(); ++t)
        events.Add(EventClassFromInt(tgt[t]), EventClassFromInt(pe[t].get<int>()));
    }
    // Pooled data, used for pooled FPR matching and the summary row.
    CondData all;
    for (const auto& cond : cfg_.distortion.conditions) {
      const auto it = by.find(cond);
      if (it == by.end()) continue;
      all.conf.insert(all.conf.end(), it->second.conf.begin(), it->second.conf.end());
      all.gold.insert(all.gold.end(), it->second.gold.begin(), it->second.gold.end());
      all.pred.insert(all.pred.end(), it->second.pred.begin(), it->second.pred.end());
      all.deletion += it->second.deletion;
      all.utterances += it->second.utterances;
    }
    const auto pooled_perc = MakeDetectionReport(all.pred, all.gold, Level::kWord);
    std::optional<double> pooled_tau;
    if (cfg_.baseline.fpr_matching == "pooled" && detail::BothClasses(all.gold))
      pooled_tau = MatchFpr(all.conf, all.gold, pooled_perc.fpr()).tau;

    OJson conds = OJson::array();
    double recall_sum = 0.0;
    int recall_n = 0;
    OJson missing_recall = nullptr;
    for (const auto& cond : cfg_.distortion.conditions) {
      const auto it = by.find(cond);
      OJson j;
      j["condition"] = cond;
      if (it == by.end()) {
        j["utterances"] = 0;
        conds.push_back(j);
        continue;
      }
      const auto& c = it->second;
      const auto perc = MakeDetectionReport(c.pred, c.gold, Level::kWord);
      j["utterances"] = c.utterances;
      j["words"] = c.gold.size();
      j["perception"] = detail::ReportJson(perc);
      j["baseline_matched"] = nullptr;
      if (pooled_tau) {
        j["baseline_matched"] = detail::ReportJson(MakeDetectionReport(FlagByThreshold(c.conf, *pooled_tau), c.gold, Level::kWord));
        j["baseline_matched"]["tau"] = *pooled_tau;
      } else if (cfg_.baseline.fpr_matching == "per_condition" && detail::BothClasses(c.gold)) {
        j["baseline_matched"] = detail::ThresholdReportJson(MatchFpr(c.conf, c.gold, perc.fpr()));
      }
      j["deletion"] = detail::ReportJson(c.deletion);
      if (c.deletion.tp + c.deletion.fn > 0) {
        recall_sum += c.deletion.recall();
        ++recall_n;
        if (cond == DistortionKindName(DistortionKind::kMissing)) missing_recall = c.deletion.recall();
      }
      conds.push_back(j);
    }
    m["conditions"] = conds;
    OJson pooled;
    pooled["utterances"] = all.utterances;
    pooled["perception"] = detail::ReportJson(pooled_perc);
    pooled["baseline_matched"] = nullptr;
    if (detail::BothClasses(all.gold)) {
      const auto th = MatchFpr(all.conf, all.gold, pooled_perc.fpr());
      pooled["baseline_matched"] = detail::ThresholdReportJson(th);
    }
    const double ptau = baseline.at("perception").at("tau");
    pooled["baseline_calibrated"] = detail::ReportJson(MakeDetectionReport(FlagByThreshold(all.conf, ptau), all.gold, Level::kWord));
    pooled["baseline_calibrated"]["tau"] = ptau;
    pooled["deletion"] = detail::ReportJson(all.deletion);
    pooled["deletion_average_recall"] = recall_n ? OJson(recall_sum / recall_n) : OJson(nullptr);
    pooled["deletion_missing_recall"] = missing_recall;
    m["pooled"] = pooled;

    OJson ev;
    OJson names = OJson::array();
    for (auto c : kAllEventClasses) names.push_back(std::string(EventClassName(c)));
    ev["classes"] = names;
    OJson counts = OJson::array(), pct = OJson::array(), f1 = OJson::array();
    const auto rows = events.RowNormalized();
    for (int g = 0; g < kNumEventClasses; ++g) {
      counts.push_back(events.counts[g]);
      pct.push_back(rows[g]);
      f1.push_back(events.ClassReport(EventClassFromInt(g)).f1());
    }
    ev["counts"] = counts;
    ev["row_percent"] = pct;
    ev["f1"] = f1;
    ev["macro_f1"] = events.MacroF1();
    m["events"] = ev;
  }

  // Clarification sessions.
  Require(S, "sessions/sessions.jsonl");
  const auto sessions = SessionsFromJsonl(ReadTextFile(Path("sessions/sessions.jsonl")));
  {
    const auto corpus = ReadCorpus(S);
    const auto index = IndexOf(corpus);
    auto reference = [&](const std::string& id) -> const UtteranceRef& {
      const auto at = id.find('@');
      return corpus.at(index.at(at == std::string::npos ? id : id.substr(0, at))).utt;
    };
    const int K = cfg_.clarify.K;
    OJson c;
    c["sessions"] = sessions.size();
    c["K"] = K;
    c["mode"] = cfg_.clarify.text_bypass ? "text_bypass" : "acoustic";
    c["fidelity"] = cfg_.clarify.fidelity;
    c["detectors"] = cfg_.clarify.detectors;
    if (!sessions.empty()) {
      const auto st = ComputeRoundStats(sessions, K);
      c["zero_baseline_sessions"] = st.zero_baseline_sessions;
      OJson rounds = OJson::array();
      for (int k = 0; k <= K; ++k)
        rounds.push_back({{"round", k},
                          {"wer", st.wer[k]},
                          {"werr", st.werr[k] ? OJson(*st.werr[k]) : OJson(nullptr)},
                          {"mean_session_werr", st.mean_session_werr[k]},
                          {"improved_rate", st.improved_rate[k]},
                          {"final_rate", st.final_rate[k]},
                          {"degradation_fpr", st.degradation_fpr[k]}});
      c["rounds"] = rounds;
    }
    std::map<std::string, int> term;
    for (auto t : {Termination::kCleanDetected, Termination::kMaxRounds, Termination::kUserAbort})
      term[std::string(TerminationName(t))] = 0;
    long violations = 0, leaks = 0, quarantine = 0;
    for (const auto& s : sessions) {
      ++term[std::string(TerminationName(s.termination))];
      for (int k = 0; k < K; ++k) violations += s.WerAfter(k + 1) > s.WerAfter(k);
      leaks += static_cast<long>(AuditLeakage(s, reference(s.utterance_id).words).size());
      for (const auto& r : s.rounds) quarantine += static_cast<long>(r.quarantine_violations.size());
    }
    c["terminations"] = OJson(term);
    c["monotonicity_violations"] = violations;
    c["leaked_ngrams"] = leaks;
    c["quarantine_violations"] = quarantine;

    // Judge scores of the first-pass and final transcripts.
    const bool llm_judge = cfg_.llm.enabled() && cfg_.llm.judge;
    std::unique_ptr<JudgePort> judge;
    if (llm_judge) judge = std::make_unique<LlmJudge>(Chat());
    else judge = std::make_unique<MockJudge>();
    std::vector<int> initial(sessions.size()), final_(sessions.size());
    ParallelFor(sessions.size() * 2, opt_.jobs, [&](std::size_t i) {
      const auto& s = sessions[i / 2];
      const auto& hyp = i % 2 ? s.final_hypothesis : s.initial_hypothesis;
      const MajItem item{std::string(kMajInstruction), JoinWords(reference(s.utterance_id).words), JoinWords(hyp)};
      (i % 2 ? final_ : initial)[i / 2] = MajScore(item, *judge);
    });
    auto mean = [](const std::vector<int>& v) {
      return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    c["maj"] = {{"judge", llm_judge ? cfg_.llm.model : std::string("mock")},
                {"prompt_version", std::string(kMajPromptVersion)},
                {"initial", mean(initial)},
                {"final", mean(final_)}};
    m["clarify"] = c;
  }

  WriteTextFile(Path("reports/metrics.json"), m.dump(2) + "\n");
  return {"reports/metrics.json"};
}

inline std::vector<std::string> Pipeline::StageReport() {
  using detail::Num;
  using detail::OJson;
  Require(Stage::kReport, "reports/metrics.json");
  const auto m = OJson::parse(ReadTextFile(Path("reports/metrics.json")));
  auto pct = [](const OJson& j, const char* key) {
    if (j.is_null()) return std::string("n/a");
    return Pct2(Num(j, key));
  };
  std::vector<Table> tables;

  Table t1{"perception_by_condition", "Perception and deletion detection by condition (word level, %)",
           {"Condition", "Utterances", "Perception Recall", "Perception FPR", "Entropy Recall", "Entropy FPR",
            "Deletion Recall", "Deletion FPR"},
           {}};
  for (const auto& c : m.at("conditions")) {
    if (c.at("utterances").get<int>() == 0) continue;
    const auto& del = c.at("deletion");
    const bool has_pos = del.at("tp").get<long>() + del.at("fn").get<long>() > 0;
    t1.AddRow({c.at("condition").get<std::string>(), std::to_string(c.at("utterances").get<int>()),
               pct(c.at("perception"), "recall"), pct(c.at("perception"), "fpr"),
               pct(c.at("baseline_matched"), "recall"), pct(c.at("baseline_matched"), "fpr"),
               has_pos ? pct(del, "recall") : "n/a", pct(del, "fpr")});
  }
  const auto& pooled = m.at("pooled");
  t1.AddRow({"All", std::to_string(pooled.at("utterances").get<int>()), pct(pooled.at("perception"), "recall"),
             pct(pooled.at("perception"), "fpr"), pct(pooled.at("baseline_matched"), "recall"),
             pct(pooled.at("baseline_matched"), "fpr"), pct(pooled.at("deletion"), "recall"),
             pct(pooled.at("deletion"), "fpr")});
  tables.push_back(t1);

  Table t2{"detectors_vs_baseline", "Detectors against the entropy baseline at matched FPR (word level, %)",
           {"Error Type", "Method", "Recall", "FPR"},
           {}};
  const auto& comp = m.at("comprehension");
  t2.AddRow({"Comprehension", "Detector", pct(comp.at("detector"), "recall"), pct(comp.at("detector"), "fpr")});
  t2.AddRow({"Comprehension", "Entropy (matched FPR)", pct(comp.at("baseline_matched"), "recall"),
             pct(comp.at("baseline_matched"), "fpr")});
  t2.AddRow({"Comprehension", "Entropy (calibrated)", pct(comp.at("baseline_calibrated"), "recall"),
             pct(comp.at("baseline_calibrated"), "fpr")});
  t2.AddRow({"Perception", "Detector", pct(pooled.at("perception"), "recall"), pct(pooled.at("perception"), "fpr")});
  t2.AddRow({"Perception", "Entropy (matched FPR)", pct(pooled.at("baseline_matched"), "recall"),
             pct(pooled.at("baseline_matched"), "fpr")});
  t2.AddRow({"Deletion", "Detector", pct(pooled.at("deletion"), "recall"), pct(pooled.at("deletion"), "fpr")});
  t2.AddRow({"Deletion", "Detector, average over conditions",
             pooled.at("deletion_average_recall").is_null() ? "n/a" : Pct2(pooled.at("deletion_average_recall").get<double>()), ""});
  t2.AddRow({"Deletion", "Detector, Missing condition",
             pooled.at("deletion_missing_recall").is_null() ? "n/a" : Pct2(pooled.at("deletion_missing_recall").get<double>()), ""});
  tables.push_back(t2);

  const auto& ev = m.at("events");
  Table t3{"event_confusion", "Distortion event confusion (token level, row %, macro-F1 " +
                                  Fmt2(100.0 * ev.at("macro_f1").get<double>()) + ")",
           {"Gold \\ Predicted"},
           {}};
  for (const auto& n : ev.at("classes")) t3.header.push_back(n.get<std::string>());
  t3.header.push_back("F1");
  for (int g = 0; g < kNumEventClasses; ++g) {
    std::vector<std::string> row{ev.at("classes")[g].get<std::string>()};
    for (int p = 0; p < kNumEventClasses; ++p) row.push_back(Fmt2(ev.at("row_percent")[g][p].get<double>()));
    row.push_back(Pct2(ev.at("f1")[g].get<double>()));
    t3.AddRow(row);
  }
  tables.push_back(t3);

  const auto& cl = m.at("clarify");
  Table t4{"clarification_rounds",
           "WER per clarification step (" + cl.at("mode").get<std::string>() + ", fidelity " +
               Fmt2(cl.at("fidelity").get<double>()) + ", " + std::to_string(cl.at("sessions").get<int>()) +
               " sessions, %)",
           {"Step", "WER", "WERR", "Improved", "Final Rate", "Degraded"},
           {}};
  if (cl.contains("rounds"))
    for (const auto& r : cl.at("rounds"))
      t4.AddRow({std::to_string(r.at("round").get<int>()), Pct2(r.at("wer").get<double>()),
                 r.at("werr").is_null() ? "n/a" : Pct2(r.at("werr").get<double>()),
                 Pct2(r.at("improved_rate").get<double>()), Pct2(r.at("final_rate").get<double>()),
                 Pct2(r.at("degradation_fpr").get<double>())});
  tables.push_back(t4);

  const auto& maj = cl.at("maj");
  Table t5{"maj_scores", "Judge scores (" + maj.at("judge").get<std::string>() + ", " +
                             maj.at("prompt_version").get<std::string>() + ")",
           {"Transcript", "MaJ"},
           {}};
  t5.AddRow({"First pass", Fmt2(maj.at("initial").get<double>())});
  t5.AddRow({"After clarification", Fmt2(maj.at("final").get<double>())});
  tables.push_back(t5);

  const auto& lab = m.at("labels");
  const auto& term = cl.at("terminations");
  std::string md = "# Run report\n\nConfiguration `" + m.at("config_hash").get<std::string>() + "`.\n\n";
  md += "Label round-trip: " + std::to_string(lab.at("clean_mismatches").get<int>()) + " of " +
        std::to_string(lab.at("clean_utterances").get<int>()) + " clean and " +
        std::to_string(lab.at("distorted_mismatches").get<int>()) + " of " +
        std::to_string(lab.at("distorted_utterances").get<int>()) + " distorted label sets differ from the channel.\n\n";
  md += "Sessions: " + std::to_string(term.at("clean_detected").get<int>()) + " clean_detected, " +
        std::to_string(term.at("max_rounds").get<int>()) + " max_rounds, " +
        std::to_string(term.at("user_abort").get<int>()) + " user_abort. Monotonicity violations: " +
        std::to_string(cl.at("monotonicity_violations").get<long>()) + ". Leaked reference trigrams: " +
        std::to_string(cl.at("leaked_ngrams").get<long>()) + ". Quarantine violations: " +
        std::to_string(cl.at("quarantine_violations").get<long>()) + ".\n";
  std::vector<std::string> outputs{"reports/report.md"};
  for (const auto& t : tables) {
    md += "\n" + ToMarkdown(t);
    const std::string rel = "reports/" + t.name + ".csv";
    WriteTextFile(Path(rel), ToCsv(t));
    outputs.push_back(rel);
  }
  WriteTextFile(Path("reports/report.md"), md);
  return outputs;
}

}  // namespace cadr
