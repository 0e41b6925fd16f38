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

#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadr/core/error.hpp"
#include "cadr/core/io.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/detector/cnn.hpp"
#include "cadr/detector/train.hpp"
#include "cadr/distortion/distortion.hpp"
#include "cadr/transducer/lexicon.hpp"
#include "cadr/transducer/oracle.hpp"

namespace cadr {

inline constexpr int kConfigSchemaVersion = 1;

struct CorpusConfig {
  int n_utterances = 600;
  int min_words = 4;
  int max_words = 10;
  double hard_rate = 0.15;
  LexiconConfig lexicon;
  double train_fraction = 0.7;
  double valid_fraction = 0.1;
  bool keep_audio = false;
};

struct DistortionConfig {
  std::vector<std::string> conditions;
  int subset_divisor = 6;  // each condition subset holds n_utterances / divisor
  bool external_codec = false;
  int assets_per_kind = 4;

  DistortionConfig() {
    for (auto k : kAllDistortionKinds) conditions.emplace_back(DistortionKindName(k));
  }
};

struct DetectorsConfig {
  CnnConfig cnn;
  TrainConfig train;

  DetectorsConfig() {
    cnn.hidden = 32;
    train.lr = 1e-3;
    train.epochs = 20;
    train.checkpoint_interval = 20;
  }
};

struct BaselineConfig {
  double alpha = 0.33;
  double beta = 0.05;
  std::string fpr_matching = "per_condition";  // or "pooled"
};

struct ClarifyConfig {
  int K = 3;
  double fidelity = 1.0;
  bool text_bypass = false;
  std::string detectors = "model";  // or "oracle"
  int max_sessions = 0;             // 0 = every test utterance
};

struct LlmConfig {
  std::string endpoint;  // empty = hermetic run
  std::string model;
  std::string api_key_env = "CADR_LLM_API_KEY";
  double timeout_s = 60.0;
  int max_retries = 3;
  bool manager = true;
  bool user = false;
  bool judge = true;

  bool enabled() const { return !endpoint.empty(); }
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 1;
  CorpusConfig corpus;
  DistortionConfig distortion;
  OracleConfig oracle;
  DetectorsConfig detectors;
  BaselineConfig baseline;
  ClarifyConfig clarify;
  LlmConfig llm;
};

// ---------------------------------------------------------------------------
// JSON reading with type checks and unknown-key rejection.

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const nlohmann::ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_, "expected an object");
  }

  bool Has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void Get(const std::string& key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    const std::string where = Field(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(where, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ValidationError(where, "expected a nonnegative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ValidationError(where, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(where, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(where, "expected a string");
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw ValidationError(where, "expected an array of strings");
      for (const auto& e : v)
        if (!e.is_string()) throw ValidationError(where, "expected an array of strings");
    }
    out = v.template get<T>();
  }

  ObjectReader Child(const std::string& key) {
    used_.insert(key);
    static const nlohmann::ordered_json kEmpty = nlohmann::ordered_json::object();
    return ObjectReader(j_.contains(key) ? j_.at(key) : kEmpty, Field(key));
  }

  void Finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ValidationError(Field(it.key()), "unknown key");
  }

  std::string Field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const nlohmann::ordered_json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline nlohmann::ordered_json ClassTableJson(const ClassTable& t) {
  nlohmann::ordered_json j;
  for (auto c : kAllEventClasses) j[std::string(EventClassName(c))] = t[static_cast<int>(c)];
  return j;
}

inline void ReadClassTable(ObjectReader r, ClassTable& t) {
  for (auto c : kAllEventClasses) r.Get(std::string(EventClassName(c)), t[static_cast<int>(c)]);
  r.Finish();
}

}  // namespace detail

inline nlohmann::ordered_json ToJson(const RunConfig& c) {
  using J = nlohmann::ordered_json;
  J j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  const auto& co = c.corpus;
  j["corpus"] = J{{"n_utterances", co.n_utterances},
                  {"min_words", co.min_words},
                  {"max_words", co.max_words},
                  {"hard_rate", co.hard_rate},
                  {"lexicon",
                   J{{"vocab_size", co.lexicon.vocab_size},
                     {"num_words", co.lexicon.num_words},
                     {"hard_word_fraction", co.lexicon.hard_word_fraction},
                     {"domain_piece_fraction", co.lexicon.domain_piece_fraction},
                     {"seed", co.lexicon.seed}}},
                  {"train_fraction", co.train_fraction},
                  {"valid_fraction", co.valid_fraction},
                  {"keep_audio", co.keep_audio}};
  const auto& d = c.distortion;
  j["distortion"] = J{{"conditions", d.conditions},
                      {"subset_divisor", d.subset_divisor},
                      {"external_codec", d.external_codec},
                      {"assets_per_kind", d.assets_per_kind}};
  const auto& o = c.oracle;
  j["oracle"] = J{{"vocab_size", o.vocab_size},
                  {"d_model", o.d_model},
                  {"codebook_seed", o.codebook_seed},
                  {"domain_shift", o.domain_shift},
                  {"noise_std", o.noise_std},
                  {"distortion_gain", o.distortion_gain},
                  {"temp_correct", o.temp_correct},
                  {"temp_perc", o.temp_perc},
                  {"temp_jitter", o.temp_jitter},
                  {"logit_noise", o.logit_noise},
                  {"p_perc", detail::ClassTableJson(o.p_perc)},
                  {"p_del", detail::ClassTableJson(o.p_del)},
                  {"p_comp_hard", o.p_comp_hard},
                  {"insertion_ratio", o.insertion_ratio}};
  J cnn = ToJson(c.detectors.cnn);
  cnn.erase("input_dim");  // follows oracle.d_model
  cnn.erase("classes");    // fixed per detector kind
  J train = ToJson(c.detectors.train);
  train.erase("seed");     // derived from the run seed
  j["detectors"] = J{{"cnn", cnn}, {"train", train}};
  j["baseline"] = J{{"alpha", c.baseline.alpha}, {"beta", c.baseline.beta}, {"fpr_matching", c.baseline.fpr_matching}};
  j["clarify"] = J{{"K", c.clarify.K},
                   {"fidelity", c.clarify.fidelity},
                   {"text_bypass", c.clarify.text_bypass},
                   {"detectors", c.clarify.detectors},
                   {"max_sessions", c.clarify.max_sessions}};
  j["llm"] = J{{"endpoint", c.llm.endpoint},       {"model", c.llm.model},
               {"api_key_env", c.llm.api_key_env}, {"timeout_s", c.llm.timeout_s},
               {"max_retries", c.llm.max_retries}, {"manager", c.llm.manager},
               {"user", c.llm.user},               {"judge", c.llm.judge}};
  return j;
}

inline void ValidateConfig(const RunConfig& c) {
  auto fail = [](const std::string& f, const std::string& m) { throw ValidationError(f, m); };
  if (c.schema_version != kConfigSchemaVersion)
    fail("schema_version", "unsupported version " + std::to_string(c.schema_version));
  const auto& co = c.corpus;
  if (co.n_utterances < 1) fail("corpus.n_utterances", "must be positive");
  if (co.min_words < 1 || co.max_words < co.min_words) fail("corpus.min_words", "need 1 <= min_words <= max_words");
  if (!(co.hard_rate >= 0.0 && co.hard_rate <= 1.0)) fail("corpus.hard_rate", "outside [0,1]");
  if (co.lexicon.num_words < co.max_words) fail("corpus.lexicon.num_words", "fewer words than max_words");
  if (!(co.train_fraction > 0.0 && co.valid_fraction > 0.0 && co.train_fraction + co.valid_fraction < 1.0))
    fail("corpus.train_fraction", "train, valid and test shares must all be positive");
  const auto& d = c.distortion;
  if (d.conditions.empty()) fail("distortion.conditions", "empty condition list");
  std::set<std::string> seen;
  for (const auto& name : d.conditions) {
    DistortionKindFromName(name);
    if (!seen.insert(name).second) fail("distortion.conditions", "duplicate condition '" + name + "'");
  }
  if (d.subset_divisor < 1) fail("distortion.subset_divisor", "must be positive");
  if (co.n_utterances / d.subset_divisor < 1)
    fail("corpus.n_utterances", "too small for one utterance per condition subset");
  if (d.assets_per_kind < 1) fail("distortion.assets_per_kind", "must be positive");
  c.oracle.Validate();
  if (c.oracle.vocab_size != co.lexicon.vocab_size)
    fail("oracle.vocab_size", "differs from corpus.lexicon.vocab_size");
  c.detectors.cnn.Validate();
  c.detectors.train.Validate();
  if (!(c.baseline.alpha > 0.0 && c.baseline.alpha < 1.0)) fail("baseline.alpha", "outside (0,1)");
  if (!(c.baseline.beta > 0.0 && c.baseline.beta < 1.0)) fail("baseline.beta", "outside (0,1)");
  if (c.baseline.fpr_matching != "per_condition" && c.baseline.fpr_matching != "pooled")
    fail("baseline.fpr_matching", "must be per_condition or pooled");
  if (c.clarify.K < 1) fail("clarify.K", "must be at least 1");
  if (!(c.clarify.fidelity >= 0.0 && c.clarify.fidelity <= 1.0)) fail("clarify.fidelity", "outside [0,1]");
  if (c.clarify.detectors != "model" && c.clarify.detectors != "oracle")
    fail("clarify.detectors", "must be model or oracle");
  if (c.clarify.max_sessions < 0) fail("clarify.max_sessions", "must be nonnegative");
  if (c.llm.enabled() && c.llm.model.empty()) fail("llm.model", "an endpoint needs a model name");
  if (!(c.llm.timeout_s > 0.0)) fail("llm.timeout_s", "must be positive");
  if (c.llm.max_retries < 0) fail("llm.max_retries", "must be nonnegative");
}

// Defaults overlaid with `j`; unknown keys and type mismatches are errors.
inline RunConfig RunConfigFromJson(const nlohmann::ordered_json& j) {
  RunConfig c;
  detail::ObjectReader r(j, "");
  r.Get("schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion)
    throw ValidationError("schema_version", "unsupported version " + std::to_string(c.schema_version));
  r.Get("seed", c.seed);
  {
    auto s = r.Child("corpus");
    auto& co = c.corpus;
    s.Get("n_utterances", co.n_utterances);
    s.Get("min_words", co.min_words);
    s.Get("max_words", co.max_words);
    s.Get("hard_rate", co.hard_rate);
    auto l = s.Child("lexicon");
    l.Get("vocab_size", co.lexicon.vocab_size);
    l.Get("num_words", co.lexicon.num_words);
    l.Get("hard_word_fraction", co.lexicon.hard_word_fraction);
    l.Get("domain_piece_fraction", co.lexicon.domain_piece_fraction);
    l.Get("seed", co.lexicon.seed);
    l.Finish();
    s.Get("train_fraction", co.train_fraction);
    s.Get("valid_fraction", co.valid_fraction);
    s.Get("keep_audio", co.keep_audio);
    s.Finish();
  }
  {
    auto s = r.Child("distortion");
    s.Get("conditions", c.distortion.conditions);
    s.Get("subset_divisor", c.distortion.subset_divisor);
    s.Get("external_codec", c.distortion.external_codec);
    s.Get("assets_per_kind", c.distortion.assets_per_kind);
    s.Finish();
  }
  {
    auto s = r.Child("oracle");
    auto& o = c.oracle;
    s.Get("vocab_size", o.vocab_size);
    s.Get("d_model", o.d_model);
    s.Get("codebook_seed", o.codebook_seed);
    s.Get("domain_shift", o.domain_shift);
    s.Get("noise_std", o.noise_std);
    s.Get("distortion_gain", o.distortion_gain);
    s.Get("temp_correct", o.temp_correct);
    s.Get("temp_perc", o.temp_perc);
    s.Get("temp_jitter", o.temp_jitter);
    s.Get("logit_noise", o.logit_noise);
    if (s.Has("p_perc")) detail::ReadClassTable(s.Child("p_perc"), o.p_perc);
    else s.Child("p_perc");
    if (s.Has("p_del")) detail::ReadClassTable(s.Child("p_del"), o.p_del);
    else s.Child("p_del");
    s.Get("p_comp_hard", o.p_comp_hard);
    s.Get("insertion_ratio", o.insertion_ratio);
    s.Finish();
  }
  {
    auto s = r.Child("detectors");
    auto n = s.Child("cnn");
    auto& cnn = c.detectors.cnn;
    n.Get("layers", cnn.layers);
    n.Get("kernel", cnn.kernel);
    n.Get("hidden", cnn.hidden);
    n.Get("dropout", cnn.dropout);
    n.Finish();
    auto t = s.Child("train");
    auto& tr = c.detectors.train;
    t.Get("lr", tr.lr);
    t.Get("weight_decay", tr.weight_decay);
    t.Get("beta1", tr.beta1);
    t.Get("beta2", tr.beta2);
    t.Get("eps", tr.eps);
    t.Get("epochs", tr.epochs);
    t.Get("batch", tr.batch);
    t.Get("checkpoint_interval", tr.checkpoint_interval);
    t.Get("top_k", tr.top_k);
    t.Get("class_balanced", tr.class_balanced);
    t.Finish();
    s.Finish();
  }
  {
    auto s = r.Child("baseline");
    s.Get("alpha", c.baseline.alpha);
    s.Get("beta", c.baseline.beta);
    s.Get("fpr_matching", c.baseline.fpr_matching);
    s.Finish();
  }
  {
    auto s = r.Child("clarify");
    s.Get("K", c.clarify.K);
    s.Get("fidelity", c.clarify.fidelity);
    s.Get("text_bypass", c.clarify.text_bypass);
    s.Get("detectors", c.clarify.detectors);
    s.Get("max_sessions", c.clarify.max_sessions);
    s.Finish();
  }
  {
    auto s = r.Child("llm");
    auto& l = c.llm;
    s.Get("endpoint", l.endpoint);
    s.Get("model", l.model);
    s.Get("api_key_env", l.api_key_env);
    s.Get("timeout_s", l.timeout_s);
    s.Get("max_retries", l.max_retries);
    s.Get("manager", l.manager);
    s.Get("user", l.user);
    s.Get("judge", l.judge);
    s.Finish();
  }
  r.Finish();
  c.detectors.cnn.input_dim = c.oracle.d_model;
  ValidateConfig(c);
  return c;
}

inline RunConfig LoadRunConfig(const fs::path& path) {
  const auto j = nlohmann::ordered_json::parse(ReadTextFile(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError("config", "not valid JSON: " + path.string());
  return RunConfigFromJson(j);
}

inline std::string Hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Content hash of the resolved configuration.
inline std::string ConfigHash(const RunConfig& c) { return Hex64(Fnv1a(ToJson(c).dump())); }

}  // namespace cadr
