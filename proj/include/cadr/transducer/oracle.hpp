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
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cadr/core/error.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/core/types.hpp"
#include "cadr/transducer/codebook.hpp"
#include "cadr/transducer/lexicon.hpp"
#include "cadr/transducer/timeline.hpp"

namespace cadr {

using ClassTable = std::array<double, kNumEventClasses>;  // indexed by EventClass

struct OracleConfig {
  int vocab_size = kDefaultVocabSize;
  int d_model = kDefaultModelDim;
  std::uint64_t codebook_seed = 7;
  double domain_shift = 0.3;
  double noise_std = 0.05;
  double distortion_gain = 1.0;
  double temp_correct = 0.04;
  double temp_perc = 0.5;
  double temp_jitter = 0.15;  // lognormal spread of per-token temperature
  double logit_noise = 0.3;
  //                 Clean Interf Noise RIR  PktLoss Missing
  ClassTable p_perc{0.01, 0.30, 0.25, 0.10, 0.35, 0.10};
  ClassTable p_del{0.0, 0.03, 0.03, 0.02, 0.05, 0.80};
  double p_comp_hard = 0.5;
  double insertion_ratio = 0.1;  // p_ins = ratio * p_perc

  double p_ins(EventClass c) const { return insertion_ratio * p_perc[static_cast<int>(c)]; }

  void Validate() const {
    if (vocab_size < 16) throw ValidationError("vocab_size", "|V| must be at least 16");
    if (d_model < 1) throw ValidationError("d_model", "must be positive");
    if (!(temp_correct > 0.0)) throw ValidationError("temp_correct", "must be positive");
    if (!(temp_perc > temp_correct))
      throw ValidationError("temp_perc", "must exceed temp_correct");
    if (domain_shift < 0.0) throw ValidationError("domain_shift", "must be nonnegative");
    if (noise_std < 0.0) throw ValidationError("noise_std", "must be nonnegative");
    if (temp_jitter < 0.0 || logit_noise < 0.0)
      throw ValidationError("temp_jitter", "must be nonnegative");
    auto prob = [](double p, const std::string& f) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(f, "probability outside [0,1]");
    };
    for (int c = 0; c < kNumEventClasses; ++c) {
      const std::string name(EventClassName(static_cast<EventClass>(c)));
      prob(p_perc[c], "p_perc." + name);
      prob(p_del[c], "p_del." + name);
      // The clean decode must be a sub-outcome of every distorted decode.
      if (p_perc[c] < p_perc[0]) throw ValidationError("p_perc." + name, "below the Clean rate");
      if (p_del[c] < p_del[0]) throw ValidationError("p_del." + name, "below the Clean rate");
    }
    if (p_del[0] != 0.0) throw ValidationError("p_del.Clean", "clean audio cannot delete");
    prob(p_comp_hard, "p_comp_hard");
    prob(insertion_ratio * p_perc[5], "insertion_ratio");
    for (double p : p_perc) prob(insertion_ratio * p, "insertion_ratio");
  }
};

// Greedy token-and-duration decoder stand-in. The error channel is driven by
// uniform draws that are shared between the clean and distorted decodes of an
// utterance, so the clean hypothesis is always a sub-outcome of the distorted
// one and the returned labels are exactly those a differential labeler
// recovers from the two hypotheses.
class ToyTransducer {
 public:
  ToyTransducer(Lexicon lex, OracleConfig cfg)
      : lex_(std::move(lex)), cfg_(cfg), codebook_(lex_, cfg.d_model, cfg.codebook_seed, cfg.domain_shift) {
    cfg_.Validate();
    if (lex_.vocab_size() != cfg_.vocab_size)
      throw ValidationError("vocab_size", "lexicon and oracle disagree on |V|");
  }

  const Lexicon& lexicon() const { return lex_; }
  const OracleConfig& config() const { return cfg_; }
  const Codebook& codebook() const { return codebook_; }

  Timeline MakeTimeline(const UtteranceRef& utt) const { return SynthesizeTimeline(utt, lex_); }

  std::pair<DecodeResult, LabelSet> Decode(const UtteranceRef& utt, const FrameEventTrack& track,
                                           std::uint64_t seed) const {
    utt.Validate();
    const Timeline tl = MakeTimeline(utt);
    if (track.size() != tl.num_frames)
      throw ValidationError("track", "length " + std::to_string(track.size()) +
                                         " differs from timeline length " +
                                         std::to_string(tl.num_frames));
    const std::uint64_t useed = DeriveSeed(seed, utt.id);
    const Draws dr = DrawOutcomes(tl, useed);
    Plan plan = PlanDecode(utt, tl, track, dr);
    return Render(utt, tl, track, dr, plan, useed);
  }

  DecodeResult CleanReferenceDecode(const UtteranceRef& utt, std::uint64_t seed) const {
    const Timeline tl = MakeTimeline(utt);
    return Decode(utt, UniformTrack(tl.num_frames, EventClass::kClean), seed).first;
  }

 private:
  struct Draws {
    std::vector<double> u_del, u_comp, u_idx, u_ins, u_gap;  // per word (gap: per word boundary)
    std::vector<double> u_perc, z_temp;                       // per timeline token
  };

  enum class Cat { kMatch, kSub, kDel };

  struct Plan {
    std::vector<int> clean_ids;       // per timeline token
    std::vector<int> dist_ids;        // per timeline token
    std::vector<bool> clean_perc;     // flat distribution in clean decode
    std::vector<bool> dist_perc;      // flat distribution in distorted decode
    std::vector<Cat> cat;             // per word
    std::vector<bool> clean_wrong;    // clean word differs from reference
    std::vector<int> ins_token;       // per word, -1 when none
    std::vector<int> ins_frame;
  };

  Draws DrawOutcomes(const Timeline& tl, std::uint64_t useed) const {
    Rng rng(DeriveSeed(useed, "outcomes"));
    Draws d;
    for (int w = 0; w < tl.num_words(); ++w) {
      d.u_del.push_back(rng.Uniform());
      d.u_comp.push_back(rng.Uniform());
      d.u_idx.push_back(rng.Uniform());
      d.u_ins.push_back(rng.Uniform());
      for (int k = tl.word_first_token[w]; k < tl.word_first_token[w + 1]; ++k) {
        d.u_perc.push_back(rng.Uniform());
        d.z_temp.push_back(rng.Normal());
      }
      d.u_gap.push_back(rng.Uniform());
    }
    return d;
  }

  std::string WordText(const Timeline& tl, const std::vector<int>& ids, int w) const {
    std::string s;
    for (int k = tl.word_first_token[w]; k < tl.word_first_token[w + 1]; ++k)
      s += StripMarker(lex_.piece(ids[k]));
    return s;
  }

  // r-th confusable of `truth`, skipping `avoid`.
  int Replacement(int truth, int avoid, int r) const {
    for (int rank = 1, seen = 0; rank <= codebook_.num_ranks(truth); ++rank) {
      const int c = codebook_.Confusable(truth, rank);
      if (c == avoid) continue;
      if (++seen == r) return c;
    }
    return -1;
  }

  // Rewrites tokens `which` of word w in `ids` with the first confusable rank
  // that makes the word text unseen in `used`. Returns false and leaves ids
  // untouched if no rank works.
  bool ReplaceFresh(const Timeline& tl, std::vector<int>& ids, const std::vector<int>& truth,
                    const std::vector<int>& which, int w, const std::set<std::string>& used) const {
    const auto saved = ids;
    for (int r = 1; r <= Codebook::kConfusableRanks; ++r) {
      bool ok = true;
      for (int k : which) {
        const int c = Replacement(truth[k], saved[k] != truth[k] ? saved[k] : -1, r);
        if (c < 0) { ok = false; break; }
        ids[k] = c;
      }
      if (ok && !used.count(WordText(tl, ids, w))) return true;
      ids = saved;
    }
    return false;
  }

  Plan PlanDecode(const UtteranceRef& utt, const Timeline& tl, const FrameEventTrack& track,
                  const Draws& dr) const {
    const int W = tl.num_words();
    const int K = static_cast<int>(tl.tokens.size());
    std::vector<int> truth(K);
    for (int k = 0; k < K; ++k) truth[k] = tl.tokens[k].token_id;

    Plan p;
    p.clean_ids = truth;
    p.clean_perc.assign(K, false);
    p.dist_perc.assign(K, false);
    p.clean_wrong.assign(W, false);
    p.cat.assign(W, Cat::kMatch);
    p.ins_token.assign(W, -1);
    p.ins_frame.assign(W, -1);

    std::vector<bool> want_dist_perc(K);
    for (int k = 0; k < K; ++k) {
      const auto& t = tl.tokens[k];
      const EventClass c = track.Dominant(t.begin, t.end());
      p.clean_perc[k] = dr.u_perc[k] < cfg_.p_perc[0];
      want_dist_perc[k] = dr.u_perc[k] < cfg_.p_perc[static_cast<int>(c)];
    }

    // Clean hypothesis: comprehension substitutions on hard words, then rare
    // clean-audio perception slips. Changed words never coincide with any
    // reference word or earlier clean word.
    std::set<std::string> used(utt.words.begin(), utt.words.end());
    for (int w = 0; w < W; ++w) {
      const int first = tl.word_first_token[w], end = tl.word_first_token[w + 1];
      if (utt.hard_flags[w] && dr.u_comp[w] < cfg_.p_comp_hard) {
        const int n = end - first;
        const int k = first + std::min(n - 1, static_cast<int>(dr.u_idx[w] * n));
        ReplaceFresh(tl, p.clean_ids, truth, {k}, w, used);
      }
      std::vector<int> slips;
      for (int k = first; k < end; ++k)
        if (p.clean_perc[k]) slips.push_back(k);
      if (!slips.empty() && !ReplaceFresh(tl, p.clean_ids, truth, slips, w, used))
        for (int k : slips) p.clean_perc[k] = false;
      p.clean_wrong[w] = WordText(tl, p.clean_ids, w) != utt.words[w];
      used.insert(WordText(tl, p.clean_ids, w));
    }

    // Distorted outcome categories before canonicalisation.
    auto eligible = [&](int w) {
      int best = -1;
      for (int k = tl.word_first_token[w]; k < tl.word_first_token[w + 1]; ++k)
        if (!p.clean_perc[k] && (best < 0 || dr.u_perc[k] < dr.u_perc[best])) best = k;
      return best;
    };
    bool any_del = false;
    for (int w = 0; w < W; ++w) {
      const EventClass wc = track.Dominant(tl.word_begin[w], tl.word_end[w]);
      if (dr.u_del[w] < cfg_.p_del[static_cast<int>(wc)]) {
        p.cat[w] = Cat::kDel;
        any_del = true;
        continue;
      }
      for (int k = tl.word_first_token[w]; k < tl.word_first_token[w + 1]; ++k)
        if (want_dist_perc[k] && !p.clean_perc[k]) p.cat[w] = Cat::kSub;
    }

    // Canonical order inside each run of changed words: deletions first. A
    // deletion moved onto a substituted slot becomes a forced single-token
    // perception change on its least robust token.
    std::vector<int> forced(W, -1);
    for (int b = 0; b < W;) {
      if (p.cat[b] == Cat::kMatch) { ++b; continue; }
      int e = b, m = 0;
      while (e < W && p.cat[e] != Cat::kMatch) m += p.cat[e++] == Cat::kDel;
      if (m > 0) {
        for (int w = b; w < e; ++w) {
          const Cat orig = p.cat[w];
          if (w - b < m) {
            p.cat[w] = Cat::kDel;
          } else if (orig == Cat::kDel) {
            forced[w] = eligible(w);
            p.cat[w] = forced[w] >= 0 ? Cat::kSub : Cat::kDel;
          }
        }
        // A word that could not change stays deleted; substitutions before
        // it fall back to matches.
        for (int w = b; w < e; ++w) {
          if (p.cat[w] != Cat::kDel) continue;
          for (int v = b; v < w; ++v)
            if (p.cat[v] == Cat::kSub) p.cat[v] = Cat::kMatch;
        }
      }
      b = e;
    }

    // Distorted hypothesis.
    p.dist_ids = p.clean_ids;
    for (int w = 0; w < W; ++w) used.insert(WordText(tl, p.clean_ids, w));
    for (int w = 0; w < W; ++w) {
      const int first = tl.word_first_token[w], end = tl.word_first_token[w + 1];
      for (int k = first; k < end; ++k) p.dist_perc[k] = p.clean_perc[k];
      if (p.cat[w] != Cat::kSub) continue;
      std::vector<int> change;
      if (forced[w] >= 0) {
        change.push_back(forced[w]);
      } else {
        for (int k = first; k < end; ++k)
          if (want_dist_perc[k] && !p.clean_perc[k]) change.push_back(k);
      }
      if (!ReplaceFresh(tl, p.dist_ids, truth, change, w, used)) {
        p.cat[w] = Cat::kMatch;
        continue;
      }
      for (int k : change) p.dist_perc[k] = true;
      used.insert(WordText(tl, p.dist_ids, w));
    }

    // Insertions only next to distorted-only substitutions, and never in a
    // decode that also deletes.
    if (!any_del) {
      for (int w = 0; w < W; ++w) {
        if (p.cat[w] != Cat::kSub) continue;
        const EventClass wc = track.Dominant(tl.word_begin[w], tl.word_end[w]);
        if (!(dr.u_ins[w] < cfg_.p_ins(wc))) continue;
        const int last = tl.word_first_token[w + 1] - 1;
        int frame;
        if (w + 1 < W) frame = tl.word_end[w];
        else if (tl.tokens[last].duration >= 2) frame = tl.word_end[w] - 1;
        else continue;
        const int head = truth[tl.word_first_token[w]];
        for (int r = 1; r <= Codebook::kConfusableRanks; ++r) {
          const int c = Replacement(head, p.dist_ids[tl.word_first_token[w]], r);
          if (c < 0) break;
          if (used.count(StripMarker(lex_.piece(c)))) continue;
          p.ins_token[w] = c;
          p.ins_frame[w] = frame;
          used.insert(StripMarker(lex_.piece(c)));
          break;
        }
      }
    }
    return p;
  }

  struct Emission {
    int token_id;
    int frame;
    int duration;
    bool flat;
    std::uint64_t key;  // probability-jitter stream key
    TokenLabel label;
  };

  std::pair<DecodeResult, LabelSet> Render(const UtteranceRef& utt, const Timeline& tl,
                                           const FrameEventTrack& track, const Draws& dr,
                                           const Plan& p, std::uint64_t useed) const {
    const int W = tl.num_words();
    const int T = tl.num_frames;
    const int d = cfg_.d_model;

    // Emissions in frame order.
    std::vector<Emission> em;
    for (int w = 0; w < W; ++w) {
      if (p.cat[w] == Cat::kDel) continue;
      const TokenLabel wl = p.cat[w] == Cat::kSub ? TokenLabel::kPercError
                            : p.clean_wrong[w]    ? TokenLabel::kCompError
                                                  : TokenLabel::kCorrect;
      for (int k = tl.word_first_token[w]; k < tl.word_first_token[w + 1]; ++k) {
        const auto& t = tl.tokens[k];
        int dur = t.duration;
        if (p.ins_token[w] >= 0 && p.ins_frame[w] < tl.word_end[w] && k + 1 == tl.word_first_token[w + 1])
          dur -= 1;
        em.push_back({p.dist_ids[k], t.begin, dur, p.dist_perc[k], static_cast<std::uint64_t>(k), wl});
      }
      if (p.ins_token[w] >= 0)
        em.push_back({p.ins_token[w], p.ins_frame[w], 1, true,
                      (1ull << 32) + static_cast<std::uint64_t>(w), TokenLabel::kPercError});
    }

    // Frame embeddings.
    const auto& cb = codebook_;
    Codebook::RowMatrix H = Codebook::RowMatrix::Zero(T, d);
    std::vector<double> intensity(T, 0.75);
    std::vector<bool> gap = tl.GapMask();
    for (int f = 0, g = 0; f < T; ++f) {
      if (!gap[f]) continue;
      auto s = cb.Silence();
      for (int j = 0; j < d; ++j) H(f, j) = s[j];
      intensity[f] = 0.5 + 0.5 * dr.u_gap[g++];
    }
    // Outside Missing a deleted word keeps a random share of its speech, so
    // its frames overlap with badly distorted words that survive.
    Rng residual(DeriveSeed(useed, "deletion-residual"));
    for (int w = 0; w < W; ++w) {
      const bool del = p.cat[w] == Cat::kDel;
      const EventClass wc = track.Dominant(tl.word_begin[w], tl.word_end[w]);
      const double keep = residual.Uniform();
      for (int k = tl.word_first_token[w]; k < tl.word_first_token[w + 1]; ++k) {
        const auto& t = tl.tokens[k];
        auto b = cb.Base(t.token_id);
        auto s = cb.Silence();
        for (int f = t.begin; f < t.end(); ++f) {
          if (!del) {
            for (int j = 0; j < d; ++j) H(f, j) = b[j];
            intensity[f] = 0.5 + (1.0 - dr.u_perc[k]);
          } else if (wc == EventClass::kMissing) {
            for (int j = 0; j < d; ++j) H(f, j) = s[j];
            intensity[f] = 1.5;
          } else {
            for (int j = 0; j < d; ++j)
              H(f, j) = static_cast<float>(keep * b[j] + (1.0 - keep) * s[j]);
            intensity[f] = 1.5 - 0.5 * keep;
          }
        }
      }
    }
    Rng noise(DeriveSeed(useed, "embedding"));
    const double gain = cfg_.distortion_gain;
    for (int f = 0; f < T; ++f) {
      auto sig = cb.Signature(track.classes[f]);
      const double a = gain * intensity[f];
      for (int j = 0; j < d; ++j)
        H(f, j) += static_cast<float>(a * sig[j] + cfg_.noise_std * noise.Normal());
    }

    // Joint embeddings for all emissions at once.
    Codebook::RowMatrix enc(static_cast<Eigen::Index>(em.size()), d);
    std::vector<int> prev(em.size());
    for (std::size_t i = 0; i < em.size(); ++i) {
      enc.row(static_cast<Eigen::Index>(i)) = H.row(em[i].frame);
      prev[i] = i == 0 ? 0 : em[i - 1].token_id;
    }
    const Codebook::RowMatrix Z = cb.JointEmbeddings(enc, prev);

    DecodeResult out;
    out.utterance_id = utt.id;
    out.vocab_size = cfg_.vocab_size;
    out.frame_embeddings = FloatMatrix(T, d);
    std::copy(H.data(), H.data() + H.size(), out.frame_embeddings.data.begin());
    LabelSet labels;
    for (std::size_t i = 0; i < em.size(); ++i) {
      const auto& e = em[i];
      TokenRecord rec;
      rec.token_id = e.token_id;
      rec.piece = lex_.piece(e.token_id);
      rec.emit_frame = e.frame;
      rec.duration = e.duration;
      const double z = e.key < dr.z_temp.size() ? dr.z_temp[e.key] : 0.0;
      rec.probs = TokenProbs(e.token_id, e.flat, z, DeriveSeed(useed, e.key + 0x9e37));
      rec.joint_embedding.assign(Z.row(static_cast<Eigen::Index>(i)).data(),
                                 Z.row(static_cast<Eigen::Index>(i)).data() + d);
      out.tokens.push_back(std::move(rec));
      labels.token_labels.push_back(e.label);
    }
    out.RebuildWords();

    labels.deletion_frame_flags.assign(T, false);
    for (int w = 0; w < W; ++w)
      if (p.cat[w] == Cat::kDel)
        for (int f = tl.word_begin[w]; f < tl.word_end[w]; ++f) labels.deletion_frame_flags[f] = true;
    labels.RecomputeWordLabels(out.words);
    return {std::move(out), std::move(labels)};
  }

  // Softmax over cosine logits. Correct and comprehension tokens use the
  // sharp temperature (confident, even when wrong); perception tokens use the
  // flat one.
  std::vector<float> TokenProbs(int emitted, bool flat, double z, std::uint64_t key) const {
    const int V = cfg_.vocab_size;
    const double temp = (flat ? cfg_.temp_perc : cfg_.temp_correct) * std::exp(cfg_.temp_jitter * z);
    Rng rng(key);
    auto sims = codebook_.SimilarityTo(emitted);
    std::vector<double> logits(V);
    double best_other = -1e300;
    for (int v = 0; v < V; ++v) {
      logits[v] = sims[v] / temp + cfg_.logit_noise * rng.Normal();
      if (v != emitted) best_other = std::max(best_other, logits[v]);
    }
    if (logits[emitted] <= best_other) logits[emitted] = best_other + 0.5;
    const double mx = logits[emitted];
    double sum = 0.0;
    for (auto& l : logits) sum += (l = std::exp(l - mx));
    std::vector<float> probs(V);
    for (int v = 0; v < V; ++v) probs[v] = static_cast<float>(logits[v] / sum);
    return probs;
  }

  Lexicon lex_;
  OracleConfig cfg_;
  Codebook codebook_;
};

}  // namespace cadr
