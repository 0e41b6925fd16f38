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
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cadr/core/error.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/core/types.hpp"

namespace cadr {

struct LexiconConfig {
  int vocab_size = kDefaultVocabSize;
  int num_words = 400;
  double hard_word_fraction = 0.2;   // share of lexicon words built from domain pieces
  double domain_piece_fraction = 0.2;
  std::uint64_t seed = 11;
};

// Synthetic subword vocabulary plus a word lexicon. Token 0 is the blank.
// Ids [1, 1 + n_initial) are word-initial pieces (carrying the boundary
// marker), the rest are continuation pieces. The tail of each class is
// reserved for "domain" pieces from which hard words are built.
class Lexicon {
 public:
  Lexicon() = default;

  static Lexicon Generate(const LexiconConfig& cfg) {
    if (cfg.vocab_size < 16) throw ValidationError("vocab_size", "|V| must be at least 16");
    if (cfg.num_words < 2) throw ValidationError("num_words", "need at least two words");
    Lexicon lex;
    Rng rng(DeriveSeed(cfg.seed, "lexicon"));
    const int pieces = cfg.vocab_size - 1;
    lex.num_initial_ = pieces / 2;
    lex.pieces_.push_back("<blk>");
    lex.is_domain_.push_back(false);
    std::set<std::string> used;
    auto syllable = [&]() {
      static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                      "s", "t", "v", "z", "ch", "sh", "th", "br", "tr", "pl"};
      static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
      static const char* kCodas[] = {"", "", "", "n", "r", "s", "t", "l", "m", "k"};
      for (;;) {
        std::string s = std::string(kOnsets[rng.Index(20)]) + kVowels[rng.Index(7)] + kCodas[rng.Index(10)];
        if (rng.Bernoulli(0.25)) s += std::string(kOnsets[rng.Index(20)]) + kVowels[rng.Index(7)];
        if (used.insert(s).second) return s;
      }
    };
    const int n_cont = pieces - lex.num_initial_;
    const int dom_init = static_cast<int>(lex.num_initial_ * cfg.domain_piece_fraction);
    const int dom_cont = static_cast<int>(n_cont * cfg.domain_piece_fraction);
    for (int i = 0; i < lex.num_initial_; ++i) {
      lex.pieces_.push_back(std::string(kBoundaryMarker) + syllable());
      lex.is_domain_.push_back(i >= lex.num_initial_ - dom_init);
    }
    used.clear();
    for (int i = 0; i < n_cont; ++i) {
      lex.pieces_.push_back(syllable());
      lex.is_domain_.push_back(i >= n_cont - dom_cont);
    }
    auto range = [&](bool initial, bool domain) {
      std::vector<int> ids;
      const int lo = initial ? 1 : 1 + lex.num_initial_;
      const int hi = initial ? 1 + lex.num_initial_ : cfg.vocab_size;
      for (int id = lo; id < hi; ++id)
        if (lex.is_domain_[id] == domain) ids.push_back(id);
      if (ids.empty()) throw ValidationError("vocab_size", "too small for the domain split");
      return ids;
    };
    const auto norm_init = range(true, false), norm_cont = range(false, false);
    const auto dom_i = range(true, true), dom_c = range(false, true);
    const int n_hard = static_cast<int>(cfg.num_words * cfg.hard_word_fraction);
    int attempts = 0;
    while (static_cast<int>(lex.words_.size()) < cfg.num_words) {
      if (++attempts > cfg.num_words * 1000) throw Error("lexicon generation did not converge");
      const bool hard = static_cast<int>(lex.words_.size()) >= cfg.num_words - n_hard;
      const auto& init = hard ? dom_i : norm_init;
      const auto& cont = hard ? dom_c : norm_cont;
      const int n = 1 + static_cast<int>(rng.Index(3));
      std::vector<int> ids{init[rng.Index(init.size())]};
      for (int k = 1; k < n; ++k) ids.push_back(cont[rng.Index(cont.size())]);
      std::string text;
      for (int id : ids) text += StripMarker(lex.pieces_[id]);
      if (lex.tokens_.count(text)) continue;
      lex.tokens_[text] = ids;
      lex.words_.push_back(text);
      lex.hard_.push_back(hard);
    }
    return lex;
  }

  int vocab_size() const { return static_cast<int>(pieces_.size()); }
  int num_initial() const { return num_initial_; }
  const std::string& piece(int id) const { return pieces_.at(id); }
  bool IsInitial(int id) const { return id >= 1 && id < 1 + num_initial_; }
  bool IsDomainPiece(int id) const { return is_domain_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  bool IsHardWord(int index) const { return hard_.at(index); }

  bool Contains(const std::string& word) const { return tokens_.count(word) > 0; }

  bool IsHard(const std::string& word) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (words_[i] == word) return hard_[i];
    return false;
  }

  const std::vector<int>& Tokenize(const std::string& word) const {
    auto it = tokens_.find(word);
    if (it == tokens_.end()) throw Error("word missing from lexicon: '" + word + "'");
    return it->second;
  }

  std::vector<int> WordIndices(bool hard) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (hard_[i] == hard) out.push_back(static_cast<int>(i));
    return out;
  }

 private:
  int num_initial_ = 0;
  std::vector<std::string> pieces_;
  std::vector<bool> is_domain_;
  std::vector<std::string> words_;
  std::vector<bool> hard_;
  std::map<std::string, std::vector<int>> tokens_;
};

// Random utterance: each word is hard with probability `hard_rate`; words are
// distinct within the utterance.
inline UtteranceRef GenerateUtterance(const Lexicon& lex, const std::string& id, Rng& rng,
                                      int min_words = 4, int max_words = 10,
                                      double hard_rate = 0.15) {
  const std::pair<std::vector<int>, std::vector<int>> pools{lex.WordIndices(false),
                                                             lex.WordIndices(true)};
  UtteranceRef u;
  u.id = id;
  const int n = min_words + static_cast<int>(rng.Index(static_cast<std::uint64_t>(max_words - min_words + 1)));
  while (static_cast<int>(u.words.size()) < n) {
    const bool hard = !pools.second.empty() && rng.Bernoulli(hard_rate);
    const auto& pool = hard ? pools.second : pools.first;
    const int idx = pool[rng.Index(pool.size())];
    const std::string& w = lex.words()[idx];
    if (std::find(u.words.begin(), u.words.end(), w) != u.words.end()) continue;
    u.words.push_back(w);
    u.hard_flags.push_back(lex.IsHardWord(idx));
  }
  return u;
}

}  // namespace cadr
