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

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cadr/core/types.hpp"
#include "cadr/transducer/lexicon.hpp"

namespace cadr::testing {

// A hand-made decode: word w has `pieces[w]` tokens, each emitted on its own
// frame with duration 1, and `gap` silent frames before every word.
inline DecodeResult MakeDecode(const std::vector<std::string>& words, const std::vector<int>& pieces,
                               int gap = 1, int vocab = 8, int dim = 4) {
  DecodeResult d;
  d.utterance_id = "t";
  d.vocab_size = vocab;
  int frame = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    frame += gap;
    const int n = pieces[w];
    const std::size_t step = (words[w].size() + n - 1) / n;
    for (int k = 0; k < n; ++k) {
      TokenRecord t;
      t.token_id = 1 + k % (vocab - 1);
      std::string text = words[w].substr(std::min(words[w].size(), k * step), step);
      if (text.empty()) text = "x";
      t.piece = (k == 0 ? std::string(kBoundaryMarker) : "") + text;
      t.emit_frame = frame++;
      t.duration = 1;
      t.probs.assign(vocab, 1.0f / vocab);
      t.joint_embedding.assign(dim, 0.0f);
      d.tokens.push_back(t);
    }
  }
  d.frame_embeddings = FloatMatrix(frame + gap, dim);
  d.RebuildWords();
  return d;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cadr_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline const Lexicon& DefaultLexicon() {
  static const Lexicon lex = Lexicon::Generate({});
  return lex;
}

}  // namespace cadr::testing
