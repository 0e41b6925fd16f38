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
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "cadr/core/rng.hpp"
#include "cadr/core/types.hpp"
#include "cadr/transducer/lexicon.hpp"

namespace cadr {

// Fixed random geometry of the toy transducer: token base vectors, event
// signatures, decoder-state vectors and the encoder/decoder mixing matrices
// of the joint embedding. A pure function of (vocab_size, d_model, seed).
class Codebook {
 public:
  using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static constexpr int kConfusableRanks = 16;

  Codebook() = default;

  // Domain pieces lean towards a shared direction by `domain_shift` before
  // normalisation, so hard-word membership is visible in the embeddings.
  Codebook(const Lexicon& lex, int d_model, std::uint64_t seed, double domain_shift = 0.3)
      : vocab_size_(lex.vocab_size()), d_model_(d_model) {
    if (d_model < 1) throw ValidationError("d_model", "must be positive");
    base_ = UnitRows(vocab_size_, DeriveSeed(seed, "base"));
    if (domain_shift != 0.0) {
      const RowMatrix u = UnitRows(1, DeriveSeed(seed, "domain"));
      for (int v = 0; v < vocab_size_; ++v) {
        if (!lex.IsDomainPiece(v)) continue;
        base_.row(v) += static_cast<float>(domain_shift) * u.row(0);
        base_.row(v).normalize();
      }
    }
    decoder_ = UnitRows(vocab_size_, DeriveSeed(seed, "decoder"));
    signatures_ = UnitRows(kNumEventClasses, DeriveSeed(seed, "signatures"));
    silence_ = UnitRows(1, DeriveSeed(seed, "silence"));
    mix_enc_ = NearIdentity(DeriveSeed(seed, "W_e"));
    mix_dec_ = NearIdentity(DeriveSeed(seed, "W_d"));
    dec_term_ = decoder_ * mix_dec_.transpose();
    Rng rng(DeriveSeed(seed, "bias"));
    bias_.resize(d_model_);
    for (auto& b : bias_) b = static_cast<float>(0.05 * rng.Normal());
    BuildConfusables(lex);
  }

  int vocab_size() const { return vocab_size_; }
  int d_model() const { return d_model_; }

  std::span<const float> Base(int v) const { return Row(base_, v); }
  std::span<const float> DecoderState(int v) const { return Row(decoder_, v); }
  std::span<const float> Signature(EventClass c) const {
    return Row(signatures_, static_cast<int>(c));
  }
  std::span<const float> Silence() const { return Row(silence_, 0); }
  const RowMatrix& mix_enc() const { return mix_enc_; }
  const RowMatrix& mix_dec() const { return mix_dec_; }

  int num_ranks(int v) const { return static_cast<int>(confusables_[v].size()); }

  // Token with rank-th highest cosine similarity to v among pieces of the same
  // boundary class (rank 1 = nearest neighbour). Ranks beyond the cached list
  // wrap around.
  int Confusable(int v, int rank = 1) const {
    const auto& list = confusables_[v];
    return list[static_cast<std::size_t>(rank - 1) % list.size()];
  }

  float Cosine(int a, int b) const { return sims_(a, b); }
  // Cosine similarity of every token to v.
  std::span<const float> SimilarityTo(int v) const { return Row(sims_, v); }

  // Row i: z_i = W_e h_i + W_d g(prev_i) + b.
  RowMatrix JointEmbeddings(const RowMatrix& enc_rows, std::span<const int> prev) const {
    RowMatrix z = enc_rows * mix_enc_.transpose();
    for (int i = 0; i < z.rows(); ++i) {
      z.row(i) += dec_term_.row(prev[i]);
      for (int j = 0; j < d_model_; ++j) z(i, j) += bias_[j];
    }
    return z;
  }

 private:
  RowMatrix UnitRows(int n, std::uint64_t seed) const {
    Rng rng(seed);
    RowMatrix m(n, d_model_);
    for (int i = 0; i < n; ++i) {
      double norm = 0.0;
      for (int j = 0; j < d_model_; ++j) {
        const double x = rng.Normal();
        m(i, j) = static_cast<float>(x);
        norm += x * x;
      }
      m.row(i) /= static_cast<float>(std::sqrt(norm));
    }
    return m;
  }

  // I + (0.3 / sqrt(d)) G: singular values stay within [0.4, 1.6].
  RowMatrix NearIdentity(std::uint64_t seed) const {
    Rng rng(seed);
    RowMatrix m(d_model_, d_model_);
    const double scale = 0.3 / std::sqrt(static_cast<double>(d_model_));
    for (int i = 0; i < d_model_; ++i)
      for (int j = 0; j < d_model_; ++j)
        m(i, j) = static_cast<float>((i == j ? 1.0 : 0.0) + scale * rng.Normal());
    return m;
  }

  void BuildConfusables(const Lexicon& lex) {
    sims_ = base_ * base_.transpose();
    const RowMatrix& sims = sims_;
    confusables_.assign(vocab_size_, {});
    for (int v = 0; v < vocab_size_; ++v) {
      std::vector<int> cands;
      for (int u = 1; u < vocab_size_; ++u)
        if (u != v && lex.IsInitial(u) == lex.IsInitial(v)) cands.push_back(u);
      const auto k = std::min<std::size_t>(kConfusableRanks, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(),
                        [&](int a, int b) {
                          if (sims(v, a) != sims(v, b)) return sims(v, a) > sims(v, b);
                          return a < b;
                        });
      cands.resize(k);
      confusables_[v] = std::move(cands);
    }
  }

  static std::span<const float> Row(const RowMatrix& m, int i) {
    return {m.data() + static_cast<std::ptrdiff_t>(i) * m.cols(), static_cast<std::size_t>(m.cols())};
  }

  int vocab_size_ = 0;
  int d_model_ = 0;
  RowMatrix base_, decoder_, signatures_, silence_, mix_enc_, mix_dec_, dec_term_, sims_;
  std::vector<float> bias_;
  std::vector<std::vector<int>> confusables_;
};

}  // namespace cadr
