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

#include <cmath>
#include <optional>
#include <vector>

#include "cadr/clarify/session.hpp"

namespace cadr {

// Corpus statistics after each clarification round. Index k = 0 is the
// first-pass hypothesis; sessions that ended early keep their final WER.
struct RoundStats {
  int K = 0;
  int sessions = 0;
  int zero_baseline_sessions = 0;   // initial WER 0: excluded from per-session WERR
  std::vector<double> wer;                   // corpus WER (pooled edit counts)
  std::vector<std::optional<double>> werr;   // corpus WERR; absent when corpus WER_0 is 0
  std::vector<double> mean_session_werr;     // over sessions with WER_0 > 0
  std::vector<double> improved_rate;         // WER_k < WER_0
  std::vector<double> degradation_fpr;       // WER_k > WER_0
  std::vector<double> final_rate;            // clean_detected at a round <= k
};

inline RoundStats ComputeRoundStats(const std::vector<ClarifySession>& sessions, int K) {
  if (K < 1) throw ValidationError("K", "must be at least 1");
  RoundStats st;
  st.K = K;
  st.sessions = static_cast<int>(sessions.size());
  const int n = K + 1;
  std::vector<double> errors(n, 0.0), improved(n, 0.0), degraded(n, 0.0), resolved(n, 0.0), werr_sum(n, 0.0);
  double ref_words = 0.0;
  for (const auto& s : sessions) {
    if (!s.initial_wer) throw ValidationError("sessions", "session '" + s.utterance_id + "' has no reference");
    if (s.reference_length <= 0)
      throw ValidationError("sessions", "session '" + s.utterance_id + "' has no reference length");
    const double w0 = *s.initial_wer;
    const bool zero = w0 == 0.0;
    st.zero_baseline_sessions += zero;
    ref_words += s.reference_length;
    for (int k = 0; k < n; ++k) {
      const double wk = s.WerAfter(k);
      // Edit counts are integers; undo the division exactly.
      errors[k] += std::round(wk * s.reference_length);
      improved[k] += wk < w0;
      degraded[k] += wk > w0;
      if (!zero) werr_sum[k] += (w0 - wk) / w0;
      resolved[k] += k >= 1 && s.termination == Termination::kCleanDetected &&
                     static_cast<int>(s.rounds.size()) <= k;
    }
  }
  const double N = std::max(1, st.sessions);
  const int nonzero = st.sessions - st.zero_baseline_sessions;
  for (int k = 0; k < n; ++k) {
    st.wer.push_back(ref_words > 0 ? errors[k] / ref_words : 0.0);
    st.improved_rate.push_back(improved[k] / N);
    st.degradation_fpr.push_back(degraded[k] / N);
    st.final_rate.push_back(resolved[k] / N);
    st.mean_session_werr.push_back(nonzero > 0 ? werr_sum[k] / nonzero : 0.0);
  }
  for (int k = 0; k < n; ++k) {
    if (st.wer[0] > 0.0) st.werr.push_back((st.wer[0] - st.wer[k]) / st.wer[0]);
    else st.werr.push_back(std::nullopt);
  }
  return st;
}

}  // namespace cadr
