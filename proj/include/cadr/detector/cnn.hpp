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
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cadr/core/error.hpp"
#include "cadr/core/rng.hpp"

namespace cadr {

struct CnnConfig {
  int input_dim = 640;
  int layers = 5;
  int kernel = 5;
  int hidden = 640;
  double dropout = 0.2;
  int classes = 2;

  void Validate() const {
    if (input_dim < 1) throw ValidationError("input_dim", "must be positive");
    if (layers < 1) throw ValidationError("layers", "need at least one layer");
    if (kernel < 1 || kernel % 2 == 0) throw ValidationError("kernel", "must be odd");
    if (hidden < 1) throw ValidationError("hidden", "must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout", "outside [0,1)");
    if (classes != 2 && classes != 6) throw ValidationError("classes", "must be 2 or 6");
  }

  bool operator==(const CnnConfig&) const = default;
};

inline nlohmann::ordered_json ToJson(const CnnConfig& c) {
  return {{"input_dim", c.input_dim}, {"layers", c.layers}, {"kernel", c.kernel},
          {"hidden", c.hidden},       {"dropout", c.dropout}, {"classes", c.classes}};
}

inline CnnConfig CnnConfigFromJson(const nlohmann::ordered_json& j) {
  CnnConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.layers = j.value("layers", c.layers);
  c.kernel = j.value("kernel", c.kernel);
  c.hidden = j.value("hidden", c.hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.classes = j.value("classes", c.classes);
  c.Validate();
  return c;
}

// Stack of same-padded 1-D convolutions with ReLU and dropout, followed by a
// per-position linear head and softmax. All parameters live in one flat
// vector: per layer W (hidden x in*kernel, row-major) then b, then the head.
// Inputs are standardised with a stored per-dimension mean and scale.
template <typename Scalar>
class Cnn {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  Cnn() = default;

  explicit Cnn(const CnnConfig& cfg) : cfg_(cfg) {
    cfg_.Validate();
    std::size_t off = 0;
    for (int l = 0; l < cfg_.layers; ++l) {
      const int in = l == 0 ? cfg_.input_dim : cfg_.hidden;
      layers_.push_back({off, off + static_cast<std::size_t>(cfg_.hidden) * in * cfg_.kernel, in});
      off = layers_.back().b + cfg_.hidden;
    }
    head_w_ = off;
    head_b_ = off + static_cast<std::size_t>(cfg_.classes) * cfg_.hidden;
    params_.assign(head_b_ + cfg_.classes, Scalar(0));
    mean_.assign(cfg_.input_dim, Scalar(0));
    scale_.assign(cfg_.input_dim, Scalar(1));
  }

  // He-normal weights, zero biases.
  static Cnn Initialized(const CnnConfig& cfg, std::uint64_t seed) {
    Cnn m(cfg);
    Rng rng(DeriveSeed(seed, "cnn-init"));
    for (const auto& L : m.layers_) {
      const double sd = std::sqrt(2.0 / (L.in * cfg.kernel));
      for (std::size_t i = L.w; i < L.b; ++i) m.params_[i] = static_cast<Scalar>(sd * rng.Normal());
    }
    const double sd = std::sqrt(1.0 / cfg.hidden);
    for (std::size_t i = m.head_w_; i < m.head_b_; ++i) m.params_[i] = static_cast<Scalar>(sd * rng.Normal());
    return m;
  }

  const CnnConfig& config() const { return cfg_; }
  std::vector<Scalar>& params() { return params_; }
  const std::vector<Scalar>& params() const { return params_; }
  std::vector<Scalar>& input_mean() { return mean_; }
  std::vector<Scalar>& input_scale() { return scale_; }
  const std::vector<Scalar>& input_mean() const { return mean_; }
  const std::vector<Scalar>& input_scale() const { return scale_; }

  // Per-position class probabilities, dropout off.
  Mat Forward(const Mat& x) const {
    if (x.cols() != cfg_.input_dim)
      throw ValidationError("input", "dimension " + std::to_string(x.cols()) + " differs from " +
                                         std::to_string(cfg_.input_dim));
    if (x.rows() == 0) return Mat(0, cfg_.classes);
    Trace tr;
    Run({&x}, nullptr, tr);
    return Softmax(tr.logits);
  }

  // Weighted cross-entropy over all labelled positions of a batch (label -1
  // is ignored), normalised by the total weight. Fills `grad` when given.
  // Dropout masks come from `dropout_rng`; pass nullptr for a deterministic
  // pass without dropout.
  Scalar LossAndGrad(const std::vector<const Mat*>& xs, const std::vector<const std::vector<int>*>& ys,
                     const std::vector<Scalar>& class_weight, std::vector<Scalar>* grad,
                     Rng* dropout_rng) const {
    Trace tr;
    Run(xs, dropout_rng, tr);
    const Mat p = Softmax(tr.logits);
    const Eigen::Index M = p.rows();
    Mat dlogits = Mat::Zero(M, cfg_.classes);
    Scalar loss = 0, wsum = 0;
    Eigen::Index row = 0;
    for (std::size_t s = 0; s < xs.size(); ++s) {
      const auto& y = *ys[s];
      if (static_cast<Eigen::Index>(y.size()) != xs[s]->rows())
        throw ValidationError("labels", "length differs from sequence length");
      for (std::size_t i = 0; i < y.size(); ++i, ++row) {
        if (y[i] < 0) continue;
        if (y[i] >= cfg_.classes) throw ValidationError("labels", "class out of range");
        const Scalar w = class_weight[y[i]];
        loss -= w * std::log(std::max(p(row, y[i]), Scalar(1e-30)));
        wsum += w;
        dlogits.row(row) = w * p.row(row);
        dlogits(row, y[i]) -= w;
      }
    }
    if (wsum <= 0) throw ValidationError("labels", "batch has no labelled positions");
    loss /= wsum;
    if (!grad) return loss;
    dlogits /= wsum;
    grad->assign(params_.size(), Scalar(0));
    Backward(tr, dlogits, *grad);
    return loss;
  }

 private:
  struct LayerOffsets {
    std::size_t w, b;
    int in;
  };

  struct Trace {
    std::vector<Eigen::Index> starts;  // row offset of each sequence; last = total
    std::vector<Mat> cols;             // im2col input of each layer
    std::vector<Mat> pre;              // pre-activation
    std::vector<Mat> keep;             // dropout multipliers (empty when off)
    Mat last;                          // input of the head
    Mat logits;
  };

  Eigen::Map<const Mat> Weight(const LayerOffsets& L) const {
    return {params_.data() + L.w, cfg_.hidden, static_cast<Eigen::Index>(L.in) * cfg_.kernel};
  }
  Eigen::Map<const RowVec> Bias(const LayerOffsets& L) const { return {params_.data() + L.b, cfg_.hidden}; }

  // Row n of the result holds rows n-p..n+p of `a` (zero outside the sequence).
  Mat Im2Col(const Mat& a, const std::vector<Eigen::Index>& starts) const {
    const int k = cfg_.kernel, pad = k / 2;
    const Eigen::Index in = a.cols();
    Mat c = Mat::Zero(a.rows(), in * k);
    for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
      const Eigen::Index b = starts[s], e = starts[s + 1];
      for (Eigen::Index n = b; n < e; ++n)
        for (int o = 0; o < k; ++o) {
          const Eigen::Index src = n + o - pad;
          if (src >= b && src < e) c.block(n, o * in, 1, in) = a.row(src);
        }
    }
    return c;
  }

  Mat Col2Im(const Mat& c, Eigen::Index in, const std::vector<Eigen::Index>& starts) const {
    const int k = cfg_.kernel, pad = k / 2;
    Mat a = Mat::Zero(c.rows(), in);
    for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
      const Eigen::Index b = starts[s], e = starts[s + 1];
      for (Eigen::Index n = b; n < e; ++n)
        for (int o = 0; o < k; ++o) {
          const Eigen::Index src = n + o - pad;
          if (src >= b && src < e) a.row(src) += c.block(n, o * in, 1, in);
        }
    }
    return a;
  }

  void Run(const std::vector<const Mat*>& xs, Rng* dropout_rng, Trace& tr) const {
    tr.starts.assign(1, 0);
    for (const Mat* x : xs) {
      if (x->cols() != cfg_.input_dim) throw ValidationError("input", "dimension mismatch");
      tr.starts.push_back(tr.starts.back() + x->rows());
    }
    Mat a(tr.starts.back(), cfg_.input_dim);
    for (std::size_t s = 0; s < xs.size(); ++s) a.middleRows(tr.starts[s], xs[s]->rows()) = *xs[s];
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      a.col(j) = (a.col(j).array() - mean_[j]) / scale_[j];
    const bool drop = dropout_rng && cfg_.dropout > 0.0;
    const Scalar inv_keep = Scalar(1.0 / (1.0 - cfg_.dropout));
    for (const auto& L : layers_) {
      tr.cols.push_back(Im2Col(a, tr.starts));
      Mat z = tr.cols.back() * Weight(L).transpose();
      z.rowwise() += Bias(L);
      tr.pre.push_back(z);
      a = z.cwiseMax(Scalar(0));
      if (drop) {
        Mat keep(a.rows(), a.cols());
        for (Eigen::Index i = 0; i < keep.size(); ++i)
          keep.data()[i] = dropout_rng->Uniform() < cfg_.dropout ? Scalar(0) : inv_keep;
        a = a.cwiseProduct(keep);
        tr.keep.push_back(std::move(keep));
      }
    }
    tr.last = a;
    Eigen::Map<const Mat> hw(params_.data() + head_w_, cfg_.classes, cfg_.hidden);
    Eigen::Map<const RowVec> hb(params_.data() + head_b_, cfg_.classes);
    tr.logits = a * hw.transpose();
    tr.logits.rowwise() += hb;
  }

  void Backward(const Trace& tr, const Mat& dlogits, std::vector<Scalar>& grad) const {
    Eigen::Map<const Mat> hw(params_.data() + head_w_, cfg_.classes, cfg_.hidden);
    Eigen::Map<Mat>(grad.data() + head_w_, cfg_.classes, cfg_.hidden) = dlogits.transpose() * tr.last;
    Eigen::Map<RowVec>(grad.data() + head_b_, cfg_.classes) = dlogits.colwise().sum();
    Mat da = dlogits * hw;
    for (int l = cfg_.layers - 1; l >= 0; --l) {
      const auto& L = layers_[l];
      if (!tr.keep.empty()) da = da.cwiseProduct(tr.keep[l]);
      Mat dz = (tr.pre[l].array() > Scalar(0)).select(da, Scalar(0));
      Eigen::Map<Mat>(grad.data() + L.w, cfg_.hidden, static_cast<Eigen::Index>(L.in) * cfg_.kernel) =
          dz.transpose() * tr.cols[l];
      Eigen::Map<RowVec>(grad.data() + L.b, cfg_.hidden) = dz.colwise().sum();
      if (l > 0) da = Col2Im(dz * Weight(L), L.in, tr.starts);
    }
  }

  static Mat Softmax(const Mat& logits) {
    Mat p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const Scalar mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp();
      p.row(i) /= p.row(i).sum();
    }
    return p;
  }

  CnnConfig cfg_;
  std::vector<LayerOffsets> layers_;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::vector<Scalar> params_;
  std::vector<Scalar> mean_, scale_;
};

// Index of the largest entry; ties go to the lowest class.
template <typename Row>
int ArgmaxLowTie(const Row& r) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(r.size()); ++c)
    if (r(c) > r(best)) best = c;
  return best;
}

}  // namespace cadr
