/*
 * Copyright 2026 The isaaq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "isaaq/ad.hpp"
#include "isaaq/corpus.hpp"
#include "isaaq/image.hpp"
#include "isaaq/params.hpp"

namespace isaaq {

inline constexpr int kRoiFeatureDim = 1000;  // d_f
inline constexpr int kRoiPositionDim = 4;    // d_p: normalized corners
inline constexpr int kMaxRois = 32;

// Bottom-up region: normalized box, detector confidence, visual feature.
struct RoI {
  std::array<double, 4> bbox{};  // x1,y1,x2,y2 in [0,1], x1<x2 and y1<y2
  double confidence = 1.0;
  Eigen::VectorXd feature;

  Eigen::VectorXd position() const;  // the 4 corners as a d_p vector
  double area() const { return (bbox[2] - bbox[0]) * (bbox[3] - bbox[1]); }
};

struct RoISet {
  std::string diagram_id;
  std::vector<RoI> rois;  // 1 <= size <= kMaxRois once it reaches a solver
};

// Maps an image (whole diagram or crop) to a fixed-length feature vector.
class DiagramFeaturizer {
 public:
  virtual ~DiagramFeaturizer() = default;
  virtual Eigen::VectorXd featurize(const Image& image) const = 0;
  virtual int dim() const = 0;
};

// Built-in fallback: 10x10 spatial grid, 10-bin grayscale histogram per cell,
// flattened to 1000 dims. Each cell's histogram is normalized by its pixel
// count, so the vector sums to the number of non-empty cells.
class GridHistogramFeaturizer : public DiagramFeaturizer {
 public:
  Eigen::VectorXd featurize(const Image& image) const override;
  int dim() const override { return kRoiFeatureDim; }
};

// Whole-diagram feature lookup used by diagram retrieval.
class DiagramFeatureSource {
 public:
  virtual ~DiagramFeatureSource() = default;
  virtual Eigen::VectorXd global_feature(const Corpus& corpus, const DiagramRef& d) const = 0;
};

// Loads the image and featurizes it on the fly.
class BuiltinFeatureSource : public DiagramFeatureSource {
 public:
  explicit BuiltinFeatureSource(const DiagramFeaturizer& featurizer)
      : featurizer_(featurizer) {}
  Eigen::VectorXd global_feature(const Corpus& corpus, const DiagramRef& d) const override;

 private:
  const DiagramFeaturizer& featurizer_;
};

// Reads features/<diagram_id>.f32 (little-endian float32) with the vector
// length declared in features/manifest.json under {"dim": N}.
class PrecomputedFeatureSource : public DiagramFeatureSource {
 public:
  explicit PrecomputedFeatureSource(std::filesystem::path features_dir);
  Eigen::VectorXd global_feature(const Corpus& corpus, const DiagramRef& d) const override;
  int dim() const { return dim_; }

 private:
  std::filesystem::path dir_;
  int dim_ = 0;
};

Eigen::VectorXd read_f32_vector(const std::filesystem::path& file, int expected_dim);
void write_f32_vector(const std::filesystem::path& file, const Eigen::VectorXd& v);

enum class RoiSource { annotations, trivial_detector };

// Connected-component box proposals over the binarized image. Returns boxes
// in confidence order; confidence is the component's fill ratio.
std::vector<RoI> trivial_detect(const Image& image);

// Reads boxes (or runs the trivial detector), crops and featurizes each box,
// applies the 32 cap by confidence (ties: larger area, then top-left raster
// order), and falls back to one whole-image RoI when no box survives.
RoISet acquire_rois(const Corpus& corpus, const DiagramRef& diagram, RoiSource source,
                    const DiagramFeaturizer& featurizer);

// RoI embedder parameters (Eq. layout: two affine maps through layer norm).
// d_v must match the encoder hidden size before the fusion step.
struct RoIEmbedderParams {
  static constexpr double kLayerNormEps = 1e-5;

  // Tensors: roi.W_F (d_v x d_f), roi.b_F (1 x d_v), roi.W_P (d_v x d_p),
  // roi.b_P (1 x d_v), roi.lnF.gain/.bias, roi.lnP.gain/.bias (1 x d_v).
  static void add_to(ParamStore& store, int d_v, int d_f = kRoiFeatureDim,
                     int d_p = kRoiPositionDim, unsigned long long seed = 7);
  static std::map<std::string, std::pair<int, int>> shapes(int d_v, int d_f, int d_p);
};

// v_j = (LayerNorm(W_F f + b_F) + LayerNorm(W_P p + b_P)) / 2, for all RoIs
// at once: features (m x d_f), positions (m x d_p) -> (m x d_v).
ad::Var embed_rois_graph(ad::Graph& g, ad::Var features, ad::Var positions,
                         ParamStore& params);

// Single-RoI convenience wrapper over the graph path.
Eigen::VectorXd embed_roi(const Eigen::VectorXd& f, const Eigen::VectorXd& p,
                          ParamStore& params);

}  // namespace isaaq
