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

#include "isaaq/vision.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

Eigen::VectorXd RoI::position() const {
  Eigen::VectorXd p(kRoiPositionDim);
  p << bbox[0], bbox[1], bbox[2], bbox[3];
  return p;
}

Eigen::VectorXd GridHistogramFeaturizer::featurize(const Image& image) const {
  constexpr int kGrid = 10;
  constexpr int kBins = 10;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kGrid * kGrid * kBins);
  if (image.width <= 0 || image.height <= 0) return out;
  for (int gy = 0; gy < kGrid; ++gy) {
    int y0 = gy * image.height / kGrid;
    int y1 = std::max(y0 + 1, (gy + 1) * image.height / kGrid);
    y1 = std::min(y1, image.height);
    for (int gx = 0; gx < kGrid; ++gx) {
      int x0 = gx * image.width / kGrid;
      int x1 = std::max(x0 + 1, (gx + 1) * image.width / kGrid);
      x1 = std::min(x1, image.width);
      if (y0 >= image.height || x0 >= image.width) continue;
      int cell = (gy * kGrid + gx) * kBins;
      int count = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          int bin = std::min(kBins - 1, static_cast<int>(image.at(x, y) * kBins));
          out(cell + bin) += 1.0;
          ++count;
        }
      }
      if (count > 0) out.segment(cell, kBins) /= static_cast<double>(count);
    }
  }
  return out;
}

Eigen::VectorXd BuiltinFeatureSource::global_feature(const Corpus& corpus,
                                                     const DiagramRef& d) const {
  return featurizer_.featurize(load_png_gray(corpus.diagram_image(d)));
}

PrecomputedFeatureSource::PrecomputedFeatureSource(std::filesystem::path features_dir)
    : dir_(std::move(features_dir)) {
  std::ifstream in(dir_ / "manifest.json");
  if (!in) {
    throw Error(ErrorCode::io, "missing feature manifest " + (dir_ / "manifest.json").string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed feature manifest: ") + e.what());
  }
  dim_ = j.at("dim").get<int>();
  if (dim_ <= 0) throw Error(ErrorCode::validation, "feature manifest declares dim <= 0");
}

Eigen::VectorXd PrecomputedFeatureSource::global_feature(const Corpus&,
                                                         const DiagramRef& d) const {
  return read_f32_vector(dir_ / (d.id + ".f32"), dim_);
}

Eigen::VectorXd read_f32_vector(const std::filesystem::path& file, int expected_dim) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open feature file " + file.string());
  in.seekg(0, std::ios::end);
  auto bytes = static_cast<size_t>(in.tellg());
  if (bytes != static_cast<size_t>(expected_dim) * sizeof(float)) {
    throw Error(ErrorCode::validation,
                "feature file " + file.string() + " holds " +
                    std::to_string(bytes / sizeof(float)) + " floats, manifest declares " +
                    std::to_string(expected_dim));
  }
  in.seekg(0);
  Eigen::VectorXd v(expected_dim);
  for (int i = 0; i < expected_dim; ++i) {
    float f;
    in.read(reinterpret_cast<char*>(&f), sizeof(float));
    v(i) = static_cast<double>(f);
  }
  return v;
}

void write_f32_vector(const std::filesystem::path& file, const Eigen::VectorXd& v) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write feature file " + file.string());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    float f = static_cast<float>(v(i));
    out.write(reinterpret_cast<const char*>(&f), sizeof(float));
  }
}

std::vector<RoI> trivial_detect(const Image& image) {
  constexpr double kForeground = 0.9;  // anything darker than near-white
  const int w = image.width, h = image.height;
  std::vector<int> label(static_cast<size_t>(w) * h, -1);
  std::vector<RoI> boxes;

  auto idx = [w](int x, int y) { return static_cast<size_t>(y) * w + x; };
  std::vector<std::pair<int, int>> stack;
  int next_label = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (image.at(x, y) >= kForeground || label[idx(x, y)] != -1) continue;
      int x_min = x, x_max = x, y_min = y, y_max = y;
      int area = 0;
      stack.push_back({x, y});
      label[idx(x, y)] = next_label;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        ++area;
        x_min = std::min(x_min, cx);
        x_max = std::max(x_max, cx);
        y_min = std::min(y_min, cy);
        y_max = std::max(y_max, cy);
        const int dx[4] = {1, -1, 0, 0};
        const int dy[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
          int nx = cx + dx[d], ny = cy + dy[d];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          if (image.at(nx, ny) >= kForeground || label[idx(nx, ny)] != -1) continue;
          label[idx(nx, ny)] = next_label;
          stack.push_back({nx, ny});
        }
      }
      ++next_label;
      if (area < 4) continue;  // specks
      RoI roi;
      roi.bbox = {static_cast<double>(x_min) / w, static_cast<double>(y_min) / h,
                  static_cast<double>(x_max + 1) / w, static_cast<double>(y_max + 1) / h};
      double box_area = static_cast<double>(x_max + 1 - x_min) * (y_max + 1 - y_min);
      roi.confidence = static_cast<double>(area) / box_area;
      boxes.push_back(std::move(roi));
    }
  }
  return boxes;
}

namespace {

// Canonical order: confidence desc, area desc, then top-left raster order.
// Applied before the cap so the result is independent of input order.
void sort_canonical(std::vector<RoI>& rois) {
  std::stable_sort(rois.begin(), rois.end(), [](const RoI& a, const RoI& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.area() != b.area()) return a.area() > b.area();
    if (a.bbox[1] != b.bbox[1]) return a.bbox[1] < b.bbox[1];
    if (a.bbox[0] != b.bbox[0]) return a.bbox[0] < b.bbox[0];
    return a.bbox < b.bbox;
  });
}

}  // namespace

RoISet acquire_rois(const Corpus& corpus, const DiagramRef& diagram, RoiSource source,
                    const DiagramFeaturizer& featurizer) {
  Image image = load_png_gray(corpus.diagram_image(diagram));

  std::vector<RoI> boxes;
  if (source == RoiSource::annotations) {
    auto boxes_path = corpus.diagram_boxes(diagram);
    std::ifstream in(boxes_path);
    if (!in) throw Error(ErrorCode::io, "missing boxes file " + boxes_path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::io, "malformed boxes file " + boxes_path.string() + ": " + e.what());
    }
    for (const auto& bj : j) {
      RoI roi;
      auto bbox = bj.at("bbox");
      for (int i = 0; i < 4; ++i) roi.bbox[static_cast<size_t>(i)] = bbox[i].get<double>();
      roi.confidence = bj.value("confidence", 1.0);
      if (!(roi.bbox[0] < roi.bbox[2]) || !(roi.bbox[1] < roi.bbox[3])) {
        throw Error(ErrorCode::validation,
                    "degenerate bbox in " + boxes_path.string() + " for diagram " + diagram.id);
      }
      boxes.push_back(std::move(roi));
    }
  } else {
    boxes = trivial_detect(image);
  }

  sort_canonical(boxes);
  if (boxes.size() > static_cast<size_t>(kMaxRois)) boxes.resize(kMaxRois);

  if (boxes.empty()) {
    RoI whole;
    whole.bbox = {0.0, 0.0, 1.0, 1.0};
    whole.confidence = 1.0;
    boxes.push_back(std::move(whole));
  }

  for (auto& roi : boxes) {
    roi.feature = featurizer.featurize(crop(image, roi.bbox[0], roi.bbox[1], roi.bbox[2], roi.bbox[3]));
  }
  return RoISet{diagram.id, std::move(boxes)};
}

void RoIEmbedderParams::add_to(ParamStore& store, int d_v, int d_f, int d_p,
                               unsigned long long seed) {
  std::mt19937_64 rng(seed);
  store.add("roi.W_F", gaussian_init(d_v, d_f, 0.02, rng));
  store.add_zeros("roi.b_F", 1, d_v);
  store.add("roi.W_P", gaussian_init(d_v, d_p, 0.02, rng));
  store.add_zeros("roi.b_P", 1, d_v);
  store.add("roi.lnF.gain", Eigen::MatrixXd::Ones(1, d_v));
  store.add_zeros("roi.lnF.bias", 1, d_v);
  store.add("roi.lnP.gain", Eigen::MatrixXd::Ones(1, d_v));
  store.add_zeros("roi.lnP.bias", 1, d_v);
}

std::map<std::string, std::pair<int, int>> RoIEmbedderParams::shapes(int d_v, int d_f,
                                                                     int d_p) {
  return {
      {"roi.W_F", {d_v, d_f}},     {"roi.b_F", {1, d_v}},
      {"roi.W_P", {d_v, d_p}},     {"roi.b_P", {1, d_v}},
      {"roi.lnF.gain", {1, d_v}},  {"roi.lnF.bias", {1, d_v}},
      {"roi.lnP.gain", {1, d_v}},  {"roi.lnP.bias", {1, d_v}},
  };
}

ad::Var embed_rois_graph(ad::Graph& g, ad::Var features, ad::Var positions,
                         ParamStore& params) {
  const Tensor& wf = params.at("roi.W_F");
  const Tensor& wp = params.at("roi.W_P");
  if (g.value(features).cols() != wf.value.cols()) {
    throw Error(ErrorCode::config,
                "RoI feature dim " + std::to_string(g.value(features).cols()) +
                    " does not match W_F with d_f " + std::to_string(wf.value.cols()));
  }
  if (g.value(positions).cols() != wp.value.cols()) {
    throw Error(ErrorCode::config,
                "RoI position dim " + std::to_string(g.value(positions).cols()) +
                    " does not match W_P with d_p " + std::to_string(wp.value.cols()));
  }
  ad::Var f_aff = g.add_row_broadcast(
      g.matmul(features, g.transpose(g.param(params.at("roi.W_F")))),
      g.param(params.at("roi.b_F")));
  ad::Var f_hat = g.layer_norm_rows(f_aff, g.param(params.at("roi.lnF.gain")),
                                    g.param(params.at("roi.lnF.bias")),
                                    RoIEmbedderParams::kLayerNormEps);
  ad::Var p_aff = g.add_row_broadcast(
      g.matmul(positions, g.transpose(g.param(params.at("roi.W_P")))),
      g.param(params.at("roi.b_P")));
  ad::Var p_hat = g.layer_norm_rows(p_aff, g.param(params.at("roi.lnP.gain")),
                                    g.param(params.at("roi.lnP.bias")),
                                    RoIEmbedderParams::kLayerNormEps);
  return g.scale(g.add(f_hat, p_hat), 0.5);
}

Eigen::VectorXd embed_roi(const Eigen::VectorXd& f, const Eigen::VectorXd& p,
                          ParamStore& params) {
  ad::Graph g;
  ad::Var fv = g.constant(f.transpose());
  ad::Var pv = g.constant(p.transpose());
  ad::Var v = embed_rois_graph(g, fv, pv, params);
  return g.value(v).row(0).transpose();
}

}  // namespace isaaq
