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

#include "isaaq/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "isaaq/error.hpp"

namespace isaaq {

using nlohmann::json;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Penalized negative log-likelihood, for the Newton step-halving check.
double logistic_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& w, double b, double l2) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double z = x.row(i).dot(w) + b;
    // log(1 + exp(-z*ysign)) computed stably
    double m = y(i) > 0.5 ? z : -z;
    loss += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  return loss + 0.5 * l2 * w.squaredNorm();
}

}  // namespace

double LogisticModel::predict(const Eigen::VectorXd& x) const {
  if (x.size() != weights.size()) {
    throw Error(ErrorCode::config, "logistic model expects " +
                                       std::to_string(weights.size()) + " features, got " +
                                       std::to_string(x.size()));
  }
  return sigmoid(weights.dot(x) + intercept);
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           double l2, int max_iters, double tol) {
  if (x.rows() != y.size() || x.rows() == 0) {
    throw Error(ErrorCode::config, "logistic fit: bad design matrix");
  }
  bool has_pos = false, has_neg = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    (y(i) > 0.5 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw Error(ErrorCode::validation,
                "logistic fit: labels are single-class, nothing to calibrate");
  }

  Eigen::Index d = x.cols();
  // beta = [weights..., intercept]
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  double loss = logistic_loss(x, y, beta.head(d), beta(d), l2);

  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::VectorXd p(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      p(i) = sigmoid(x.row(i).dot(beta.head(d)) + beta(d));
    }
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d + 1);
    grad.head(d) = x.transpose() * (p - y) + l2 * beta.head(d);
    grad(d) = (p - y).sum();

    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d + 1, d + 1);
    Eigen::VectorXd w = p.array() * (1.0 - p.array());
    hess.topLeftCorner(d, d) = x.transpose() * w.asDiagonal() * x;
    hess.topLeftCorner(d, d).diagonal().array() += l2;
    hess.block(0, d, d, 1) = x.transpose() * w;
    hess.block(d, 0, 1, d) = (x.transpose() * w).transpose();
    hess(d, d) = w.sum();
    hess.diagonal().array() += 1e-12;  // keep the solve well-posed near separation

    Eigen::VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd candidate = beta - step;
    double new_loss = logistic_loss(x, y, candidate.head(d), candidate(d), l2);
    while (new_loss > loss && t > 1e-8) {
      t *= 0.5;
      candidate = beta - t * step;
      new_loss = logistic_loss(x, y, candidate.head(d), candidate(d), l2);
    }
    double move = (candidate - beta).lpNorm<Eigen::Infinity>();
    beta = candidate;
    loss = new_loss;
    if (move < tol) break;
  }

  LogisticModel model;
  model.weights = beta.head(d);
  model.intercept = beta(d);
  return model;
}

ScoreTable score_table(const std::vector<std::vector<SolverScores>>& per_solver) {
  ScoreTable table;
  for (const auto& scores : per_solver) {
    for (const auto& s : scores) table[s.solver_id][s.question_id] = s;
  }
  return table;
}

double CalibrationModel::calibrate(const std::string& solver_id, double raw,
                                   double normalized) const {
  auto it = per_solver.find(solver_id);
  if (it == per_solver.end()) {
    throw Error(ErrorCode::not_found, "no calibration for solver '" + solver_id + "'");
  }
  Eigen::Vector2d features(raw, normalized);
  return it->second.predict(features);
}

std::string CalibrationModel::to_json() const {
  json j;
  j["solver_ids"] = solver_ids;
  json per = json::object();
  for (const auto& [id, model] : per_solver) {
    per[id] = {{"weights", {model.weights(0), model.weights(1)}},
               {"intercept", model.intercept},
               {"features", {"raw_score", "softmax_normalized"}}};
  }
  j["per_solver"] = std::move(per);
  json w2 = json::array();
  for (Eigen::Index i = 0; i < second_stage.weights.size(); ++i) {
    w2.push_back(second_stage.weights(i));
  }
  j["second_stage"] = {{"weights", std::move(w2)}, {"intercept", second_stage.intercept}};
  return j.dump(2);
}

CalibrationModel CalibrationModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, std::string("malformed calibration model: ") + e.what());
  }
  CalibrationModel m;
  for (const auto& id : j.at("solver_ids")) m.solver_ids.push_back(id.get<std::string>());
  for (const auto& id : m.solver_ids) {
    const auto& pj = j.at("per_solver").at(id);
    LogisticModel lm;
    lm.weights = Eigen::Vector2d(pj.at("weights")[0].get<double>(),
                                 pj.at("weights")[1].get<double>());
    lm.intercept = pj.at("intercept").get<double>();
    m.per_solver[id] = std::move(lm);
  }
  const auto& sj = j.at("second_stage");
  m.second_stage.weights.resize(static_cast<Eigen::Index>(sj.at("weights").size()));
  for (Eigen::Index i = 0; i < m.second_stage.weights.size(); ++i) {
    m.second_stage.weights(i) = sj["weights"][i].get<double>();
  }
  m.second_stage.intercept = sj.at("intercept").get<double>();
  return m;
}

void CalibrationModel::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::io, "cannot write " + file.string());
  out << to_json() << '\n';
}

CalibrationModel CalibrationModel::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::state, "missing calibration model " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

namespace {

void check_coverage(const ScoreTable& scores, const std::map<std::string, int>& labels) {
  if (scores.size() < 1) throw Error(ErrorCode::config, "no solver scores given");
  std::string gaps;
  int listed = 0;
  for (const auto& [solver_id, by_question] : scores) {
    for (const auto& [qid, answer] : labels) {
      if (!by_question.count(qid)) {
        if (listed < 20) gaps += "  " + solver_id + " missing " + qid + "\n";
        ++listed;
      }
    }
  }
  if (listed > 20) gaps += "  ... and " + std::to_string(listed - 20) + " more\n";
  if (!gaps.empty()) {
    throw Error(ErrorCode::validation, "solver scores do not cover the question set:\n" + gaps);
  }
}

}  // namespace

CalibrationModel fit_calibration(const ScoreTable& train_scores,
                                 const std::map<std::string, int>& labels) {
  check_coverage(train_scores, labels);
  if (labels.empty()) throw Error(ErrorCode::config, "empty training set");

  CalibrationModel model;
  for (const auto& [solver_id, _] : train_scores) model.solver_ids.push_back(solver_id);
  std::sort(model.solver_ids.begin(), model.solver_ids.end());

  // Step 1: option-level calibration per solver. One row per (question, option).
  for (const auto& solver_id : model.solver_ids) {
    const auto& by_question = train_scores.at(solver_id);
    std::vector<std::array<double, 2>> rows;
    std::vector<double> targets;
    for (const auto& [qid, answer] : labels) {
      const SolverScores& s = by_question.at(qid);
      for (Eigen::Index i = 0; i < s.logits.size(); ++i) {
        rows.push_back({s.logits(i), s.probs(i)});
        targets.push_back(i == answer ? 1.0 : 0.0);
      }
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      x(static_cast<Eigen::Index>(r), 0) = rows[r][0];
      x(static_cast<Eigen::Index>(r), 1) = rows[r][1];
      y(static_cast<Eigen::Index>(r)) = targets[r];
    }
    model.per_solver[solver_id] = fit_logistic(x, y, CalibrationModel::kL2);
  }

  // Step 2: from the vector of calibrated per-solver scores to correctness.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> targets;
  for (const auto& [qid, answer] : labels) {
    const SolverScores& any = train_scores.at(model.solver_ids.front()).at(qid);
    for (Eigen::Index i = 0; i < any.logits.size(); ++i) {
      Eigen::VectorXd features(static_cast<Eigen::Index>(model.solver_ids.size()));
      for (size_t k = 0; k < model.solver_ids.size(); ++k) {
        const SolverScores& s = train_scores.at(model.solver_ids[k]).at(qid);
        features(static_cast<Eigen::Index>(k)) =
            model.calibrate(model.solver_ids[k], s.logits(i), s.probs(i));
      }
      rows.push_back(std::move(features));
      targets.push_back(i == answer ? 1.0 : 0.0);
    }
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(model.solver_ids.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    y(static_cast<Eigen::Index>(r)) = targets[r];
  }
  model.second_stage = fit_logistic(x, y, CalibrationModel::kL2);
  return model;
}

CalibratedScores ensemble_predict(const CalibrationModel& model,
                                  const std::map<std::string, SolverScores>& scores) {
  for (const auto& [solver_id, _] : scores) {
    if (!model.per_solver.count(solver_id)) {
      throw Error(ErrorCode::not_found,
                  "solver '" + solver_id + "' was not part of the fitted ensemble");
    }
  }
  Eigen::Index n = -1;
  std::string qid;
  for (const auto& id : model.solver_ids) {
    auto it = scores.find(id);
    if (it == scores.end()) {
      throw Error(ErrorCode::validation, "missing scores from solver '" + id + "'");
    }
    if (n < 0) {
      n = it->second.logits.size();
      qid = it->second.question_id;
    } else if (it->second.logits.size() != n) {
      throw Error(ErrorCode::validation,
                  "solvers disagree on option count for question " + qid);
    }
  }

  CalibratedScores out;
  out.question_id = qid;
  out.scores.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd features(static_cast<Eigen::Index>(model.solver_ids.size()));
    for (size_t k = 0; k < model.solver_ids.size(); ++k) {
      const SolverScores& s = scores.at(model.solver_ids[k]);
      features(static_cast<Eigen::Index>(k)) =
          model.calibrate(model.solver_ids[k], s.logits(i), s.probs(i));
    }
    out.scores(i) = model.second_stage.predict(features);
  }
  out.predicted = argmax_lowest_index(out.scores);
  return out;
}

std::vector<CalibratedScores> ensemble_predict_all(const CalibrationModel& model,
                                                   const ScoreTable& scores) {
  if (model.solver_ids.empty()) throw Error(ErrorCode::config, "empty ensemble model");
  std::vector<CalibratedScores> out;
  const auto& anchor = scores.at(model.solver_ids.front());
  for (const auto& [qid, _] : anchor) {
    std::map<std::string, SolverScores> per_question;
    for (const auto& id : model.solver_ids) {
      auto it = scores.find(id);
      if (it == scores.end() || !it->second.count(qid)) {
        throw Error(ErrorCode::validation,
                    "missing scores from solver '" + id + "' for question " + qid);
      }
      per_question[id] = it->second.at(qid);
    }
    out.push_back(ensemble_predict(model, per_question));
  }
  return out;
}

ComplementarityReport complementarity_report(const ScoreTable& scores,
                                             const std::map<std::string, int>& labels) {
  if (scores.size() < 2) {
    throw Error(ErrorCode::config, "complementarity needs at least two solvers");
  }
  // questions every solver scored
  std::vector<std::string> shared;
  for (const auto& [qid, answer] : labels) {
    bool everywhere = true;
    for (const auto& [_, by_question] : scores) everywhere &= by_question.count(qid) > 0;
    if (everywhere) shared.push_back(qid);
  }
  if (shared.empty()) {
    throw Error(ErrorCode::validation, "solvers share no scored questions");
  }

  std::vector<std::string> ids;
  for (const auto& [id, _] : scores) ids.push_back(id);

  std::map<std::string, std::vector<bool>> hit;
  for (const auto& id : ids) {
    std::vector<bool> h;
    h.reserve(shared.size());
    for (const auto& qid : shared) {
      h.push_back(scores.at(id).at(qid).predicted == labels.at(qid));
    }
    hit[id] = std::move(h);
  }

  ComplementarityReport report;
  report.questions = static_cast<int>(shared.size());

  int missed_somewhere = 0, rescued = 0;
  for (size_t q = 0; q < shared.size(); ++q) {
    bool any_miss = false, any_hit = false;
    for (const auto& id : ids) {
      (hit[id][q] ? any_hit : any_miss) = true;
    }
    if (any_miss) {
      ++missed_somewhere;
      if (any_hit) ++rescued;
    }
  }
  report.overall = missed_somewhere == 0
                       ? 0.0
                       : static_cast<double>(rescued) / missed_somewhere;

  for (size_t a = 0; a < ids.size(); ++a) {
    for (size_t b = a + 1; b < ids.size(); ++b) {
      int either_miss = 0, cross = 0;
      for (size_t q = 0; q < shared.size(); ++q) {
        bool ha = hit[ids[a]][q], hb = hit[ids[b]][q];
        if (!ha || !hb) ++either_miss;
        if (ha != hb) ++cross;
      }
      report.pairwise[{ids[a], ids[b]}] =
          either_miss == 0 ? 0.0 : static_cast<double>(cross) / either_miss;
    }
  }
  return report;
}

std::string ComplementarityReport::to_json() const {
  json j;
  j["overall"] = overall;
  j["questions"] = questions;
  json pairs = json::array();
  for (const auto& [pair, value] : pairwise) {
    pairs.push_back({{"solvers", {pair.first, pair.second}}, {"complementarity", value}});
  }
  j["pairwise"] = std::move(pairs);
  return j.dump(2);
}

}  // namespace isaaq
