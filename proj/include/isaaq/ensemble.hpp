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

#include <map>
#include <string>
#include <vector>

#include "isaaq/solvers.hpp"

namespace isaaq {

// L2-regularized binary logistic regression, Newton-fitted. The intercept is
// not penalized.
struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;

  double predict(const Eigen::VectorXd& x) const;  // sigmoid output
};

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           double l2 = 1e-4, int max_iters = 200, double tol = 1e-10);

// solver_id -> question_id -> scores. every solver must cover every question.
using ScoreTable = std::map<std::string, std::map<std::string, SolverScores>>;

ScoreTable score_table(const std::vector<std::vector<SolverScores>>& per_solver);

// Two-step calibration: a per-solver logistic regression over option-level
// features (raw score, softmax-normalized score), then a second logistic
// regression from the calibrated per-solver scores to correctness.
struct CalibrationModel {
  static constexpr double kL2 = 1e-4;

  std::vector<std::string> solver_ids;  // sorted; keys the feature order
  std::map<std::string, LogisticModel> per_solver;
  LogisticModel second_stage;

  // Calibrated per-solver score for one option.
  double calibrate(const std::string& solver_id, double raw, double normalized) const;

  std::string to_json() const;
  static CalibrationModel from_json(const std::string& text);
  void save(const std::filesystem::path& file) const;
  static CalibrationModel load(const std::filesystem::path& file);
};

// labels: question_id -> correct option index.
CalibrationModel fit_calibration(const ScoreTable& train_scores,
                                 const std::map<std::string, int>& labels);

struct CalibratedScores {
  std::string question_id;
  Eigen::VectorXd scores;  // per option, each in [0,1]
  int predicted = 0;
};

// Combines one question's scores from every solver the model was fit on.
CalibratedScores ensemble_predict(const CalibrationModel& model,
                                  const std::map<std::string, SolverScores>& scores);

// All questions in the table at once, sorted by question id.
std::vector<CalibratedScores> ensemble_predict_all(const CalibrationModel& model,
                                                   const ScoreTable& scores);

struct ComplementarityReport {
  // Fraction of questions missed by somebody that are hit by somebody else,
  // over questions missed by at least one solver.
  double overall = 0.0;
  // Per unordered pair {a,b}: |a miss & b hit, or vice versa| / |a or b miss|.
  std::map<std::pair<std::string, std::string>, double> pairwise;
  int questions = 0;

  std::string to_json() const;
};

ComplementarityReport complementarity_report(const ScoreTable& scores,
                                             const std::map<std::string, int>& labels);

}  // namespace isaaq
