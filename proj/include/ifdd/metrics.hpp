// Copyright (c) 2026 The IFDD Authors. All Rights Reserved.
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

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ifdd {

struct MetricsReport {
  double uar = 0;  // mean recall over classes that have samples
  double war = 0;  // overall accuracy
  std::vector<double> per_class_recall;  // 0 for classes without samples
  std::vector<std::size_t> class_support;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

inline MetricsReport compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                     std::size_t num_classes) {
  if (predictions.empty()) throw std::invalid_argument("compute_metrics on an empty set");
  if (predictions.size() != labels.size()) throw std::invalid_argument("predictions and labels differ in length");
  MetricsReport r;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw std::out_of_range("class index outside [0, " + std::to_string(num_classes) + ") at sample " + std::to_string(i));
    }
    ++r.confusion[labels[i]][predictions[i]];
  }
  std::size_t correct = 0;
  r.per_class_recall.assign(num_classes, 0.0);
  r.class_support.assign(num_classes, 0);
  double recall_sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t p = 0; p < num_classes; ++p) r.class_support[c] += r.confusion[c][p];
    correct += r.confusion[c][c];
    if (r.class_support[c] == 0) continue;
    r.per_class_recall[c] = double(r.confusion[c][c]) / double(r.class_support[c]);
    recall_sum += r.per_class_recall[c];
    ++present;
  }
  r.war = double(correct) / double(labels.size());
  r.uar = recall_sum / double(present);
  return r;
}

}  // namespace ifdd
