/* Copyright 2026 The PPBoost Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ppboost/manifest.hpp"
#include "ppboost/types.hpp"

// Text-conditioned confidence maps and the temperature-disagreement filter.
//
// A sample's stability score is KL(low || high) between the two sigmoid
// maps after each is normalized into a spatial distribution. Samples whose
// sharp (low temperature) and smooth (high temperature) maps disagree are
// treated as unreliable and dropped before pseudo-labeling.
namespace ppboost::confmap {

struct ConfMapConfig {
  double tau_softmax = 1.0;
  double tau_low = 0.1;
  double tau_high = 1.0;
  double epsilon = 1e-12;

  void validate() const;
};

enum class FilterMode { kPercentile, kAbsolute };

struct FilterConfig {
  FilterMode mode = FilterMode::kPercentile;
  double keep_fraction = 0.30;
  double tau_kl = 0.0;

  void validate() const;
};

struct StabilityScore {
  std::string sample_id;
  double kl = 0.0;
  bool kept = false;
  bool operator==(const StabilityScore&) const = default;
};

// Cosine similarity between each patch feature and the prompt vector.
GridMap cosine_logits(const GridMap& features, const PromptEmbedding& prompt);

// Spatial softmax of logits / tau over all cells (max-subtracted).
GridMap softmax_map(const GridMap& logits, double tau);

// Elementwise sigmoid(logits / tau).
GridMap sigmoid_map(const GridMap& logits, double tau);

struct SigmoidMaps {
  GridMap low;
  GridMap high;
};
SigmoidMaps sigmoid_maps(const GridMap& logits, const ConfMapConfig& cfg);

// Floors every value at epsilon, then divides by the total.
GridMap normalize_distribution(const GridMap& map, double epsilon);

// sum_j p(j) log(p(j) / q(j)), with 0 log 0 = 0.
double kl_divergence(const GridMap& p, const GridMap& q);

// KL(normalize(sigmoid low) || normalize(sigmoid high)) for one logit grid.
double stability_kl(const GridMap& logits, const ConfMapConfig& cfg);

// Number of items kept when keeping `fraction` of n, rounded up.
std::size_t ceil_count(double fraction, std::size_t n);

struct ScoredSample {
  std::string sample_id;
  double kl = 0.0;
};

// Marks the kept subset. Output order matches input order. Percentile mode
// keeps the ceil(keep_fraction * N) lowest scores, ties broken by ascending
// sample_id; absolute mode keeps kl <= tau_kl.
std::vector<StabilityScore> apply_filter(const std::vector<ScoredSample>& scores,
                                         const FilterConfig& fcfg);

// Loads a sample's logit grid and checks it against the declared grid shape.
GridMap load_logits(const Dataset& ds, const SampleRecord& rec);

// Scores every sample (in parallel across `jobs` workers) and filters.
// Results are in the order of `samples`.
std::vector<StabilityScore> score_and_filter(const Dataset& ds,
                                             const std::vector<SampleRecord>& samples,
                                             const ConfMapConfig& cfg,
                                             const FilterConfig& fcfg,
                                             std::size_t jobs = 1);

std::string encode_scores(const std::vector<StabilityScore>& scores);
std::vector<StabilityScore> read_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path,
                  const std::vector<StabilityScore>& scores);

}  // namespace ppboost::confmap
