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

#include "ppboost/confmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/npy.hpp"
#include "ppboost/parallel.hpp"
#include "ppboost/simd/kernels.hpp"

namespace ppboost::confmap {

void ConfMapConfig::validate() const {
  if (!(tau_softmax > 0.0)) throw ConfigError("confmap.tau_softmax must be > 0");
  if (!(tau_low > 0.0) || !(tau_high > 0.0)) {
    throw ConfigError("confmap temperatures must be > 0");
  }
  if (!(tau_low < tau_high)) throw ConfigError("confmap.tau_low must be < tau_high");
  if (!(epsilon > 0.0)) throw ConfigError("confmap.epsilon must be > 0");
}

void FilterConfig::validate() const {
  if (mode == FilterMode::kPercentile) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
      throw ConfigError("filter.keep_fraction must be in (0, 1]");
    }
  } else if (!(tau_kl >= 0.0)) {
    throw ConfigError("filter.tau_kl must be >= 0");
  }
}

GridMap cosine_logits(const GridMap& features, const PromptEmbedding& prompt) {
  const std::size_t d = features.channels();
  if (prompt.vector.size() != d) {
    throw ShapeError("prompt '" + prompt.prompt_id + "' has length " +
                     std::to_string(prompt.vector.size()) + " but features have " +
                     std::to_string(d) + " channels");
  }
  const auto& k = simd::kernels();
  const double tnorm = std::sqrt(k.dot(prompt.vector.data(), prompt.vector.data(), d));
  if (!(tnorm > 0.0)) {
    throw NumericDomainError("prompt '" + prompt.prompt_id + "' has zero norm");
  }
  GridMap out({features.rows(), features.cols(), 1});
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      const double* f = features.cell(r, c).data();
      const double fnorm = std::sqrt(k.dot(f, f, d));
      if (!(fnorm > 0.0)) {
        throw NumericDomainError("patch (" + std::to_string(r) + ", " +
                                 std::to_string(c) + ") index " +
                                 std::to_string(r * features.cols() + c) +
                                 " has zero norm");
      }
      const double cos = k.dot(f, prompt.vector.data(), d) / (fnorm * tnorm);
      out.at(r, c) = std::clamp(cos, -1.0, 1.0);
    }
  }
  return out;
}

GridMap softmax_map(const GridMap& logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("softmax temperature must be > 0");
  if (!logits.all_finite()) throw NumericDomainError("softmax input has non-finite logits");
  GridMap out(logits.shape());
  const double m = logits.max();
  auto src = logits.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::exp((src[i] - m) / tau);
  const double total = simd::kernels().sum(dst.data(), dst.size());
  for (auto& v : dst) v /= total;
  return out;
}

GridMap sigmoid_map(const GridMap& logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("sigmoid temperature must be > 0");
  GridMap out(logits.shape());
  auto src = logits.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = 1.0 / (1.0 + std::exp(-src[i] / tau));
  }
  return out;
}

SigmoidMaps sigmoid_maps(const GridMap& logits, const ConfMapConfig& cfg) {
  cfg.validate();
  return {sigmoid_map(logits, cfg.tau_low), sigmoid_map(logits, cfg.tau_high)};
}

GridMap normalize_distribution(const GridMap& map, double epsilon) {
  GridMap out(map.shape());
  auto src = map.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::max(src[i], epsilon);
  const double total = simd::kernels().sum(dst.data(), dst.size());
  for (auto& v : dst) v /= total;
  return out;
}

double kl_divergence(const GridMap& p, const GridMap& q) {
  if (!(p.shape() == q.shape())) throw ShapeError("kl_divergence: shape mismatch");
  auto pv = p.values();
  auto qv = q.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] > 0.0) acc += pv[i] * std::log(pv[i] / qv[i]);
  }
  return acc;
}

double stability_kl(const GridMap& logits, const ConfMapConfig& cfg) {
  auto maps = sigmoid_maps(logits, cfg);
  return kl_divergence(normalize_distribution(maps.low, cfg.epsilon),
                       normalize_distribution(maps.high, cfg.epsilon));
}

std::size_t ceil_count(double fraction, std::size_t n) {
  // Guard against products such as 0.3 * 10 = 3.0000000000000004.
  const double raw = fraction * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(k, n);
}

std::vector<StabilityScore> apply_filter(const std::vector<ScoredSample>& scores,
                                         const FilterConfig& fcfg) {
  fcfg.validate();
  std::vector<StabilityScore> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back({s.sample_id, s.kl, false});
  if (fcfg.mode == FilterMode::kAbsolute) {
    for (auto& s : out) s.kept = s.kl <= fcfg.tau_kl;
    return out;
  }
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out[a].kl != out[b].kl) return out[a].kl < out[b].kl;
    return out[a].sample_id < out[b].sample_id;
  });
  const std::size_t keep = ceil_count(fcfg.keep_fraction, out.size());
  for (std::size_t i = 0; i < keep; ++i) out[order[i]].kept = true;
  return out;
}

GridMap load_logits(const Dataset& ds, const SampleRecord& rec) {
  GridMap g = npy::read_grid(ds.path_of(rec.logits_path));
  if (g.channels() != 1 || g.rows() != rec.grid.rows || g.cols() != rec.grid.cols) {
    throw ShapeError("logits for '" + rec.sample_id + "' are " +
                     std::to_string(g.rows()) + "x" + std::to_string(g.cols()) + "x" +
                     std::to_string(g.channels()) + ", manifest declares " +
                     std::to_string(rec.grid.rows) + "x" + std::to_string(rec.grid.cols));
  }
  return g;
}

std::vector<StabilityScore> score_and_filter(const Dataset& ds,
                                             const std::vector<SampleRecord>& samples,
                                             const ConfMapConfig& cfg,
                                             const FilterConfig& fcfg,
                                             std::size_t jobs) {
  cfg.validate();
  fcfg.validate();
  if (samples.empty()) throw ValidationError("score_and_filter: empty dataset");
  std::vector<ScoredSample> scored(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    scored[i] = {samples[i].sample_id, stability_kl(load_logits(ds, samples[i]), cfg)};
  });
  return apply_filter(scored, fcfg);
}

std::string encode_scores(const std::vector<StabilityScore>& scores) {
  std::string out;
  for (const auto& s : scores) {
    nlohmann::json j;
    j["sample_id"] = s.sample_id;
    j["kl"] = s.kl;
    j["kept"] = s.kept;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<StabilityScore> read_scores(const std::filesystem::path& path) {
  std::istringstream in(fsutil::read_file(path));
  std::vector<StabilityScore> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("sample_id").get<std::string>(), j.at("kl").get<double>(),
                     j.at("kept").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("bad score record at " + path.string() + ":" +
                       std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_scores(const std::filesystem::path& path,
                  const std::vector<StabilityScore>& scores) {
  fsutil::write_file_atomic(path, encode_scores(scores));
}

}  // namespace ppboost::confmap
