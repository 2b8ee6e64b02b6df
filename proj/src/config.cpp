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

#include "ppboost/config.hpp"

#include <set>

#include "ppboost/error.hpp"
#include "ppboost/fsutil.hpp"
#include "ppboost/manifest.hpp"

namespace ppboost {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object and remembers which were consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + name_ + "." + key + " has the wrong type");
    }
  }

  const json* raw(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string path(const char* key) const { return name_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown config key " + name_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> used_;
};

template <class T, std::size_t N>
void get_array(Section& s, const char* key, std::array<T, N>& out) {
  if (const json* v = s.raw(key)) {
    if (!v->is_array() || v->size() != N) {
      throw ConfigError("config key " + s.path(key) + " must be an array of " + std::to_string(N));
    }
    for (std::size_t i = 0; i < N; ++i) out[i] = (*v)[i].get<T>();
  }
}

void get_seed(Section& s, const char* key, RngSeed& out) {
  if (const json* v = s.raw(key)) {
    if (!v->is_number_unsigned()) {
      throw ConfigError("config key " + s.path(key) + " must be a non-negative integer");
    }
    out.value = v->get<std::uint64_t>();
  }
}

boxgeom::Upsample parse_upsample(const std::string& s) {
  if (s == "bilinear") return boxgeom::Upsample::kBilinear;
  if (s == "nearest") return boxgeom::Upsample::kNearest;
  throw ConfigError("unknown upsample mode '" + s + "' (bilinear, nearest)");
}

confmap::FilterMode parse_filter_mode(const std::string& s) {
  if (s == "percentile") return confmap::FilterMode::kPercentile;
  if (s == "absolute") return confmap::FilterMode::kAbsolute;
  throw ConfigError("unknown filter mode '" + s + "' (percentile, absolute)");
}

ExtractMap parse_extract_map(const std::string& s) {
  if (s == "high") return ExtractMap::kHigh;
  if (s == "low") return ExtractMap::kLow;
  throw ConfigError("unknown extract_map '" + s + "' (high, low)");
}

}  // namespace

void PipelineConfig::validate() const {
  data.synthetic.validate();
  confmap.validate();
  extract.validate();
  filter.validate();
  detector.validate();
  train.validate();
  semisup.validate();
  expand.validate();
  segment.validate();
  nsd.validate();
}

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig full_preset() {
  PipelineConfig c;
  c.train.iters = 10000;
  return c;
}

PipelineConfig preset(const std::string& name) {
  if (name == "desk") return default_config();
  if (name == "full") return full_preset();
  throw ConfigError("unknown preset '" + name + "' (desk, full)");
}

synth::SynthConfig synth_from_json(const json& j, synth::SynthConfig s) {
  Section sec(j, "data.synthetic");
  sec.get("n_samples", s.n_samples);
  sec.get("image_h", s.image_h);
  sec.get("image_w", s.image_w);
  if (const json* g = sec.raw("grid")) {
    Section gs(*g, "data.synthetic.grid");
    gs.get("rows", s.grid.rows);
    gs.get("cols", s.grid.cols);
    gs.get("channels", s.grid.channels);
    gs.finish();
  }
  std::string kind = synth::to_string(s.shape_kind);
  sec.get("shape_kind", kind);
  s.shape_kind = synth::parse_shape_kind(kind);
  get_array(sec, "size_range", s.size_range);
  sec.get("signal", s.signal);
  get_array(sec, "noise_sigma_range", s.noise_sigma_range);
  sec.get("distractor_prob", s.distractor_prob);
  sec.get("background_logit", s.background_logit);
  sec.get("activation_shrink", s.activation_shrink);
  sec.get("min_coverage", s.min_coverage);
  sec.get("feature_contrast", s.feature_contrast);
  sec.get("feature_noise", s.feature_noise);
  sec.get("infer_fraction", s.infer_fraction);
  sec.get("prompt_pool", s.prompt_pool);
  get_seed(sec, "seed", s.seed);
  sec.finish();
  return s;
}

json synth_to_json(const synth::SynthConfig& s) {
  return {{"n_samples", s.n_samples},
          {"image_h", s.image_h},
          {"image_w", s.image_w},
          {"grid", {{"rows", s.grid.rows}, {"cols", s.grid.cols}, {"channels", s.grid.channels}}},
          {"shape_kind", synth::to_string(s.shape_kind)},
          {"size_range", s.size_range},
          {"signal", s.signal},
          {"noise_sigma_range", s.noise_sigma_range},
          {"distractor_prob", s.distractor_prob},
          {"background_logit", s.background_logit},
          {"activation_shrink", s.activation_shrink},
          {"min_coverage", s.min_coverage},
          {"feature_contrast", s.feature_contrast},
          {"feature_noise", s.feature_noise},
          {"infer_fraction", s.infer_fraction},
          {"prompt_pool", s.prompt_pool},
          {"seed", s.seed.value}};
}

PipelineConfig config_from_json(const json& doc, PipelineConfig c) {
  Section top(doc, "config");

  if (const json* j = top.raw("data")) {
    Section s(*j, "data");
    s.get("manifest", c.data.manifest);
    s.get("out_dir", c.data.out_dir);
    if (const json* sj = s.raw("synthetic")) c.data.synthetic = synth_from_json(*sj, c.data.synthetic);
    s.finish();
  }
  if (const json* j = top.raw("confmap")) {
    Section s(*j, "confmap");
    s.get("tau_softmax", c.confmap.tau_softmax);
    s.get("tau_low", c.confmap.tau_low);
    s.get("tau_high", c.confmap.tau_high);
    s.get("epsilon", c.confmap.epsilon);
    s.get("binarize_threshold", c.extract.binarize_threshold);
    std::string up = c.extract.upsample == boxgeom::Upsample::kBilinear ? "bilinear" : "nearest";
    s.get("upsample", up);
    c.extract.upsample = parse_upsample(up);
    std::string em = c.extract_map == ExtractMap::kHigh ? "high" : "low";
    s.get("extract_map", em);
    c.extract_map = parse_extract_map(em);
    s.finish();
  }
  if (const json* j = top.raw("filter")) {
    Section s(*j, "filter");
    s.get("enabled", c.ablation.filter);
    std::string mode = c.filter.mode == confmap::FilterMode::kPercentile ? "percentile" : "absolute";
    s.get("mode", mode);
    c.filter.mode = parse_filter_mode(mode);
    s.get("keep_fraction", c.filter.keep_fraction);
    s.get("tau_kl", c.filter.tau_kl);
    s.finish();
  }
  if (const json* j = top.raw("detector")) {
    Section s(*j, "detector");
    s.get("enabled", c.ablation.detector);
    s.get("k", c.detector.k);
    s.get("anchor_scale", c.detector.anchor_scale);
    s.get("pool_radii", c.detector.pool_radii);
    s.get("min_score", c.detector.min_score);
    s.get("nms_iou", c.detector.nms_iou);
    s.get("lr", c.train.lr);
    s.get("iters", c.train.iters);
    s.get("momentum", c.train.momentum);
    s.get("pos_iou", c.train.pos_iou);
    s.get("reg_weight", c.train.reg_weight);
    s.finish();
  }
  if (const json* j = top.raw("semisup")) {
    Section s(*j, "semisup");
    s.get("labeled_fraction", c.semisup.labeled_fraction);
    s.get("burn_in_iters", c.semisup.burn_in_iters);
    s.get("unsup_weight", c.semisup.unsup_weight);
    s.get("ema_decay", c.semisup.ema_decay);
    s.get("pl_score_min", c.semisup.pl_score_min);
    s.get("pl_nms_iou", c.semisup.pl_nms_iou);
    s.get("batch_labeled", c.semisup.batch_labeled);
    s.get("batch_unlabeled", c.semisup.batch_unlabeled);
    std::string model = c.infer_with_teacher ? "teacher" : "student";
    s.get("inference_model", model);
    if (model != "teacher" && model != "student") {
      throw ConfigError("semisup.inference_model must be teacher or student");
    }
    c.infer_with_teacher = model == "teacher";
    get_seed(s, "seed", c.semisup.seed);
    if (const json* a = s.raw("aug")) {
      Section as(*a, "semisup.aug");
      as.get("hflip_p", c.semisup.aug.hflip_p);
      as.get("noise_sigma", c.semisup.aug.noise_sigma);
      as.get("dropout_p", c.semisup.aug.dropout_p);
      as.finish();
    }
    s.finish();
  }
  if (const json* j = top.raw("expand")) {
    Section s(*j, "expand");
    s.get("enabled", c.ablation.expand);
    s.get("ratio", c.expand.ratio);
    s.get("clamp_to_image", c.expand.clamp_to_image);
    if (const json* phi = s.raw("phi")) {
      if (phi->is_string() && phi->get<std::string>() == "median") {
        c.expand.phi_mode = boxgeom::PhiMode::kMedian;
      } else if (phi->is_number()) {
        c.expand.phi_mode = boxgeom::PhiMode::kFixed;
        c.expand.phi = phi->get<double>();
      } else {
        throw ConfigError("expand.phi must be \"median\" or a number");
      }
    }
    s.finish();
  }
  if (const json* j = top.raw("segment")) {
    Section s(*j, "segment");
    std::string backend = segmenter::to_string(c.segment.backend);
    s.get("backend", backend);
    c.segment.backend = segmenter::parse_backend(backend);
    s.get("tau_seg", c.segment.tau_seg);
    s.get("mock_boundary_noise", c.segment.mock_boundary_noise);
    s.get("timeout_s", c.segment.timeout_s);
    s.get("exchange_dir", c.exchange_dir);
    s.finish();
  }
  if (const json* j = top.raw("metrics")) {
    Section s(*j, "metrics");
    s.get("nsd_tolerance_px", c.nsd.tolerance_px);
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["data"] = {{"manifest", c.data.manifest},
               {"out_dir", c.data.out_dir},
               {"synthetic", synth_to_json(c.data.synthetic)}};
  j["confmap"] = {{"tau_softmax", c.confmap.tau_softmax},
                  {"tau_low", c.confmap.tau_low},
                  {"tau_high", c.confmap.tau_high},
                  {"epsilon", c.confmap.epsilon},
                  {"binarize_threshold", c.extract.binarize_threshold},
                  {"upsample", c.extract.upsample == boxgeom::Upsample::kBilinear ? "bilinear" : "nearest"},
                  {"extract_map", c.extract_map == ExtractMap::kHigh ? "high" : "low"}};
  j["filter"] = {{"enabled", c.ablation.filter},
                 {"mode", c.filter.mode == confmap::FilterMode::kPercentile ? "percentile" : "absolute"},
                 {"keep_fraction", c.filter.keep_fraction},
                 {"tau_kl", c.filter.tau_kl}};
  j["detector"] = {{"enabled", c.ablation.detector},
                   {"k", c.detector.k},
                   {"anchor_scale", c.detector.anchor_scale},
                   {"pool_radii", c.detector.pool_radii},
                   {"min_score", c.detector.min_score},
                   {"nms_iou", c.detector.nms_iou},
                   {"lr", c.train.lr},
                   {"iters", c.train.iters},
                   {"momentum", c.train.momentum},
                   {"pos_iou", c.train.pos_iou},
                   {"reg_weight", c.train.reg_weight}};
  j["semisup"] = {{"labeled_fraction", c.semisup.labeled_fraction},
                  {"burn_in_iters", c.semisup.burn_in_iters},
                  {"unsup_weight", c.semisup.unsup_weight},
                  {"ema_decay", c.semisup.ema_decay},
                  {"pl_score_min", c.semisup.pl_score_min},
                  {"pl_nms_iou", c.semisup.pl_nms_iou},
                  {"batch_labeled", c.semisup.batch_labeled},
                  {"batch_unlabeled", c.semisup.batch_unlabeled},
                  {"inference_model", c.infer_with_teacher ? "teacher" : "student"},
                  {"seed", c.semisup.seed.value},
                  {"aug",
                   {{"hflip_p", c.semisup.aug.hflip_p},
                    {"noise_sigma", c.semisup.aug.noise_sigma},
                    {"dropout_p", c.semisup.aug.dropout_p}}}};
  j["expand"] = {{"enabled", c.ablation.expand},
                 {"ratio", c.expand.ratio},
                 {"clamp_to_image", c.expand.clamp_to_image}};
  if (c.expand.phi_mode == boxgeom::PhiMode::kMedian) {
    j["expand"]["phi"] = "median";
  } else {
    j["expand"]["phi"] = c.expand.phi;
  }
  j["segment"] = {{"backend", segmenter::to_string(c.segment.backend)},
                  {"tau_seg", c.segment.tau_seg},
                  {"mock_boundary_noise", c.segment.mock_boundary_noise},
                  {"timeout_s", c.segment.timeout_s},
                  {"exchange_dir", c.exchange_dir}};
  j["metrics"] = {{"nsd_tolerance_px", c.nsd.tolerance_px}};
  return j;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  json doc;
  try {
    doc = json::parse(fsutil::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config '" + path.string() + "': " + e.what());
  }
  return config_from_json(doc, std::move(base));
}

std::string config_hash(const PipelineConfig& cfg) {
  // Where outputs go does not change them.
  auto j = config_to_json(cfg);
  j["data"].erase("out_dir");
  return fsutil::sha256_hex(j.dump());
}

}  // namespace ppboost
