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

#include "ppboost/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "ppboost/boxgeom.hpp"
#include "ppboost/error.hpp"
#include "ppboost/simd/kernels.hpp"

namespace ppboost::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Stand-in for "no feature" inside the 1-D pass; larger than any squared
// distance on a real image.
constexpr double kFar = 1e30;

void check_dims(const Mask& a, const Mask& b, const char* what) {
  if (!a.same_dims(b)) {
    throw ShapeError(std::string(what) + ": mask sizes differ (" + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                     "x" + std::to_string(b.width()) + ")");
  }
}

// Lower envelope of parabolas; f and d have n entries with stride 1.
void edt_1d(const double* f, double* d, std::size_t n, std::vector<long>& v,
            std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  long k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (long q = 1; q < static_cast<long>(n); ++q) {
    double s;
    while (true) {
      const long p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * static_cast<double>(q - p));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (long q = 0; q < static_cast<long>(n); ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double dq = static_cast<double>(q - v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

void NsdConfig::validate() const {
  if (!(tolerance_px >= 0.0) || !std::isfinite(tolerance_px)) {
    throw ConfigError("metrics.nsd_tolerance_px must be finite and >= 0");
  }
}

double dice(const Mask& a, const Mask& b) {
  check_dims(a, b, "dice");
  const auto& k = simd::kernels();
  const std::size_t n = a.bits().size();
  const std::size_t ca = k.count_nonzero(a.bits().data(), n);
  const std::size_t cb = k.count_nonzero(b.bits().data(), n);
  if (ca + cb == 0) return 1.0;
  const std::size_t both = k.count_both(a.bits().data(), b.bits().data(), n);
  return 2.0 * static_cast<double>(both) / static_cast<double>(ca + cb);
}

Mask boundary(const Mask& m) {
  const std::size_t h = m.height(), w = m.width();
  Mask out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!m.at(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
      if (edge || !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1)) {
        out.at(r, c) = 1;
      }
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(const Mask& features) {
  const std::size_t h = features.height(), w = features.width();
  std::vector<double> grid(h * w);
  if (features.count() == 0) {
    std::fill(grid.begin(), grid.end(), kInf);
    return grid;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = features.bits()[i] ? 0.0 : kFar;
  std::vector<long> v;
  std::vector<double> z;
  std::vector<double> f(std::max(h, w)), d(std::max(h, w));
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) f[r] = grid[r * w + c];
    edt_1d(f.data(), d.data(), h, v, z);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = d[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    edt_1d(grid.data() + r * w, d.data(), w, v, z);
    std::copy(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(w), grid.begin() + r * w);
  }
  return grid;
}

double nsd(const Mask& a, const Mask& b, const NsdConfig& cfg) {
  check_dims(a, b, "nsd");
  cfg.validate();
  const bool ea = a.count() == 0, eb = b.count() == 0;
  if (ea && eb) return 1.0;
  if (ea || eb) return 0.0;
  const Mask ba = boundary(a), bb = boundary(b);
  const auto da = squared_distance_transform(ba);
  const auto db = squared_distance_transform(bb);
  const double tol2 = cfg.tolerance_px * cfg.tolerance_px;
  std::size_t na = 0, nb = 0, hit = 0;
  for (std::size_t i = 0; i < ba.bits().size(); ++i) {
    if (ba.bits()[i]) {
      ++na;
      if (db[i] <= tol2) ++hit;
    }
    if (bb.bits()[i]) {
      ++nb;
      if (da[i] <= tol2) ++hit;
    }
  }
  return static_cast<double>(hit) / static_cast<double>(na + nb);
}

std::optional<double> ApResult::at(double t) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (std::abs(thresholds[i] - t) < 1e-9) return ap[i];
  }
  return std::nullopt;
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

ApResult average_precision(const std::vector<ScoredBox>& dets,
                           const std::vector<GroundTruth>& gts,
                           const std::vector<double>& iou_thresholds) {
  if (gts.empty()) throw ValidationError("average_precision: no ground-truth boxes");
  if (iou_thresholds.empty()) throw ValidationError("average_precision: no IoU thresholds");

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].det.score != dets[b].det.score) return dets[a].det.score > dets[b].det.score;
    return dets[a].sample_id < dets[b].sample_id;
  });

  ApResult res;
  res.thresholds = iou_thresholds;
  const double n_gt = static_cast<double>(gts.size());
  for (double t : iou_thresholds) {
    std::vector<bool> matched(gts.size(), false);
    std::vector<double> prec, rec;
    std::size_t tp = 0, fp = 0;
    for (std::size_t idx : order) {
      const auto& d = dets[idx];
      long best = -1;
      double best_iou = -1.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (matched[g] || gts[g].sample_id != d.sample_id) continue;
        const double ov = boxgeom::iou(d.det.box, gts[g].box);
        if (ov >= t && ov > best_iou) {
          best = static_cast<long>(g);
          best_iou = ov;
        }
      }
      if (best >= 0) {
        matched[static_cast<std::size_t>(best)] = true;
        ++tp;
      } else {
        ++fp;
      }
      prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
      rec.push_back(static_cast<double>(tp) / n_gt);
    }
    // Envelope from the right, then sum over recall steps.
    for (std::size_t i = prec.size(); i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
    double ap = 0.0, last_rec = 0.0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (rec[i] > last_rec) {
        ap += (rec[i] - last_rec) * prec[i];
        last_rec = rec[i];
      }
    }
    res.ap.push_back(ap);
  }
  res.map = std::accumulate(res.ap.begin(), res.ap.end(), 0.0) /
            static_cast<double>(res.ap.size());
  return res;
}

EvalReport make_report(std::vector<SampleMetrics> rows, const NsdConfig& nsd_cfg) {
  std::sort(rows.begin(), rows.end(),
            [](const SampleMetrics& a, const SampleMetrics& b) { return a.sample_id < b.sample_id; });
  EvalReport r;
  r.nsd_tolerance_px = nsd_cfg.tolerance_px;
  double sd = 0.0, sn = 0.0;
  for (const auto& row : rows) {
    sd += row.dice;
    sn += row.nsd;
  }
  if (!rows.empty()) {
    r.mdsc = sd / static_cast<double>(rows.size());
    r.mnsd = sn / static_cast<double>(rows.size());
  }
  r.per_sample = std::move(rows);
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["aggregates"] = {{"mDSC", r.mdsc}, {"mNSD", r.mnsd}, {"n", r.per_sample.size()}};
  if (r.detection) {
    j["detection"] = {{"mAP", r.detection->map},
                      {"AP50", r.detection->ap50},
                      {"AP75", r.detection->ap75}};
  } else {
    j["detection"] = nullptr;
  }
  j["nsd_tolerance_px"] = r.nsd_tolerance_px;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.per_sample) {
    rows.push_back({{"sample_id", s.sample_id}, {"dice", s.dice}, {"nsd", s.nsd}});
  }
  j["per_sample"] = rows;
  j["config"] = r.config;
  j["provenance"] = r.provenance;
  return j;
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "sample_id,dice,nsd\n";
  char buf[64];
  for (const auto& s : r.per_sample) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", s.dice, s.nsd);
    out << s.sample_id << buf;
  }
  return out.str();
}

std::string report_svg(const EvalReport& r) {
  constexpr int kBins = 10;
  std::vector<int> hd(kBins, 0), hn(kBins, 0);
  for (const auto& s : r.per_sample) {
    hd[std::min(kBins - 1, static_cast<int>(s.dice * kBins))]++;
    hn[std::min(kBins - 1, static_cast<int>(s.nsd * kBins))]++;
  }
  const int peak = std::max(1, std::max(*std::max_element(hd.begin(), hd.end()),
                                        *std::max_element(hn.begin(), hn.end())));
  const int W = 640, H = 320, left = 50, bottom = 280, top = 30;
  const double bw = (W - left - 20) / static_cast<double>(kBins);
  std::ostringstream o;
  char buf[256];
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"18\">Per-sample metrics (n=%zu)  mDSC=%.4f  mNSD=%.4f</text>\n",
                left, r.per_sample.size(), r.mdsc, r.mnsd);
  o << buf;
  o << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << W - 20 << "\" y2=\""
    << bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i < kBins; ++i) {
    const double x = left + i * bw;
    const double scale = (bottom - top) / static_cast<double>(peak);
    const double h1 = hd[i] * scale, h2 = hn[i] * scale;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"#4477aa\"/>\n",
                  x + 2, bottom - h1, bw / 2 - 2, h1);
    o << buf;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"#ee7733\"/>\n",
                  x + bw / 2, bottom - h2, bw / 2 - 2, h2);
    o << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%d\">%.1f</text>\n", x, bottom + 14,
                  i / static_cast<double>(kBins));
    o << buf;
  }
  o << "<text x=\"" << W - 160 << "\" y=\"40\" fill=\"#4477aa\">Dice</text>\n";
  o << "<text x=\"" << W - 110 << "\" y=\"40\" fill=\"#ee7733\">NSD</text>\n";
  o << "<text x=\"8\" y=\"" << top + 4 << "\">" << peak << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace ppboost::metrics
