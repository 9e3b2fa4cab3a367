#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigscat/dataset.hpp"
#include "sigscat/errors.hpp"
#include "sigscat/model.hpp"
#include "sigscat/parallel.hpp"
#include "sigscat/scattering.hpp"

namespace sigscat {

/// An evaluation pair with its normalized distance (lower = more similar).
struct ScoredPair {
  EvalPair pair;
  double score = 0.0;

  bool genuine() const noexcept { return pair.label == PairLabel::genuine_pair; }
};

/// Convenience for metric tests: pairs carrying only a label and a score.
inline ScoredPair scored(bool genuine, double score) {
  ScoredPair s;
  s.pair.label = genuine ? PairLabel::genuine_pair : PairLabel::forgery_pair;
  s.score = score;
  return s;
}

/// Embeds each distinct image of `pairs` once (or once per occurrence with
/// `use_cache` off) and scores every pair, preserving order.
inline std::vector<ScoredPair> score_pairs(const SignatureCatalog& catalog,
                                           const std::vector<EvalPair>& pairs,
                                           const ModelWeights<float>& weights, const FilterBank& bank,
                                           int threads = 1, bool use_cache = true,
                                           std::size_t* embed_calls = nullptr) {
  std::vector<ImageRef> todo;
  if (use_cache) {
    for (const auto& p : pairs) {
      todo.push_back(p.first);
      todo.push_back(p.second);
    }
    std::sort(todo.begin(), todo.end());
    todo.erase(std::unique(todo.begin(), todo.end()), todo.end());
  } else {
    for (const auto& p : pairs) {
      todo.push_back(p.first);
      todo.push_back(p.second);
    }
  }
  std::vector<std::optional<Embedding>> emb(todo.size());
  parallel_for(todo.size(), threads, [&](std::size_t i) {
    const auto& im = catalog.image(todo[i]);
    try {
      emb[i] = embed(*im.pixels, weights, bank, im.id);
    } catch (const Error& e) {
      throw Error("embedding '" + im.id + "' failed: " + e.what());
    }
  });
  if (embed_calls) *embed_calls = todo.size();

  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const Embedding* a;
    const Embedding* b;
    if (use_cache) {
      a = &*emb[std::lower_bound(todo.begin(), todo.end(), p.first) - todo.begin()];
      b = &*emb[std::lower_bound(todo.begin(), todo.end(), p.second) - todo.begin()];
    } else {
      a = &*emb[2 * k];
      b = &*emb[2 * k + 1];
    }
    out.push_back({p, distance(*a, *b)});
  }
  return out;
}

struct RocPoint {
  double threshold, fpr, tpr;
};
struct PrPoint {
  double threshold, recall, precision;
};
struct DetPoint {
  double threshold, fmr, fnmr;
};

namespace detail {

// Distinct scores ascending, with the cumulative per-class count of pairs
// scoring <= each of them.
struct Sweep {
  std::vector<double> scores;
  std::vector<std::size_t> genuine_le, forged_le;
  std::size_t genuine = 0, forged = 0;
};

inline Sweep sweep(const std::vector<ScoredPair>& scored) {
  std::vector<std::pair<double, bool>> v;
  v.reserve(scored.size());
  for (const auto& s : scored) {
    if (!std::isfinite(s.score)) throw NumericError("non-finite score in evaluation input");
    v.emplace_back(s.score, s.genuine());
  }
  std::sort(v.begin(), v.end());
  Sweep sw;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? sw.genuine : sw.forged)++;
      ++j;
    }
    sw.scores.push_back(v[i].first);
    sw.genuine_le.push_back(sw.genuine);
    sw.forged_le.push_back(sw.forged);
    i = j;
  }
  return sw;
}

inline void require_both(const Sweep& sw, const char* op) {
  if (sw.genuine == 0 || sw.forged == 0) {
    throw Error(std::string(op) + " needs at least one genuine pair and one forgery pair");
  }
}

inline double below(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }

}  // namespace detail

struct RocResult {
  std::vector<RocPoint> points;   ///< ascending threshold, starting at (0, 0)
  double auc = 0.0;
};

/// "Test positive" means score <= threshold; positives are genuine pairs.
/// Equal scores form one step, so the trapezoid area equals the
/// Mann-Whitney statistic with ties counted one half.
inline RocResult roc_auc(const std::vector<ScoredPair>& scored) {
  const auto sw = detail::sweep(scored);
  detail::require_both(sw, "roc_auc");
  RocResult r;
  const double P = static_cast<double>(sw.genuine), N = static_cast<double>(sw.forged);
  r.points.push_back({detail::below(sw.scores.front()), 0.0, 0.0});
  // Twice the area in units of one (positive, negative) cell, kept integral.
  std::uint64_t area2 = 0, tp_prev = 0, fp_prev = 0;
  for (std::size_t i = 0; i < sw.scores.size(); ++i) {
    const std::uint64_t tp = sw.genuine_le[i], fp = sw.forged_le[i];
    area2 += (fp - fp_prev) * (tp + tp_prev);
    r.points.push_back({sw.scores[i], static_cast<double>(fp) / N, static_cast<double>(tp) / P});
    tp_prev = tp;
    fp_prev = fp;
  }
  r.auc = static_cast<double>(area2) / (2.0 * P * N);
  return r;
}

struct PrResult {
  std::vector<PrPoint> points;   ///< ascending threshold
  double aupr = 0.0;
};

/// Average precision sum over the same sweep: sum (R_k - R_{k-1}) * P_k.
inline PrResult pr_aupr(const std::vector<ScoredPair>& scored) {
  const auto sw = detail::sweep(scored);
  if (sw.genuine == 0) throw Error("pr_aupr needs at least one genuine pair");
  PrResult r;
  const double P = static_cast<double>(sw.genuine);
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < sw.scores.size(); ++i) {
    const double tp = static_cast<double>(sw.genuine_le[i]);
    const double fp = static_cast<double>(sw.forged_le[i]);
    const double recall = tp / P, precision = tp / (tp + fp);
    r.aupr += (recall - prev_recall) * precision;
    r.points.push_back({sw.scores[i], recall, precision});
    prev_recall = recall;
  }
  return r;
}

struct EerResult {
  std::vector<DetPoint> curve;   ///< every candidate threshold, ascending
  double eer = 0.0;
  double eer_threshold = 0.0;
  double fmr = 0.0, fnmr = 0.0;  ///< at the chosen threshold
};

/// FMR(t): forgery pairs with score <= t; FNMR(t): genuine pairs with
/// score > t. Candidates are just below the smallest score, each distinct
/// score and each midpoint between neighbours. The first candidate with the
/// smallest |FMR - FNMR| wins; EER is the mean of the two rates there. A
/// winning score s is reported as the midpoint between s and the next
/// distinct score, and the below-minimum candidate as half the minimum
/// (when positive); both make the same decisions on every observed score.
inline EerResult fmr_fnmr_eer(const std::vector<ScoredPair>& scored) {
  const auto sw = detail::sweep(scored);
  detail::require_both(sw, "fmr_fnmr_eer");
  const double G = static_cast<double>(sw.genuine), F = static_cast<double>(sw.forged);
  EerResult r;
  auto add = [&](double t, std::size_t g_le, std::size_t f_le) {
    r.curve.push_back({t, static_cast<double>(f_le) / F, static_cast<double>(sw.genuine - g_le) / G});
  };
  add(detail::below(sw.scores.front()), 0, 0);
  for (std::size_t i = 0; i < sw.scores.size(); ++i) {
    add(sw.scores[i], sw.genuine_le[i], sw.forged_le[i]);
    if (i + 1 < sw.scores.size()) {
      add(0.5 * (sw.scores[i] + sw.scores[i + 1]), sw.genuine_le[i], sw.forged_le[i]);
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < r.curve.size(); ++k) {
    if (std::abs(r.curve[k].fmr - r.curve[k].fnmr) < std::abs(r.curve[best].fmr - r.curve[best].fnmr)) {
      best = k;
    }
  }
  const auto& b = r.curve[best];
  r.fmr = b.fmr;
  r.fnmr = b.fnmr;
  r.eer = 0.5 * (b.fmr + b.fnmr);
  r.eer_threshold = b.threshold;
  // Odd indices past the first are observed scores (0: below-min, then
  // score, midpoint, score, ...).
  if (best % 2 == 1 && best + 1 < r.curve.size()) r.eer_threshold = r.curve[best + 1].threshold;
  if (best == 0 && sw.scores.front() > 0.0) r.eer_threshold = 0.5 * sw.scores.front();
  return r;
}

struct Histogram {
  std::vector<double> lo, hi;
  std::vector<std::size_t> genuine_counts, forged_counts;
  std::vector<double> genuine_density, forged_density;
};

/// Uniform bins over [0, 1]; a score of exactly 1 lands in the last bin.
inline Histogram histogram(const std::vector<ScoredPair>& scored, int bins = 50) {
  if (bins < 1) throw ConfigError("histogram bins must be >= 1");
  const auto n = static_cast<std::size_t>(bins);
  Histogram h;
  h.genuine_counts.assign(n, 0);
  h.forged_counts.assign(n, 0);
  for (std::size_t b = 0; b < n; ++b) {
    h.lo.push_back(static_cast<double>(b) / bins);
    h.hi.push_back(static_cast<double>(b + 1) / bins);
  }
  std::size_t g = 0, f = 0;
  for (const auto& s : scored) {
    if (!(s.score >= 0.0 && s.score <= 1.0)) throw NumericError("score outside [0, 1]");
    const auto b = std::min(n - 1, static_cast<std::size_t>(std::floor(s.score * bins)));
    if (s.genuine()) {
      ++h.genuine_counts[b];
      ++g;
    } else {
      ++h.forged_counts[b];
      ++f;
    }
  }
  const double width = 1.0 / bins;
  for (std::size_t b = 0; b < n; ++b) {
    h.genuine_density.push_back(g ? static_cast<double>(h.genuine_counts[b]) / (g * width) : 0.0);
    h.forged_density.push_back(f ? static_cast<double>(h.forged_counts[b]) / (f * width) : 0.0);
  }
  return h;
}

struct CurveReport {
  RocResult roc;
  PrResult pr;
  EerResult det;
  Histogram hist;
  std::size_t genuine_pairs = 0, forgery_pairs = 0;

  nlohmann::ordered_json summary() const {
    nlohmann::ordered_json j;
    j["auc"] = roc.auc;
    j["aupr"] = pr.aupr;
    j["eer"] = det.eer;
    j["eer_threshold"] = det.eer_threshold;
    j["fmr_at_threshold"] = det.fmr;
    j["fnmr_at_threshold"] = det.fnmr;
    j["genuine_pairs"] = genuine_pairs;
    j["forgery_pairs"] = forgery_pairs;
    return j;
  }
};

inline CurveReport evaluate_scores(const std::vector<ScoredPair>& scored, int bins = 50) {
  CurveReport r;
  r.roc = roc_auc(scored);
  r.pr = pr_aupr(scored);
  r.det = fmr_fnmr_eer(scored);
  r.hist = histogram(scored, bins);
  for (const auto& s : scored) (s.genuine() ? r.genuine_pairs : r.forgery_pairs)++;
  return r;
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// roc.csv, pr.csv, det.csv, hist_genuine.csv, hist_forged.csv and
/// summary.json in `dir`. Returns the written paths.
inline std::vector<std::string> write_report(const CurveReport& r, const std::string& dir) {
  namespace fs = std::filesystem;
  using detail::num;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto emit = [&](const char* name, const std::string& text) {
    const fs::path p = fs::path(dir) / name;
    detail::write_text(p, text);
    written.push_back(p.string());
  };
  std::string s = "threshold,fpr,tpr\n";
  for (const auto& p : r.roc.points) s += num(p.threshold) + "," + num(p.fpr) + "," + num(p.tpr) + "\n";
  emit("roc.csv", s);
  s = "threshold,recall,precision\n";
  for (const auto& p : r.pr.points) s += num(p.threshold) + "," + num(p.recall) + "," + num(p.precision) + "\n";
  emit("pr.csv", s);
  s = "threshold,fmr,fnmr\n";
  for (const auto& p : r.det.curve) s += num(p.threshold) + "," + num(p.fmr) + "," + num(p.fnmr) + "\n";
  emit("det.csv", s);
  for (bool g : {true, false}) {
    s = "bin_lo,bin_hi,count,density\n";
    const auto& c = g ? r.hist.genuine_counts : r.hist.forged_counts;
    const auto& d = g ? r.hist.genuine_density : r.hist.forged_density;
    for (std::size_t b = 0; b < c.size(); ++b) {
      s += num(r.hist.lo[b]) + "," + num(r.hist.hi[b]) + "," + std::to_string(c[b]) + "," + num(d[b]) + "\n";
    }
    emit(g ? "hist_genuine.csv" : "hist_forged.csv", s);
  }
  emit("summary.json", r.summary().dump(2) + "\n");
  return written;
}

struct Verdict {
  bool genuine = false;
  double score = 0.0;
};

/// Distance semantics: genuine iff score <= threshold.
inline Verdict verify(const Tensor<float>& first, const Tensor<float>& second,
                      const ModelWeights<float>& weights, const FilterBank& bank, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  const double score = distance(embed(first, weights, bank), embed(second, weights, bank));
  return {score <= threshold, score};
}

inline Verdict verify(const std::string& first, const std::string& second,
                      const ModelWeights<float>& weights, const FilterBank& bank, double threshold) {
  const auto sc = weights.config().scattering;
  const auto h = static_cast<std::size_t>(sc.input_height), w = static_cast<std::size_t>(sc.input_width);
  return verify(load_image(first, h, w), load_image(second, h, w), weights, bank, threshold);
}

}  // namespace sigscat
