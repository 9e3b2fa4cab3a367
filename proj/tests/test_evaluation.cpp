#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sigscat/evaluation.hpp"
#include "sigscat/image_io.hpp"
#include "sigscat/random.hpp"

using namespace sigscat;
namespace fs = std::filesystem;

namespace {

std::vector<ScoredPair> make(const std::vector<double>& genuine, const std::vector<double>& forged) {
  std::vector<ScoredPair> out;
  for (double s : genuine) out.push_back(scored(true, s));
  for (double s : forged) out.push_back(scored(false, s));
  return out;
}

using fixture::random_scores;

std::vector<ScoredPair> swapped(std::vector<ScoredPair> v) {
  for (auto& s : v) s.pair.label = s.genuine() ? PairLabel::forgery_pair : PairLabel::genuine_pair;
  return v;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.scattering = {1, 2, 32, 32};
  c.conv_filters = {4, 4, 4, 4};
  c.embedding_dim = 8;
  return c;
}

SignatureCatalog tiny_catalog(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SignatureImage> images;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor<float> t(Shape{32, 32});
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
    images.push_back({"img" + std::to_string(i), "w0", i % 3 == 2 ? Label::forged : Label::genuine, {},
                      std::make_shared<const Tensor<float>>(std::move(t))});
  }
  return SignatureCatalog(std::move(images), "tiny");
}

}  // namespace

TEST(Roc, ClosedFormCases) {
  EXPECT_EQ(roc_auc(make({0.1, 0.2, 0.3}, {0.5, 0.9})).auc, 1.0);
  EXPECT_EQ(roc_auc(make({0.4, 0.4, 0.4}, {0.4, 0.4})).auc, 0.5);
  EXPECT_EQ(roc_auc(make({0.9}, {0.1})).auc, 0.0);
  EXPECT_THROW(roc_auc(make({0.1, 0.2}, {})), Error);
  EXPECT_THROW(roc_auc(make({}, {0.1})), Error);
}

TEST(Roc, HandListedPairsMatchMannWhitney) {
  const auto s = make({0.10, 0.35, 0.35}, {0.30, 0.35, 0.80});
  // Wins: 0.10 beats all 3; each 0.35 beats 0.80 and ties 0.35 -> 1.5 each.
  EXPECT_DOUBLE_EQ(oracle::mann_whitney(s), (3 + 1.5 + 1.5) / 9.0);
  EXPECT_NEAR(roc_auc(s).auc, oracle::mann_whitney(s), 1e-12);
}

TEST(Roc, MatchesMannWhitneyOnRandomSets) {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const auto s = random_scores(rng, 2 + rng.below(499));
    ASSERT_NEAR(roc_auc(s).auc, oracle::mann_whitney(s), 1e-12) << "set " << k;
  }
}

TEST(Roc, LabelSwapGivesComplement) {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const auto s = random_scores(rng, 50);
    EXPECT_NEAR(roc_auc(swapped(s)).auc, 1.0 - roc_auc(s).auc, 1e-12);
    auto flipped = swapped(s);
    for (auto& p : flipped) p.score = 1.0 - p.score;   // reversed decision direction
    EXPECT_NEAR(roc_auc(flipped).auc, roc_auc(s).auc, 1e-12);
  }
}

TEST(Pr, ClosedFormCases) {
  EXPECT_EQ(pr_aupr(make({0.1, 0.2}, {0.3, 0.4})).aupr, 1.0);
  for (std::size_t n : {2u, 5u, 17u}) {
    std::vector<double> forged;
    for (std::size_t i = 0; i + 1 < n; ++i) forged.push_back(0.1 + 0.01 * i);
    EXPECT_NEAR(pr_aupr(make({0.9}, forged)).aupr, 1.0 / n, 1e-15);
  }
  EXPECT_THROW(pr_aupr(make({}, {0.2})), Error);
}

TEST(Pr, MatchesRankedListOracle) {
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    auto s = random_scores(rng, k < 50 ? 10 : 2 + rng.below(300));
    EXPECT_NEAR(pr_aupr(s).aupr, oracle::ranked_average_precision(s), 1e-12);
  }
}

TEST(Eer, ClosedFormCases) {
  const auto sep = fmr_fnmr_eer(make({0.1, 0.2}, {0.8, 0.9}));
  EXPECT_EQ(sep.eer, 0.0);
  EXPECT_DOUBLE_EQ(sep.eer_threshold, 0.5);
  const auto same = fmr_fnmr_eer(make({0.2, 0.4, 0.6}, {0.2, 0.4, 0.6}));
  EXPECT_DOUBLE_EQ(same.eer, 0.5);
  EXPECT_THROW(fmr_fnmr_eer(make({0.1}, {})), Error);
}

TEST(Eer, MatchesExhaustiveOracleExactly) {
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    const auto s = random_scores(rng, k < 50 ? 40 : 2 + rng.below(499));
    const auto got = fmr_fnmr_eer(s);
    const auto want = oracle::exhaustive_eer(s);
    ASSERT_EQ(got.eer, want.eer) << "set " << k;
    ASSERT_EQ(got.eer_threshold, want.threshold) << "set " << k;
  }
}

TEST(Eer, ReportedThresholdReproducesTheRates) {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_scores(rng, 60);
    const auto r = fmr_fnmr_eer(s);
    double fa = 0, fr = 0, G = 0, F = 0;
    for (const auto& p : s) {
      (p.genuine() ? G : F) += 1;
      if (!p.genuine() && p.score <= r.eer_threshold) fa += 1;
      if (p.genuine() && p.score > r.eer_threshold) fr += 1;
    }
    EXPECT_EQ(fa / F, r.fmr);
    EXPECT_EQ(fr / G, r.fnmr);
  }
}

TEST(Curves, MonotoneAndOrderInvariant) {
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    auto s = random_scores(rng, 120);
    const auto a = evaluate_scores(s);
    for (std::size_t i = 1; i < a.roc.points.size(); ++i) {
      EXPECT_GE(a.roc.points[i].fpr, a.roc.points[i - 1].fpr);
      EXPECT_GE(a.roc.points[i].tpr, a.roc.points[i - 1].tpr);
    }
    for (std::size_t i = 1; i < a.det.curve.size(); ++i) {
      EXPECT_GT(a.det.curve[i].threshold, a.det.curve[i - 1].threshold);
      EXPECT_GE(a.det.curve[i].fmr, a.det.curve[i - 1].fmr);
      EXPECT_LE(a.det.curve[i].fnmr, a.det.curve[i - 1].fnmr);
    }
    for (double v : {a.roc.auc, a.pr.aupr, a.det.eer}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    rng.shuffle(s);
    const auto b = evaluate_scores(s);
    EXPECT_EQ(a.summary().dump(), b.summary().dump());
    ASSERT_EQ(a.det.curve.size(), b.det.curve.size());
    for (std::size_t i = 0; i < a.det.curve.size(); ++i) EXPECT_EQ(a.det.curve[i].fmr, b.det.curve[i].fmr);
  }
}

TEST(Histogram, Examples) {
  const auto h = histogram(make({0.5}, {}), 10);
  EXPECT_EQ(h.genuine_counts[5], 1u);
  EXPECT_DOUBLE_EQ(h.genuine_density[5], 10.0);
  for (std::size_t b = 0; b < 10; ++b) {
    EXPECT_EQ(h.forged_counts[b], 0u);
    EXPECT_EQ(h.forged_density[b], 0.0);
  }
  EXPECT_EQ(histogram(make({1.0}, {0.0}), 4).genuine_counts[3], 1u);
  EXPECT_THROW(histogram(make({0.5}, {}), 0), ConfigError);
  EXPECT_THROW(histogram(make({1.5}, {}), 4), NumericError);

  Rng rng(7);
  std::vector<ScoredPair> s;
  for (int i = 0; i < 100; ++i) s.push_back(scored(i % 2 == 0, rng.uniform()));
  const auto r = histogram(s, 50);
  std::size_t total = 0;
  double mass_g = 0, mass_f = 0;
  for (std::size_t b = 0; b < 50; ++b) {
    total += r.genuine_counts[b] + r.forged_counts[b];
    mass_g += r.genuine_density[b] / 50;
    mass_f += r.forged_density[b] / 50;
  }
  EXPECT_EQ(total, 100u);
  EXPECT_NEAR(mass_g, 1.0, 1e-9);
  EXPECT_NEAR(mass_f, 1.0, 1e-9);
}

TEST(Report, WritesEveryArtifact) {
  const auto dir = fs::temp_directory_path() / ("sigscat_report_" + std::to_string(::getpid()));
  const auto r = evaluate_scores(make({0.1, 0.3}, {0.2, 0.7, 0.9}), 5);
  const auto files = write_report(r, dir.string());
  EXPECT_EQ(files.size(), 6u);
  auto head = [&](const char* name) {
    std::ifstream in(dir / name);
    std::string line;
    std::getline(in, line);
    return line;
  };
  EXPECT_EQ(head("roc.csv"), "threshold,fpr,tpr");
  EXPECT_EQ(head("pr.csv"), "threshold,recall,precision");
  EXPECT_EQ(head("det.csv"), "threshold,fmr,fnmr");
  EXPECT_EQ(head("hist_genuine.csv"), "bin_lo,bin_hi,count,density");
  EXPECT_EQ(head("hist_forged.csv"), "bin_lo,bin_hi,count,density");
  std::ifstream in(dir / "summary.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("genuine_pairs"), 2);
  EXPECT_EQ(j.at("forgery_pairs"), 3);
  for (const char* k : {"auc", "aupr", "eer", "eer_threshold"}) EXPECT_TRUE(j.contains(k)) << k;
  fs::remove_all(dir);
}

TEST(ScorePairs, CacheEmbedsEachImageOnce) {
  const auto cat = tiny_catalog(6, 1);
  const auto w = init_model(tiny_config(), 3);
  const FilterBank bank(tiny_config().scattering);
  const std::vector<EvalPair> pairs{{0, 1, PairLabel::genuine_pair}, {0, 2, PairLabel::forgery_pair},
                                    {1, 3, PairLabel::genuine_pair}, {3, 5, PairLabel::forgery_pair},
                                    {0, 1, PairLabel::genuine_pair}, {4, 4, PairLabel::genuine_pair},
                                    {3, 0, PairLabel::genuine_pair}};
  std::size_t cached_calls = 0, plain_calls = 0;
  const auto a = score_pairs(cat, pairs, w, bank, 1, true, &cached_calls);
  const auto b = score_pairs(cat, pairs, w, bank, 1, false, &plain_calls);
  const auto c = score_pairs(cat, pairs, w, bank, 3, true);
  EXPECT_EQ(cached_calls, 6u);
  EXPECT_EQ(plain_calls, 2 * pairs.size());
  ASSERT_EQ(a.size(), pairs.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pair, pairs[i]);
    EXPECT_EQ(a[i].score, b[i].score);
    EXPECT_EQ(a[i].score, c[i].score);
    EXPECT_GE(a[i].score, 0.0);
    EXPECT_LE(a[i].score, 1.0);
  }
  EXPECT_EQ(a[5].score, 0.0);
}

TEST(Verify, DecisionBoundary) {
  const auto cat = tiny_catalog(2, 9);
  const auto w = init_model(tiny_config(), 3);
  const FilterBank bank(tiny_config().scattering);
  const auto &x = *cat.image(0).pixels, &y = *cat.image(1).pixels;
  const auto same = verify(x, x, w, bank, 0.01);
  EXPECT_TRUE(same.genuine);
  EXPECT_EQ(same.score, 0.0);
  const double s = verify(x, y, w, bank, 0.0).score;
  ASSERT_GT(s, 0.0);
  EXPECT_FALSE(verify(x, y, w, bank, 0.0).genuine);
  EXPECT_TRUE(verify(x, y, w, bank, s).genuine);
  EXPECT_FALSE(verify(x, y, w, bank, std::nextafter(s, 0.0)).genuine);
  EXPECT_THROW(verify(x, y, w, bank, 1.5), ConfigError);
}

TEST(Verify, FromFiles) {
  const auto dir = fs::temp_directory_path() / ("sigscat_verify_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto cat = tiny_catalog(1, 4);
  const auto p = (dir / "a.png").string();
  write_png_gray(p, *cat.image(0).pixels);
  const auto w = init_model(tiny_config(), 3);
  const FilterBank bank(tiny_config().scattering);
  const auto v = verify(p, p, w, bank, 0.2);
  EXPECT_TRUE(v.genuine);
  EXPECT_EQ(v.score, 0.0);
  EXPECT_THROW(verify(p, (dir / "missing.png").string(), w, bank, 0.2), IoError);
  fs::remove_all(dir);
}
