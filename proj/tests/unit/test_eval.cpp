#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "foldmap/error.hpp"
#include "foldmap/eval.hpp"
#include "foldmap/rng.hpp"
#include "support/oracles.hpp"

using namespace foldmap;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

Points blobs(const std::vector<std::vector<double>>& centres, int per, double spread, Rng& rng,
             std::vector<int>* labels = nullptr) {
  Points pts;
  for (std::size_t c = 0; c < centres.size(); ++c) {
    for (int i = 0; i < per; ++i) {
      std::vector<double> p = centres[c];
      for (double& v : p) v += rng.uniform(-spread, spread);
      pts.push_back(p);
      if (labels) labels->push_back(static_cast<int>(c));
    }
  }
  return pts;
}

}  // namespace

TEST_CASE("accuracy cases") {
  struct Case {
    std::vector<int> p, t;
    double expected;
  };
  const std::vector<Case> cases{
      {{0}, {0}, 1.0},
      {{1}, {0}, 0.0},
      {{0, 1}, {0, 0}, 0.5},
      {{0, 1, 2}, {0, 1, 2}, 1.0},
      {{2, 1, 0}, {0, 1, 2}, 1.0 / 3},
      {{0, 0, 0, 0}, {0, 1, 0, 1}, 0.5},
      {{3, 3, 3, 3, 3}, {3, 3, 3, 3, 1}, 0.8},
      {{1, 2, 3, 4}, {4, 3, 2, 1}, 0.0},
      {{5, 5, 5, 5, 5, 5, 5, 5, 5, 5}, {5, 5, 5, 5, 5, 5, 5, 5, 5, 0}, 0.9},
      {{0, 1, 0, 1, 0, 1}, {0, 1, 1, 1, 0, 0}, 4.0 / 6},
      {{7, 7}, {7, 8}, 0.5},
  };
  for (const auto& c : cases) CHECK(accuracy(c.p, c.t) == doctest::Approx(c.expected).epsilon(1e-15));
  CHECK(kind_of([] { accuracy(std::vector<int>{0, 1}, std::vector<int>{0}); }) == ErrorKind::LengthMismatch);
  CHECK(kind_of([] { accuracy(std::vector<int>{}, std::vector<int>{}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("weighted F1 cases") {
  SUBCASE("two thirds") {
    // Class 0: tp 1, fp 0, fn 1 -> P 1, R 1/2, F 2/3. Class 1: tp 1, fp 1 -> P 1/2, R 1, F 2/3.
    const std::vector<int> p{0, 1, 1};
    const std::vector<int> t{0, 0, 1};
    const F1Result r = weighted_f1(p, t, 2);
    CHECK(r.weighted == doctest::Approx(2.0 / 3.0));
    CHECK(r.per_class[0].precision == 1.0);
    CHECK(r.per_class[0].recall == 0.5);
    CHECK(r.per_class[1].precision == 0.5);
    CHECK(r.per_class[0].support == 2);
    CHECK(r.per_class[1].support == 1);
  }
  SUBCASE("constructed table") {
    struct Case {
      std::vector<int> p, t;
      int k;
      double expected;
    };
    const std::vector<Case> cases{
        {{0, 1, 2}, {0, 1, 2}, 3, 1.0},
        {{1, 0}, {0, 1}, 2, 0.0},
        {{0, 0, 0, 0}, {0, 0, 0, 1}, 2, 0.75 * (2 * 0.75 / 1.75)},
        {{0}, {0}, 5, 1.0},
        {{1, 1, 1}, {0, 0, 1}, 2, 1.0 / 3 * 0.5},
        {{2, 2, 2, 2}, {2, 2, 2, 2}, 3, 1.0},
        {{0, 1, 0, 1}, {0, 0, 1, 1}, 2, 0.5},
        {{0, 2, 1}, {0, 1, 2}, 3, 1.0 / 3},
        {{4, 4, 3}, {4, 3, 3}, 5, (1.0 * (2.0 / 3) + 2.0 * (2.0 / 3)) / 3},
        {{0, 0, 1, 1, 2, 2}, {0, 1, 1, 2, 2, 0}, 3, 0.5},
    };
    for (const auto& c : cases) {
      const double got = weighted_f1(c.p, c.t, static_cast<std::size_t>(c.k)).weighted;
      CHECK(got == doctest::Approx(c.expected).epsilon(1e-12));
      CHECK(got == doctest::Approx(oracle::weighted_f1(c.p, c.t, c.k)).epsilon(1e-12));
    }
  }
  SUBCASE("random agreement with the oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(6));
      const std::size_t n = 1 + rng.below(40);
      std::vector<int> p(n), t(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        t[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      }
      const double f = weighted_f1(p, t, static_cast<std::size_t>(k)).weighted;
      CHECK(f == doctest::Approx(oracle::weighted_f1(p, t, k)).epsilon(1e-12));
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
      if (accuracy(p, t) == 1.0) CHECK(f == 1.0);
    }
  }
  CHECK(kind_of([] { weighted_f1(std::vector<int>{2}, std::vector<int>{0}, 2); }) == ErrorKind::IndexOutOfRange);
  CHECK(kind_of([] { weighted_f1(std::vector<int>{0}, std::vector<int>{-1}, 2); }) == ErrorKind::IndexOutOfRange);
}

TEST_CASE("homogeneity cases") {
  struct Case {
    std::vector<int> k, c;
    double expected;
  };
  const double ln2 = std::log(2.0);
  const double e3 = -(2.0 / 3) * std::log(2.0 / 3) - (1.0 / 3) * std::log(1.0 / 3);  // entropy of a 2:1 split
  const std::vector<Case> cases{
      {{0, 0, 1, 1}, {0, 0, 1, 1}, 1.0},
      {{0, 0, 0, 0}, {0, 0, 1, 1}, 0.0},
      {{0, 1, 2, 3}, {0, 0, 1, 1}, 1.0},     // singletons are perfectly homogeneous
      {{5, 5, 5}, {2, 2, 2}, 1.0},           // H(C) = 0
      {{0, 1, 0, 1}, {0, 0, 1, 1}, 0.0},
      {{1, 1, 0, 0}, {0, 0, 1, 1}, 1.0},     // cluster ids are arbitrary
      {{0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 2, 2}, 1.0 - e3 / std::log(3.0)},
      {{0, 0, 1, 1, 2, 2}, {0, 0, 0, 1, 1, 1}, 2.0 / 3},
      {{0, 0, 0, 1}, {0, 0, 1, 1}, 1.0 - 0.75 * e3 / ln2},
      {{0}, {7}, 1.0},
      {{3, 3, 4, 4, 4}, {1, 1, 2, 2, 2}, 1.0},
  };
  for (const auto& c : cases) {
    const double h = homogeneity(c.k, c.c);
    CHECK(h == doctest::Approx(c.expected).epsilon(1e-12));
    CHECK(h == doctest::Approx(oracle::homogeneity(c.k, c.c)).epsilon(1e-12));
  }
  CHECK(kind_of([] { homogeneity(std::vector<int>{0}, std::vector<int>{0, 1}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("homogeneity invariants") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<int> k(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      k[i] = static_cast<int>(rng.below(4));
      c[i] = static_cast<int>(rng.below(3));
    }
    const double h = homogeneity(k, c);
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    CHECK(h == doctest::Approx(oracle::homogeneity(k, c)).epsilon(1e-9));
    // Replicating the whole sample leaves the score unchanged.
    std::vector<int> kk = k, cc = c;
    kk.insert(kk.end(), k.begin(), k.end());
    cc.insert(cc.end(), c.begin(), c.end());
    CHECK(homogeneity(kk, cc) == doctest::Approx(h).epsilon(1e-12));
    // Relabelling clusters leaves the score unchanged.
    std::vector<int> renamed = k;
    for (int& v : renamed) v = 10 - v;
    CHECK(homogeneity(renamed, c) == doctest::Approx(h).epsilon(1e-12));
    // Splitting every cluster by label gives perfect homogeneity.
    std::vector<int> split(n);
    for (std::size_t i = 0; i < n; ++i) split[i] = k[i] * 10 + c[i];
    CHECK(homogeneity(split, c) == doctest::Approx(1.0));
  }
}

TEST_CASE("kmeans basics") {
  Rng rng(1);
  const Points pts = blobs({{0, 0}, {10, 0}, {0, 10}}, 15, 1.0, rng);
  SUBCASE("k = 1 gives the mean") {
    const KmeansResult r = kmeans(pts, 1);
    std::vector<double> mean(2, 0.0);
    for (const auto& p : pts)
      for (int d = 0; d < 2; ++d) mean[d] += p[d] / static_cast<double>(pts.size());
    CHECK(r.centroids[0][0] == doctest::Approx(mean[0]));
    CHECK(r.centroids[0][1] == doctest::Approx(mean[1]));
    CHECK(r.inertia == doctest::Approx(oracle::inertia(pts, r.assignments, 1)));
  }
  SUBCASE("well separated blobs are recovered") {
    const KmeansResult r = kmeans(pts, 3, {10, 300, 5});
    for (int b = 0; b < 3; ++b) {
      std::set<int> ids;
      for (int i = 0; i < 15; ++i) ids.insert(r.assignments[static_cast<std::size_t>(b * 15 + i)]);
      CHECK(ids.size() == 1);
    }
    CHECK(std::set<int>(r.assignments.begin(), r.assignments.end()).size() == 3);
    CHECK(r.inertia == doctest::Approx(oracle::inertia(pts, r.assignments, 3)));
    CHECK(inertia_of(pts, r.assignments, 3) == doctest::Approx(r.inertia));
  }
  SUBCASE("same seed, same answer") {
    const KmeansResult a = kmeans(pts, 4, {3, 300, 9});
    const KmeansResult b = kmeans(pts, 4, {3, 300, 9});
    CHECK(a.assignments == b.assignments);
    CHECK(a.inertia == b.inertia);
  }
  CHECK(kind_of([&] { kmeans(pts, 0); }) == ErrorKind::TooFewPoints);
  CHECK(kind_of([&] { kmeans(Points{{0.0}, {1.0}}, 3); }) == ErrorKind::TooFewPoints);
  CHECK(kind_of([&] { kmeans(Points{{0.0}, {1.0, 2.0}}, 1); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("kmeans on 12 points matches exhaustive search and is locally optimal") {
  Rng rng(2);
  for (int trial = 0; trial < 3; ++trial) {
    Points pts;
    for (int i = 0; i < 12; ++i) pts.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
    const int k = 3;
    const KmeansResult r = kmeans(pts, k, {10, 300, static_cast<std::uint64_t>(trial)});

    double best = std::numeric_limits<double>::infinity();
    std::vector<int> a(12, 0);
    for (int code = 0; code < 531441; ++code) {  // 3^12
      int x = code;
      std::set<int> used;
      for (int i = 0; i < 12; ++i) {
        a[i] = x % 3;
        x /= 3;
        used.insert(a[i]);
      }
      if (used.size() != 3) continue;
      best = std::min(best, oracle::inertia(pts, a, k));
    }
    CHECK(r.inertia == doctest::Approx(best).epsilon(1e-9));

    CHECK(oracle::single_move_optimal(pts, r.assignments, k, 1e-9));
    // Every point sits in the cell of its own centroid.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto d2 = [&](int c) {
        return std::pow(pts[i][0] - r.centroids[c][0], 2) + std::pow(pts[i][1] - r.centroids[c][1], 2);
      };
      for (int c = 0; c < k; ++c) CHECK(d2(r.assignments[i]) <= d2(c) + 1e-9);
    }
  }
}

TEST_CASE("kmeans under replication") {
  Rng rng(7);
  const Points pts = blobs({{0, 0, 0}, {6, 6, 0}, {0, 6, 6}, {6, 0, 6}}, 6, 1.5, rng);
  const KmeansResult r = kmeans(pts, 4, {10, 300, 1});
  Points doubled = pts;
  doubled.insert(doubled.end(), pts.begin(), pts.end());
  const KmeansResult d = kmeans(doubled, 4, {10, 300, 1});
  CHECK(d.inertia == doctest::Approx(2.0 * r.inertia).epsilon(1e-9));
  // Copies of one point always share a cluster.
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(d.assignments[i] == d.assignments[i + pts.size()]);
}

TEST_CASE("fingerprint homogeneity and centroid export") {
  Rng rng(8);
  std::vector<int> labels;
  const Points pts = blobs({{0, 0}, {20, 0}, {0, 20}}, 10, 1.0, rng, &labels);
  CHECK(fingerprint_homogeneity(pts, labels, 3) == doctest::Approx(1.0));
  CHECK(fingerprint_homogeneity(pts, std::vector<int>(pts.size(), 4)) == 1.0);

  std::vector<int> mixed = labels;
  for (std::size_t i = 0; i < mixed.size(); i += 2) mixed[i] = 0;
  const double h = fingerprint_homogeneity(pts, mixed, 3);
  CHECK(h < 1.0);
  CHECK(h >= 0.0);

  const std::vector<FingerprintSet> sets{{"HR", pts, labels}, {"LR", Points(pts.begin(), pts.begin() + 20),
                                                               std::vector<int>(labels.begin(), labels.begin() + 20)}};
  const auto rows = export_centroids(sets, 2);
  REQUIRE(rows.size() == 5);
  std::set<int> majority;
  std::size_t hr_total = 0;
  for (const auto& row : rows) {
    if (row.dataset == "HR") {
      majority.insert(row.majority_label);
      hr_total += row.size;
      CHECK(row.size == 10);
      const auto expected = row.majority_label == 0   ? std::vector<double>{0, 0}
                            : row.majority_label == 1 ? std::vector<double>{20, 0}
                                                      : std::vector<double>{0, 20};
      CHECK(std::abs(row.centroid[0] - expected[0]) < 1.0);
      CHECK(std::abs(row.centroid[1] - expected[1]) < 1.0);
    }
  }
  CHECK(majority == std::set<int>{0, 1, 2});
  CHECK(hr_total == 30);

  const std::vector<std::string> names{"1.10", "2.20", "3.30"};
  const std::string tsv = centroids_to_tsv(rows, names);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 6);
  CHECK(tsv.find("2.20") != std::string::npos);
  CHECK(kind_of([] { export_centroids(std::vector<FingerprintSet>{}); }) == ErrorKind::EmptyDataset);
}

TEST_CASE("evaluation reports") {
  using P = std::array<std::size_t, kTaskCount>;
  using T = std::array<int, kTaskCount>;
  const std::vector<P> pred{{0, 0, 0, 0}, {1, 1, 0, 0}, {1, 0, 1, 0}, {0, 1, 1, 0}};
  const std::vector<T> truth{{0, 0, 0, 0}, {1, 1, 1, 0}, {1, 0, -1, 0}, {1, 1, 1, -1}};
  const EvalReport r = make_report("HR", pred, truth, {2, 2, 2, 1});
  CHECK(r.instances == 4);
  CHECK(r.accuracy[0] == 0.75);
  CHECK(r.accuracy[1] == 1.0);
  CHECK(r.accuracy[2] == 0.5);
  CHECK(r.accuracy[3] == 0.75);
  CHECK(r.weighted_f1[1] == 1.0);
  CHECK(r.weighted_f1[2] == doctest::Approx(oracle::weighted_f1({0, 0, 1, 1}, {0, 1, 2, 1}, 3)));
  CHECK(r.per_class[2].size() == 3);  // two trained classes plus the unseen bucket
  CHECK_FALSE(r.homogeneity.has_value());

  const Points fps{{0.0}, {5.0}, {5.1}, {5.2}};
  const EvalReport with_h = make_report("LR", pred, truth, {2, 2, 2, 1}, &fps, 1);
  REQUIRE(with_h.homogeneity.has_value());
  CHECK((*with_h.homogeneity)[1] == doctest::Approx(oracle::homogeneity({0, 1, 1, 1}, {0, 1, 0, 1})));

  const std::vector<EvalReport> reports{r, with_h};
  const std::string tsv = reports_to_tsv(reports);
  CHECK(tsv.rfind("dataset\tn\tacc_C", 0) == 0);
  CHECK(tsv.find("\t-") != std::string::npos);
  const auto j = nlohmann::json::parse(reports_to_json(reports));
  CHECK(j.size() == 2);
  CHECK(!per_class_to_tsv(r).empty());

  CHECK(kind_of([&] { make_report("x", std::span(pred).first(2), truth, {2, 2, 2, 1}); }) == ErrorKind::LengthMismatch);
  CHECK(kind_of([&] { make_report("x", std::vector<P>{}, std::vector<T>{}, {2, 2, 2, 1}); }) == ErrorKind::EmptyDataset);
}
