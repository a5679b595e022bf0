#include "foldmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "foldmap/error.hpp"
#include "foldmap/model.hpp"
#include "foldmap/rng.hpp"

namespace foldmap {
namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorKind::LengthMismatch, std::to_string(a) + " vs " + std::to_string(b) + " entries");
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

int nearest(const std::vector<double>& x, const Points& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

Points means_of(const Points& points, std::span<const int> assign, std::size_t k, std::vector<std::size_t>& counts) {
  const std::size_t dim = points.front().size();
  Points means(k, std::vector<double>(dim, 0.0));
  counts.assign(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& m = means[static_cast<std::size_t>(assign[i])];
    for (std::size_t d = 0; d < dim; ++d) m[d] += points[i][d];
    ++counts[static_cast<std::size_t>(assign[i])];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : means[c]) v /= static_cast<double>(counts[c]);
  }
  return means;
}

Points plus_plus_seeds(const Points& points, std::size_t k, Rng& rng) {
  Points centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = sq_dist(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.below(points.size());
    } else {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += d2[i];
        if (r < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) d2[i] = std::min(d2[i], sq_dist(points[i], centroids.back()));
  }
  return centroids;
}

KmeansResult single_run(const Points& points, std::size_t k, int max_iter, Rng& rng) {
  const std::size_t n = points.size();
  Points centroids = plus_plus_seeds(points, k, rng);
  std::vector<int> assign(n, -1);
  std::vector<std::size_t> counts;

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest(points[i], centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    Points means = means_of(points, assign, k, counts);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      // Reseed from the point farthest from its own centroid, taken from a cluster that can spare it.
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(assign[i])] < 2) continue;
        const double d = sq_dist(points[i], means[static_cast<std::size_t>(assign[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) break;
      --counts[static_cast<std::size_t>(assign[far])];
      assign[far] = static_cast<int>(c);
      counts[c] = 1;
      means = means_of(points, assign, k, counts);
      changed = true;
    }
    centroids = std::move(means);
    if (!changed) break;
  }

  // Single-point transfers (Hartigan): move a point whenever that strictly lowers inertia.
  means_of(points, assign, k, counts);
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(assign[i]);
      if (counts[a] < 2) continue;
      const double na = static_cast<double>(counts[a]);
      const double remove_gain = na / (na - 1.0) * sq_dist(points[i], centroids[a]);
      std::size_t best = a;
      double best_delta = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double nb = static_cast<double>(counts[b]);
        const double delta = nb / (nb + 1.0) * sq_dist(points[i], centroids[b]) - remove_gain;
        if (delta < best_delta - 1e-12 * (1.0 + remove_gain)) {
          best_delta = delta;
          best = b;
        }
      }
      if (best == a) continue;
      const double nb = static_cast<double>(counts[best]);
      for (std::size_t d = 0; d < points[i].size(); ++d) {
        centroids[a][d] = (centroids[a][d] * na - points[i][d]) / (na - 1.0);
        centroids[best][d] = (centroids[best][d] * nb + points[i][d]) / (nb + 1.0);
      }
      --counts[a];
      ++counts[best];
      assign[i] = static_cast<int>(best);
      moved = true;
    }
  }

  KmeansResult r;
  r.k = k;
  r.centroids = means_of(points, assign, k, counts);
  r.assignments = std::move(assign);
  r.inertia = inertia_of(points, r.assignments, k);
  return r;
}

double entropy(const std::map<int, std::size_t>& counts, double total) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

int majority(std::span<const int> labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  int best = 0;
  std::size_t best_n = 0;
  for (const auto& [l, c] : counts) {
    if (c > best_n) {
      best = l;
      best_n = c;
    }
  }
  return best;
}

std::size_t distinct(std::span<const int> labels) {
  std::vector<int> v(labels.begin(), labels.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_lengths(predicted.size(), truth.size());
  if (predicted.empty()) throw Error(ErrorKind::LengthMismatch, "no predictions to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

F1Result weighted_f1(std::span<const int> predicted, std::span<const int> truth, std::size_t k) {
  check_lengths(predicted.size(), truth.size());
  if (predicted.empty()) throw Error(ErrorKind::LengthMismatch, "no predictions to score");
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i];
    const int t = truth[i];
    if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= k || static_cast<std::size_t>(t) >= k) {
      throw Error(ErrorKind::IndexOutOfRange, "class index outside [0, " + std::to_string(k) + ")");
    }
    if (p == t) {
      ++tp[static_cast<std::size_t>(p)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  F1Result r;
  r.per_class.resize(k);
  double weighted = 0.0;
  std::size_t total = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassScore& s = r.per_class[c];
    s.support = tp[c] + fn[c];
    s.precision = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    s.recall = s.support ? static_cast<double>(tp[c]) / static_cast<double>(s.support) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    weighted += static_cast<double>(s.support) * s.f1;
    total += s.support;
  }
  r.weighted = weighted / static_cast<double>(total);
  return r;
}

double inertia_of(const Points& points, std::span<const int> assignments, std::size_t k) {
  check_lengths(points.size(), assignments.size());
  std::vector<std::size_t> counts;
  const Points means = means_of(points, assignments, k, counts);
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += sq_dist(points[i], means[static_cast<std::size_t>(assignments[i])]);
  return s;
}

KmeansResult kmeans(const Points& points, std::size_t k, const KmeansOptions& opts) {
  if (k == 0 || points.size() < k) {
    throw Error(ErrorKind::TooFewPoints, std::to_string(points.size()) + " points for k = " + std::to_string(k));
  }
  if (opts.n_restarts <= 0 || opts.max_iter <= 0) throw Error(ErrorKind::BadConfig, "restarts and iterations must be positive");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(ErrorKind::ShapeMismatch, "points differ in dimension");
  }
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.n_restarts; ++r) {
    Rng rng(derive_seed(opts.seed, "kmeans", static_cast<std::uint64_t>(r)));
    KmeansResult run = single_run(points, k, opts.max_iter, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

double homogeneity(std::span<const int> clusters, std::span<const int> labels) {
  check_lengths(clusters.size(), labels.size());
  if (labels.empty()) return 1.0;
  const double n = static_cast<double>(labels.size());
  std::map<int, std::size_t> label_counts;
  std::map<int, std::size_t> cluster_counts;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++label_counts[labels[i]];
    ++cluster_counts[clusters[i]];
    ++joint[{clusters[i], labels[i]}];
  }
  const double h_c = entropy(label_counts, n);
  if (h_c <= 0.0) return 1.0;
  double h_c_given_k = 0.0;
  for (const auto& [key, c] : joint) {
    const double nk = static_cast<double>(cluster_counts[key.first]);
    h_c_given_k -= static_cast<double>(c) / n * std::log(static_cast<double>(c) / nk);
  }
  return std::clamp(1.0 - h_c_given_k / h_c, 0.0, 1.0);
}

double fingerprint_homogeneity(const Points& fingerprints, std::span<const int> labels, std::uint64_t seed) {
  check_lengths(fingerprints.size(), labels.size());
  const std::size_t k = distinct(labels);
  if (k <= 1) return 1.0;
  KmeansOptions opts;
  opts.seed = seed;
  const KmeansResult r = kmeans(fingerprints, k, opts);
  return homogeneity(r.assignments, labels);
}

double pfp_homogeneity(const Model& model, std::span<const MapStack> stacks, std::span<const int> labels,
                       std::uint64_t seed) {
  check_lengths(stacks.size(), labels.size());
  Points fps;
  fps.reserve(stacks.size());
  for (auto& p : model.predict(stacks)) fps.push_back(std::move(p.fingerprint));
  return fingerprint_homogeneity(fps, labels, seed);
}

std::vector<CentroidRow> export_centroids(std::span<const FingerprintSet> datasets, std::uint64_t seed) {
  if (datasets.empty()) throw Error(ErrorKind::EmptyDataset, "no fingerprint sets");
  std::vector<CentroidRow> rows;
  for (const FingerprintSet& ds : datasets) {
    check_lengths(ds.fingerprints.size(), ds.labels.size());
    const std::size_t k = distinct(ds.labels);
    KmeansOptions opts;
    opts.seed = seed;
    const KmeansResult r = kmeans(ds.fingerprints, k, opts);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<int> members;
      for (std::size_t i = 0; i < r.assignments.size(); ++i) {
        if (r.assignments[i] == static_cast<int>(c)) members.push_back(ds.labels[i]);
      }
      rows.push_back({ds.dataset, static_cast<int>(c), majority(members), members.size(), r.centroids[c]});
    }
  }
  return rows;
}

std::string centroids_to_tsv(std::span<const CentroidRow> rows, std::span<const std::string> label_names) {
  std::ostringstream out;
  out.precision(17);
  out << "dataset\tcluster\tlabel\tsize\tcentroid\n";
  for (const CentroidRow& r : rows) {
    out << r.dataset << '\t' << r.cluster << '\t';
    if (r.majority_label >= 0 && static_cast<std::size_t>(r.majority_label) < label_names.size()) {
      out << label_names[static_cast<std::size_t>(r.majority_label)];
    } else {
      out << r.majority_label;
    }
    out << '\t' << r.size << '\t';
    for (std::size_t d = 0; d < r.centroid.size(); ++d) out << (d ? "," : "") << r.centroid[d];
    out << '\n';
  }
  return out.str();
}

EvalReport make_report(std::string dataset_name, std::span<const std::array<std::size_t, kTaskCount>> predicted,
                       std::span<const std::array<int, kTaskCount>> truth, std::array<int, kTaskCount> head_sizes,
                       const Points* fingerprints, std::uint64_t seed) {
  check_lengths(predicted.size(), truth.size());
  EvalReport rep;
  rep.dataset_name = std::move(dataset_name);
  rep.instances = truth.size();
  if (truth.empty()) throw Error(ErrorKind::EmptyDataset, "no instances in '" + rep.dataset_name + "'");
  if (fingerprints) check_lengths(fingerprints->size(), truth.size());
  std::array<double, kTaskCount> hom{};
  for (Task t : kTasks) {
    const std::size_t ti = index_of(t);
    const int unknown = head_sizes[ti];
    std::vector<int> p(truth.size()), y(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      p[i] = static_cast<int>(predicted[i][ti]);
      y[i] = truth[i][ti] < 0 ? unknown : truth[i][ti];
    }
    rep.accuracy[ti] = accuracy(p, y);
    F1Result f = weighted_f1(p, y, static_cast<std::size_t>(unknown) + 1);
    rep.weighted_f1[ti] = f.weighted;
    rep.per_class[ti] = std::move(f.per_class);
    if (fingerprints) hom[ti] = fingerprint_homogeneity(*fingerprints, y, derive_seed(seed, task_name(t), 0));
  }
  if (fingerprints) rep.homogeneity = hom;
  return rep;
}

std::string reports_to_tsv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "dataset\tn";
  for (const char* metric : {"acc", "f1", "hom"}) {
    for (Task t : kTasks) out << '\t' << metric << '_' << task_name(t);
  }
  out << '\n';
  for (const EvalReport& r : reports) {
    out << r.dataset_name << '\t' << r.instances;
    for (double a : r.accuracy) out << '\t' << a;
    for (double f : r.weighted_f1) out << '\t' << f;
    for (std::size_t t = 0; t < kTaskCount; ++t) {
      if (r.homogeneity) {
        out << '\t' << (*r.homogeneity)[t];
      } else {
        out << "\t-";
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string reports_to_json(std::span<const EvalReport> reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const EvalReport& r : reports) {
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset_name;
    j["instances"] = r.instances;
    for (Task t : kTasks) {
      const std::size_t ti = index_of(t);
      nlohmann::ordered_json task;
      task["accuracy"] = r.accuracy[ti];
      task["weighted_f1"] = r.weighted_f1[ti];
      task["homogeneity"] = r.homogeneity ? nlohmann::ordered_json((*r.homogeneity)[ti]) : nlohmann::ordered_json();
      j["tasks"][std::string(task_name(t))] = task;
    }
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

std::string per_class_to_tsv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "dataset\ttask\tclass\tprecision\trecall\tf1\tsupport\n";
  for (Task t : kTasks) {
    const std::size_t ti = index_of(t);
    const auto& rows = report.per_class[ti];
    const auto& names = report.class_names[ti];
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (rows[c].support == 0 && rows[c].precision == 0.0) continue;
      const std::string name = c < names.size() ? names[c] : (c + 1 == rows.size() ? "unseen" : std::to_string(c));
      out << report.dataset_name << '\t' << task_name(t) << '\t' << name << '\t' << rows[c].precision << '\t'
          << rows[c].recall << '\t' << rows[c].f1 << '\t' << rows[c].support << '\n';
    }
  }
  return out.str();
}

}  // namespace foldmap
