#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foldmap/labels.hpp"
#include "foldmap/matrices.hpp"

namespace foldmap {

class Model;

double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct F1Result {
  double weighted = 0.0;
  std::vector<ClassScore> per_class;
};

/// Indices must lie in [0, k).
F1Result weighted_f1(std::span<const int> predicted, std::span<const int> truth, std::size_t k);

using Points = std::vector<std::vector<double>>;

struct KmeansOptions {
  int n_restarts = 10;
  int max_iter = 300;
  std::uint64_t seed = 0;
};

struct KmeansResult {
  std::size_t k = 0;
  std::vector<int> assignments;
  Points centroids;
  double inertia = 0.0;
};

/// kmeans++ seeding, Lloyd to a fixed point, then single-point transfers until
/// no move lowers inertia. Best of n_restarts.
KmeansResult kmeans(const Points& points, std::size_t k, const KmeansOptions& opts = {});

/// Sum of squared distances to the mean of each cluster in `assignments`.
double inertia_of(const Points& points, std::span<const int> assignments, std::size_t k);

/// 1 - H(C|K)/H(C) in nats; 1 when H(C) = 0.
double homogeneity(std::span<const int> clusters, std::span<const int> labels);

/// k-means on fingerprints with k = number of distinct labels, scored against the labels.
double fingerprint_homogeneity(const Points& fingerprints, std::span<const int> labels, std::uint64_t seed = 0);
double pfp_homogeneity(const Model& model, std::span<const MapStack> stacks, std::span<const int> labels,
                       std::uint64_t seed = 0);

struct CentroidRow {
  std::string dataset;
  int cluster = 0;
  int majority_label = 0;  // lowest label among the most frequent
  std::size_t size = 0;
  std::vector<double> centroid;
};

struct FingerprintSet {
  std::string dataset;
  Points fingerprints;
  std::vector<int> labels;
};

/// Per dataset: k-means with k = distinct labels, each centroid tagged with its majority label.
std::vector<CentroidRow> export_centroids(std::span<const FingerprintSet> datasets, std::uint64_t seed = 0);
std::string centroids_to_tsv(std::span<const CentroidRow> rows, std::span<const std::string> label_names = {});

struct EvalReport {
  std::string dataset_name;
  std::size_t instances = 0;
  std::array<double, kTaskCount> accuracy{};
  std::array<double, kTaskCount> weighted_f1{};
  std::optional<std::array<double, kTaskCount>> homogeneity;
  std::array<std::vector<ClassScore>, kTaskCount> per_class;
  std::array<std::vector<std::string>, kTaskCount> class_names;
};

/// Truth index -1 (label unseen in training) is scored as an extra class that
/// is never predicted.
EvalReport make_report(std::string dataset_name, std::span<const std::array<std::size_t, kTaskCount>> predicted,
                       std::span<const std::array<int, kTaskCount>> truth, std::array<int, kTaskCount> head_sizes,
                       const Points* fingerprints = nullptr, std::uint64_t seed = 0);

std::string reports_to_tsv(std::span<const EvalReport> reports);
std::string reports_to_json(std::span<const EvalReport> reports);
std::string per_class_to_tsv(const EvalReport& report);

}  // namespace foldmap
