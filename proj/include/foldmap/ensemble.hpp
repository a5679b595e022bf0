#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "foldmap/model.hpp"

namespace foldmap {

struct EnsemblePrediction {
  std::array<std::vector<double>, kTaskCount> probabilities;  // combined, weight applied
  std::array<std::size_t, kTaskCount> predicted{};
};

/// Equal-weight soft vote over member models.
class Ensemble {
 public:
  /// Throws EmptyDataset for no members, VocabularyMismatch when members disagree.
  explicit Ensemble(std::vector<Model> members);

  std::size_t size() const { return members_.size(); }
  double weight() const { return weight_; }
  const std::vector<Model>& members() const { return members_; }
  const Vocabulary& vocabulary() const { return members_.front().vocabulary(); }
  std::array<int, kTaskCount> head_sizes() const { return members_.front().config().head_sizes; }

  EnsemblePrediction predict(const MapStack& stack) const;
  std::vector<EnsemblePrediction> predict(std::span<const MapStack> stacks, int chunk = 32) const;

 private:
  std::vector<Model> members_;
  double weight_ = 1.0;
};

/// w * sum of member probabilities per class. Each class sum is taken over the
/// sorted member values so the result does not depend on member order.
std::vector<double> combine_probabilities(std::span<const std::vector<double>> member_probs, double weight);

/// Lowest index among the maxima.
std::size_t argmax(std::span<const double> values);

Ensemble build_ensemble(std::span<const std::filesystem::path> checkpoints);

/// One checkpoint path per line; '#' starts a comment; relative paths resolve
/// against the manifest's directory.
std::vector<std::filesystem::path> read_ensemble_manifest(const std::filesystem::path& path);

}  // namespace foldmap
