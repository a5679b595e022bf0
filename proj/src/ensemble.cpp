#include "foldmap/ensemble.hpp"

#include <algorithm>
#include <sstream>

#include "foldmap/error.hpp"
#include "foldmap/structure.hpp"

namespace foldmap {

Ensemble::Ensemble(std::vector<Model> members) : members_(std::move(members)) {
  if (members_.empty()) throw Error(ErrorKind::EmptyDataset, "an ensemble needs at least one member");
  const Model& first = members_.front();
  for (std::size_t i = 1; i < members_.size(); ++i) {
    const Model& m = members_[i];
    if (m.config().head_sizes != first.config().head_sizes) {
      throw Error(ErrorKind::VocabularyMismatch, "member " + std::to_string(i) + " has different head sizes");
    }
    if (m.vocabulary().hash() != first.vocabulary().hash()) {
      throw Error(ErrorKind::VocabularyMismatch, "member " + std::to_string(i) + " was trained on a different vocabulary");
    }
  }
  weight_ = 1.0 / static_cast<double>(members_.size());
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::HeadMismatch, "argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<double> combine_probabilities(std::span<const std::vector<double>> member_probs, double weight) {
  if (member_probs.empty()) throw Error(ErrorKind::EmptyDataset, "no member probabilities");
  const std::size_t k = member_probs.front().size();
  for (const auto& p : member_probs) {
    if (p.size() != k) throw Error(ErrorKind::HeadMismatch, "members disagree on class count");
  }
  std::vector<double> combined(k);
  std::vector<double> column(member_probs.size());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t m = 0; m < member_probs.size(); ++m) column[m] = member_probs[m][c];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    combined[c] = weight * s;
  }
  return combined;
}

std::vector<EnsemblePrediction> Ensemble::predict(std::span<const MapStack> stacks, int chunk) const {
  std::vector<std::vector<Prediction>> per_member;
  per_member.reserve(members_.size());
  for (const Model& m : members_) per_member.push_back(m.predict(stacks, chunk));

  std::vector<EnsemblePrediction> out(stacks.size());
  std::vector<std::vector<double>> probs(members_.size());
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    for (Task t : kTasks) {
      for (std::size_t m = 0; m < members_.size(); ++m) probs[m] = per_member[m][i].probabilities[index_of(t)];
      out[i].probabilities[index_of(t)] = combine_probabilities(probs, weight_);
      out[i].predicted[index_of(t)] = argmax(out[i].probabilities[index_of(t)]);
    }
  }
  return out;
}

EnsemblePrediction Ensemble::predict(const MapStack& stack) const { return predict(std::span(&stack, 1)).front(); }

Ensemble build_ensemble(std::span<const std::filesystem::path> checkpoints) {
  std::vector<Model> members;
  members.reserve(checkpoints.size());
  for (const auto& p : checkpoints) members.push_back(load_checkpoint(p));
  return Ensemble(std::move(members));
}

std::vector<std::filesystem::path> read_ensemble_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::filesystem::path> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::filesystem::path p = line.substr(first, last - first + 1);
    out.push_back(p.is_absolute() ? p : path.parent_path() / p);
  }
  if (out.empty()) throw Error(ErrorKind::EmptyDataset, "ensemble manifest '" + path.string() + "' lists no checkpoints");
  return out;
}

}  // namespace foldmap
