#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foldmap/labels.hpp"
#include "foldmap/matrices.hpp"
#include "foldmap/structure.hpp"

namespace foldmap {

/// Dense per-task indices into a Vocabulary; -1 marks a label the vocabulary lacks.
using LabelIndices = std::array<int, kTaskCount>;

/// Per-task sorted lists of distinct label prefixes.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::array<std::vector<LabelKey>, kTaskCount> keys);

  std::size_t size(Task t) const { return keys_[index_of(t)].size(); }
  std::array<std::size_t, kTaskCount> sizes() const;
  const std::vector<LabelKey>& keys(Task t) const { return keys_[index_of(t)]; }

  /// Index of the label's prefix for a task, or -1 when absent.
  int index(Task t, const CathLabel& label) const;
  LabelIndices encode(const CathLabel& label) const;
  const LabelKey& key(Task t, std::size_t index) const { return keys_[index_of(t)].at(index); }

  /// Stable 64-bit hash of the canonical text form.
  std::uint64_t hash() const;
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);

  bool operator==(const Vocabulary&) const = default;

 private:
  std::array<std::vector<LabelKey>, kTaskCount> keys_;
};

Vocabulary build_vocabulary(std::span<const CathLabel> labels);
Vocabulary build_vocabulary(std::span<const DomainRecord> records);

struct SplitSpec {
  double test_fraction = 0.10;
  double validation_fraction = 0.40;  // of the post-test remainder
  std::uint64_t seed = 0;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

SplitSizes split_sizes(std::size_t n, const SplitSpec& spec);

template <typename T>
struct SplitResult {
  std::vector<T> train;
  std::vector<T> validation;
  std::vector<T> test;
};

/// Seeded uniform shuffle, then ceil(test) and ceil(validation of remainder).
SplitResult<std::string> split(std::span<const std::string> ids, const SplitSpec& spec);

// StackFile: "FOLDMAP1", u16 channels, u16 side, u16 dtype, u16 flags,
// u16 id length + id bytes, u8 selection, i16 payload. All little-endian.
// The source atom count is not stored; manifests carry it.
inline constexpr std::array<char, 8> kStackMagic{'F', 'O', 'L', 'D', 'M', 'A', 'P', '1'};
inline constexpr std::uint16_t kStackDtypeI16 = 1;
inline constexpr std::uint16_t kFlagNbValid = 1u << 0;
inline constexpr std::uint16_t kFlagDistanceOnly = 1u << 1;
inline constexpr std::size_t kStackPayloadBytes = kChannelCount * kChannelSize * 2;

std::vector<std::uint8_t> encode_stack(const MapStack& stack);
MapStack decode_stack(std::span<const std::uint8_t> bytes);
void write_stack(const MapStack& stack, std::ostream& sink);
MapStack read_stack(std::istream& source);
void write_stack_file(const MapStack& stack, const std::filesystem::path& path);
MapStack read_stack_file(const std::filesystem::path& path);

/// One row of a stack manifest (tab-separated).
struct ManifestEntry {
  std::string domain_id;
  std::string path;  // relative to the manifest's directory unless absolute
  CathLabel cath;
  ResolutionGroup group = ResolutionGroup::HR;
  std::optional<std::uint32_t> atom_count;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<CathLabel> labels() const;
};

std::string manifest_to_text(std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> manifest_from_text(std::string_view text);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

struct GroupStats {
  ResolutionGroup group;
  std::size_t instances = 0;
  std::array<std::size_t, kTaskCount> class_counts{};
  double h_fraction_below_ten = 0.0;  // H classes with fewer than ten instances
  std::optional<double> mean_atoms;
  double mean_resolution = 0.0;
  double min_resolution = 0.0;
  double max_resolution = 0.0;
};

struct StackMeta {
  std::string domain_id;
  std::uint32_t atom_count = 0;
};

std::vector<GroupStats> corpus_stats(std::span<const DomainRecord> records, std::span<const StackMeta> stacks = {});
std::string corpus_stats_to_tsv(std::span<const GroupStats> stats);

}  // namespace foldmap
