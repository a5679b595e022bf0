#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "foldmap/labels.hpp"

namespace foldmap {

struct Atom {
  int serial = 0;
  std::string name;
  std::string element;
  int residue_index = 0;
  std::string residue_name;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  std::optional<double> charge;  // elementary charges; PQR only
  std::optional<double> radius;  // Angstrom; PQR only

  bool is_hydrogen() const { return element == "H" || element == "D"; }
};

enum class Selection { CA = 0, BB = 1, HEAVY = 2 };

std::string_view selection_name(Selection s);
Selection parse_selection(std::string_view name);  // case-insensitive

struct DomainStructure {
  std::string domain_id;
  std::vector<Atom> atoms;
  bool has_charges = false;
};

enum class ResolutionGroup { HR = 0, LR = 1, NMR = 2 };

inline constexpr double kHighResolutionLimit = 3.0;
inline constexpr double kNmrResolution = 999.0;

std::string_view group_name(ResolutionGroup g);
ResolutionGroup parse_group(std::string_view name);
ResolutionGroup classify_resolution(double resolution);

struct DomainRecord {
  std::string domain_id;
  CathLabel cath;
  double resolution = 0.0;

  ResolutionGroup group() const { return classify_resolution(resolution); }
};

/// Whitespace-delimited PQR; the chain column is optional.
DomainStructure parse_pqr(std::string_view text, std::string domain_id = {});

/// Fixed-column PDB. Waters are dropped, only the first MODEL and the first
/// alternate location are kept.
DomainStructure parse_pdb(std::string_view text, std::string domain_id = {});

/// Dispatches on extension (.pqr or .pdb/.ent); domain id is the file stem.
DomainStructure load_structure(const std::filesystem::path& path);

/// Canonical PQR text, parseable by parse_pqr.
std::string write_pqr(const DomainStructure& s);

std::vector<Atom> select_atoms(const DomainStructure& s, Selection sel);

/// CathDomainList format: id, C, A, T, H, S, O, L, I, D, length, resolution.
std::vector<DomainRecord> parse_cath_list(std::string_view text);

struct ResolutionPartition {
  std::vector<DomainRecord> hr;
  std::vector<DomainRecord> lr;
  std::vector<DomainRecord> nmr;
};

ResolutionPartition partition_by_resolution(const std::vector<DomainRecord>& records);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace foldmap
