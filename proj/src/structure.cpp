#include "foldmap/structure.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "foldmap/error.hpp"

namespace foldmap {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::optional<int> to_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": " + why);
}

// Element from an atom name when no element column is available.
std::string infer_element(std::string_view name, std::string_view residue_name) {
  std::string n = upper(trim(name));
  if (n.size() <= 2 && n == upper(trim(residue_name))) return n;  // monatomic ions
  std::size_t i = 0;
  while (i < n.size() && std::isdigit(static_cast<unsigned char>(n[i]))) ++i;
  if (i == n.size()) return n;
  return std::string(1, n[i]);
}

bool is_water(std::string_view residue_name) {
  return residue_name == "HOH" || residue_name == "WAT" || residue_name == "DOD";
}

bool is_atom_record(std::string_view tag) { return tag == "ATOM" || tag == "HETATM"; }

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!fn(line, line_no)) return;
    if (end == text.size()) break;
    pos = end + 1;
  }
}

std::string_view column(std::string_view line, std::size_t first, std::size_t last) {
  // 1-based inclusive PDB columns, clipped to the line length.
  if (line.size() < first) return {};
  return line.substr(first - 1, std::min(last, line.size()) - first + 1);
}

}  // namespace

std::string_view selection_name(Selection s) {
  switch (s) {
    case Selection::CA: return "CA";
    case Selection::BB: return "BB";
    case Selection::HEAVY: return "HEAVY";
  }
  return "?";
}

Selection parse_selection(std::string_view name) {
  const std::string u = upper(name);
  if (u == "CA") return Selection::CA;
  if (u == "BB") return Selection::BB;
  if (u == "HEAVY") return Selection::HEAVY;
  throw Error(ErrorKind::BadConfig, "unknown atom selection '" + std::string(name) + "'");
}

std::string_view group_name(ResolutionGroup g) {
  switch (g) {
    case ResolutionGroup::HR: return "HR";
    case ResolutionGroup::LR: return "LR";
    case ResolutionGroup::NMR: return "NMR";
  }
  return "?";
}

ResolutionGroup parse_group(std::string_view name) {
  const std::string u = upper(name);
  if (u == "HR") return ResolutionGroup::HR;
  if (u == "LR") return ResolutionGroup::LR;
  if (u == "NMR") return ResolutionGroup::NMR;
  throw Error(ErrorKind::BadConfig, "unknown resolution group '" + std::string(name) + "'");
}

ResolutionGroup classify_resolution(double resolution) {
  if (resolution == kNmrResolution) return ResolutionGroup::NMR;
  if (resolution <= kHighResolutionLimit) return ResolutionGroup::HR;
  return ResolutionGroup::LR;
}

DomainStructure parse_pqr(std::string_view text, std::string domain_id) {
  DomainStructure s;
  s.domain_id = std::move(domain_id);
  s.has_charges = true;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto tok = split_ws(line);
    if (tok.empty()) return true;
    if (tok[0] == "ENDMDL") return false;
    if (!is_atom_record(tok[0])) return true;
    if (tok.size() < 10) malformed(line_no, "expected at least 10 fields, got " + std::to_string(tok.size()));
    if (tok.size() > 11) malformed(line_no, "expected at most 11 fields, got " + std::to_string(tok.size()));
    const std::size_t n = tok.size();
    Atom atom;
    const auto serial = to_int(tok[1]);
    const auto resnum = to_int(tok[n - 6]);
    const auto x = to_double(tok[n - 5]);
    const auto y = to_double(tok[n - 4]);
    const auto z = to_double(tok[n - 3]);
    const auto q = to_double(tok[n - 2]);
    const auto r = to_double(tok[n - 1]);
    if (!serial) malformed(line_no, "non-integer serial '" + std::string(tok[1]) + "'");
    if (!resnum) malformed(line_no, "non-integer residue number '" + std::string(tok[n - 6]) + "'");
    if (!x || !y || !z) malformed(line_no, "non-numeric coordinate");
    if (!q || !r) malformed(line_no, "non-numeric charge or radius");
    if (*r < 0.0) malformed(line_no, "negative radius");
    atom.serial = *serial;
    atom.name = std::string(tok[2]);
    atom.residue_name = upper(tok[3]);
    atom.residue_index = *resnum;
    atom.position = {*x, *y, *z};
    atom.charge = *q;
    atom.radius = *r;
    atom.element = infer_element(atom.name, atom.residue_name);
    s.atoms.push_back(std::move(atom));
    return true;
  });
  if (s.atoms.empty()) throw Error(ErrorKind::EmptyStructure, "no ATOM/HETATM records in '" + s.domain_id + "'");
  return s;
}

DomainStructure parse_pdb(std::string_view text, std::string domain_id) {
  DomainStructure s;
  s.domain_id = std::move(domain_id);
  s.has_charges = false;
  char kept_altloc = ' ';
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const std::string_view tag = trim(column(line, 1, 6));
    if (tag == "ENDMDL") return false;
    if (!is_atom_record(tag)) return true;
    if (line.size() < 54) malformed(line_no, "ATOM record shorter than 54 columns");
    const std::string residue_name = upper(trim(column(line, 18, 20)));
    if (is_water(residue_name)) return true;
    const char altloc = line.size() >= 17 ? line[16] : ' ';
    if (altloc != ' ') {
      if (kept_altloc == ' ') kept_altloc = altloc;
      if (altloc != kept_altloc) return true;
    }
    const auto serial = to_int(column(line, 7, 11));
    const auto resnum = to_int(column(line, 23, 26));
    const auto x = to_double(column(line, 31, 38));
    const auto y = to_double(column(line, 39, 46));
    const auto z = to_double(column(line, 47, 54));
    if (!serial) malformed(line_no, "non-integer serial");
    if (!resnum) malformed(line_no, "non-integer residue number");
    if (!x || !y || !z) malformed(line_no, "non-numeric coordinate");
    Atom atom;
    atom.serial = *serial;
    atom.name = std::string(trim(column(line, 13, 16)));
    atom.residue_name = residue_name;
    atom.residue_index = *resnum;
    atom.position = {*x, *y, *z};
    const std::string element = upper(trim(column(line, 77, 78)));
    atom.element = element.empty() ? infer_element(atom.name, residue_name) : element;
    s.atoms.push_back(std::move(atom));
    return true;
  });
  if (s.atoms.empty()) throw Error(ErrorKind::EmptyStructure, "no ATOM/HETATM records in '" + s.domain_id + "'");
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DomainStructure load_structure(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  const std::string ext = upper(path.extension().string());
  std::string id = path.stem().string();
  try {
    if (ext == ".PQR") return parse_pqr(text, id);
    if (ext == ".PDB" || ext == ".ENT") return parse_pdb(text, id);
  } catch (const Error& e) {
    throw Error(e.kind(), path.filename().string() + ": " + e.detail());
  }
  throw Error(ErrorKind::Io, "unrecognised structure extension '" + path.string() + "'");
}

std::string write_pqr(const DomainStructure& s) {
  std::ostringstream out;
  out.precision(17);
  for (const Atom& a : s.atoms) {
    out << "ATOM " << a.serial << ' ' << a.name << ' ' << a.residue_name << ' ' << a.residue_index
        << ' ' << a.position.x() << ' ' << a.position.y() << ' ' << a.position.z() << ' '
        << a.charge.value_or(0.0) << ' ' << a.radius.value_or(0.0) << '\n';
  }
  out << "END\n";
  return out.str();
}

std::vector<Atom> select_atoms(const DomainStructure& s, Selection sel) {
  std::vector<Atom> out;
  for (const Atom& a : s.atoms) {
    if (is_water(a.residue_name)) continue;
    bool keep = false;
    switch (sel) {
      case Selection::CA:
        keep = a.name == "CA" && a.element != "CA";  // calcium ions share the name
        break;
      case Selection::BB:
        keep = (a.name == "CA" || a.name == "CB" || a.name == "O" || a.name == "N") && a.element != "CA";
        break;
      case Selection::HEAVY:
        keep = !a.is_hydrogen();
        break;
    }
    if (keep) out.push_back(a);
  }
  if (out.empty()) {
    throw Error(ErrorKind::EmptySelection,
                "no " + std::string(selection_name(sel)) + " atoms in '" + s.domain_id + "'");
  }
  return out;
}

std::vector<DomainRecord> parse_cath_list(std::string_view text) {
  std::vector<DomainRecord> out;
  std::set<std::string, std::less<>> seen;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') return true;
    const auto tok = split_ws(t);
    if (tok.size() < 12) malformed(line_no, "expected 12 fields, got " + std::to_string(tok.size()));
    DomainRecord rec;
    rec.domain_id = std::string(tok[0]);
    const auto c = to_int(tok[1]);
    const auto a = to_int(tok[2]);
    const auto tt = to_int(tok[3]);
    const auto h = to_int(tok[4]);
    const auto res = to_double(tok[11]);
    if (!c || !a || !tt || !h) malformed(line_no, "non-integer CATH number");
    if (!res || *res <= 0.0) malformed(line_no, "resolution must be a positive number");
    rec.cath = CathLabel{*c, *a, *tt, *h};
    rec.resolution = *res;
    if (!seen.insert(rec.domain_id).second) {
      throw Error(ErrorKind::DuplicateDomain,
                  "line " + std::to_string(line_no) + ": domain '" + rec.domain_id + "' listed twice");
    }
    out.push_back(std::move(rec));
    return true;
  });
  return out;
}

ResolutionPartition partition_by_resolution(const std::vector<DomainRecord>& records) {
  ResolutionPartition p;
  for (const DomainRecord& r : records) {
    switch (r.group()) {
      case ResolutionGroup::HR: p.hr.push_back(r); break;
      case ResolutionGroup::LR: p.lr.push_back(r); break;
      case ResolutionGroup::NMR: p.nmr.push_back(r); break;
    }
  }
  return p;
}

}  // namespace foldmap
