#include "foldmap/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "foldmap/error.hpp"
#include "foldmap/rng.hpp"

namespace foldmap {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = line.find('\t', pos);
    out.push_back(line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    pos = end + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

LabelKey parse_dotted(std::string_view s, Task task, std::size_t line_no) {
  LabelKey key{};
  std::size_t level = 0;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = s.find('.', pos);
    const std::string_view part = s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (level > index_of(task)) {
      level = kTaskCount + 1;
      break;
    }
    key[level++] = parse_number<int>(part, line_no);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  if (level != index_of(task) + 1) {
    throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": label '" + std::string(s) +
                                               "' has wrong depth for task " + std::string(task_name(task)));
  }
  return key;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

[[noreturn]] void truncated(std::size_t expected, std::size_t actual, const char* what) {
  throw Error(ErrorKind::TruncatedPayload, std::string(what) + ": expected " + std::to_string(expected) +
                                               " bytes, got " + std::to_string(actual));
}

}  // namespace

Vocabulary::Vocabulary(std::array<std::vector<LabelKey>, kTaskCount> keys) : keys_(std::move(keys)) {
  for (auto& k : keys_) {
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
  }
}

std::array<std::size_t, kTaskCount> Vocabulary::sizes() const {
  std::array<std::size_t, kTaskCount> out{};
  for (Task t : kTasks) out[index_of(t)] = size(t);
  return out;
}

int Vocabulary::index(Task t, const CathLabel& label) const {
  const auto& keys = keys_[index_of(t)];
  const LabelKey k = label.key(t);
  const auto it = std::lower_bound(keys.begin(), keys.end(), k);
  if (it == keys.end() || *it != k) return -1;
  return static_cast<int>(it - keys.begin());
}

LabelIndices Vocabulary::encode(const CathLabel& label) const {
  LabelIndices out{};
  for (Task t : kTasks) out[index_of(t)] = index(t, label);
  return out;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (Task t : kTasks) {
    for (const LabelKey& k : keys(t)) {
      out += task_name(t);
      out += '\t';
      out += format_key(k, t);
      out += '\n';
    }
  }
  return out;
}

std::uint64_t Vocabulary::hash() const { return fnv1a64(to_text()); }

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::array<std::vector<LabelKey>, kTaskCount> keys;
  std::size_t line_no = 0;
  for (std::string_view line : lines_of(text)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": expected 'task<TAB>label'");
    }
    const Task t = parse_task(fields[0]);
    keys[index_of(t)].push_back(parse_dotted(fields[1], t, line_no));
  }
  return Vocabulary(std::move(keys));
}

Vocabulary build_vocabulary(std::span<const CathLabel> labels) {
  std::array<std::vector<LabelKey>, kTaskCount> keys;
  for (const CathLabel& l : labels) {
    for (Task t : kTasks) keys[index_of(t)].push_back(l.key(t));
  }
  return Vocabulary(std::move(keys));
}

Vocabulary build_vocabulary(std::span<const DomainRecord> records) {
  std::vector<CathLabel> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.cath);
  return build_vocabulary(labels);
}

SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
  const auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_unit(spec.test_fraction) || !in_unit(spec.validation_fraction)) {
    throw Error(ErrorKind::BadConfig, "split fractions must lie in (0, 1)");
  }
  if (n < 3) throw Error(ErrorKind::TooFew, "split needs at least 3 items, got " + std::to_string(n));
  SplitSizes s;
  s.test = static_cast<std::size_t>(std::ceil(spec.test_fraction * static_cast<double>(n)));
  s.validation = static_cast<std::size_t>(std::ceil(spec.validation_fraction * static_cast<double>(n - s.test)));
  if (s.test + s.validation >= n) {
    throw Error(ErrorKind::TooFew, "split of " + std::to_string(n) + " items leaves no training data");
  }
  s.train = n - s.test - s.validation;
  return s;
}

SplitResult<std::string> split(std::span<const std::string> ids, const SplitSpec& spec) {
  const SplitSizes sizes = split_sizes(ids.size(), spec);
  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng(spec.seed);
  rng.shuffle(order.begin(), order.end());
  SplitResult<std::string> out;
  auto it = order.begin();
  out.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes.test));
  it += static_cast<std::ptrdiff_t>(sizes.test);
  out.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes.validation));
  it += static_cast<std::ptrdiff_t>(sizes.validation);
  out.train.assign(it, order.end());
  return out;
}

std::vector<std::uint8_t> encode_stack(const MapStack& stack) {
  if (stack.domain_id.size() > 0xffff) throw Error(ErrorKind::BadConfig, "domain id too long");
  if (stack.channels.size() != kChannelCount * kChannelSize) {
    throw Error(ErrorKind::ShapeMismatch, "stack has " + std::to_string(stack.channels.size()) + " values");
  }
  std::vector<std::uint8_t> out(kStackMagic.begin(), kStackMagic.end());
  out.reserve(kStackMagic.size() + 8 + 2 + stack.domain_id.size() + 1 + kStackPayloadBytes);
  put_u16(out, static_cast<std::uint16_t>(kChannelCount));
  put_u16(out, static_cast<std::uint16_t>(kMapSide));
  put_u16(out, kStackDtypeI16);
  std::uint16_t flags = 0;
  if (stack.nb_valid) flags |= kFlagNbValid;
  if (stack.distance_only) flags |= kFlagDistanceOnly;
  put_u16(out, flags);
  put_u16(out, static_cast<std::uint16_t>(stack.domain_id.size()));
  out.insert(out.end(), stack.domain_id.begin(), stack.domain_id.end());
  out.push_back(static_cast<std::uint8_t>(stack.selection));
  for (std::int16_t v : stack.channels) put_u16(out, static_cast<std::uint16_t>(v));
  return out;
}

MapStack decode_stack(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kFixedHeader = 8 + 8 + 2;
  if (bytes.size() < kStackMagic.size()) truncated(kStackMagic.size(), bytes.size(), "stack magic");
  if (!std::equal(kStackMagic.begin(), kStackMagic.end() - 1, bytes.begin())) {
    throw Error(ErrorKind::BadMagic, "not a FOLDMAP stack file");
  }
  if (bytes[7] != static_cast<std::uint8_t>(kStackMagic[7])) {
    throw Error(ErrorKind::UnsupportedVersion, std::string("stack format version '") + static_cast<char>(bytes[7]) + "'");
  }
  if (bytes.size() < kFixedHeader) truncated(kFixedHeader, bytes.size(), "stack header");
  const std::uint16_t channels = get_u16(bytes, 8);
  const std::uint16_t side = get_u16(bytes, 10);
  const std::uint16_t dtype = get_u16(bytes, 12);
  const std::uint16_t flags = get_u16(bytes, 14);
  if (channels != kChannelCount || side != kMapSide || dtype != kStackDtypeI16) {
    throw Error(ErrorKind::UnsupportedVersion, "unsupported layout channels=" + std::to_string(channels) +
                                                   " side=" + std::to_string(side) + " dtype=" + std::to_string(dtype));
  }
  if (flags & ~(kFlagNbValid | kFlagDistanceOnly)) {
    throw Error(ErrorKind::UnsupportedVersion, "unknown flag bits " + std::to_string(flags));
  }
  const std::size_t id_len = get_u16(bytes, 16);
  const std::size_t payload_at = kFixedHeader + id_len + 1;
  if (bytes.size() < payload_at) truncated(payload_at, bytes.size(), "stack header");
  MapStack stack;
  stack.domain_id.assign(bytes.begin() + kFixedHeader, bytes.begin() + static_cast<std::ptrdiff_t>(kFixedHeader + id_len));
  const std::uint8_t sel = bytes[kFixedHeader + id_len];
  if (sel > 2) throw Error(ErrorKind::UnsupportedVersion, "unknown selection code " + std::to_string(sel));
  stack.selection = static_cast<Selection>(sel);
  stack.nb_valid = flags & kFlagNbValid;
  stack.distance_only = flags & kFlagDistanceOnly;
  const std::size_t payload = bytes.size() - payload_at;
  if (payload != kStackPayloadBytes) truncated(kStackPayloadBytes, payload, "stack payload");
  for (std::size_t i = 0; i < stack.channels.size(); ++i) {
    stack.channels[i] = static_cast<std::int16_t>(get_u16(bytes, payload_at + 2 * i));
  }
  return stack;
}

void write_stack(const MapStack& stack, std::ostream& sink) {
  const auto bytes = encode_stack(stack);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error(ErrorKind::Io, "failed writing stack '" + stack.domain_id + "'");
}

MapStack read_stack(std::istream& source) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  return decode_stack(bytes);
}

void write_stack_file(const MapStack& stack, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot create '" + path.string() + "'");
  write_stack(stack, out);
}

MapStack read_stack_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  try {
    return read_stack(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<CathLabel> Manifest::labels() const {
  std::vector<CathLabel> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.cath);
  return out;
}

std::string manifest_to_text(std::span<const ManifestEntry> entries) {
  std::ostringstream out;
  out << "#domain_id\tpath\tC\tA\tT\tH\tgroup\tatoms\n";
  for (const auto& e : entries) {
    out << e.domain_id << '\t' << e.path << '\t' << e.cath.c << '\t' << e.cath.a << '\t' << e.cath.t << '\t'
        << e.cath.h << '\t' << group_name(e.group) << '\t';
    if (e.atom_count) out << *e.atom_count;
    out << '\n';
  }
  return out.str();
}

std::vector<ManifestEntry> manifest_from_text(std::string_view text) {
  std::vector<ManifestEntry> out;
  std::size_t line_no = 0;
  for (std::string_view line : lines_of(text)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() != 7 && f.size() != 8) {
      throw Error(ErrorKind::MalformedLine, "manifest line " + std::to_string(line_no) + ": expected 7 or 8 columns");
    }
    ManifestEntry e;
    e.domain_id = std::string(f[0]);
    e.path = std::string(f[1]);
    e.cath = CathLabel{parse_number<int>(f[2], line_no), parse_number<int>(f[3], line_no),
                       parse_number<int>(f[4], line_no), parse_number<int>(f[5], line_no)};
    try {
      e.group = parse_group(f[6]);
    } catch (const Error&) {
      throw Error(ErrorKind::MalformedLine, "manifest line " + std::to_string(line_no) + ": bad group");
    }
    if (f.size() == 8 && !f[7].empty()) e.atom_count = parse_number<std::uint32_t>(f[7], line_no);
    out.push_back(std::move(e));
  }
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    m.entries = manifest_from_text(read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot create '" + path.string() + "'");
  out << manifest_to_text(entries);
}

std::vector<GroupStats> corpus_stats(std::span<const DomainRecord> records, std::span<const StackMeta> stacks) {
  std::unordered_map<std::string, std::uint32_t> atoms_by_id;
  for (const auto& s : stacks) atoms_by_id[s.domain_id] = s.atom_count;

  std::vector<GroupStats> out;
  for (ResolutionGroup g : {ResolutionGroup::HR, ResolutionGroup::LR, ResolutionGroup::NMR}) {
    GroupStats st;
    st.group = g;
    std::array<std::map<LabelKey, std::size_t>, kTaskCount> counts;
    double res_sum = 0.0;
    double atom_sum = 0.0;
    std::size_t atom_n = 0;
    for (const DomainRecord& r : records) {
      if (r.group() != g) continue;
      if (st.instances == 0) st.min_resolution = st.max_resolution = r.resolution;
      ++st.instances;
      for (Task t : kTasks) ++counts[index_of(t)][r.cath.key(t)];
      res_sum += r.resolution;
      st.min_resolution = std::min(st.min_resolution, r.resolution);
      st.max_resolution = std::max(st.max_resolution, r.resolution);
      if (const auto it = atoms_by_id.find(r.domain_id); it != atoms_by_id.end()) {
        atom_sum += it->second;
        ++atom_n;
      }
    }
    if (st.instances == 0) {
      out.push_back(st);
      continue;
    }
    for (Task t : kTasks) st.class_counts[index_of(t)] = counts[index_of(t)].size();
    const auto& h = counts[index_of(Task::H)];
    const auto small = std::count_if(h.begin(), h.end(), [](const auto& kv) { return kv.second < 10; });
    st.h_fraction_below_ten = static_cast<double>(small) / static_cast<double>(h.size());
    st.mean_resolution = res_sum / static_cast<double>(st.instances);
    if (atom_n) st.mean_atoms = atom_sum / static_cast<double>(atom_n);
    out.push_back(st);
  }
  return out;
}

std::string corpus_stats_to_tsv(std::span<const GroupStats> stats) {
  std::ostringstream out;
  out << "group\tN\tNC_C\tNC_A\tNC_T\tNC_H\tNC_H<10\tres_mean\tres_min\tres_max\tmean_atoms\n";
  out.setf(std::ios::fixed);
  for (const auto& s : stats) {
    out << group_name(s.group) << '\t' << s.instances;
    for (std::size_t c : s.class_counts) out << '\t' << c;
    out.precision(4);
    out << '\t' << s.h_fraction_below_ten;
    out.precision(3);
    out << '\t' << s.mean_resolution << '\t' << s.min_resolution << '\t' << s.max_resolution << '\t';
    if (s.mean_atoms) {
      out.precision(1);
      out << *s.mean_atoms;
    } else {
      out << "NA";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace foldmap
