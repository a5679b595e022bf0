#include "foldmap/labels.hpp"

#include "foldmap/error.hpp"

namespace foldmap {

std::string_view task_name(Task t) {
  static constexpr std::array<std::string_view, kTaskCount> names{"C", "A", "T", "H"};
  return names[index_of(t)];
}

Task parse_task(std::string_view name) {
  for (Task t : kTasks) {
    if (task_name(t) == name) return t;
  }
  throw Error(ErrorKind::BadConfig, "unknown task '" + std::string(name) + "'");
}

std::array<int, kTaskCount> CathLabel::key(Task task) const {
  const std::array<int, kTaskCount> full{c, a, t, h};
  std::array<int, kTaskCount> out{};
  for (std::size_t i = 0; i <= index_of(task); ++i) out[i] = full[i];
  return out;
}

std::string format_key(const LabelKey& key, Task task) {
  std::string out;
  for (std::size_t i = 0; i <= index_of(task); ++i) {
    if (i) out += '.';
    out += std::to_string(key[i]);
  }
  return out;
}

}  // namespace foldmap
