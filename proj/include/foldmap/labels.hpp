#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <string_view>

namespace foldmap {

enum class Task { C = 0, A = 1, T = 2, H = 3 };

inline constexpr std::size_t kTaskCount = 4;
inline constexpr std::array<Task, kTaskCount> kTasks{Task::C, Task::A, Task::T, Task::H};

constexpr std::size_t index_of(Task t) { return static_cast<std::size_t>(t); }
std::string_view task_name(Task t);
Task parse_task(std::string_view name);

/// Raw CATH classification numbers.
struct CathLabel {
  int c = 0;
  int a = 0;
  int t = 0;
  int h = 0;

  /// The label truncated to the hierarchy depth of a task, trailing levels zeroed.
  std::array<int, kTaskCount> key(Task task) const;

  auto operator<=>(const CathLabel&) const = default;
};

using LabelKey = std::array<int, kTaskCount>;

/// Dotted form of a task key, e.g. "3.40.50" for task T.
std::string format_key(const LabelKey& key, Task task);

}  // namespace foldmap
