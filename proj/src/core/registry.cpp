#include "batchlab/core/registry.hpp"

#include <algorithm>
#include <iostream>
#include <unordered_set>

#include "batchlab/core/error.hpp"

namespace batchlab {

namespace {

std::vector<std::string_view> split_segments(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t slash = path.find('/', start);
    const std::size_t end = slash == std::string_view::npos ? path.size() : slash;
    out.push_back(path.substr(start, end - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return out;
}

}  // namespace

bool path_matches(std::string_view pattern, std::string_view path) {
  const auto pat = split_segments(pattern);
  const auto segs = split_segments(path);
  if (pat.size() != segs.size()) return false;
  for (std::size_t i = 0; i < pat.size(); ++i) {
    if (pat[i] == "*") {
      if (segs[i].empty()) return false;
      continue;
    }
    if (pat[i] != segs[i]) return false;
  }
  return true;
}

std::string env_path(int env_index) {
  return "/World/envs/env_" + std::to_string(env_index);
}

std::vector<int> EntityView::env_indices() const {
  std::vector<int> out;
  out.reserve(entities.size());
  for (const auto& e : entities) out.push_back(e.env_index);
  return out;
}

EntityRegistry::EntityRegistry(int env_count) : env_count_(env_count) {
  if (env_count <= 0) throw InvalidArgument("env_count must be positive");
}

void EntityRegistry::add(std::string path, EntityKind kind, int env_index) {
  if (env_index < 0 || env_index >= env_count_) {
    throw InvalidArgument("env index " + std::to_string(env_index) + " out of range for '" +
                          path + "'");
  }
  if (!paths_.insert(path).second) {
    throw InvalidArgument("duplicate entity path '" + path + "'");
  }
  entries_.push_back({std::move(path), kind, env_index});
}

void EntityRegistry::add_cloned(std::string_view relative, EntityKind kind) {
  for (int i = 0; i < env_count_; ++i) {
    add(env_path(i) + "/" + std::string(relative), kind, i);
  }
}

EntityView EntityRegistry::create_view(std::string_view pattern, EmptyViewPolicy policy) const {
  EntityView view;
  view.pattern = std::string(pattern);
  for (const auto& e : entries_) {
    if (path_matches(pattern, e.path)) view.entities.push_back(e);
  }
  // Stable: entities in the same env keep registration order.
  std::stable_sort(view.entities.begin(), view.entities.end(),
                   [](const EntityEntry& a, const EntityEntry& b) {
                     return a.env_index < b.env_index;
                   });
  if (view.entities.empty()) {
    if (policy == EmptyViewPolicy::kError) throw EmptyViewError(view.pattern);
    std::cerr << "warning: no entities match pattern '" << view.pattern << "'\n";
  }
  return view;
}

}  // namespace batchlab
