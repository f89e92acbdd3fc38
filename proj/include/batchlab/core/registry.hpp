#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace batchlab {

enum class EntityKind { kArticulation, kRigidObject, kSensor, kMesh };

struct EntityEntry {
  std::string path;
  EntityKind kind = EntityKind::kArticulation;
  int env_index = 0;
};

/// Batched handle over every entity matching one path pattern, sorted by
/// environment index.
struct EntityView {
  std::string pattern;
  std::vector<EntityEntry> entities;

  std::size_t batch_size() const { return entities.size(); }
  std::vector<int> env_indices() const;
};

enum class EmptyViewPolicy { kError, kWarn };

/// Flat registry of cloned scene entities keyed by slash-separated paths.
class EntityRegistry {
 public:
  explicit EntityRegistry(int env_count);

  /// Registers an entity. Throws InvalidArgument on a duplicate path or an
  /// env index outside [0, env_count).
  void add(std::string path, EntityKind kind, int env_index);

  /// Registers `/World/envs/env_<i>/<relative>` for every environment.
  void add_cloned(std::string_view relative, EntityKind kind);

  int env_count() const { return env_count_; }
  const std::vector<EntityEntry>& entries() const { return entries_; }

  /// Resolves a glob where `*` matches exactly one path segment. With the
  /// default policy an empty match throws EmptyViewError.
  EntityView create_view(std::string_view pattern,
                         EmptyViewPolicy policy = EmptyViewPolicy::kError) const;

 private:
  int env_count_;
  std::vector<EntityEntry> entries_;
  std::unordered_set<std::string> paths_;
};

/// Segment-wise glob match; exposed for tests.
bool path_matches(std::string_view pattern, std::string_view path);

std::string env_path(int env_index);

}  // namespace batchlab
