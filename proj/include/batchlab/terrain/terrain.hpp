#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "batchlab/core/math.hpp"
#include "batchlab/dynamics/dynamics.hpp"
#include "batchlab/sensors/mesh.hpp"

namespace batchlab::terrain {

/// Heights sampled at (i * cell, j * cell) for i < nx along x, j < ny
/// along y, relative to the field's corner.
struct HeightField {
  int nx = 0;
  int ny = 0;
  double cell = 0.1;
  std::vector<double> heights;  // index i * ny + j

  static HeightField flat(double size_x, double size_y, double cell);

  double& at(int i, int j) { return heights[static_cast<std::size_t>(i) * ny + j]; }
  double at(int i, int j) const { return heights[static_cast<std::size_t>(i) * ny + j]; }
  double size_x() const { return (nx - 1) * cell; }
  double size_y() const { return (ny - 1) * cell; }

  /// Throws InvalidArgument on a grid smaller than 2x2, a size mismatch,
  /// non-positive cell size, or non-finite heights.
  void validate() const;

  /// Height of the triangulated surface at local (x, y), clamped to the
  /// field. Matches hf_to_mesh exactly.
  double surface_height(double x, double y) const;
  /// Upward unit normal of the triangle under local (x, y).
  Vec3 surface_normal(double x, double y) const;
};

/// Heights drawn uniformly from the multiples of `quantum` within [-h, h].
HeightField hf_random_uniform(double size_x, double size_y, double cell, double h, double quantum,
                              std::uint64_t seed);

enum class StairDirection { kUp, kDown };

/// Concentric square steps rising (or falling) toward the center; the level
/// of a sample is min(levels, floor(edge distance / step_width)).
HeightField hf_pyramid_stairs(double size_x, double size_y, double cell, double step_height,
                              double step_width, int levels, StairDirection direction);

/// n * m vertices at the field samples (offset by `origin`), two +z-facing
/// triangles per grid cell split along the (i, j)-(i+1, j+1) diagonal.
sensors::TriMesh hf_to_mesh(const HeightField& hf, const Vec3& origin = Vec3::Zero());

// ---------------------------------------------------------------------------
// Composition

enum class SubTerrainKind { kFlat, kRandomUniform, kPyramidStairs, kInvertedPyramidStairs };

SubTerrainKind sub_terrain_kind_from_string(const std::string& name);
std::string to_string(SubTerrainKind kind);

/// One terrain type (grid column). Parameters interpolate linearly between
/// their easy and hard values with the difficulty in [0, 1].
struct SubTerrainSpec {
  std::string name;
  SubTerrainKind kind = SubTerrainKind::kFlat;
  double height_easy = 0.0;   // random: half range; stairs: step height
  double height_hard = 0.0;
  double quantum = 0.005;     // random
  double step_width = 0.3;    // stairs
  int levels = 3;             // stairs
};

/// Maps (row, rows) to a difficulty in [0, 1].
using DifficultyMap = std::function<double(int row, int rows)>;

/// r / (rows - 1), or 0 for a single row.
double linear_difficulty(int row, int rows);

struct TerrainConfig {
  double size_x = 8.0;  // sub-terrain extent, m
  double size_y = 8.0;
  double cell = 0.1;
  double border = 1.0;  // flat margin around the grid, m
  int rows = 1;         // difficulty levels
  std::vector<SubTerrainSpec> types;  // one per column
  std::uint64_t seed = 0;
  DifficultyMap difficulty = linear_difficulty;
};

inline constexpr int kTerrainSurface = 0;

/// Sub-terrains on a rows x cols lattice centered on the world origin,
/// surrounded by a flat border at height 0.
class TerrainGrid {
 public:
  static TerrainGrid compose(const TerrainConfig& config);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double difficulty(int row) const { return difficulty_.at(static_cast<std::size_t>(row)); }
  const HeightField& field(int row, int col) const;
  /// World xy of the lower corner of cell (row, col).
  Vec3 cell_corner(int row, int col) const;
  Eigen::AlignedBox2d cell_bounds(int row, int col) const;
  /// Cell center lifted to the local surface height.
  const Transform& origin(int row, int col) const;

  /// Full composed mesh (cells plus border).
  const sensors::TriMesh& mesh() const { return mesh_; }
  /// Per-cell meshes in world coordinates.
  sensors::TriMesh cell_mesh(int row, int col) const;

  /// Surface height and normal at world (x, y); border and outside read as
  /// flat ground at 0.
  dyn::TerrainSample sample(const Vec3& world_point) const;
  dyn::TerrainQuery query() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  double size_x_ = 0.0;
  double size_y_ = 0.0;
  Vec3 grid_corner_ = Vec3::Zero();
  std::vector<double> difficulty_;
  std::vector<HeightField> fields_;  // row-major
  std::vector<Transform> origins_;
  sensors::TriMesh mesh_;
};

HeightField generate_sub_terrain(const SubTerrainSpec& spec, double size_x, double size_y,
                                 double cell, double difficulty, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Curriculum

struct CurriculumState {
  std::vector<int> levels;   // per env, row index
  std::vector<int> columns;  // per env, terrain type
  int rows = 1;
  int cols = 1;

  /// Levels uniform in [0, max_initial_level]; column env % cols.
  static CurriculumState initial(int env_count, int rows, int cols, int max_initial_level,
                                 std::mt19937_64& rng);
  void validate() const;
};

/// Applies promote/demote to `env_ids` only. Promotion at the top row keeps
/// the level and draws a new column. Throws unless promote > demote.
void curriculum_update(CurriculumState& state, std::span<const int> env_ids,
                       std::span<const double> scores, double promote, double demote,
                       std::mt19937_64& rng);

}  // namespace batchlab::terrain
