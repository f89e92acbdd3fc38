#include "batchlab/terrain/terrain.hpp"

#include <algorithm>
#include <cmath>

#include "batchlab/core/error.hpp"

namespace batchlab::terrain {

namespace {

int samples(double size, double cell) {
  if (!(cell > 0.0)) throw InvalidArgument("cell size must be positive");
  if (!(size > 0.0)) throw InvalidArgument("terrain size must be positive");
  return static_cast<int>(std::lround(size / cell)) + 1;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Locates the grid cell containing local (x, y) and the fractional offsets.
struct CellCoord {
  int i, j;
  double fx, fy;
};

CellCoord locate(const HeightField& hf, double x, double y) {
  const double gx = std::clamp(x / hf.cell, 0.0, static_cast<double>(hf.nx - 1));
  const double gy = std::clamp(y / hf.cell, 0.0, static_cast<double>(hf.ny - 1));
  const int i = std::min(static_cast<int>(std::floor(gx)), hf.nx - 2);
  const int j = std::min(static_cast<int>(std::floor(gy)), hf.ny - 2);
  return {i, j, gx - i, gy - j};
}

void append(sensors::TriMesh& dst, const sensors::TriMesh& src) {
  const int base = static_cast<int>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
  for (const auto& f : src.triangles) dst.triangles.push_back({f[0] + base, f[1] + base, f[2] + base});
}

void append_quad(sensors::TriMesh& dst, double x0, double y0, double x1, double y1) {
  if (!(x1 > x0) || !(y1 > y0)) return;
  const int b = static_cast<int>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(),
                      {Vec3(x0, y0, 0), Vec3(x1, y0, 0), Vec3(x1, y1, 0), Vec3(x0, y1, 0)});
  dst.triangles.push_back({b, b + 1, b + 2});
  dst.triangles.push_back({b, b + 2, b + 3});
}

}  // namespace

HeightField HeightField::flat(double size_x, double size_y, double cell) {
  HeightField hf;
  hf.nx = samples(size_x, cell);
  hf.ny = samples(size_y, cell);
  hf.cell = cell;
  hf.heights.assign(static_cast<std::size_t>(hf.nx) * hf.ny, 0.0);
  return hf;
}

void HeightField::validate() const {
  if (nx < 2 || ny < 2) throw InvalidArgument("height field must be at least 2x2");
  if (!(cell > 0.0)) throw InvalidArgument("cell size must be positive");
  if (heights.size() != static_cast<std::size_t>(nx) * ny) {
    throw InvalidArgument("height field storage does not match its dimensions");
  }
  for (const double h : heights) {
    if (!std::isfinite(h)) throw InvalidArgument("height field contains non-finite values");
  }
}

double HeightField::surface_height(double x, double y) const {
  const CellCoord c = locate(*this, x, y);
  const double a = at(c.i, c.j), b = at(c.i + 1, c.j);
  const double d = at(c.i, c.j + 1), e = at(c.i + 1, c.j + 1);
  if (c.fx >= c.fy) return a + c.fx * (b - a) + c.fy * (e - b);
  return a + c.fy * (d - a) + c.fx * (e - d);
}

Vec3 HeightField::surface_normal(double x, double y) const {
  const CellCoord c = locate(*this, x, y);
  const double a = at(c.i, c.j), b = at(c.i + 1, c.j);
  const double d = at(c.i, c.j + 1), e = at(c.i + 1, c.j + 1);
  // Gradient of the planar patch under the point.
  const double gx = (c.fx >= c.fy ? b - a : e - d) / cell;
  const double gy = (c.fx >= c.fy ? e - b : d - a) / cell;
  return Vec3(-gx, -gy, 1.0).normalized();
}

HeightField hf_random_uniform(double size_x, double size_y, double cell, double h, double quantum,
                              std::uint64_t seed) {
  if (!(h >= 0.0)) throw InvalidArgument("height range must be >= 0");
  if (!(quantum > 0.0)) throw InvalidArgument("height quantum must be positive");
  HeightField hf = HeightField::flat(size_x, size_y, cell);
  const int steps = static_cast<int>(std::floor(h / quantum + 1e-9));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(-steps, steps);
  for (double& v : hf.heights) v = pick(rng) * quantum;
  return hf;
}

HeightField hf_pyramid_stairs(double size_x, double size_y, double cell, double step_height,
                              double step_width, int levels, StairDirection direction) {
  if (!(step_height > 0.0) || !(step_width > 0.0)) {
    throw InvalidArgument("stair step height and width must be positive");
  }
  if (levels < 0) throw InvalidArgument("stair levels must be >= 0");
  if (2.0 * levels * step_width > std::min(size_x, size_y) + 1e-9) {
    throw InvalidArgument("stairs do not fit: 2 * levels * step width exceeds the field size");
  }
  HeightField hf = HeightField::flat(size_x, size_y, cell);
  const double sign = direction == StairDirection::kUp ? 1.0 : -1.0;
  const double sx = hf.size_x(), sy = hf.size_y();
  for (int i = 0; i < hf.nx; ++i) {
    for (int j = 0; j < hf.ny; ++j) {
      const double x = i * cell, y = j * cell;
      const double edge = std::min({x, sx - x, y, sy - y});
      const int level = std::min(levels, static_cast<int>(std::floor(edge / step_width + 1e-9)));
      hf.at(i, j) = sign * level * step_height;
    }
  }
  return hf;
}

sensors::TriMesh hf_to_mesh(const HeightField& hf, const Vec3& origin) {
  hf.validate();
  sensors::TriMesh mesh;
  mesh.vertices.reserve(hf.heights.size());
  for (int i = 0; i < hf.nx; ++i) {
    for (int j = 0; j < hf.ny; ++j) {
      mesh.vertices.emplace_back(origin.x() + i * hf.cell, origin.y() + j * hf.cell,
                                 origin.z() + hf.at(i, j));
    }
  }
  mesh.triangles.reserve(2 * static_cast<std::size_t>(hf.nx - 1) * (hf.ny - 1));
  auto idx = [&](int i, int j) { return i * hf.ny + j; };
  for (int i = 0; i + 1 < hf.nx; ++i) {
    for (int j = 0; j + 1 < hf.ny; ++j) {
      const int a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
      mesh.triangles.push_back({a, b, c});
      mesh.triangles.push_back({a, c, d});
    }
  }
  return mesh;
}

SubTerrainKind sub_terrain_kind_from_string(const std::string& name) {
  if (name == "flat") return SubTerrainKind::kFlat;
  if (name == "random_uniform") return SubTerrainKind::kRandomUniform;
  if (name == "pyramid_stairs") return SubTerrainKind::kPyramidStairs;
  if (name == "inverted_pyramid_stairs") return SubTerrainKind::kInvertedPyramidStairs;
  throw InvalidArgument("unknown sub-terrain kind '" + name + "'");
}

std::string to_string(SubTerrainKind kind) {
  switch (kind) {
    case SubTerrainKind::kFlat: return "flat";
    case SubTerrainKind::kRandomUniform: return "random_uniform";
    case SubTerrainKind::kPyramidStairs: return "pyramid_stairs";
    case SubTerrainKind::kInvertedPyramidStairs: return "inverted_pyramid_stairs";
  }
  return "unknown";
}

double linear_difficulty(int row, int rows) {
  return rows > 1 ? static_cast<double>(row) / (rows - 1) : 0.0;
}

HeightField generate_sub_terrain(const SubTerrainSpec& spec, double size_x, double size_y,
                                 double cell, double difficulty, std::uint64_t seed) {
  const double height = spec.height_easy + difficulty * (spec.height_hard - spec.height_easy);
  switch (spec.kind) {
    case SubTerrainKind::kFlat:
      return HeightField::flat(size_x, size_y, cell);
    case SubTerrainKind::kRandomUniform:
      return hf_random_uniform(size_x, size_y, cell, height, spec.quantum, seed);
    case SubTerrainKind::kPyramidStairs:
    case SubTerrainKind::kInvertedPyramidStairs:
      if (!(height > 0.0)) return HeightField::flat(size_x, size_y, cell);
      return hf_pyramid_stairs(size_x, size_y, cell, height, spec.step_width, spec.levels,
                               spec.kind == SubTerrainKind::kPyramidStairs ? StairDirection::kUp
                                                                          : StairDirection::kDown);
  }
  throw InvalidArgument("unknown sub-terrain kind");
}

TerrainGrid TerrainGrid::compose(const TerrainConfig& config) {
  if (config.types.empty()) throw InvalidArgument("terrain needs at least one sub-terrain type");
  if (config.rows < 1) throw InvalidArgument("terrain needs at least one row");
  if (config.border < 0.0) throw InvalidArgument("terrain border must be >= 0");
  TerrainGrid g;
  g.rows_ = config.rows;
  g.cols_ = static_cast<int>(config.types.size());
  g.size_x_ = config.size_x;
  g.size_y_ = config.size_y;
  g.grid_corner_ = Vec3(-0.5 * g.rows_ * g.size_x_, -0.5 * g.cols_ * g.size_y_, 0.0);

  for (int r = 0; r < g.rows_; ++r) {
    const double diff = config.difficulty(r, g.rows_);
    if (!(diff >= 0.0 && diff <= 1.0)) throw InvalidArgument("difficulty must lie in [0, 1]");
    g.difficulty_.push_back(diff);
    for (int c = 0; c < g.cols_; ++c) {
      const std::uint64_t seed = splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(r * g.cols_ + c)));
      g.fields_.push_back(generate_sub_terrain(config.types[static_cast<std::size_t>(c)], config.size_x,
                                               config.size_y, config.cell, diff, seed));
      const HeightField& hf = g.fields_.back();
      const double cx = 0.5 * hf.size_x(), cy = 0.5 * hf.size_y();
      const Vec3 corner = g.cell_corner(r, c);
      g.origins_.push_back(Transform::from_translation(
          Vec3(corner.x() + cx, corner.y() + cy, hf.surface_height(cx, cy))));
      append(g.mesh_, hf_to_mesh(hf, corner));
    }
  }

  const double b = config.border;
  const double x0 = g.grid_corner_.x(), y0 = g.grid_corner_.y();
  const double x1 = -x0, y1 = -y0;
  append_quad(g.mesh_, x0 - b, y0 - b, x1 + b, y0);
  append_quad(g.mesh_, x0 - b, y1, x1 + b, y1 + b);
  append_quad(g.mesh_, x0 - b, y0, x0, y1);
  append_quad(g.mesh_, x1, y0, x1 + b, y1);
  return g;
}

const HeightField& TerrainGrid::field(int row, int col) const {
  if (row < 0 || row >= rows_ || col < 0 || col >= cols_) throw InvalidArgument("terrain cell out of range");
  return fields_[static_cast<std::size_t>(row * cols_ + col)];
}

Vec3 TerrainGrid::cell_corner(int row, int col) const {
  return grid_corner_ + Vec3(row * size_x_, col * size_y_, 0.0);
}

Eigen::AlignedBox2d TerrainGrid::cell_bounds(int row, int col) const {
  const HeightField& hf = field(row, col);
  const Vec3 c = cell_corner(row, col);
  return {Eigen::Vector2d(c.x(), c.y()), Eigen::Vector2d(c.x() + hf.size_x(), c.y() + hf.size_y())};
}

const Transform& TerrainGrid::origin(int row, int col) const {
  field(row, col);
  return origins_[static_cast<std::size_t>(row * cols_ + col)];
}

sensors::TriMesh TerrainGrid::cell_mesh(int row, int col) const {
  return hf_to_mesh(field(row, col), cell_corner(row, col));
}

dyn::TerrainSample TerrainGrid::sample(const Vec3& p) const {
  const double lx = p.x() - grid_corner_.x();
  const double ly = p.y() - grid_corner_.y();
  const int r = static_cast<int>(std::floor(lx / size_x_));
  const int c = static_cast<int>(std::floor(ly / size_y_));
  if (r < 0 || r >= rows_ || c < 0 || c >= cols_) return {0.0, Vec3::UnitZ(), kTerrainSurface};
  const HeightField& hf = fields_[static_cast<std::size_t>(r * cols_ + c)];
  const double x = lx - r * size_x_, y = ly - c * size_y_;
  return {hf.surface_height(x, y), hf.surface_normal(x, y), kTerrainSurface};
}

dyn::TerrainQuery TerrainGrid::query() const {
  return [this](const Vec3& p) { return sample(p); };
}

CurriculumState CurriculumState::initial(int env_count, int rows, int cols, int max_initial_level,
                                         std::mt19937_64& rng) {
  if (env_count < 0 || rows < 1 || cols < 1) throw InvalidArgument("invalid curriculum dimensions");
  CurriculumState s;
  s.rows = rows;
  s.cols = cols;
  std::uniform_int_distribution<int> level(0, std::clamp(max_initial_level, 0, rows - 1));
  for (int e = 0; e < env_count; ++e) {
    s.levels.push_back(level(rng));
    s.columns.push_back(e % cols);
  }
  return s;
}

void CurriculumState::validate() const {
  if (levels.size() != columns.size()) throw InvalidArgument("curriculum arrays differ in length");
  for (std::size_t e = 0; e < levels.size(); ++e) {
    if (levels[e] < 0 || levels[e] >= rows || columns[e] < 0 || columns[e] >= cols) {
      throw InvalidArgument("curriculum entry out of range for env " + std::to_string(e));
    }
  }
}

void curriculum_update(CurriculumState& state, std::span<const int> env_ids,
                       std::span<const double> scores, double promote, double demote,
                       std::mt19937_64& rng) {
  if (!(promote > demote)) throw InvalidArgument("promote threshold must exceed demote threshold");
  if (env_ids.size() != scores.size()) throw InvalidArgument("one score per reset env required");
  std::uniform_int_distribution<int> column(0, state.cols - 1);
  for (std::size_t k = 0; k < env_ids.size(); ++k) {
    auto& level = state.levels.at(static_cast<std::size_t>(env_ids[k]));
    if (scores[k] >= promote) {
      if (level + 1 < state.rows) {
        ++level;
      } else {
        state.columns[static_cast<std::size_t>(env_ids[k])] = column(rng);
      }
    } else if (scores[k] <= demote) {
      level = std::max(0, level - 1);
    }
  }
}

}  // namespace batchlab::terrain
