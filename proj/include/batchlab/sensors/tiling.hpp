#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "batchlab/core/error.hpp"
#include "batchlab/sensors/raycast.hpp"

namespace batchlab::sensors {

/// Deterministic atlas layout: env e occupies tile column e % tiles_per_row
/// and tile row e / tiles_per_row.
struct TiledLayout {
  int tile_width = 0;
  int tile_height = 0;
  int tiles_per_row = 1;
  int env_count = 0;

  /// Near-square layout (tiles_per_row = ceil(sqrt(env_count))).
  static TiledLayout square(int tile_width, int tile_height, int env_count) {
    const int per_row = std::max(1, static_cast<int>(std::ceil(std::sqrt(env_count))));
    return {tile_width, tile_height, per_row, env_count};
  }

  int atlas_width() const { return tiles_per_row * tile_width; }
  int atlas_height() const { return (env_count + tiles_per_row - 1) / tiles_per_row * tile_height; }
  int tile_column(int env) const { return env % tiles_per_row; }
  int tile_row(int env) const { return env / tiles_per_row; }

  void validate() const {
    if (tile_width < 1 || tile_height < 1 || tiles_per_row < 1 || env_count < 1) {
      throw InvalidArgument("tiled layout needs positive tile size, tiles per row and env count");
    }
  }
};

/// Unused atlas cells are value-initialized.
template <typename T>
Image<T> tile_pack(std::span<const Image<T>> images, const TiledLayout& layout) {
  layout.validate();
  if (static_cast<int>(images.size()) != layout.env_count) {
    throw InvalidArgument("one image per environment required");
  }
  Image<T> atlas;
  atlas.width = layout.atlas_width();
  atlas.height = layout.atlas_height();
  atlas.data.assign(static_cast<std::size_t>(atlas.width) * atlas.height, T{});
  for (int e = 0; e < layout.env_count; ++e) {
    const Image<T>& img = images[static_cast<std::size_t>(e)];
    if (img.width != layout.tile_width || img.height != layout.tile_height ||
        img.data.size() != static_cast<std::size_t>(img.width) * img.height) {
      throw InvalidArgument("image " + std::to_string(e) + " does not match the tile shape");
    }
    const int u0 = layout.tile_column(e) * layout.tile_width;
    const int v0 = layout.tile_row(e) * layout.tile_height;
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) atlas.at(u0 + u, v0 + v) = img.at(u, v);
    }
  }
  return atlas;
}

template <typename T>
std::vector<Image<T>> tile_unpack(const Image<T>& atlas, const TiledLayout& layout) {
  layout.validate();
  if (atlas.width != layout.atlas_width() || atlas.height != layout.atlas_height()) {
    throw InvalidArgument("atlas shape does not match the layout");
  }
  std::vector<Image<T>> images(static_cast<std::size_t>(layout.env_count));
  for (int e = 0; e < layout.env_count; ++e) {
    Image<T>& img = images[static_cast<std::size_t>(e)];
    img.width = layout.tile_width;
    img.height = layout.tile_height;
    img.data.resize(static_cast<std::size_t>(img.width) * img.height);
    const int u0 = layout.tile_column(e) * layout.tile_width;
    const int v0 = layout.tile_row(e) * layout.tile_height;
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) img.at(u, v) = atlas.at(u0 + u, v0 + v);
    }
  }
  return images;
}

}  // namespace batchlab::sensors
