#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ltbr/error.hpp"
#include "ltbr/tensor.hpp"

namespace ltbr {

// Tiles square grayscale images row-major into one binary PGM (P5). Values
// are clamped to [0, 1] and scaled to 0..255.
inline void write_pgm_grid(const std::string& path, const Tensor& rows, std::size_t side,
                           std::size_t cols) {
  if (rows.rank() != 2) fail(Err::ShapeMismatch, "pgm grid needs [n x pixels] rows");
  if (side == 0 || rows.shape()[1] != side * side)
    fail(Err::ShapeMismatch, "pgm grid rows must hold side*side pixels");
  if (cols == 0) fail(Err::InvalidArgument, "pgm grid needs at least one column");
  std::size_t n = rows.shape()[0];
  if (n == 0) fail(Err::EmptyDataset, "pgm grid of no images");
  std::size_t grid_rows = (n + cols - 1) / cols;
  std::size_t w = cols * side, h = grid_rows * side;
  std::vector<unsigned char> px(w * h, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t gr = i / cols, gc = i % cols;
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        double v = rows.at(i, y * side + x);
        v = std::min(1.0, std::max(0.0, v));
        px[(gr * side + y) * w + gc * side + x] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(Err::IoError, "cannot open '" + path + "' for writing");
  std::fprintf(f, "P5\n%zu %zu\n255\n", w, h);
  std::size_t wrote = std::fwrite(px.data(), 1, px.size(), f);
  if (std::fclose(f) != 0 || wrote != px.size())
    fail(Err::IoError, "failed to finish writing '" + path + "'");
}

}  // namespace ltbr
