#pragma once

// Locality-preserving mapping of the 2-D delay space onto a ring of curve
// keys, using the H-curve: a closed curve, so key K-1 is edge-adjacent to key
// 0 and ring distance (with wraparound) stays meaningful everywhere.
//
// The square grid of 2^order x 2^order cells is split along its anti-diagonal
// into two triangles. Each triangle is traversed by four half-size triangles
// (one in the lower-left quadrant, two sharing the lower-right quadrant, one
// in the upper-right quadrant); the second triangle of the square is the
// first rotated by 180 degrees. Key 0 sits in the cell at the minimum corner.

#include <cstdint>
#include <string>

#include "livecast/coords.hpp"

namespace livecast {

struct CurveKey {
  std::uint32_t value = 0;
  friend auto operator<=>(const CurveKey&, const CurveKey&) = default;
};

struct Bounds {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 256.0;
  double max_y = 256.0;
};

class CurveSpec {
 public:
  static constexpr int kMaxOrder = 10;

  CurveSpec(int order, Bounds bounds);

  int order() const { return order_; }
  const Bounds& bounds() const { return bounds_; }
  std::uint32_t side() const { return 1u << order_; }
  /// Number of keys on the ring, 4^order.
  std::uint32_t key_count() const { return 1u << (2 * order_); }
  double cell_width() const;
  double cell_height() const;

 private:
  int order_;
  Bounds bounds_;
};

struct Cell {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Grid cell holding `c`; coordinates outside the bounds clamp to the edge.
Cell cell_of(DelayCoord c, const CurveSpec& spec);
Cell key_to_cell(CurveKey k, const CurveSpec& spec);
CurveKey cell_to_key(Cell cell, const CurveSpec& spec);

CurveKey coord_to_key(DelayCoord c, const CurveSpec& spec);
/// Center of cell k. Throws std::out_of_range for k >= key_count().
DelayCoord key_to_coord(CurveKey k, const CurveSpec& spec);

/// min(|a-b|, K-|a-b|).
std::uint32_t ring_distance(CurveKey a, CurveKey b, const CurveSpec& spec);
/// Steps from a to b walking in increasing key order (mod K).
std::uint32_t clockwise_distance(CurveKey a, CurveKey b, const CurveSpec& spec);

std::string to_string(CurveKey k);

}  // namespace livecast
