#include "livecast/sfc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace livecast {
namespace {

struct CurveTables {
  std::vector<Cell> key_to_cell;        // size 4^order
  std::vector<std::uint32_t> cell_key;  // row-major, index y * side + x
};

// Symmetries of an h x h square applied to the sub-triangles.
Cell transform(int sym, Cell c, std::uint32_t h) {
  switch (sym) {
    case 0: return c;
    case 2: return {h - 1 - c.x, c.y};
    case 3: return {c.x, h - 1 - c.y};
    default: throw std::logic_error("unused symmetry");
  }
}

struct Piece {
  std::uint32_t qx;
  std::uint32_t qy;
  int sym;
  bool reversed;
};

// The four sub-triangles of a triangle, in traversal order.
constexpr std::array<Piece, 4> kPieces{{
    {0, 0, 0, false},
    {1, 0, 2, true},
    {1, 0, 3, true},
    {1, 1, 0, false},
}};

std::unique_ptr<CurveTables> build_tables(int order) {
  // Triangle path of the 2x2 base case.
  std::vector<Cell> tri{{0, 0}, {1, 0}};
  for (int k = 2; k <= order; ++k) {
    const std::uint32_t h = 1u << (k - 1);
    std::vector<Cell> next;
    next.reserve(tri.size() * 4);
    for (const Piece& p : kPieces) {
      const std::size_t start = next.size();
      for (const Cell c : tri) {
        const Cell t = transform(p.sym, c, h);
        next.push_back({t.x + p.qx * h, t.y + p.qy * h});
      }
      if (p.reversed) std::reverse(next.begin() + static_cast<std::ptrdiff_t>(start), next.end());
    }
    tri = std::move(next);
  }
  const std::uint32_t side = 1u << order;
  auto tables = std::make_unique<CurveTables>();
  tables->key_to_cell.reserve(static_cast<std::size_t>(side) * side);
  tables->key_to_cell = tri;
  for (const Cell c : tri) tables->key_to_cell.push_back({side - 1 - c.x, side - 1 - c.y});
  tables->cell_key.assign(static_cast<std::size_t>(side) * side, 0);
  for (std::uint32_t key = 0; key < tables->key_to_cell.size(); ++key) {
    const Cell c = tables->key_to_cell[key];
    tables->cell_key[static_cast<std::size_t>(c.y) * side + c.x] = key;
  }
  return tables;
}

const CurveTables& tables_for(int order) {
  static std::mutex mutex;
  static std::array<std::unique_ptr<CurveTables>, CurveSpec::kMaxOrder + 1> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[static_cast<std::size_t>(order)];
  if (!slot) {
    if (order == 0) {
      slot = std::make_unique<CurveTables>(CurveTables{{{0, 0}}, {0}});
    } else {
      slot = build_tables(order);
    }
  }
  return *slot;
}

}  // namespace

CurveSpec::CurveSpec(int order, Bounds bounds) : order_(order), bounds_(bounds) {
  if (order < 1 || order > kMaxOrder) throw std::invalid_argument("curve order must be in [1, 10]");
  if (!(bounds.max_x > bounds.min_x) || !(bounds.max_y > bounds.min_y)) {
    throw std::invalid_argument("curve bounds need positive extent on both axes");
  }
}

double CurveSpec::cell_width() const { return (bounds_.max_x - bounds_.min_x) / side(); }
double CurveSpec::cell_height() const { return (bounds_.max_y - bounds_.min_y) / side(); }

Cell cell_of(DelayCoord c, const CurveSpec& spec) {
  const auto axis = [&](double v, double lo, double width) {
    const double idx = std::floor((v - lo) / width);
    if (!(idx >= 0.0)) return 0u;  // also catches NaN
    return static_cast<std::uint32_t>(std::min(idx, static_cast<double>(spec.side() - 1)));
  };
  return {axis(c.x, spec.bounds().min_x, spec.cell_width()), axis(c.y, spec.bounds().min_y, spec.cell_height())};
}

Cell key_to_cell(CurveKey k, const CurveSpec& spec) {
  if (k.value >= spec.key_count()) throw std::out_of_range("curve key out of range");
  return tables_for(spec.order()).key_to_cell[k.value];
}

CurveKey cell_to_key(Cell cell, const CurveSpec& spec) {
  if (cell.x >= spec.side() || cell.y >= spec.side()) throw std::out_of_range("cell out of range");
  return {tables_for(spec.order()).cell_key[static_cast<std::size_t>(cell.y) * spec.side() + cell.x]};
}

CurveKey coord_to_key(DelayCoord c, const CurveSpec& spec) { return cell_to_key(cell_of(c, spec), spec); }

DelayCoord key_to_coord(CurveKey k, const CurveSpec& spec) {
  const Cell cell = key_to_cell(k, spec);
  return {spec.bounds().min_x + (cell.x + 0.5) * spec.cell_width(),
          spec.bounds().min_y + (cell.y + 0.5) * spec.cell_height()};
}

std::uint32_t ring_distance(CurveKey a, CurveKey b, const CurveSpec& spec) {
  const std::uint32_t d = a.value > b.value ? a.value - b.value : b.value - a.value;
  return std::min(d, spec.key_count() - d);
}

std::uint32_t clockwise_distance(CurveKey a, CurveKey b, const CurveSpec& spec) {
  return b.value >= a.value ? b.value - a.value : spec.key_count() - (a.value - b.value);
}

std::string to_string(CurveKey k) { return std::to_string(k.value); }

}  // namespace livecast
