#pragma once

// Synthetic 2-D delay space. Coordinates are one-way delay in milliseconds,
// so the Euclidean distance between two peers predicts their one-way delay.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "livecast/types.hpp"

namespace livecast {

struct DelayCoord {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const DelayCoord&, const DelayCoord&) = default;
};

/// Predicted one-way delay (ms).
double distance(DelayCoord a, DelayCoord b);

struct EmbeddingParams {
  double step_gain = 0.25;
  int rounds = 200;
  int neighbor_sample_size = 16;

  void validate() const;  // throws std::invalid_argument
};

/// One spring-relaxation step of `self` against `remote`: moves along the line
/// through both points by step_gain * (measured - predicted).
DelayCoord update_coordinate(DelayCoord self, DelayCoord remote, double measured_rtt_half,
                             const EmbeddingParams& params);

using PeerPair = std::pair<PeerId, PeerId>;

/// Median over pairs of |predicted - true| / true, skipping pairs whose true
/// delay is zero. Throws std::invalid_argument when no pair is usable.
double embedding_error(const std::map<PeerId, DelayCoord>& coords, const std::map<PeerPair, double>& true_delays);

/// Runs the relaxation for a population whose true one-way delays are given
/// by `true_delay(i, j)`. Each round every peer measures against
/// neighbor_sample_size peers from a fixed per-peer sample drawn at start.
/// `on_round`, when set, sees the coordinates after every round.
std::vector<DelayCoord> embed_population(std::size_t count, const std::function<double(std::size_t, std::size_t)>& true_delay,
                                         const EmbeddingParams& params, std::uint64_t seed,
                                         const std::function<void(int, std::span<const DelayCoord>)>& on_round = {});

}  // namespace livecast
