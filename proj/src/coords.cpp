#include "livecast/coords.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "livecast/rng.hpp"

namespace livecast {

double distance(DelayCoord a, DelayCoord b) { return std::hypot(a.x - b.x, a.y - b.y); }

void EmbeddingParams::validate() const {
  if (!(step_gain > 0.0 && step_gain <= 1.0)) throw std::invalid_argument("step_gain must be in (0,1]");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (neighbor_sample_size < 1) throw std::invalid_argument("neighbor_sample_size must be >= 1");
}

namespace {

// Coincident points give no direction to move in; pick one from the inputs so
// the same call always lands on the same answer.
std::pair<double, double> degenerate_direction(DelayCoord self, DelayCoord remote, double measured) {
  std::uint64_t h = mix64(std::bit_cast<std::uint64_t>(self.x));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(self.y));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(remote.x));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(remote.y));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(measured));
  const double angle = static_cast<double>(h >> 11) * 0x1.0p-53 * 6.283185307179586;
  return {std::cos(angle), std::sin(angle)};
}

}  // namespace

DelayCoord update_coordinate(DelayCoord self, DelayCoord remote, double measured_rtt_half,
                             const EmbeddingParams& params) {
  if (!(measured_rtt_half >= 0.0)) throw std::invalid_argument("measured delay must be >= 0");
  const double predicted = distance(self, remote);
  const double error = measured_rtt_half - predicted;
  if (error == 0.0) return self;
  double ux;
  double uy;
  if (predicted > 0.0) {
    // Unit vector pointing from remote to self: positive error pushes away.
    ux = (self.x - remote.x) / predicted;
    uy = (self.y - remote.y) / predicted;
  } else {
    std::tie(ux, uy) = degenerate_direction(self, remote, measured_rtt_half);
  }
  const double step = params.step_gain * error;
  return {self.x + step * ux, self.y + step * uy};
}

double embedding_error(const std::map<PeerId, DelayCoord>& coords, const std::map<PeerPair, double>& true_delays) {
  std::vector<double> rel;
  rel.reserve(true_delays.size());
  for (const auto& [pair, truth] : true_delays) {
    if (truth == 0.0) continue;
    const auto a = coords.find(pair.first);
    const auto b = coords.find(pair.second);
    if (a == coords.end() || b == coords.end()) throw std::invalid_argument("embedding_error: pair without coordinate");
    rel.push_back(std::abs(distance(a->second, b->second) - truth) / truth);
  }
  if (rel.empty()) throw std::invalid_argument("embedding_error: no usable pairs");
  const std::size_t mid = rel.size() / 2;
  std::nth_element(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(mid), rel.end());
  if (rel.size() % 2 == 1) return rel[mid];
  const double upper = rel[mid];
  const double lower = *std::max_element(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<DelayCoord> embed_population(std::size_t count, const std::function<double(std::size_t, std::size_t)>& true_delay,
                                         const EmbeddingParams& params, std::uint64_t seed,
                                         const std::function<void(int, std::span<const DelayCoord>)>& on_round) {
  params.validate();
  Rng rng(seed);
  std::vector<DelayCoord> coords(count);
  // Small random start so the first round has directions to work with.
  for (auto& c : coords) c = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  if (count < 2) return coords;

  const std::size_t sample = std::min<std::size_t>(static_cast<std::size_t>(params.neighbor_sample_size), count - 1);
  std::vector<std::vector<std::size_t>> landmarks(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::size_t> others;
    others.reserve(count - 1);
    for (std::size_t j = 0; j < count; ++j) {
      if (j != i) others.push_back(j);
    }
    rng.shuffle(others.begin(), others.end());
    others.resize(sample);
    landmarks[i] = std::move(others);
  }

  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < count; ++i) {
      for (const std::size_t j : landmarks[i]) {
        coords[i] = update_coordinate(coords[i], coords[j], true_delay(i, j), params);
      }
    }
    if (on_round) on_round(round, coords);
  }
  return coords;
}

}  // namespace livecast
