#pragma once

// Particle swarm optimization over a box-bounded hyperparameter space.
// Particles carry continuous coordinates; integer dimensions are rounded only
// when a position is decoded into a DistillConfig.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "distillkit/error.hpp"
#include "distillkit/losses.hpp"
#include "distillkit/parallel.hpp"
#include "distillkit/predictions.hpp"
#include "distillkit/random.hpp"

namespace distillkit {

enum class DimensionKind { continuous, integer };

inline const char* to_string(DimensionKind k) { return k == DimensionKind::continuous ? "continuous" : "integer"; }

struct Dimension {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  DimensionKind kind = DimensionKind::continuous;

  friend bool operator==(const Dimension&, const Dimension&) = default;
};

struct HyperSpace {
  std::vector<Dimension> dims;

  std::size_t size() const noexcept { return dims.size(); }

  void validate() const {
    if (dims.empty()) throw UsageError("hyperparameter space has no dimensions");
    for (const auto& d : dims) {
      if (!std::isfinite(d.lower) || !std::isfinite(d.upper) || !(d.lower < d.upper))
        throw UsageError("dimension \"" + d.name + "\" needs finite bounds with lower < upper");
    }
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < dims.size(); ++i)
      if (dims[i].name == name) return i;
    return std::nullopt;
  }

  // The six distillation hyperparameters and their search ranges.
  static HyperSpace distillation_default() {
    return {{
        {"temperature", 2.0, 4.0, DimensionKind::continuous},
        {"alpha", 0.1, 0.9, DimensionKind::continuous},
        {"learning_rate", 1e-4, 1e-3, DimensionKind::continuous},
        {"batch_size", 8.0, 64.0, DimensionKind::integer},
        {"epochs", 3.0, 5.0, DimensionKind::integer},
        {"max_length", 128.0, 512.0, DimensionKind::integer},
    }};
  }

  friend bool operator==(const HyperSpace&, const HyperSpace&) = default;
};

// Space file: one dimension per line, "name lower upper kind"; '#' comments.
inline HyperSpace read_space(std::istream& in) {
  HyperSpace space;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string name, lower, upper, kind, extra;
    if (!(fields >> name)) continue;
    const auto where = "space line " + std::to_string(line_no) + ": ";
    if (!(fields >> lower >> upper >> kind) || (fields >> extra))
      throw DataError(where + "expected \"name lower upper kind\"");
    Dimension d{name, 0.0, 0.0, DimensionKind::continuous};
    if (!detail::parse_number(lower, d.lower) || !detail::parse_number(upper, d.upper))
      throw DataError(where + "bounds must be numbers");
    if (kind == "integer") {
      d.kind = DimensionKind::integer;
    } else if (kind != "continuous") {
      throw DataError(where + "kind must be continuous or integer");
    }
    if (space.find(name)) throw DataError(where + "duplicate dimension \"" + name + "\"");
    space.dims.push_back(std::move(d));
  }
  try {
    space.validate();
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }
  return space;
}

inline void write_space(std::ostream& out, const HyperSpace& space) {
  out << "# name lower upper kind\n";
  for (const auto& d : space.dims)
    out << d.name << ' ' << format_double(d.lower) << ' ' << format_double(d.upper) << ' ' << to_string(d.kind)
        << '\n';
}

inline constexpr double kUnscored = -std::numeric_limits<double>::infinity();

struct Particle {
  std::vector<double> position;
  std::vector<double> velocity;
  std::vector<double> pbest_pos;
  double pbest_score = kUnscored;

  friend bool operator==(const Particle&, const Particle&) = default;
};

struct SwarmConfig {
  std::size_t particles = 10;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  std::size_t max_iters = 10;
  double threshold = 0.001;
  bool relative_threshold = false;  // improvement measured as a fraction of |prev_best|
  std::size_t patience = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const {
    if (particles < 1) throw UsageError("swarm needs at least one particle");
    for (double c : {inertia, cognitive, social})
      if (!(c >= 0.0) || !std::isfinite(c)) throw UsageError("swarm coefficients must be finite and >= 0");
    if (max_iters < 1) throw UsageError("max_iters must be at least 1");
    if (!(threshold >= 0.0)) throw UsageError("improvement threshold must be >= 0");
    if (patience < 1) throw UsageError("patience must be at least 1");
  }
};

struct SwarmState {
  std::vector<Particle> particles;
  std::vector<Rng> streams;  // one per particle
  std::vector<double> gbest_pos;
  double gbest_score = kUnscored;
  double prev_best = kUnscored;
  std::size_t no_improv_count = 0;
  std::size_t iteration = 0;
};

inline SwarmState init_swarm(const HyperSpace& space, const SwarmConfig& cfg) {
  space.validate();
  cfg.validate();
  SwarmState s;
  for (std::size_t i = 0; i < cfg.particles; ++i) {
    Rng rng(derive_seed({cfg.seed, i}));
    Particle p;
    for (const auto& d : space.dims) {
      const double width = d.upper - d.lower;
      p.position.push_back(std::clamp(rng.uniform(d.lower, d.upper), d.lower, d.upper));
      p.velocity.push_back(rng.uniform(-width / 2.0, width / 2.0));
    }
    p.pbest_pos = p.position;
    s.particles.push_back(std::move(p));
    s.streams.push_back(rng);
  }
  return s;
}

inline double round_half_away(double v) { return std::round(v); }

// Coordinates after integer rounding and clamping.
inline std::vector<double> decode_position(std::span<const double> position, const HyperSpace& space) {
  if (position.size() != space.size()) throw InvariantError("position and space differ in dimension");
  std::vector<double> out(position.begin(), position.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& d = space.dims[i];
    if (d.kind == DimensionKind::integer)
      out[i] = std::clamp(round_half_away(out[i]), std::ceil(d.lower), std::floor(d.upper));
  }
  return out;
}

// Dimensions named after DistillConfig fields overwrite them; any other
// dimension is left to the caller.
inline DistillConfig decode(std::span<const double> position, const HyperSpace& space,
                            DistillConfig base = {}) {
  const auto v = decode_position(position, space);
  auto as_count = [](double x) { return static_cast<std::size_t>(std::max(x, 0.0)); };
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& name = space.dims[i].name;
    if (name == "temperature") base.temperature = v[i];
    else if (name == "alpha") base.alpha = v[i];
    else if (name == "learning_rate") base.learning_rate = v[i];
    else if (name == "batch_size") base.batch_size = as_count(v[i]);
    else if (name == "epochs") base.epochs = as_count(v[i]);
    else if (name == "max_length") base.max_length = as_count(v[i]);
  }
  return base;
}

// v = w v + c1 r1 (pbest - x) + c2 r2 (gbest - x), then x += v, with r1 and
// r2 drawn per dimension.
inline void velocity_update(Particle& p, std::span<const double> gbest_pos, const SwarmConfig& cfg, Rng& rng) {
  const std::size_t n = p.position.size();
  if (p.velocity.size() != n || p.pbest_pos.size() != n || gbest_pos.size() != n)
    throw InvariantError("particle vectors differ in dimension");
  for (std::size_t i = 0; i < n; ++i) {
    const double r1 = rng.uniform(), r2 = rng.uniform();
    p.velocity[i] = cfg.inertia * p.velocity[i] + cfg.cognitive * r1 * (p.pbest_pos[i] - p.position[i]) +
                    cfg.social * r2 * (gbest_pos[i] - p.position[i]);
    p.position[i] += p.velocity[i];
  }
}

// Deterministic variant with fixed r1, r2.
inline void velocity_update(Particle& p, std::span<const double> gbest_pos, const SwarmConfig& cfg, double r1,
                            double r2) {
  const std::size_t n = p.position.size();
  if (p.velocity.size() != n || p.pbest_pos.size() != n || gbest_pos.size() != n)
    throw InvariantError("particle vectors differ in dimension");
  for (std::size_t i = 0; i < n; ++i) {
    p.velocity[i] = cfg.inertia * p.velocity[i] + cfg.cognitive * r1 * (p.pbest_pos[i] - p.position[i]) +
                    cfg.social * r2 * (gbest_pos[i] - p.position[i]);
    p.position[i] += p.velocity[i];
  }
}

inline std::vector<double> apply_constraints(std::span<const double> position, const HyperSpace& space) {
  if (position.size() != space.size()) throw InvariantError("position and space differ in dimension");
  std::vector<double> out(position.begin(), position.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], space.dims[i].lower, space.dims[i].upper);
  return out;
}

// Clamps the position and zeroes velocity on every clamped dimension.
inline void apply_constraints(Particle& p, const HyperSpace& space) {
  const auto clamped = apply_constraints(p.position, space);
  for (std::size_t i = 0; i < clamped.size(); ++i)
    if (clamped[i] != p.position[i]) p.velocity[i] = 0.0;
  p.position = clamped;
}

inline double improvement(double gbest, double prev, bool relative) {
  if (gbest == prev) return 0.0;  // covers -inf to -inf
  const double diff = gbest - prev;
  if (!relative || !std::isfinite(prev) || prev == 0.0) return diff;
  return diff / std::abs(prev);
}

// Call once per completed iteration; true means stop.
inline bool early_stop_check(SwarmState& s, double threshold, std::size_t patience, bool relative = false) {
  if (improvement(s.gbest_score, s.prev_best, relative) < threshold) {
    ++s.no_improv_count;
  } else {
    s.no_improv_count = 0;
  }
  s.prev_best = s.gbest_score;
  return s.no_improv_count >= patience;
}

struct TraceRecord {
  std::size_t iteration = 0;
  double gbest_score = kUnscored;
  std::vector<double> gbest_pos;
  std::vector<std::size_t> non_finite;  // particles whose score was not finite

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct PsoResult {
  std::vector<double> best_position;
  double best_score = kUnscored;
  std::vector<TraceRecord> trace;
  bool stopped_early = false;
};

using Objective = std::function<double(std::span<const double> position, std::size_t particle, std::size_t iteration)>;

inline PsoResult pso_optimize(const HyperSpace& space, const Objective& objective, const SwarmConfig& cfg) {
  auto state = init_swarm(space, cfg);
  const std::size_t n = state.particles.size();
  PsoResult result;
  std::vector<double> scores(n);
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    state.iteration = iter;
    parallel_for(n, cfg.workers, [&](std::size_t i) { scores[i] = objective(state.particles[i].position, i, iter); });

    TraceRecord record;
    record.iteration = iter;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(scores[i])) {
        scores[i] = kUnscored;
        record.non_finite.push_back(i);
      }
      auto& p = state.particles[i];
      if (scores[i] > p.pbest_score) {
        p.pbest_score = scores[i];
        p.pbest_pos = p.position;
      }
      if (scores[i] > state.gbest_score) {
        state.gbest_score = scores[i];
        state.gbest_pos = p.position;
      }
    }
    // Nothing scored yet: steer toward the first particle's own position.
    if (state.gbest_pos.empty()) state.gbest_pos = state.particles.front().position;

    for (std::size_t i = 0; i < n; ++i) {
      velocity_update(state.particles[i], state.gbest_pos, cfg, state.streams[i]);
      apply_constraints(state.particles[i], space);
    }
    record.gbest_score = state.gbest_score;
    record.gbest_pos = state.gbest_pos;
    result.trace.push_back(std::move(record));
    if (early_stop_check(state, cfg.threshold, cfg.patience, cfg.relative_threshold)) {
      result.stopped_early = iter + 1 < cfg.max_iters;
      break;
    }
  }
  result.best_position = state.gbest_pos;
  result.best_score = state.gbest_score;
  return result;
}

}  // namespace distillkit
