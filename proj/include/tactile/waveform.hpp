#pragma once

// Sampled waveforms and the piecewise-level timelines they are rendered from.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace tactile {

/// Uniformly sampled voltage record starting at t0.
struct AnalogTrace {
  double sample_rate = 0.0;
  double t0 = 0.0;
  std::vector<double> samples;

  std::size_t size() const noexcept { return samples.size(); }
  double dt() const noexcept { return 1.0 / sample_rate; }
  double time(std::size_t i) const noexcept { return t0 + static_cast<double>(i) / sample_rate; }
  double duration() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
  double end_time() const noexcept { return t0 + duration(); }
};

/// Fractional sample position of time t, snapped to the nearest integer when
/// within rounding noise so grid-aligned edges land on exact sample indices.
inline double sample_position(double t, double t0, double sample_rate) {
  const double x = (t - t0) * sample_rate;
  const double r = std::nearbyint(x);
  return std::abs(x - r) < 1e-6 ? r : x;
}

struct LevelEdge {
  double time;
  double delta;
};

/// A node's output as an idle level plus a list of level changes, each
/// followed by a linear ramp of `transition` seconds.
struct LevelTimeline {
  double idle = 0.0;
  double transition = 0.0;
  double frame_start = 0.0;
  double frame_end = 0.0;
  bool active = false;
  std::vector<LevelEdge> edges;
};

/// Accumulates scaled timelines onto a sample grid using a step-difference
/// buffer plus explicit ramp samples. Cost is O(edges + samples).
class TraceBuilder {
 public:
  TraceBuilder(double sample_rate, double t0, std::size_t count)
      : sample_rate_(sample_rate), t0_(t0), steps_(count + 1, 0.0), ramps_(count, 0.0) {}

  std::size_t size() const noexcept { return ramps_.size(); }

  void add(const LevelTimeline& tl, double gain) {
    offset_ += gain * tl.idle;
    const auto n = static_cast<double>(ramps_.size());
    for (const auto& e : tl.edges) {
      const double d = gain * e.delta;
      const double x0 = sample_position(e.time, t0_, sample_rate_);
      const double x1 = tl.transition > 0 ? sample_position(e.time + tl.transition, t0_, sample_rate_) : x0;
      const double i_end = std::clamp(std::ceil(x1), 0.0, n);
      if (tl.transition > 0) {
        const double i_beg = std::clamp(std::ceil(x0), 0.0, n);
        for (auto i = static_cast<std::size_t>(i_beg); i < static_cast<std::size_t>(i_end); ++i) {
          const double frac = (static_cast<double>(i) - x0) / (x1 - x0);
          ramps_[i] += d * frac;
        }
      }
      steps_[static_cast<std::size_t>(i_end)] += d;
    }
  }

  void add_constant(double v) { offset_ += v; }

  std::vector<double> finish() const {
    std::vector<double> out(ramps_.size());
    double level = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      level += steps_[i];
      out[i] = offset_ + level + ramps_[i];
    }
    return out;
  }

 private:
  double sample_rate_;
  double t0_;
  double offset_ = 0.0;
  std::vector<double> steps_;
  std::vector<double> ramps_;
};

}  // namespace tactile
