#pragma once

// Single-wire analog path: divider attenuation, inverting unity-gain summer,
// additive noise and the host-side digitizer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tactile/encoder.hpp"
#include "tactile/error.hpp"
#include "tactile/waveform.hpp"

namespace tactile {

enum class NoiseKind { none, uniform, gaussian };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::gaussian: return "gaussian";
  }
  return "none";
}

struct NoiseModel {
  NoiseKind kind = NoiseKind::none;
  double level = 0.0;  // uniform: bound (V); gaussian: sigma (V)
};

struct ChannelConfig {
  double attenuation = 11.0;
  bool invert_output = true;
  NoiseModel noise;
  unsigned adc_bits = 12;  // 0: ideal, no quantization
  double fullscale = 5.0;
  double sample_rate = 800e3;
  std::uint64_t seed = 1;

  /// Gain from a node's output level to the summed trace.
  double node_gain() const { return (invert_output ? -1.0 : 1.0) / attenuation; }

  void validate(double chip_duration) const {
    if (!(attenuation >= 1.0)) throw Error(ErrorKind::config, "channel.attenuation_Y must be >= 1");
    if (!(sample_rate * chip_duration > 2.0)) throw Error(ErrorKind::config, "channel.sample_rate_Hz must exceed 2/T");
    if (adc_bits > 30) throw Error(ErrorKind::config, "channel.adc_bits must be <= 30");
    if (adc_bits > 0 && !(fullscale > 0)) throw Error(ErrorKind::config, "channel.fullscale_V must be > 0");
    if (noise.level < 0) throw Error(ErrorKind::config, "channel.noise level must be >= 0");
  }
};

/// Sample-wise sum of attenuated node waveforms, negated for the inverting summer.
inline AnalogTrace superimpose(std::span<const NodeWaveform> waveforms, const ChannelConfig& cfg) {
  AnalogTrace out{cfg.sample_rate, 0.0, {}};
  if (waveforms.empty()) return out;
  out.sample_rate = waveforms.front().sample_rate;
  out.t0 = waveforms.front().t0;
  std::size_t len = 0;
  for (const auto& w : waveforms) {
    if (w.sample_rate != out.sample_rate) throw Error(ErrorKind::alignment, "node waveforms use different sample rates");
    if (std::abs(w.t0 - out.t0) * out.sample_rate > 1e-6) throw Error(ErrorKind::alignment, "node waveforms start at different times");
    len = std::max(len, w.samples.size());
  }
  out.samples.assign(len, 0.0);
  const double g = cfg.node_gain();
  for (const auto& w : waveforms)
    for (std::size_t i = 0; i < w.samples.size(); ++i) out.samples[i] += g * w.samples[i];
  return out;
}

inline AnalogTrace add_noise(AnalogTrace trace, const NoiseModel& noise, std::uint64_t seed) {
  if (noise.kind == NoiseKind::none || noise.level == 0.0) return trace;
  std::mt19937_64 rng(seed);
  if (noise.kind == NoiseKind::uniform) {
    std::uniform_real_distribution<double> d(-noise.level, noise.level);
    for (auto& s : trace.samples) s += d(rng);
  } else {
    std::normal_distribution<double> d(0.0, noise.level);
    for (auto& s : trace.samples) s += d(rng);
  }
  return trace;
}

inline AnalogTrace add_noise(AnalogTrace trace, const ChannelConfig& cfg) { return add_noise(std::move(trace), cfg.noise, cfg.seed); }

struct Digitized {
  AnalogTrace trace;
  std::size_t clipped = 0;
};

/// Mid-tread quantizer with 2^bits codes, step fullscale / 2^(bits-1).
inline Digitized digitize(AnalogTrace trace, unsigned bits, double fullscale) {
  Digitized out{std::move(trace), 0};
  if (bits == 0) return out;
  const double half_codes = std::ldexp(1.0, static_cast<int>(bits) - 1);
  const double step = fullscale / half_codes;
  for (auto& s : out.trace.samples) {
    double code = std::nearbyint(s / step);
    if (code > half_codes - 1) {
      code = half_codes - 1;
      ++out.clipped;
    } else if (code < -half_codes) {
      code = -half_codes;
      ++out.clipped;
    }
    s = code * step;
  }
  return out;
}

inline Digitized digitize(AnalogTrace trace, const ChannelConfig& cfg) { return digitize(std::move(trace), cfg.adc_bits, cfg.fullscale); }

// Trace CSV: header `time_s,voltage_v`, one uniformly spaced sample per line.

inline void write_trace_csv(std::ostream& out, const AnalogTrace& trace) {
  out << "time_s,voltage_v\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12e,%.17g\n", trace.time(i), trace.samples[i]);
    out << buf;
  }
}

inline void write_trace_csv(const std::string& path, const AnalogTrace& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  write_trace_csv(out, trace);
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

inline AnalogTrace parse_trace_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) { throw Error(ErrorKind::parse, "trace CSV line " + std::to_string(lineno) + ": " + why); };

  ++lineno;
  if (!std::getline(in, line)) fail("missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "time_s,voltage_v") fail("expected header 'time_s,voltage_v'");

  std::vector<double> times;
  AnalogTrace trace;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("expected two columns");
    const char* p = line.c_str();
    char* end = nullptr;
    const double t = std::strtod(p, &end);
    if (end != p + comma) fail("bad time value");
    const char* vp = p + comma + 1;
    const double v = std::strtod(vp, &end);
    if (end == vp || *end != '\0') fail("bad voltage value");
    if (!std::isfinite(t) || !std::isfinite(v)) fail("non-finite value");
    times.push_back(t);
    trace.samples.push_back(v);
  }
  if (times.size() < 2) throw Error(ErrorKind::parse, "trace CSV: need at least two samples");
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(dt > 0)) throw Error(ErrorKind::parse, "trace CSV: time must increase");
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double expect = times.front() + static_cast<double>(i) * dt;
    if (std::abs(times[i] - expect) > 1e-3 * dt)
      throw Error(ErrorKind::parse, "trace CSV line " + std::to_string(i + 2) + ": sample spacing is not uniform");
  }
  // Exports carry ~12 significant digits; snap the rate back to whole hertz.
  double rate = 1.0 / dt;
  if (std::abs(rate - std::nearbyint(rate)) < 1e-6 * rate) rate = std::nearbyint(rate);
  trace.sample_rate = rate;
  trace.t0 = times.front();
  return trace;
}

inline AnalogTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return parse_trace_csv(in);
}

}  // namespace tactile
