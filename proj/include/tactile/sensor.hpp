#pragma once

// Piezoresistive sensing unit and node-side ADC.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tactile/error.hpp"

namespace tactile {

struct SensitivitySegment {
  double p_lo_kpa;
  double p_hi_kpa;
  double slope_v_per_kpa;
};

/// Characterized constants that are documented but not simulated.
namespace characterized {
inline constexpr double response_time_s = 0.740;
inline constexpr double recovery_time_s = 0.024;
/// (applied pressure kPa, hysteresis %)
inline constexpr std::array<std::array<double, 2>, 3> hysteresis_percent{{{55.0, 33.87}, {90.0, 10.99}, {140.0, 10.62}}};
}  // namespace characterized

/// Which code the ADC full-scale voltage maps to.
enum class FullScaleCode {
  power_of_two,        // v = bits * vref / 2^k
  power_of_two_minus1  // v = bits * vref / (2^k - 1)
};

struct SensorModel {
  double v0 = 3.3;
  std::vector<SensitivitySegment> segments{{0.0, 50.0, -0.033}, {50.0, 140.0, -0.0059}};
  double p_max = 140.0;
  double vref = 3.3;
  unsigned adc_bits = 10;
  FullScaleCode full_scale = FullScaleCode::power_of_two;
  double tau_rise = 0.0;
  double tau_fall = 0.0;
  double activation_delta = 4.0 * 3.3 / 1024.0;

  std::uint32_t max_code() const { return (std::uint32_t{1} << adc_bits) - 1; }

  double code_divisor() const {
    const double full = static_cast<double>(std::uint64_t{1} << adc_bits);
    return full_scale == FullScaleCode::power_of_two ? full : full - 1.0;
  }

  double lsb_volts() const { return vref / code_divisor(); }

  void validate() const {
    if (adc_bits < 1 || adc_bits > 24) throw Error(ErrorKind::config, "sensor.adc_bits must be in [1, 24]");
    if (!(vref > 0)) throw Error(ErrorKind::config, "sensor.vref_V must be > 0");
    if (segments.empty()) throw Error(ErrorKind::config, "sensor.segments must not be empty");
    if (segments.front().p_lo_kpa != 0.0) throw Error(ErrorKind::config, "sensor.segments must start at 0 kPa");
    if (segments.back().p_hi_kpa != p_max) throw Error(ErrorKind::config, "sensor.segments must end at p_max_kPa");
    const bool falling = segments.front().slope_v_per_kpa < 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      if (!(s.p_hi_kpa > s.p_lo_kpa)) throw Error(ErrorKind::config, "sensor.segments[" + std::to_string(i) + "] is empty");
      if (i > 0 && s.p_lo_kpa != segments[i - 1].p_hi_kpa)
        throw Error(ErrorKind::config, "sensor.segments[" + std::to_string(i) + "] is not contiguous");
      if (s.slope_v_per_kpa == 0.0 || (s.slope_v_per_kpa < 0) != falling)
        throw Error(ErrorKind::config, "sensor.segments slopes must be nonzero and share one sign");
    }
    if (tau_rise < 0 || tau_fall < 0) throw Error(ErrorKind::config, "sensor time constants must be >= 0");
    if (activation_delta < 0) throw Error(ErrorKind::config, "sensor.activation_delta_V must be >= 0");
  }
};

struct RawWord {
  std::uint32_t bits = 0;
  unsigned k = 10;

  bool operator==(const RawWord&) const = default;

  bool bit(unsigned i) const { return (bits >> i) & 1U; }

  /// MSB-first string, e.g. "0101101110".
  std::string to_binary() const {
    std::string s(k, '0');
    for (unsigned i = 0; i < k; ++i)
      if (bit(k - 1 - i)) s[i] = '1';
    return s;
  }
};

inline RawWord make_word(std::uint32_t bits, unsigned k) {
  if (k == 0 || k > 31) throw Error(ErrorKind::domain, "word bit count must be in [1, 31]");
  if (bits >> k) throw Error(ErrorKind::domain, "word value " + std::to_string(bits) + " exceeds " + std::to_string(k) + " bits");
  return RawWord{bits, k};
}

inline RawWord word_from_binary(const std::string& s) {
  std::uint32_t v = 0;
  for (char c : s) {
    if (c != '0' && c != '1') throw Error(ErrorKind::parse, "not a binary word: " + s);
    v = (v << 1) | static_cast<std::uint32_t>(c - '0');
  }
  return make_word(v, static_cast<unsigned>(s.size()));
}

inline double pressure_to_voltage(const SensorModel& model, double p) {
  if (p < 0 || std::isnan(p)) throw Error(ErrorKind::domain, "negative pressure");
  p = std::min(p, model.p_max);
  double v = model.v0;
  for (const auto& s : model.segments) {
    if (p <= s.p_lo_kpa) break;
    v += s.slope_v_per_kpa * (std::min(p, s.p_hi_kpa) - s.p_lo_kpa);
  }
  return v;
}

struct PressureEstimate {
  double kpa = 0.0;
  bool out_of_range = false;
};

/// Exact piecewise-linear inverse; voltages outside the sensor span clamp to 0 or p_max.
inline PressureEstimate voltage_to_pressure(const SensorModel& model, double v) {
  const double v_end = pressure_to_voltage(model, model.p_max);
  const bool falling = v_end < model.v0;
  const double lo = std::min(model.v0, v_end);
  const double hi = std::max(model.v0, v_end);
  if (v < lo || v > hi) {
    const bool past_end = falling ? v < lo : v > hi;
    return {past_end ? model.p_max : 0.0, true};
  }
  double v_start = model.v0;
  for (const auto& s : model.segments) {
    const double v_stop = v_start + s.slope_v_per_kpa * (s.p_hi_kpa - s.p_lo_kpa);
    const bool inside = falling ? (v <= v_start && v >= v_stop) : (v >= v_start && v <= v_stop);
    if (inside) return {s.p_lo_kpa + (v - v_start) / s.slope_v_per_kpa, false};
    v_start = v_stop;
  }
  return {model.p_max, false};
}

inline RawWord adc_quantize(const SensorModel& model, double v) {
  const double clamped = std::clamp(v, 0.0, model.vref);
  const double code = std::nearbyint(clamped / model.vref * model.code_divisor());
  return RawWord{static_cast<std::uint32_t>(std::min(code, static_cast<double>(model.max_code()))), model.adc_bits};
}

inline double word_to_voltage(const SensorModel& model, RawWord w) {
  return static_cast<double>(w.bits) / model.code_divisor() * model.vref;
}

/// First-order lag toward `target`; tau_rise while loading (moving away from v0), tau_fall when returning.
inline double step_dynamics(double state, double target, double dt, const SensorModel& model) {
  if (!(dt > 0)) throw Error(ErrorKind::domain, "dynamics step must be > 0");
  const bool loading = std::abs(target - model.v0) > std::abs(state - model.v0);
  const double tau = loading ? model.tau_rise : model.tau_fall;
  if (tau <= 0) return target;
  return state + (target - state) * (1.0 - std::exp(-dt / tau));
}

/// Row-major grid of pressures, one cell per node.
struct PressureFrame {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  static PressureFrame zeros(std::size_t rows, std::size_t cols) { return {rows, cols, std::vector<double>(rows * cols, 0.0)}; }

  double& at(std::size_t r, std::size_t c) { return values.at(r * cols + c); }
  double at(std::size_t r, std::size_t c) const { return values.at(r * cols + c); }
  std::size_t size() const { return values.size(); }
};

inline void validate(const PressureFrame& f, const SensorModel& model) {
  if (f.rows * f.cols != f.values.size()) throw Error(ErrorKind::domain, "pressure grid shape does not match cell count");
  for (double v : f.values)
    if (!(v >= 0 && v <= model.p_max)) throw Error(ErrorKind::domain, "pressure " + std::to_string(v) + " outside [0, p_max]");
}

// Pressure CSV: one grid row per line, comma separated. Blank lines separate
// successive grids.

inline std::vector<PressureFrame> parse_pressure_csv(std::istream& in) {
  std::vector<PressureFrame> frames;
  PressureFrame cur;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (cur.rows > 0) frames.push_back(std::move(cur));
    cur = PressureFrame{};
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse, "pressure CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      if (cell.find_first_not_of(" \t", used) != std::string::npos)
        throw Error(ErrorKind::parse, "pressure CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(v);
    }
    if (line.back() == ',') throw Error(ErrorKind::parse, "pressure CSV line " + std::to_string(lineno) + ": trailing comma");
    if (cur.rows > 0 && row.size() != cur.cols)
      throw Error(ErrorKind::parse, "pressure CSV line " + std::to_string(lineno) + ": expected " + std::to_string(cur.cols) + " columns");
    cur.cols = row.size();
    cur.values.insert(cur.values.end(), row.begin(), row.end());
    ++cur.rows;
  }
  flush();
  return frames;
}

inline std::vector<PressureFrame> read_pressure_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return parse_pressure_csv(in);
}

inline void write_pressure_csv(std::ostream& out, const PressureFrame& f) {
  out.precision(10);
  for (std::size_t r = 0; r < f.rows; ++r) {
    for (std::size_t c = 0; c < f.cols; ++c) {
      if (c) out << ',';
      out << f.at(r, c);
    }
    out << '\n';
  }
}

}  // namespace tactile
