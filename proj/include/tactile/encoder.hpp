#pragma once

// Per-node encoder: k-bit word -> chip stream -> voltage levels -> timed waveform.

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tactile/codebook.hpp"
#include "tactile/error.hpp"
#include "tactile/sensor.hpp"
#include "tactile/waveform.hpp"

namespace tactile {

enum class LevelMapping { unipolar, bipolar };

inline const char* to_string(LevelMapping m) { return m == LevelMapping::unipolar ? "unipolar" : "bipolar"; }

struct EncoderConfig {
  double chip_duration = 25e-6;
  unsigned k_bits = 10;
  double level_high = 3.3;  // node IO level before attenuation
  double level_low = 0.0;   // unipolar only; bipolar swings +-level_high
  LevelMapping mapping = LevelMapping::unipolar;
  double frame_period = 12.8e-3;
  double jitter_frac = 0.1;
  double transition_time = 0.15e-6;

  double high() const { return level_high; }
  double low() const { return mapping == LevelMapping::bipolar ? -level_high : level_low; }
  double idle() const { return mapping == LevelMapping::bipolar ? 0.0 : level_low; }

  void validate() const {
    if (!(chip_duration > 0)) throw Error(ErrorKind::config, "encoder.T_us must be > 0");
    if (k_bits < 1 || k_bits > 31) throw Error(ErrorKind::config, "encoder.k_bits must be in [1, 31]");
    if (!(jitter_frac >= 0 && jitter_frac < 0.5)) throw Error(ErrorKind::config, "encoder.jitter_frac must be in [0, 0.5)");
    if (transition_time < 0 || transition_time > 0.1 * chip_duration)
      throw Error(ErrorKind::config, "encoder.transition_us must be in [0, 0.1*T]");
    if (mapping == LevelMapping::unipolar && !(level_high > level_low))
      throw Error(ErrorKind::config, "encoder.amplitude_mV must exceed the low level");
    if (mapping == LevelMapping::bipolar && !(level_high > 0)) throw Error(ErrorKind::config, "encoder.amplitude_mV must be > 0");
  }
};

struct ChipStream {
  std::size_t node_id = 0;
  std::vector<Chip> chips;
  bool active = false;
};

/// Bit 1 sends the code, bit 0 sends its negation; most-significant bit first.
inline ChipStream encode_word(const CodeVector& code, RawWord word, std::size_t node_id = 0) {
  ChipStream out{node_id, {}, true};
  out.chips.reserve(static_cast<std::size_t>(word.k) * code.size());
  for (unsigned b = word.k; b-- > 0;) {
    const Chip sign = word.bit(b) ? Chip{1} : Chip{-1};
    for (auto c : code.chips()) out.chips.push_back(static_cast<Chip>(sign * c));
  }
  return out;
}

/// A node transmits when its word moved by at least `delta_threshold` counts,
/// or when it has not transmitted before.
inline bool event_gate(std::optional<RawWord> prev, RawWord next, std::uint32_t delta_threshold) {
  if (!prev) return true;
  const auto diff = prev->bits > next.bits ? prev->bits - next.bits : next.bits - prev->bits;
  return diff >= delta_threshold;
}

inline std::uint32_t event_threshold_counts(const SensorModel& model) {
  const auto counts = std::llround(model.activation_delta / model.lsb_volts());
  return static_cast<std::uint32_t>(std::max<long long>(1, counts));
}

/// Map chips to output voltages. An inactive stream is one idle level.
inline std::vector<double> chips_to_levels(const ChipStream& stream, const EncoderConfig& cfg) {
  if (!stream.active) return {};
  std::vector<double> levels(stream.chips.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = stream.chips[i] > 0 ? cfg.high() : cfg.low();
  return levels;
}

/// Edge list for one frame starting at `frame_start`. Every chip boundary after
/// the first is delayed by an independent U[0, jitter_frac*T] offset relative
/// to its nominal grid position, so timing error never accumulates. A delay is
/// drawn for every boundary (used or not) to keep RNG streams aligned across
/// different words.
inline LevelTimeline make_timeline(std::span<const double> levels, const EncoderConfig& cfg, double frame_start,
                                   std::mt19937_64& rng) {
  LevelTimeline tl;
  tl.idle = cfg.idle();
  tl.transition = cfg.transition_time;
  tl.frame_start = frame_start;
  tl.frame_end = frame_start;
  tl.active = !levels.empty();
  if (levels.empty()) return tl;

  std::uniform_real_distribution<double> delay(0.0, cfg.jitter_frac * cfg.chip_duration);
  const double T = cfg.chip_duration;
  double cur = tl.idle;
  for (std::size_t j = 0; j <= levels.size(); ++j) {
    const double next = j < levels.size() ? levels[j] : tl.idle;
    const double offset = (j == 0 || cfg.jitter_frac == 0.0) ? 0.0 : delay(rng);
    const double t = frame_start + static_cast<double>(j) * T + offset;
    if (j == levels.size()) tl.frame_end = t;
    if (next != cur) {
      tl.edges.push_back({t, next - cur});
      cur = next;
    }
  }
  return tl;
}

struct NodeWaveform {
  double sample_rate = 0.0;
  double t0 = 0.0;
  std::vector<double> samples;
  double frame_start = 0.0;  // nominal start edge
  double frame_end = 0.0;    // jittered final edge (return to idle)
  bool active = false;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline void check_sample_rate(double sample_rate, double chip_duration) {
  if (sample_rate * chip_duration < 10.0 - 1e-9)
    throw Error(ErrorKind::config, "sample rate " + std::to_string(sample_rate) + " Hz gives fewer than 10 samples per chip");
}

/// Render one frame period of a node's output starting at `t0`.
inline NodeWaveform render_waveform(std::span<const double> levels, const EncoderConfig& cfg, double sample_rate,
                                    std::uint64_t jitter_seed, double t0 = 0.0) {
  check_sample_rate(sample_rate, cfg.chip_duration);
  std::mt19937_64 rng(jitter_seed);
  const auto tl = make_timeline(levels, cfg, t0, rng);
  const auto count = static_cast<std::size_t>(std::llround(cfg.frame_period * sample_rate));
  TraceBuilder b(sample_rate, t0, count);
  b.add(tl, 1.0);
  return {sample_rate, t0, b.finish(), tl.frame_start, tl.frame_end, tl.active};
}

struct FrameSchedule {
  double frame_duration = 0.0;
  double gap = 0.0;
};

inline FrameSchedule frame_schedule(unsigned k, std::size_t n, double chip_duration, double frame_period,
                                    double jitter_frac = 0.0) {
  const double frame = static_cast<double>(k) * static_cast<double>(n) * chip_duration;
  if (!(frame_period > frame * (1.0 + jitter_frac)))
    throw Error(ErrorKind::config, "frame period " + std::to_string(frame_period * 1e3) + " ms does not exceed frame " +
                                       std::to_string(frame * 1e3) + " ms plus jitter");
  return {frame, frame_period - frame};
}

/// One sensing node: owns its code, previous word and gate threshold.
class NodeEncoder {
 public:
  NodeEncoder(std::size_t node_id, CodeVector code, std::uint32_t gate_threshold)
      : node_id_(node_id), code_(std::move(code)), gate_threshold_(gate_threshold) {}

  std::size_t node_id() const noexcept { return node_id_; }
  const CodeVector& code() const noexcept { return code_; }
  std::optional<RawWord> previous() const noexcept { return prev_; }
  void set_previous(std::optional<RawWord> w) { prev_ = w; }

  /// Gate and encode the next word. The stored reference word only moves when
  /// the node transmits, so slow drift still triggers eventually.
  ChipStream next_frame(RawWord word) {
    if (!event_gate(prev_, word, gate_threshold_)) return ChipStream{node_id_, {}, false};
    prev_ = word;
    return encode_word(code_, word, node_id_);
  }

 private:
  std::size_t node_id_;
  CodeVector code_;
  std::uint32_t gate_threshold_;
  std::optional<RawWord> prev_;
};

}  // namespace tactile
