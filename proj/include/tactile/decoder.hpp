#pragma once

// Correlation receiver: frame synchronization, chip sampling, per-slot
// correlation against every assigned code, trilevel decisions and word
// assembly. Also the pressure reconstruction that follows decoding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tactile/codebook.hpp"
#include "tactile/error.hpp"
#include "tactile/sensor.hpp"
#include "tactile/waveform.hpp"

namespace tactile {

enum class SignConvention { inverted, direct };

struct DecoderConfig {
  double chip_duration = 25e-6;
  unsigned k_bits = 10;
  std::size_t code_length = 32;
  double amplitude = 0.15;        // expected correlation amplitude per chip (V)
  double quiet_threshold = 0.15;  // |v - baseline| above this is activity (V)
  double min_gap = 2e-3;
  double chip_window_frac = 0.5;
  double activity_margin_frac = 0.5;
  SignConvention sign = SignConvention::inverted;
  double frame_period = 12.8e-3;  // 0: frame ticks unknown, align on edges
  double frame_origin = 0.0;
  double jitter_frac = 0.1;

  double frame_duration() const { return static_cast<double>(k_bits) * static_cast<double>(code_length) * chip_duration; }

  void validate() const {
    if (!(chip_window_frac > 0 && chip_window_frac <= 1)) throw Error(ErrorKind::config, "decoder.chip_window_frac must be in (0, 1]");
    if (!(activity_margin_frac > 0 && activity_margin_frac < 1))
      throw Error(ErrorKind::config, "decoder.activity_margin_frac must be in (0, 1)");
    if (!(amplitude > 0)) throw Error(ErrorKind::config, "decoder expected amplitude must be > 0");
    if (!(quiet_threshold > 0)) throw Error(ErrorKind::config, "decoder.quiet_threshold_V must be > 0");
    if (!(min_gap > 0)) throw Error(ErrorKind::config, "decoder.min_gap_ms must be > 0");
    if (frame_period > 0 && !(min_gap < frame_period - frame_duration()))
      throw Error(ErrorKind::config, "decoder.min_gap_ms must be shorter than the inter-frame gap");
  }
};

struct FrameSegment {
  double t_start = 0.0;         // frame tick when aligned, else first active sample
  double t_end = 0.0;           // end of last active sample
  double first_activity = 0.0;  // first active sample
  bool aligned = false;
  bool flagged = false;  // duration outside the plausible range
  long long frame_index = -1;
};

struct SyncResult {
  std::vector<FrameSegment> segments;
  double baseline = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

struct Run {
  std::size_t first;
  std::size_t last;  // inclusive
};

inline std::vector<Run> active_runs(const AnalogTrace& trace, double baseline, double threshold, double min_gap) {
  std::vector<Run> runs;
  const auto gap_samples = static_cast<std::size_t>(std::ceil(min_gap * trace.sample_rate));
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (std::abs(trace.samples[i] - baseline) <= threshold) continue;
    if (!runs.empty() && i - runs.back().last - 1 < gap_samples)
      runs.back().last = i;
    else
      runs.push_back({i, i});
  }
  return runs;
}

/// Total length of quiet stretches at least min_gap long under a baseline guess.
inline std::size_t long_quiet_samples(const AnalogTrace& trace, double baseline, double threshold, double min_gap,
                                      std::vector<double>* collect) {
  const auto gap_samples = static_cast<std::size_t>(std::ceil(min_gap * trace.sample_rate));
  std::size_t total = 0;
  std::size_t run_start = 0;
  auto close = [&](std::size_t end) {
    if (end - run_start >= gap_samples) {
      total += end - run_start;
      if (collect) collect->insert(collect->end(), trace.samples.begin() + static_cast<std::ptrdiff_t>(run_start),
                                   trace.samples.begin() + static_cast<std::ptrdiff_t>(end));
    }
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (std::abs(trace.samples[i] - baseline) > threshold) {
      close(i);
      run_start = i + 1;
    }
  }
  close(trace.size());
  return total;
}

inline double edge_baseline(const AnalogTrace& trace, const DecoderConfig& cfg) {
  const auto span = std::min<std::size_t>(trace.size(), static_cast<std::size_t>(std::ceil(cfg.min_gap * trace.sample_rate)));
  std::vector<double> candidates{median(trace.samples),
                                 median({trace.samples.begin(), trace.samples.begin() + static_cast<std::ptrdiff_t>(span)}),
                                 median({trace.samples.end() - static_cast<std::ptrdiff_t>(span), trace.samples.end()})};
  double best = candidates.front();
  std::size_t best_quiet = 0;
  for (double c : candidates) {
    const auto q = long_quiet_samples(trace, c, cfg.quiet_threshold, cfg.min_gap, nullptr);
    if (q > best_quiet) {
      best_quiet = q;
      best = c;
    }
  }
  std::vector<double> quiet;
  long_quiet_samples(trace, best, cfg.quiet_threshold, cfg.min_gap, &quiet);
  return quiet.empty() ? best : median(std::move(quiet));
}

/// Median of the guard interval after each frame window; these samples are
/// quiet by construction of the frame schedule.
inline std::optional<double> guard_baseline(const AnalogTrace& trace, const DecoderConfig& cfg) {
  const double window = cfg.frame_duration() * (1.0 + cfg.jitter_frac) + cfg.chip_duration;
  if (!(cfg.frame_period > window)) return std::nullopt;
  std::vector<double> quiet;
  const auto first_tick = std::floor((trace.t0 - cfg.frame_origin) / cfg.frame_period);
  for (double f = first_tick;; f += 1.0) {
    const double tick = cfg.frame_origin + f * cfg.frame_period;
    if (tick >= trace.end_time()) break;
    const double lo = std::max(0.0, std::ceil(sample_position(tick + window, trace.t0, trace.sample_rate)));
    const double hi = std::min(static_cast<double>(trace.size()), std::ceil(sample_position(tick + cfg.frame_period, trace.t0, trace.sample_rate)));
    for (auto i = static_cast<std::size_t>(lo); static_cast<double>(i) < hi; ++i) quiet.push_back(trace.samples[i]);
  }
  if (quiet.empty()) return std::nullopt;
  return median(std::move(quiet));
}

inline bool implausible(double span, const DecoderConfig& cfg) {
  const double frame = cfg.frame_duration();
  const double T = cfg.chip_duration;
  const double longest = frame * (1.0 + cfg.jitter_frac) + 2.0 * T;
  // a zero-sum code keeps at most n chips of leading plus trailing low level
  const double shortest = frame - static_cast<double>(cfg.code_length) * T * (1.0 + cfg.jitter_frac) - 2.0 * T;
  return span > longest || span < shortest;
}

}  // namespace detail

/// Locate encoded frames as activity separated by quiet gaps of at least
/// min_gap. With a known frame period each segment is snapped to its frame tick.
inline SyncResult frame_sync(const AnalogTrace& trace, const DecoderConfig& cfg) {
  SyncResult out;
  if (trace.size() == 0) return out;
  const bool locked = cfg.frame_period > 0;
  std::optional<double> base = locked ? detail::guard_baseline(trace, cfg) : std::nullopt;
  out.baseline = base ? *base : detail::edge_baseline(trace, cfg);

  const auto runs = detail::active_runs(trace, out.baseline, cfg.quiet_threshold, cfg.min_gap);
  const double dt = trace.dt();

  if (!locked) {
    for (const auto& r : runs) {
      FrameSegment s;
      s.t_start = s.first_activity = trace.time(r.first);
      s.t_end = trace.time(r.last) + dt;
      s.flagged = detail::implausible(s.t_end - s.t_start, cfg);
      s.frame_index = static_cast<long long>(out.segments.size());
      out.segments.push_back(s);
    }
    return out;
  }

  const double P = cfg.frame_period;
  const double window = cfg.frame_duration() * (1.0 + cfg.jitter_frac) + cfg.chip_duration;
  const double tol = 0.5 * cfg.chip_duration;
  for (const auto& r : runs) {
    const double a = trace.time(r.first);
    const double b = trace.time(r.last) + dt;
    const auto f_lo = static_cast<long long>(std::floor((a - cfg.frame_origin + tol) / P));
    const auto f_hi = static_cast<long long>(std::floor((b - dt - cfg.frame_origin + tol) / P));
    for (long long f = f_lo; f <= f_hi; ++f) {
      const double tick = cfg.frame_origin + static_cast<double>(f) * P;
      const double lo = std::max(a, tick);
      const double hi = std::min(b, tick + window);
      if (hi <= lo) continue;  // only guard-interval activity in this period
      if (!out.segments.empty() && out.segments.back().frame_index == f) {
        auto& s = out.segments.back();
        s.first_activity = std::min(s.first_activity, lo);
        s.t_end = std::max(s.t_end, hi);
        continue;
      }
      FrameSegment s;
      s.t_start = tick;
      s.first_activity = lo;
      s.t_end = hi;
      s.aligned = true;
      s.frame_index = f;
      out.segments.push_back(s);
    }
  }
  for (auto& s : out.segments) s.flagged = detail::implausible(s.t_end - s.first_activity, cfg);
  return out;
}

/// k x n chip observations, row-major by bit slot (MSB slot first).
struct ChipMatrix {
  unsigned k = 0;
  std::size_t n = 0;
  std::vector<double> values;

  std::span<const double> slot(unsigned b) const { return std::span<const double>(values).subspan(b * n, n); }
};

/// Mean of the central chip_window_frac of each nominal chip window, starting
/// at `start`, with baseline removed and the summer's sign undone.
inline std::vector<double> chip_observations(const AnalogTrace& trace, double start, std::size_t count, double baseline,
                                             const DecoderConfig& cfg) {
  std::vector<double> obs(count);
  const double T = cfg.chip_duration;
  const double w = cfg.chip_window_frac;
  const double sign = cfg.sign == SignConvention::inverted ? -1.0 : 1.0;
  for (std::size_t c = 0; c < count; ++c) {
    const double lo_t = start + (static_cast<double>(c) + 0.5 * (1.0 - w)) * T;
    const double hi_t = start + (static_cast<double>(c) + 0.5 * (1.0 + w)) * T;
    const double lo = std::ceil(sample_position(lo_t, trace.t0, trace.sample_rate));
    const double hi = std::floor(sample_position(hi_t, trace.t0, trace.sample_rate));
    if (lo < 0 || hi >= static_cast<double>(trace.size()))
      throw Error(ErrorKind::resolution, "chip window at t=" + std::to_string(lo_t) + " s falls outside the trace");
    if (hi - lo + 1 < 3) throw Error(ErrorKind::resolution, "fewer than 3 samples in a chip window; raise the sample rate");
    double sum = 0.0;
    for (auto i = static_cast<std::size_t>(lo); i <= static_cast<std::size_t>(hi); ++i) sum += trace.samples[i];
    obs[c] = sign * (sum / (hi - lo + 1) - baseline);
  }
  return obs;
}

inline ChipMatrix chip_matrix(const AnalogTrace& trace, const FrameSegment& segment, double baseline, const DecoderConfig& cfg) {
  if (!(segment.t_end > segment.t_start)) throw Error(ErrorKind::resolution, "empty frame segment");
  ChipMatrix m{cfg.k_bits, cfg.code_length, {}};
  m.values = chip_observations(trace, segment.t_start, static_cast<std::size_t>(cfg.k_bits) * cfg.code_length, baseline, cfg);
  return m;
}

/// Projection of one bit slot onto a code. The + and - chip positions are
/// summed separately so equal contributions cancel exactly.
inline double correlate(std::span<const double> row, const CodeVector& code) {
  if (row.size() != code.size()) throw Error(ErrorKind::domain, "correlation length mismatch");
  double plus = 0.0;
  double minus = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) (code[i] > 0 ? plus : minus) += row[i];
  return plus - minus;
}

enum class Decision { one, zero, none };

inline Decision decide(double corr, std::size_t n, double amplitude, double margin_frac) {
  if (!(amplitude > 0)) throw Error(ErrorKind::domain, "expected amplitude must be > 0");
  if (std::abs(corr) < margin_frac * static_cast<double>(n) * amplitude) return Decision::none;
  return corr > 0 ? Decision::one : Decision::zero;
}

enum class NodeStatus { active, inactive, fault };

inline const char* to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::active: return "active";
    case NodeStatus::inactive: return "inactive";
    case NodeStatus::fault: return "fault";
  }
  return "fault";
}

struct NodeDecode {
  std::size_t id = 0;
  NodeStatus status = NodeStatus::inactive;
  std::optional<RawWord> word;
  std::vector<double> correlations;  // one per bit slot, MSB first
  std::vector<Decision> decisions;
  std::optional<double> margin;      // min |corr| / (n*A) over decided bits
};

struct DecodedFrame {
  long long frame_index = -1;
  double t_start = 0.0;
  double t_end = 0.0;
  bool flagged = false;
  std::string error;
  std::vector<NodeDecode> nodes;

  std::size_t active_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.status == NodeStatus::active; }));
  }
};

inline NodeDecode decode_node(const ChipMatrix& m, std::size_t node, const CodeVector& code, const DecoderConfig& cfg) {
  NodeDecode nd;
  nd.id = node;
  std::size_t decided = 0;
  std::uint32_t bits = 0;
  double min_abs = 0.0;
  for (unsigned b = 0; b < m.k; ++b) {
    const double c = correlate(m.slot(b), code);
    const auto d = decide(c, m.n, cfg.amplitude, cfg.activity_margin_frac);
    nd.correlations.push_back(c);
    nd.decisions.push_back(d);
    bits <<= 1;
    if (d != Decision::none) {
      min_abs = decided == 0 ? std::abs(c) : std::min(min_abs, std::abs(c));
      ++decided;
      if (d == Decision::one) bits |= 1U;
    }
  }
  if (decided == m.k) {
    nd.status = NodeStatus::active;
    nd.word = RawWord{bits, m.k};
    nd.margin = min_abs / (static_cast<double>(m.n) * cfg.amplitude);
  } else if (decided == 0) {
    nd.status = NodeStatus::inactive;
  } else {
    nd.status = NodeStatus::fault;
  }
  return nd;
}

inline DecodedFrame decode_chips(const ChipMatrix& m, const CodeBook& book, const DecoderConfig& cfg) {
  if (m.n != book.order()) throw Error(ErrorKind::domain, "chip matrix width does not match the code order");
  DecodedFrame f;
  f.nodes.reserve(book.node_count());
  for (std::size_t node = 0; node < book.node_count(); ++node) f.nodes.push_back(decode_node(m, node, book.code_for(node), cfg));
  return f;
}

inline DecodedFrame decode_frame(const AnalogTrace& trace, const FrameSegment& segment, double baseline, const CodeBook& book,
                                 const DecoderConfig& cfg) {
  auto f = decode_chips(chip_matrix(trace, segment, baseline, cfg), book, cfg);
  f.frame_index = segment.frame_index;
  f.t_start = segment.t_start;
  f.t_end = segment.t_end;
  f.flagged = segment.flagged;
  return f;
}

/// In-place fast Walsh-Hadamard transform; output r is the dot product with
/// Sylvester row r.
inline void fwht(std::span<double> v) {
  for (std::size_t h = 1; h < v.size(); h <<= 1)
    for (std::size_t i = 0; i < v.size(); i += h << 1)
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
}

/// Without a frame clock, the true start lies up to a few chips before the
/// first active sample (leading chips may sit at the idle level). Try each
/// whole-chip shift and keep the one whose correlations best match the ideal
/// {0, +-n*A} pattern; ties go to the latest start.
inline double align_segment_start(const AnalogTrace& trace, const FrameSegment& segment, double baseline, const CodeBook& book,
                                  const DecoderConfig& cfg, bool dc_row_carries_offset) {
  const double T = cfg.chip_duration;
  const std::size_t n = cfg.code_length;
  const std::size_t total = static_cast<std::size_t>(cfg.k_bits) * n;
  const double centre = 0.5 * (cfg.jitter_frac * T + trace.dt());
  const double anchor = segment.first_activity - centre;

  const double missing = cfg.frame_duration() - (segment.t_end - segment.first_activity);
  auto max_shift = static_cast<std::size_t>(std::max(0.0, std::ceil(missing / T + 0.5)));
  max_shift = std::min(max_shift, n);
  while (max_shift > 0 && anchor - static_cast<double>(max_shift) * T + 0.5 * (1.0 - cfg.chip_window_frac) * T < trace.t0) --max_shift;

  const auto extended = chip_observations(trace, anchor - static_cast<double>(max_shift) * T, total + max_shift, baseline, cfg);
  std::vector<int> role(n, 0);  // 0 unassigned, 1 assigned, -1 ignored
  for (auto r : book.assignment()) role[r] = 1;
  if (dc_row_carries_offset && role[0] == 0) role[0] = -1;

  const double full = static_cast<double>(n) * cfg.amplitude;
  double best_score = 0.0;
  std::size_t best_m = 0;
  std::vector<double> slot(n);
  for (std::size_t m = 0; m <= max_shift; ++m) {
    const std::size_t offset = max_shift - m;
    double score = 0.0;
    std::vector<int> activity(n, -1);
    for (unsigned b = 0; b < cfg.k_bits; ++b) {
      std::copy_n(extended.begin() + static_cast<std::ptrdiff_t>(offset + b * n), n, slot.begin());
      fwht(slot);
      for (std::size_t r = 0; r < n; ++r) {
        if (role[r] < 0) continue;
        const double a = std::abs(slot[r]) / full;
        if (role[r] == 0) {
          score += a * a;
          continue;
        }
        const double resid = std::min(a, std::abs(a - 1.0));
        score += resid * resid;
        const int on = a >= cfg.activity_margin_frac ? 1 : 0;
        if (activity[r] < 0) activity[r] = on;
        else if (activity[r] != on) activity[r] = 2;
      }
    }
    for (int a : activity)
      if (a == 2) score += 1.0;
    if (m == 0 || score < best_score - 1e-9) {
      best_score = score;
      best_m = m;
    }
  }
  return anchor - static_cast<double>(best_m) * T;
}

struct DecodeOptions {
  bool dc_row_carries_offset = true;  // unipolar levels put the mean on row 0
};

/// Sync, align and decode every frame in a trace. Frames whose chip grid runs
/// off the trace are reported with an error and no node results.
inline std::vector<DecodedFrame> decode_trace(const AnalogTrace& trace, const CodeBook& book, const DecoderConfig& cfg,
                                              DecodeOptions opts = {}) {
  cfg.validate();
  if (cfg.code_length != book.order()) throw Error(ErrorKind::config, "decoder code length does not match the codebook order");
  const auto sync = frame_sync(trace, cfg);
  std::vector<DecodedFrame> frames;
  for (auto seg : sync.segments) {
    try {
      if (!seg.aligned) seg.t_start = align_segment_start(trace, seg, sync.baseline, book, cfg, opts.dc_row_carries_offset);
      frames.push_back(decode_frame(trace, seg, sync.baseline, book, cfg));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::resolution) throw;
      DecodedFrame f;
      f.frame_index = seg.frame_index;
      f.t_start = seg.t_start;
      f.t_end = seg.t_end;
      f.flagged = true;
      f.error = e.what();
      frames.push_back(std::move(f));
    }
  }
  return frames;
}

struct Reconstruction {
  PressureFrame pressures;
  std::size_t out_of_range = 0;
};

/// Active nodes map word -> voltage -> pressure; every other cell keeps its previous value.
inline Reconstruction reconstruct(const DecodedFrame& decoded, const SensorModel& model, std::size_t rows, std::size_t cols,
                                  const PressureFrame* previous = nullptr) {
  if (rows * cols != decoded.nodes.size())
    throw Error(ErrorKind::domain, "layout " + std::to_string(rows) + "x" + std::to_string(cols) + " does not match " +
                                       std::to_string(decoded.nodes.size()) + " nodes");
  Reconstruction out{previous ? *previous : PressureFrame::zeros(rows, cols), 0};
  if (out.pressures.size() != rows * cols) throw Error(ErrorKind::domain, "previous frame has the wrong shape");
  out.pressures.rows = rows;
  out.pressures.cols = cols;
  for (const auto& n : decoded.nodes) {
    if (n.status != NodeStatus::active || !n.word) continue;
    const auto est = voltage_to_pressure(model, word_to_voltage(model, *n.word));
    if (est.out_of_range) ++out.out_of_range;
    out.pressures.values[n.id] = est.kpa;
  }
  return out;
}

/// Hold-last pressure map across successive frames.
class Reconstructor {
 public:
  Reconstructor(SensorModel model, std::size_t rows, std::size_t cols)
      : model_(std::move(model)), rows_(rows), cols_(cols), state_(PressureFrame::zeros(rows, cols)) {}

  const PressureFrame& apply(const DecodedFrame& f) {
    if (!f.error.empty()) return state_;
    auto r = reconstruct(f, model_, rows_, cols_, &state_);
    out_of_range_ += r.out_of_range;
    state_ = std::move(r.pressures);
    return state_;
  }

  const PressureFrame& state() const noexcept { return state_; }
  std::size_t out_of_range() const noexcept { return out_of_range_; }

 private:
  SensorModel model_;
  std::size_t rows_;
  std::size_t cols_;
  PressureFrame state_;
  std::size_t out_of_range_ = 0;
};

inline nlohmann::json to_json(const DecodedFrame& f, const SensorModel& model) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : f.nodes) {
    nlohmann::json j{{"id", n.id}, {"status", to_string(n.status)}};
    j["word_bin"] = n.word ? nlohmann::json(n.word->to_binary()) : nlohmann::json(nullptr);
    j["voltage_v"] = n.word ? nlohmann::json(word_to_voltage(model, *n.word)) : nlohmann::json(nullptr);
    j["margin"] = n.margin ? nlohmann::json(*n.margin) : nlohmann::json(nullptr);
    nodes.push_back(std::move(j));
  }
  nlohmann::json out{{"frame_index", f.frame_index}, {"t_start_s", f.t_start}, {"flagged", f.flagged}, {"nodes", std::move(nodes)}};
  if (!f.error.empty()) out["error"] = f.error;
  return out;
}

}  // namespace tactile
