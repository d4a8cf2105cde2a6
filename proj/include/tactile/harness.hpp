#pragma once

// Experiment harness: simulate -> decode -> compare, plus scaling and noise sweeps.

#include <chrono>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tactile/decoder.hpp"
#include "tactile/random.hpp"
#include "tactile/system.hpp"

namespace tactile {

struct FrameScore {
  bool exact = true;
  std::size_t bit_errors = 0;
  std::size_t decided_bits = 0;  // truth-active nodes x k
  std::size_t node_errors = 0;
  std::size_t active_nodes = 0;
  std::size_t ghosts = 0;
  std::size_t inactive_nodes = 0;
};

/// Score one transmitted frame against whatever the decoder produced for it
/// (nullptr when no frame was detected).
inline FrameScore score_frame(const FrameTruth& truth, const DecodedFrame* decoded, unsigned k) {
  FrameScore s;
  const bool usable = decoded && decoded->error.empty() && decoded->nodes.size() == truth.nodes.size();
  if (decoded && !usable) s.exact = false;
  for (const auto& t : truth.nodes) {
    const NodeDecode* d = usable ? &decoded->nodes[t.id] : nullptr;
    if (t.active) {
      ++s.active_nodes;
      s.decided_bits += k;
      if (!d) {
        s.bit_errors += k;
        ++s.node_errors;
        s.exact = false;
        continue;
      }
      for (unsigned b = 0; b < k; ++b) {
        const bool bit = t.word.bit(k - 1 - b);
        const auto want = bit ? Decision::one : Decision::zero;
        if (d->decisions[b] != want) ++s.bit_errors;
      }
      if (d->status != NodeStatus::active || !d->word || d->word->bits != t.word.bits) {
        ++s.node_errors;
        s.exact = false;
      }
    } else {
      ++s.inactive_nodes;
      if (d && d->status != NodeStatus::inactive) {
        ++s.ghosts;
        s.exact = false;
      }
    }
  }
  return s;
}

/// Match decoded frames to transmitted frames by start time.
inline std::vector<FrameScore> score_frames(const std::vector<FrameTruth>& truths, const std::vector<DecodedFrame>& decoded,
                                            double frame_period, unsigned k) {
  std::vector<FrameScore> out;
  std::vector<bool> used(decoded.size(), false);
  for (const auto& t : truths) {
    const DecodedFrame* match = nullptr;
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      if (!used[i] && std::abs(decoded[i].t_start - t.t_start) < 0.5 * frame_period) {
        match = &decoded[i];
        used[i] = true;
        break;
      }
    }
    out.push_back(score_frame(t, match, k));
  }
  // decoded frames with no transmitted counterpart can only add ghosts
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    if (used[i]) continue;
    for (const auto& n : decoded[i].nodes)
      if (n.status != NodeStatus::inactive && !out.empty()) {
        ++out.back().ghosts;
        out.back().exact = false;
      }
  }
  return out;
}

struct RoundtripSummary {
  std::size_t trials = 0;
  std::size_t exact_frames = 0;
  std::size_t bit_errors = 0;
  std::size_t decided_bits = 0;
  std::size_t node_errors = 0;
  std::size_t active_nodes = 0;
  std::size_t ghosts = 0;
  std::size_t inactive_nodes = 0;
  std::size_t clipped_samples = 0;
  std::vector<std::string> mismatches;  // first few, human readable

  bool all_exact() const { return exact_frames == trials; }
  double bit_error_rate() const { return decided_bits ? static_cast<double>(bit_errors) / static_cast<double>(decided_bits) : 0.0; }
  double node_error_rate() const { return active_nodes ? static_cast<double>(node_errors) / static_cast<double>(active_nodes) : 0.0; }
  double ghost_rate() const { return inactive_nodes ? static_cast<double>(ghosts) / static_cast<double>(inactive_nodes) : 0.0; }

  void add(const FrameScore& s) {
    ++trials;
    if (s.exact) ++exact_frames;
    bit_errors += s.bit_errors;
    decided_bits += s.decided_bits;
    node_errors += s.node_errors;
    active_nodes += s.active_nodes;
    ghosts += s.ghosts;
    inactive_nodes += s.inactive_nodes;
  }
};

enum class ActivityPattern {
  random_subsets,  // per trial, a random fraction of nodes transmits
  all_active,
};

struct RoundtripOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  ActivityPattern activity = ActivityPattern::random_subsets;
  std::size_t max_reported = 5;
};

/// Random words per node; each node transmits with a per-trial probability
/// drawn from U[0, 1], so empty and full frames both occur.
inline void draw_frame_inputs(std::size_t nodes, unsigned k, ActivityPattern pattern, std::uint64_t seed, std::uint64_t trial,
                              std::vector<RawWord>& words, std::vector<bool>& active) {
  auto wrng = make_rng(seed, {static_cast<std::uint64_t>(Stream::words), trial});
  auto arng = make_rng(seed, {static_cast<std::uint64_t>(Stream::activity), trial});
  std::uniform_int_distribution<std::uint32_t> word_dist(0, (std::uint32_t{1} << k) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = pattern == ActivityPattern::all_active ? 1.0 : u(arng);
  words.resize(nodes);
  active.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    words[i] = RawWord{word_dist(wrng), k};
    active[i] = pattern == ActivityPattern::all_active || u(arng) < p;
  }
}

/// Simulate `trials` independent frames and decode each from its own trace.
inline RoundtripSummary run_roundtrip(const SystemConfig& cfg, const RoundtripOptions& opt) {
  auto c = cfg;
  c.seed = opt.seed;
  c.channel.seed = opt.seed;
  Simulator sim(c);
  const auto dcfg = c.decoder_config();
  const auto dopt = c.decode_options();
  RoundtripSummary sum;
  std::vector<RawWord> words;
  std::vector<bool> active;
  for (std::size_t t = 0; t < opt.trials; ++t) {
    draw_frame_inputs(c.node_count, c.encoder.k_bits, opt.activity, opt.seed, t, words, active);
    auto r = sim.step_words(words, active);
    sum.clipped_samples += r.clipped;
    const auto decoded = decode_trace(r.trace, sim.codebook(), dcfg, dopt);
    const auto scores = score_frames({r.truth}, decoded, c.encoder.frame_period, c.encoder.k_bits);
    sum.add(scores.front());
    if (!scores.front().exact && sum.mismatches.size() < opt.max_reported) {
      std::ostringstream os;
      os << "trial " << t << ": " << scores.front().node_errors << " node errors, " << scores.front().ghosts << " ghosts, "
         << scores.front().bit_errors << " bit errors";
      sum.mismatches.push_back(os.str());
    }
  }
  return sum;
}

/// Same system re-timed for a code order: n-1 nodes with skip-DC (n without),
/// T = target_frame / (k n), transition scaled with T, `samples_per_chip` sampling.
inline SystemConfig scaled_system(const SystemConfig& base, std::size_t order, double target_frame, double samples_per_chip = 20.0) {
  if (order == 0 || !std::has_single_bit(order)) throw Error(ErrorKind::invalid_order, "code order " + std::to_string(order) + " is not a power of 2");
  if (base.skip_dc_row && order < 2) throw Error(ErrorKind::invalid_order, "order 1 leaves no node when the all-ones row is skipped");
  auto c = base;
  c.node_count = base.skip_dc_row ? order - 1 : order;
  c.rows = 1;
  c.cols = c.node_count;
  const double T = target_frame / (static_cast<double>(c.encoder.k_bits) * static_cast<double>(order));
  c.encoder.transition_time = base.encoder.transition_time * T / base.encoder.chip_duration;
  c.encoder.chip_duration = T;
  c.channel.sample_rate = samples_per_chip / T;
  return c;
}

struct ScalingRow {
  std::size_t code_order = 0;
  std::size_t n_nodes = 0;
  double T_seconds = 0.0;
  double frame_ms = 0.0;
  double period_ms = 0.0;
  double decode_ok_rate = 0.0;
  double wall_time_s = 0.0;
  bool feasible = true;
};

struct ScalingOptions {
  unsigned k = 10;
  std::vector<std::size_t> orders{16, 64, 256, 1024, 4096};
  double target_frame = 8e-3;
  std::size_t trials = 3;
  double t_floor = 0.1e-6;
  std::uint64_t seed = 1;
};

/// Constant-latency sweep: every row keeps the frame at target_frame by shrinking T.
inline std::vector<ScalingRow> sweep_scaling(const SystemConfig& base, const ScalingOptions& opt) {
  std::vector<ScalingRow> rows;
  auto b = base;
  b.encoder.k_bits = opt.k;
  b.sensor.adc_bits = opt.k;
  b.channel.adc_bits = 0;  // n*A grows without bound; keep the channel ideal
  b.channel.noise = {};
  for (auto order : opt.orders) {
    const auto start = std::chrono::steady_clock::now();
    const auto c = scaled_system(b, order, opt.target_frame);
    ScalingRow row;
    row.code_order = order;
    row.n_nodes = c.node_count;
    row.T_seconds = c.encoder.chip_duration;
    row.frame_ms = static_cast<double>(opt.k) * static_cast<double>(order) * c.encoder.chip_duration * 1e3;
    row.period_ms = c.encoder.frame_period * 1e3;
    row.feasible = c.encoder.chip_duration >= opt.t_floor;
    RoundtripOptions ro;
    ro.trials = opt.trials;
    ro.seed = derive_seed(opt.seed, {order});
    ro.activity = ActivityPattern::all_active;
    const auto sum = run_roundtrip(c, ro);
    row.decode_ok_rate = sum.trials ? static_cast<double>(sum.exact_frames) / static_cast<double>(sum.trials) : 0.0;
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }
  return rows;
}

inline void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows, bool omit_timing = false) {
  out << "n_nodes,code_order,T_seconds,frame_ms,period_ms,decode_ok_rate,wall_time_s,feasible\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.6g,", r.n_nodes, r.code_order, r.T_seconds, r.frame_ms, r.period_ms, r.decode_ok_rate);
    out << buf;
    if (omit_timing) out << "NA";
    else {
      std::snprintf(buf, sizeof buf, "%.3f", r.wall_time_s);
      out << buf;
    }
    out << ',' << (r.feasible ? "true" : "false") << '\n';
  }
}

struct BerRow {
  double noise_level = 0.0;
  double jitter_frac = 0.0;
  unsigned channel_adc_bits = 0;
  double bit_error_rate = 0.0;
  double node_error_rate = 0.0;
  double ghost_rate = 0.0;
  std::size_t decided_bits = 0;
};

struct NoiseSweepOptions {
  std::vector<double> noise_levels{0.0};
  std::vector<double> jitter_fracs{0.0};
  std::vector<unsigned> adc_bits{12};
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  ActivityPattern activity = ActivityPattern::random_subsets;
};

/// Full factorial sweep. Within a (jitter, adc) column every noise level reuses
/// the same words and noise stream, so rows differ only in noise amplitude.
inline std::vector<BerRow> sweep_noise(const SystemConfig& base, const NoiseSweepOptions& opt) {
  if (opt.noise_levels.empty() || opt.jitter_fracs.empty() || opt.adc_bits.empty())
    throw Error(ErrorKind::config, "noise, jitter and adc_bits lists must be non-empty");
  std::vector<BerRow> rows;
  const auto kind = base.channel.noise.kind == NoiseKind::none ? NoiseKind::gaussian : base.channel.noise.kind;
  for (std::size_t ai = 0; ai < opt.adc_bits.size(); ++ai) {
    for (std::size_t ji = 0; ji < opt.jitter_fracs.size(); ++ji) {
      for (double level : opt.noise_levels) {
        auto c = base;
        c.channel.noise = {kind, level};
        c.encoder.jitter_frac = opt.jitter_fracs[ji];
        c.channel.adc_bits = opt.adc_bits[ai];
        c.validate();
        RoundtripOptions ro;
        ro.trials = opt.trials;
        ro.seed = derive_seed(opt.seed, {ai, ji});
        ro.activity = opt.activity;
        const auto s = run_roundtrip(c, ro);
        rows.push_back({level, opt.jitter_fracs[ji], opt.adc_bits[ai], s.bit_error_rate(), s.node_error_rate(), s.ghost_rate(), s.decided_bits});
      }
    }
  }
  return rows;
}

inline void write_ber_csv(std::ostream& out, const std::vector<BerRow>& rows) {
  out << "noise_level,jitter_frac,channel_adc_bits,bit_error_rate,node_error_rate,ghost_rate,decided_bits\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%u,%.9g,%.9g,%.9g,%zu\n", r.noise_level, r.jitter_frac, r.channel_adc_bits, r.bit_error_rate,
                  r.node_error_rate, r.ghost_rate, r.decided_bits);
    out << buf;
  }
}

}  // namespace tactile
