#pragma once

// System configuration and the end-to-end frame simulator
// (sensor -> encoder -> channel).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tactile/channel.hpp"
#include "tactile/codebook.hpp"
#include "tactile/decoder.hpp"
#include "tactile/encoder.hpp"
#include "tactile/error.hpp"
#include "tactile/random.hpp"
#include "tactile/sensor.hpp"
#include "tactile/waveform.hpp"

namespace tactile {

struct DecoderSettings {
  double quiet_threshold = 0.15;
  double min_gap = 2e-3;
  double chip_window_frac = 0.5;
  double activity_margin_frac = 0.5;
  SignConvention sign = SignConvention::inverted;
  bool frame_locked = true;
  double frame_origin = 0.0;
};

struct SystemConfig {
  std::size_t node_count = 16;
  std::size_t rows = 4;
  std::size_t cols = 4;
  bool skip_dc_row = true;
  SensorModel sensor;
  EncoderConfig encoder;
  ChannelConfig channel;
  DecoderSettings decoder;
  std::uint64_t seed = 1;

  std::size_t code_order() const { return smallest_order(node_count, skip_dc_row); }

  /// Half the attenuated chip swing: the per-chip amplitude a correlation sees.
  double expected_amplitude() const { return (encoder.high() - encoder.low()) / (2.0 * channel.attenuation); }

  DecoderConfig decoder_config() const {
    DecoderConfig d;
    d.chip_duration = encoder.chip_duration;
    d.k_bits = encoder.k_bits;
    d.code_length = code_order();
    d.amplitude = expected_amplitude();
    d.quiet_threshold = decoder.quiet_threshold;
    d.min_gap = decoder.min_gap;
    d.chip_window_frac = decoder.chip_window_frac;
    d.activity_margin_frac = decoder.activity_margin_frac;
    d.sign = decoder.sign;
    d.frame_period = decoder.frame_locked ? encoder.frame_period : 0.0;
    d.frame_origin = decoder.frame_origin;
    d.jitter_frac = encoder.jitter_frac;
    return d;
  }

  DecodeOptions decode_options() const { return {encoder.mapping == LevelMapping::unipolar || encoder.level_low != 0.0}; }

  /// Uniform per-sample noise bound under which no decision can change.
  double noise_guarantee_bound() const { return decoder.activity_margin_frac * expected_amplitude(); }

  void validate() const {
    if (node_count == 0) throw Error(ErrorKind::config, "node_count must be >= 1");
    if (rows * cols != node_count) throw Error(ErrorKind::config, "layout rows*cols must equal node_count");
    sensor.validate();
    encoder.validate();
    channel.validate(encoder.chip_duration);
    if (encoder.k_bits != sensor.adc_bits) throw Error(ErrorKind::config, "encoder.k_bits must equal sensor.adc_bits");
    check_sample_rate(channel.sample_rate, encoder.chip_duration);
    frame_schedule(encoder.k_bits, code_order(), encoder.chip_duration, encoder.frame_period, encoder.jitter_frac);
    decoder_config().validate();
  }
};

// ---- JSON ----

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::config, where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error(ErrorKind::config, where + "." + k + ": unknown field");
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::config, where + "." + key + ": wrong type");
  }
}

// `per_unit` is how many file units make one SI unit (1e6 for microseconds).
inline void read_scaled(const nlohmann::json& j, const char* key, double& out, double per_unit, const std::string& where) {
  double v = out * per_unit;
  read_field(j, key, v, where);
  out = v / per_unit;
}

}  // namespace detail

inline nlohmann::json to_json(const SystemConfig& c) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : c.sensor.segments) segs.push_back({{"p_lo_kPa", s.p_lo_kpa}, {"p_hi_kPa", s.p_hi_kpa}, {"slope_V_per_kPa", s.slope_v_per_kpa}});
  return {
      {"node_count", c.node_count},
      {"layout", {{"rows", c.rows}, {"cols", c.cols}}},
      {"seed", c.seed},
      {"codebook", {{"skip_dc_row", c.skip_dc_row}}},
      {"sensor",
       {{"v0_V", c.sensor.v0},
        {"segments", segs},
        {"p_max_kPa", c.sensor.p_max},
        {"vref_V", c.sensor.vref},
        {"adc_bits", c.sensor.adc_bits},
        {"full_scale_code", c.sensor.full_scale == FullScaleCode::power_of_two ? "2^k" : "2^k-1"},
        {"tau_rise_s", c.sensor.tau_rise},
        {"tau_fall_s", c.sensor.tau_fall},
        {"activation_delta_V", c.sensor.activation_delta}}},
      {"encoder",
       {{"T_us", c.encoder.chip_duration * 1e6},
        {"k_bits", c.encoder.k_bits},
        {"amplitude_mV", c.encoder.level_high * 1e3},
        {"low_mV", c.encoder.level_low * 1e3},
        {"mapping", to_string(c.encoder.mapping)},
        {"frame_period_ms", c.encoder.frame_period * 1e3},
        {"jitter_frac", c.encoder.jitter_frac},
        {"transition_us", c.encoder.transition_time * 1e6}}},
      {"channel",
       {{"attenuation_Y", c.channel.attenuation},
        {"invert_output", c.channel.invert_output},
        {"noise", {{"model", to_string(c.channel.noise.kind)}, {"level_V", c.channel.noise.level}}},
        {"adc_bits", c.channel.adc_bits},
        {"fullscale_V", c.channel.fullscale},
        {"sample_rate_Hz", c.channel.sample_rate}}},
      {"decoder",
       {{"quiet_threshold_V", c.decoder.quiet_threshold},
        {"min_gap_ms", c.decoder.min_gap * 1e3},
        {"chip_window_frac", c.decoder.chip_window_frac},
        {"activity_margin_frac", c.decoder.activity_margin_frac},
        {"sign_convention", c.decoder.sign == SignConvention::inverted ? "inverted" : "direct"},
        {"frame_locked", c.decoder.frame_locked},
        {"frame_origin_s", c.decoder.frame_origin}}},
  };
}

/// Missing fields keep their defaults; unknown fields are rejected by name.
inline SystemConfig system_config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  using detail::read_scaled;
  SystemConfig c;
  detail::reject_unknown(j, {"node_count", "layout", "seed", "codebook", "sensor", "encoder", "channel", "decoder"}, "config");
  read_field(j, "node_count", c.node_count, "config");
  read_field(j, "seed", c.seed, "config");
  if (j.contains("node_count")) {
    c.rows = 1;
    c.cols = c.node_count;
  }
  if (j.contains("layout")) {
    const auto& l = j["layout"];
    detail::reject_unknown(l, {"rows", "cols"}, "layout");
    read_field(l, "rows", c.rows, "layout");
    read_field(l, "cols", c.cols, "layout");
  }
  if (j.contains("codebook")) {
    detail::reject_unknown(j["codebook"], {"skip_dc_row"}, "codebook");
    read_field(j["codebook"], "skip_dc_row", c.skip_dc_row, "codebook");
  }
  if (j.contains("sensor")) {
    const auto& s = j["sensor"];
    const std::string w = "sensor";
    detail::reject_unknown(s, {"v0_V", "segments", "p_max_kPa", "vref_V", "adc_bits", "full_scale_code", "tau_rise_s", "tau_fall_s", "activation_delta_V"}, w);
    read_field(s, "v0_V", c.sensor.v0, w);
    read_field(s, "p_max_kPa", c.sensor.p_max, w);
    read_field(s, "vref_V", c.sensor.vref, w);
    read_field(s, "adc_bits", c.sensor.adc_bits, w);
    read_field(s, "tau_rise_s", c.sensor.tau_rise, w);
    read_field(s, "tau_fall_s", c.sensor.tau_fall, w);
    read_field(s, "activation_delta_V", c.sensor.activation_delta, w);
    if (s.contains("full_scale_code")) {
      const auto v = s["full_scale_code"].get<std::string>();
      if (v == "2^k") c.sensor.full_scale = FullScaleCode::power_of_two;
      else if (v == "2^k-1") c.sensor.full_scale = FullScaleCode::power_of_two_minus1;
      else throw Error(ErrorKind::config, "sensor.full_scale_code: expected \"2^k\" or \"2^k-1\"");
    }
    if (s.contains("segments")) {
      c.sensor.segments.clear();
      for (const auto& seg : s["segments"]) {
        detail::reject_unknown(seg, {"p_lo_kPa", "p_hi_kPa", "slope_V_per_kPa"}, "sensor.segments[]");
        try {
          c.sensor.segments.push_back({seg.at("p_lo_kPa").get<double>(), seg.at("p_hi_kPa").get<double>(), seg.at("slope_V_per_kPa").get<double>()});
        } catch (const nlohmann::json::exception&) {
          throw Error(ErrorKind::config, "sensor.segments[]: each segment needs p_lo_kPa, p_hi_kPa, slope_V_per_kPa");
        }
      }
    }
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    const std::string w = "encoder";
    detail::reject_unknown(e, {"T_us", "k_bits", "amplitude_mV", "low_mV", "mapping", "frame_period_ms", "jitter_frac", "transition_us"}, w);
    read_scaled(e, "T_us", c.encoder.chip_duration, 1e6, w);
    read_field(e, "k_bits", c.encoder.k_bits, w);
    read_scaled(e, "amplitude_mV", c.encoder.level_high, 1e3, w);
    read_scaled(e, "low_mV", c.encoder.level_low, 1e3, w);
    read_scaled(e, "frame_period_ms", c.encoder.frame_period, 1e3, w);
    read_field(e, "jitter_frac", c.encoder.jitter_frac, w);
    read_scaled(e, "transition_us", c.encoder.transition_time, 1e6, w);
    if (e.contains("mapping")) {
      const auto m = e["mapping"].get<std::string>();
      if (m == "unipolar") c.encoder.mapping = LevelMapping::unipolar;
      else if (m == "bipolar") c.encoder.mapping = LevelMapping::bipolar;
      else throw Error(ErrorKind::config, "encoder.mapping: expected \"unipolar\" or \"bipolar\"");
    }
  }
  // k_bits and the sensor ADC width describe the same word; either may be given alone.
  const bool has_k = j.contains("encoder") && j["encoder"].contains("k_bits");
  const bool has_adc = j.contains("sensor") && j["sensor"].contains("adc_bits");
  if (has_k && !has_adc) c.sensor.adc_bits = c.encoder.k_bits;
  if (has_adc && !has_k) c.encoder.k_bits = c.sensor.adc_bits;
  if (j.contains("channel")) {
    const auto& ch = j["channel"];
    const std::string w = "channel";
    detail::reject_unknown(ch, {"attenuation_Y", "invert_output", "noise", "adc_bits", "fullscale_V", "sample_rate_Hz"}, w);
    read_field(ch, "attenuation_Y", c.channel.attenuation, w);
    read_field(ch, "invert_output", c.channel.invert_output, w);
    read_field(ch, "adc_bits", c.channel.adc_bits, w);
    read_field(ch, "fullscale_V", c.channel.fullscale, w);
    read_field(ch, "sample_rate_Hz", c.channel.sample_rate, w);
    if (ch.contains("noise")) {
      const auto& nz = ch["noise"];
      detail::reject_unknown(nz, {"model", "level_V"}, "channel.noise");
      read_field(nz, "level_V", c.channel.noise.level, "channel.noise");
      if (nz.contains("model")) {
        const auto m = nz["model"].get<std::string>();
        if (m == "none") c.channel.noise.kind = NoiseKind::none;
        else if (m == "uniform") c.channel.noise.kind = NoiseKind::uniform;
        else if (m == "gaussian") c.channel.noise.kind = NoiseKind::gaussian;
        else throw Error(ErrorKind::config, "channel.noise.model: expected none, uniform or gaussian");
      }
    }
  }
  if (j.contains("decoder")) {
    const auto& d = j["decoder"];
    const std::string w = "decoder";
    detail::reject_unknown(d, {"quiet_threshold_V", "min_gap_ms", "chip_window_frac", "activity_margin_frac", "sign_convention", "frame_locked", "frame_origin_s"}, w);
    read_field(d, "quiet_threshold_V", c.decoder.quiet_threshold, w);
    read_scaled(d, "min_gap_ms", c.decoder.min_gap, 1e3, w);
    read_field(d, "chip_window_frac", c.decoder.chip_window_frac, w);
    read_field(d, "activity_margin_frac", c.decoder.activity_margin_frac, w);
    read_field(d, "frame_locked", c.decoder.frame_locked, w);
    read_field(d, "frame_origin_s", c.decoder.frame_origin, w);
    if (d.contains("sign_convention")) {
      const auto s = d["sign_convention"].get<std::string>();
      if (s == "inverted") c.decoder.sign = SignConvention::inverted;
      else if (s == "direct") c.decoder.sign = SignConvention::direct;
      else throw Error(ErrorKind::config, "decoder.sign_convention: expected inverted or direct");
    }
  }
  c.channel.seed = c.seed;
  c.validate();
  return c;
}

inline SystemConfig load_system_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, path + ": " + e.what());
  }
  return system_config_from_json(j);
}

// ---- simulation ----

struct NodeTruth {
  std::size_t id = 0;
  bool active = false;
  RawWord word;
};

struct FrameTruth {
  long long frame_index = 0;
  double t_start = 0.0;
  std::vector<NodeTruth> nodes;
};

/// When a node's output left and returned to idle in one frame.
struct NodeSpan {
  double start = 0.0;
  double end = 0.0;
  bool active = false;

  double duration() const { return end - start; }
};

struct FrameResult {
  AnalogTrace trace;
  FrameTruth truth;
  std::size_t clipped = 0;
  std::vector<NodeSpan> spans;  // per node
};

/// Stateful simulator: owns one encoder (and sensor state) per node and emits
/// one frame period of channel trace per step.
class Simulator {
 public:
  explicit Simulator(SystemConfig cfg) : cfg_(std::move(cfg)), book_(assign_codes(cfg_.node_count, cfg_.skip_dc_row)) {
    cfg_.validate();
    const auto thr = event_threshold_counts(cfg_.sensor);
    encoders_.reserve(cfg_.node_count);
    for (std::size_t i = 0; i < cfg_.node_count; ++i) encoders_.emplace_back(i, book_.code_for(i), thr);
    node_voltage_.assign(cfg_.node_count, cfg_.sensor.v0);
  }

  const SystemConfig& config() const noexcept { return cfg_; }
  const CodeBook& codebook() const noexcept { return book_; }
  long long next_frame_index() const noexcept { return frame_; }

  /// Treat `p` as the steady state already transmitted: encoders remember its words.
  void set_steady_state(const PressureFrame& p) {
    validate(p, cfg_.sensor);
    check_shape(p);
    for (std::size_t i = 0; i < cfg_.node_count; ++i) {
      node_voltage_[i] = pressure_to_voltage(cfg_.sensor, p.values[i]);
      encoders_[i].set_previous(adc_quantize(cfg_.sensor, node_voltage_[i]));
    }
  }

  void set_previous_words(std::span<const std::optional<RawWord>> words) {
    for (std::size_t i = 0; i < encoders_.size() && i < words.size(); ++i) encoders_[i].set_previous(words[i]);
  }

  /// Sense, gate, encode and transmit one frame.
  FrameResult step(const PressureFrame& p) {
    validate(p, cfg_.sensor);
    check_shape(p);
    std::vector<ChipStream> streams;
    streams.reserve(cfg_.node_count);
    for (std::size_t i = 0; i < cfg_.node_count; ++i) {
      const double target = pressure_to_voltage(cfg_.sensor, p.values[i]);
      node_voltage_[i] = step_dynamics(node_voltage_[i], target, cfg_.encoder.frame_period, cfg_.sensor);
      streams.push_back(encoders_[i].next_frame(adc_quantize(cfg_.sensor, node_voltage_[i])));
    }
    return transmit(streams);
  }

  /// Transmit given words directly, bypassing sensing and event gating.
  FrameResult step_words(std::span<const RawWord> words, const std::vector<bool>& active) {
    if (words.size() != cfg_.node_count || active.size() != cfg_.node_count)
      throw Error(ErrorKind::domain, "need one word and activity flag per node");
    std::vector<ChipStream> streams;
    streams.reserve(cfg_.node_count);
    for (std::size_t i = 0; i < cfg_.node_count; ++i) {
      if (words[i].k != cfg_.encoder.k_bits) throw Error(ErrorKind::domain, "word width does not match k_bits");
      if (active[i]) {
        streams.push_back(encode_word(book_.code_for(i), words[i], i));
        encoders_[i].set_previous(words[i]);
      } else {
        streams.push_back(ChipStream{i, {}, false});
      }
    }
    return transmit(streams);
  }

 private:
  void check_shape(const PressureFrame& p) const {
    if (p.rows != cfg_.rows || p.cols != cfg_.cols)
      throw Error(ErrorKind::domain, "pressure grid is " + std::to_string(p.rows) + "x" + std::to_string(p.cols) + ", config layout is " +
                                         std::to_string(cfg_.rows) + "x" + std::to_string(cfg_.cols));
  }

  FrameResult transmit(const std::vector<ChipStream>& streams) {
    const long long f = frame_++;
    const auto& enc = cfg_.encoder;
    const auto& ch = cfg_.channel;
    const double tick = static_cast<double>(f) * enc.frame_period;
    const auto count = static_cast<std::size_t>(std::llround(enc.frame_period * ch.sample_rate));

    FrameResult out;
    out.truth.frame_index = f;
    out.truth.t_start = tick;
    TraceBuilder builder(ch.sample_rate, tick, count);
    const double gain = ch.node_gain();
    out.spans.reserve(streams.size());
    for (const auto& s : streams) {
      auto rng = make_rng(cfg_.seed, {static_cast<std::uint64_t>(Stream::jitter), static_cast<std::uint64_t>(f), s.node_id});
      auto levels = chips_to_levels(s, enc);
      auto tl = make_timeline(levels, enc, tick, rng);
      if (tl.active) builder.add(tl, gain);
      else builder.add_constant(gain * tl.idle);
      NodeTruth t{s.node_id, s.active, {}};
      if (s.active) t.word = *encoders_[s.node_id].previous();
      out.truth.nodes.push_back(t);
      out.spans.push_back({tl.frame_start, tl.frame_end, tl.active});
    }
    AnalogTrace trace{ch.sample_rate, tick, builder.finish()};
    trace = add_noise(std::move(trace), ch.noise, derive_seed(cfg_.seed, {static_cast<std::uint64_t>(Stream::noise), static_cast<std::uint64_t>(f)}));
    auto dig = digitize(std::move(trace), ch);
    out.trace = std::move(dig.trace);
    out.clipped = dig.clipped;
    return out;
  }

  SystemConfig cfg_;
  CodeBook book_;
  std::vector<NodeEncoder> encoders_;
  std::vector<double> node_voltage_;
  long long frame_ = 0;
};

/// One frame from an explicit prior state; convenience wrapper over Simulator.
inline FrameResult simulate_frame(const PressureFrame& pressures, const SystemConfig& cfg, std::uint64_t seed,
                                  const PressureFrame* steady_state = nullptr) {
  auto c = cfg;
  c.seed = seed;
  c.channel.seed = seed;
  Simulator sim(c);
  if (steady_state) sim.set_steady_state(*steady_state);
  return sim.step(pressures);
}

/// Concatenate per-frame traces (all must share the sample rate and be contiguous).
inline AnalogTrace concatenate(std::span<const AnalogTrace> parts) {
  AnalogTrace out;
  if (parts.empty()) return out;
  out.sample_rate = parts.front().sample_rate;
  out.t0 = parts.front().t0;
  for (const auto& p : parts) {
    if (p.sample_rate != out.sample_rate) throw Error(ErrorKind::alignment, "trace pieces use different sample rates");
    out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  }
  return out;
}

inline nlohmann::json to_json(const FrameTruth& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) {
    nodes.push_back({{"id", n.id}, {"active", n.active}, {"word", n.active ? nlohmann::json(n.word.bits) : nlohmann::json(nullptr)},
                     {"word_bin", n.active ? nlohmann::json(n.word.to_binary()) : nlohmann::json(nullptr)}});
  }
  return {{"frame_index", t.frame_index}, {"t_start_s", t.t_start}, {"nodes", std::move(nodes)}};
}

}  // namespace tactile
