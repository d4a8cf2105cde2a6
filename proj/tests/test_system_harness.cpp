#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "tactile/harness.hpp"
#include "tactile/system.hpp"

using namespace tactile;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string config_error(const nlohmann::json& j) {
  try {
    system_config_from_json(j);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    return e.what();
  }
  FAIL("config accepted: " << j.dump());
  return {};
}

}  // namespace

TEST_CASE("default config is consistent") {
  SystemConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.code_order() == 32);
  CHECK(c.expected_amplitude() == Approx(0.15));
  CHECK(c.noise_guarantee_bound() == Approx(0.075));
  const auto s = frame_schedule(c.encoder.k_bits, c.code_order(), c.encoder.chip_duration, c.encoder.frame_period);
  CHECK(s.frame_duration == Approx(8e-3));
  CHECK(c.encoder.frame_period == Approx(12.8e-3));
}

TEST_CASE("config JSON round trip") {
  SystemConfig c;
  c.node_count = 6;
  c.rows = 2;
  c.cols = 3;
  c.encoder.mapping = LevelMapping::bipolar;
  c.channel.noise = {NoiseKind::uniform, 0.01};
  c.decoder.frame_locked = false;
  c.sensor.full_scale = FullScaleCode::power_of_two_minus1;
  const auto j = to_json(c);
  const auto back = system_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.encoder.chip_duration == Approx(c.encoder.chip_duration).epsilon(1e-14));
  CHECK(back.channel.noise.kind == NoiseKind::uniform);
  CHECK(back.rows == 2);
}

TEST_CASE("partial configs keep defaults") {
  const auto c = system_config_from_json(nlohmann::json{{"node_count", 8}});
  CHECK(c.rows == 1);
  CHECK(c.cols == 8);
  CHECK(c.code_order() == 16);
  CHECK(c.encoder.k_bits == 10);

  const auto k8 = system_config_from_json(nlohmann::json{{"encoder", {{"k_bits", 8}}}});
  CHECK(k8.sensor.adc_bits == 8);
}

TEST_CASE("config errors name the field") {
  CHECK_THAT(config_error({{"colour", 1}}), ContainsSubstring("colour"));
  CHECK_THAT(config_error({{"encoder", {{"T_ms", 1}}}}), ContainsSubstring("T_ms"));
  CHECK_THAT(config_error({{"encoder", {{"jitter_frac", 0.7}}}}), ContainsSubstring("jitter_frac"));
  CHECK_THAT(config_error({{"encoder", {{"mapping", "ternary"}}}}), ContainsSubstring("encoder.mapping"));
  CHECK_THAT(config_error({{"node_count", 16}, {"layout", {{"rows", 3}, {"cols", 5}}}}), ContainsSubstring("layout"));
  CHECK_THAT(config_error({{"channel", {{"sample_rate_Hz", 100000.0}}}}), ContainsSubstring("samples per chip"));
  CHECK_THAT(config_error({{"encoder", {{"frame_period_ms", 8.5}}}}), ContainsSubstring("frame period"));
  CHECK_THAT(config_error({{"channel", {{"noise", {{"model", "pink"}}}}}}), ContainsSubstring("noise.model"));
  CHECK_THAT(config_error({{"encoder", {{"k_bits", 12}}}, {"sensor", {{"adc_bits", 10}}}}), ContainsSubstring("k_bits"));
}

TEST_CASE("sample configs load") {
  for (const char* name : {"default", "reference_timing_bipolar", "tight_margin"}) {
    INFO(name);
    const auto c = load_system_config(std::string(TACTILE_SOURCE_DIR) + "/configs/" + name + ".json");
    CHECK_NOTHROW(c.validate());
  }
  try {
    load_system_config("/nonexistent/config.json");
    FAIL("missing file accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("bipolar timing config gives 8 ms frames every 12.8 ms") {
  const auto c = load_system_config(std::string(TACTILE_SOURCE_DIR) + "/configs/reference_timing_bipolar.json");
  CHECK(c.code_order() == 16);
  CHECK(c.encoder.chip_duration == Approx(50e-6));
  const auto s = frame_schedule(c.encoder.k_bits, c.code_order(), c.encoder.chip_duration, c.encoder.frame_period);
  CHECK(s.frame_duration == Approx(8e-3).epsilon(1e-15));
  CHECK(s.gap == Approx(4.8e-3).epsilon(1e-12));

  Simulator sim(c);
  auto p = PressureFrame::zeros(4, 4);
  p.values[3] = 20.0;
  const auto r = sim.step(p);
  CHECK(r.trace.duration() == Approx(12.8e-3));
  REQUIRE(r.spans.size() == 16);
  for (const auto& s : r.spans) {
    if (!s.active) continue;
    CHECK(s.duration() * 1e3 >= 8.0 - 1e-9);
    CHECK(s.duration() * 1e3 <= 8.8 + 1e-9);
  }
}

TEST_CASE("steady zero pressure gives a flat trace") {
  SystemConfig c;
  Simulator sim(c);
  const auto zero = PressureFrame::zeros(4, 4);
  sim.set_steady_state(zero);
  const auto r = sim.step(zero);
  for (double v : r.trace.samples) REQUIRE(v == 0.0);
  for (const auto& n : r.truth.nodes) CHECK_FALSE(n.active);
}

TEST_CASE("first frame transmits every node") {
  SystemConfig c;
  Simulator sim(c);
  const auto r = sim.step(PressureFrame::zeros(4, 4));
  for (const auto& n : r.truth.nodes) {
    CHECK(n.active);
    CHECK(n.word.bits == 1023);
  }
}

TEST_CASE("single pressed node equals its own attenuated inverted waveform") {
  SystemConfig c;
  c.channel.adc_bits = 0;
  const auto zero = PressureFrame::zeros(4, 4);
  auto p = zero;
  p.values[11] = 100.0;
  const auto r = simulate_frame(p, c, 3, &zero);
  REQUIRE(r.truth.nodes[11].active);
  const auto book = assign_codes(16, true);
  const auto levels = chips_to_levels(encode_word(book.code_for(11), r.truth.nodes[11].word), c.encoder);
  const auto w = render_waveform(levels, c.encoder, c.channel.sample_rate, derive_seed(3, {static_cast<std::uint64_t>(Stream::jitter), 0, 11}));
  REQUIRE(w.samples.size() == r.trace.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) REQUIRE(r.trace.samples[i] == Approx(-w.samples[i] / 11.0).margin(1e-12));
}

TEST_CASE("event gating inside the simulator") {
  SystemConfig c;
  Simulator sim(c);
  const auto zero = PressureFrame::zeros(4, 4);
  sim.set_steady_state(zero);
  auto p = zero;
  p.values[5] = 30.0;
  auto r = sim.step(p);
  CHECK(r.truth.nodes[5].active);
  for (std::size_t i = 0; i < 16; ++i)
    if (i != 5) CHECK_FALSE(r.truth.nodes[i].active);
  r = sim.step(p);
  for (const auto& n : r.truth.nodes) CHECK_FALSE(n.active);
  p.values[5] = 30.1;  // well under 4 LSB
  r = sim.step(p);
  CHECK_FALSE(r.truth.nodes[5].active);
}

TEST_CASE("simulation is deterministic under a seed") {
  SystemConfig c;
  c.channel.noise = {NoiseKind::gaussian, 0.02};
  auto p = PressureFrame::zeros(4, 4);
  p.values[2] = 70.0;
  const auto a = simulate_frame(p, c, 42);
  const auto b = simulate_frame(p, c, 42);
  const auto d = simulate_frame(p, c, 43);
  CHECK(a.trace.samples == b.trace.samples);
  CHECK(a.trace.samples != d.trace.samples);
}

TEST_CASE("pressure shape must match the layout") {
  Simulator sim(SystemConfig{});
  CHECK_THROWS_AS(sim.step(PressureFrame::zeros(2, 8)), Error);
}

TEST_CASE("simulate then decode reproduces pressure cells") {
  SystemConfig c;
  Simulator sim(c);
  const auto zero = PressureFrame::zeros(4, 4);
  sim.set_steady_state(zero);
  auto p = zero;
  p.values[0] = 12.0;
  p.values[9] = 95.0;
  const auto r = sim.step(p);
  const auto frames = decode_trace(r.trace, sim.codebook(), c.decoder_config(), c.decode_options());
  REQUIRE(frames.size() == 1);
  const auto rec = reconstruct(frames[0], c.sensor, 4, 4);
  // one LSB of 3.3/1024 V is about 0.1 kPa on the first slope and 0.55 kPa on the second
  CHECK(rec.pressures.values[0] == Approx(12.0).margin(0.1));
  CHECK(rec.pressures.values[9] == Approx(95.0).margin(0.6));
  CHECK(rec.pressures.values[1] == 0.0);
}

TEST_CASE("frame scoring") {
  auto decisions = [](std::uint32_t w) {
    std::vector<Decision> d;
    for (int b = 9; b >= 0; --b) d.push_back((w >> b) & 1U ? Decision::one : Decision::zero);
    return d;
  };
  FrameTruth t{0, 0.0, {{0, true, RawWord{5, 10}}, {1, false, {}}, {2, true, RawWord{9, 10}}}};
  DecodedFrame d;
  d.nodes.push_back({0, NodeStatus::active, RawWord{5, 10}, {}, decisions(5), 1.0});
  d.nodes.push_back({1, NodeStatus::active, RawWord{0, 10}, {}, decisions(0), 1.0});
  d.nodes.push_back({2, NodeStatus::active, RawWord{8, 10}, {}, decisions(8), 1.0});
  const auto s = score_frame(t, &d, 10);
  CHECK_FALSE(s.exact);
  CHECK(s.ghosts == 1);
  CHECK(s.node_errors == 1);
  CHECK(s.bit_errors == 1);
  CHECK(s.active_nodes == 2);
  CHECK(s.inactive_nodes == 1);

  const auto missing = score_frame(t, nullptr, 10);
  CHECK_FALSE(missing.exact);
  CHECK(missing.node_errors == 2);
}

TEST_CASE("roundtrip harness") {
  SystemConfig c;
  RoundtripOptions ro;
  ro.trials = 30;
  const auto s = run_roundtrip(c, ro);
  CHECK(s.trials == 30);
  CHECK(s.all_exact());
  CHECK(s.ghosts == 0);
  CHECK(s.inactive_nodes > 0);
  CHECK(s.active_nodes > 0);
}

TEST_CASE("scaled systems hold the frame time") {
  SystemConfig base;
  const auto c16 = scaled_system(base, 16, 8e-3);
  CHECK(c16.encoder.chip_duration == Approx(50e-6));
  CHECK(c16.node_count == 15);
  const auto c1024 = scaled_system(base, 1024, 8e-3);
  CHECK(c1024.encoder.chip_duration == Approx(0.78125e-6).epsilon(1e-15));
  CHECK(c1024.channel.sample_rate * c1024.encoder.chip_duration == Approx(20.0));
  CHECK_THROWS_AS(scaled_system(base, 24, 8e-3), Error);
}

TEST_CASE("scaling report") {
  ScalingOptions so;
  so.orders = {16, 64};
  so.trials = 2;
  const auto rows = sweep_scaling(SystemConfig{}, so);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.frame_ms == Approx(8.0).epsilon(1e-12));
    CHECK(r.frame_ms == Approx(10.0 * r.code_order * r.T_seconds * 1e3).epsilon(1e-15));
    CHECK(r.period_ms == Approx(12.8));
    CHECK(r.decode_ok_rate == 1.0);
    CHECK(r.feasible);
  }
  std::ostringstream a, b;
  write_scaling_csv(a, rows, true);
  write_scaling_csv(b, sweep_scaling(SystemConfig{}, so), true);
  CHECK(a.str() == b.str());
  CHECK_THAT(a.str(), ContainsSubstring("n_nodes,code_order,T_seconds,frame_ms,period_ms,decode_ok_rate,wall_time_s,feasible"));

  so.orders = {4096};
  so.trials = 0;
  so.t_floor = 0.25e-6;
  CHECK_FALSE(sweep_scaling(SystemConfig{}, so).front().feasible);
}

TEST_CASE("noise sweep") {
  SystemConfig base = load_system_config(std::string(TACTILE_SOURCE_DIR) + "/configs/tight_margin.json");
  NoiseSweepOptions no;
  const double bound = base.noise_guarantee_bound();
  no.noise_levels = {0.0, 0.5 * bound, 0.1, 0.2, 0.3};
  no.jitter_fracs = {0.0, 0.1};
  no.adc_bits = {0};
  no.trials = 200;
  base.channel.noise.kind = NoiseKind::uniform;
  const auto rows = sweep_noise(base, no);
  REQUIRE(rows.size() == 10);
  for (std::size_t j = 0; j < 2; ++j) {
    const auto* r = &rows[j * 5];
    CHECK(r[0].bit_error_rate == 0.0);
    CHECK(r[1].bit_error_rate == 0.0);
    for (int i = 1; i < 5; ++i) CHECK(r[i].bit_error_rate >= r[i - 1].bit_error_rate);
    CHECK(r[4].bit_error_rate > 0.0);
    for (int i = 0; i < 5; ++i) {
      CHECK((r[i].bit_error_rate >= 0 && r[i].bit_error_rate <= 1));
      CHECK((r[i].ghost_rate >= 0 && r[i].ghost_rate <= 1));
      CHECK((r[i].node_error_rate >= 0 && r[i].node_error_rate <= 1));
    }
  }
  std::ostringstream a, b;
  write_ber_csv(a, rows);
  write_ber_csv(b, sweep_noise(base, no));
  CHECK(a.str() == b.str());

  no.noise_levels.clear();
  CHECK_THROWS_AS(sweep_noise(base, no), Error);
}
