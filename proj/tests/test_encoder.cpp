#include <catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "tactile/codebook.hpp"
#include "tactile/encoder.hpp"

using namespace tactile;
using Catch::Approx;

namespace {

CodeVector code(std::vector<Chip> c) { return CodeVector(std::move(c)); }

std::vector<Chip> chips_of(const ChipStream& s) { return s.chips; }

}  // namespace

TEST_CASE("bit one sends the code, bit zero its negation") {
  const auto c = code({1, -1, 1, -1});
  CHECK(chips_of(encode_word(c, RawWord{1, 1})) == std::vector<Chip>{1, -1, 1, -1});
  CHECK(chips_of(encode_word(c, RawWord{0, 1})) == std::vector<Chip>{-1, 1, -1, 1});
  CHECK(chips_of(encode_word(code({1, 1, -1, -1}), RawWord{0b10, 2})) == std::vector<Chip>{1, 1, -1, -1, -1, -1, 1, 1});
}

TEST_CASE("sign correlation recovers every word exhaustively") {
  for (std::size_t n : {2u, 4u, 8u, 32u}) {
    const auto h = oracle::sylvester(n);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<Chip> row(h[r].begin(), h[r].end());
      const CodeVector c(row);
      const unsigned k = n == 32 ? 10 : 6;
      for (std::uint32_t w = 0; w < (1U << k); ++w) {
        const auto s = encode_word(c, RawWord{w, k});
        REQUIRE(s.chips.size() == k * n);
        std::uint32_t back = 0;
        for (unsigned b = 0; b < k; ++b) {
          long long corr = 0;
          for (std::size_t i = 0; i < n; ++i) corr += s.chips[b * n + i] * h[r][i];
          REQUIRE(std::abs(corr) == static_cast<long long>(n));
          back = (back << 1) | (corr > 0 ? 1U : 0U);
        }
        REQUIRE(back == w);
      }
    }
  }
}

TEST_CASE("event gate") {
  CHECK_FALSE(event_gate(RawWord{366, 10}, RawWord{366, 10}, 4));
  CHECK(event_gate(RawWord{366, 10}, RawWord{560, 10}, 4));
  CHECK(event_gate(std::nullopt, RawWord{0, 10}, 4));
  CHECK_FALSE(event_gate(RawWord{366, 10}, RawWord{363, 10}, 4));
  CHECK(event_gate(RawWord{366, 10}, RawWord{362, 10}, 4));
}

TEST_CASE("node encoder compares against the last transmitted word") {
  NodeEncoder e(0, code({1, -1}), 4);
  CHECK(e.next_frame(RawWord{100, 10}).active);
  CHECK_FALSE(e.next_frame(RawWord{102, 10}).active);
  CHECK_FALSE(e.next_frame(RawWord{103, 10}).active);
  CHECK(e.next_frame(RawWord{104, 10}).active);  // drift accumulates against 100
  CHECK(e.previous()->bits == 104);
  const auto quiet = e.next_frame(RawWord{104, 10});
  CHECK_FALSE(quiet.active);
  CHECK(quiet.chips.empty());
}

TEST_CASE("level mapping") {
  EncoderConfig cfg;
  cfg.level_high = 0.3;
  const ChipStream s{0, {1, -1}, true};
  CHECK(chips_to_levels(s, cfg) == std::vector<double>{0.3, 0.0});
  cfg.mapping = LevelMapping::bipolar;
  CHECK(chips_to_levels(s, cfg) == std::vector<double>{0.3, -0.3});
  CHECK(chips_to_levels(ChipStream{0, {}, false}, cfg).empty());
  CHECK(cfg.idle() == 0.0);
}

TEST_CASE("two equal chips render as one continuous level") {
  EncoderConfig cfg;
  cfg.chip_duration = 50e-6;
  cfg.jitter_frac = 0.0;
  cfg.transition_time = 0.0;
  cfg.frame_period = 1e-3;
  const double fs = 1e6;
  const std::vector<double> levels{3.3, 3.3, 0.0, 3.3};
  const auto w = render_waveform(levels, cfg, fs, 1);
  // samples 0..99 high, 100..149 low, 150..199 high, then idle
  std::size_t run = 0;
  while (run < w.samples.size() && w.samples[run] == 3.3) ++run;
  CHECK(run == 100);
  const double measured = static_cast<double>(run) / fs;
  CHECK(measured == Approx(100e-6));
  // the measured 104.3 us two-chip level is within 10% of this
  CHECK(std::abs(104.3e-6 - measured) / measured < 0.1);
  for (std::size_t i = 100; i < 150; ++i) REQUIRE(w.samples[i] == 0.0);
  for (std::size_t i = 150; i < 200; ++i) REQUIRE(w.samples[i] == 3.3);
  for (std::size_t i = 200; i < w.samples.size(); ++i) REQUIRE(w.samples[i] == 0.0);
}

TEST_CASE("zero jitter puts every edge on the grid") {
  EncoderConfig cfg;
  cfg.chip_duration = 50e-6;
  cfg.jitter_frac = 0.0;
  std::mt19937_64 rng(3);
  const std::vector<double> levels{3.3, 0.0, 3.3, 3.3, 0.0, 3.3};
  const auto tl = make_timeline(levels, cfg, 1e-3, rng);
  for (const auto& e : tl.edges) {
    const double k = (e.time - 1e-3) / cfg.chip_duration;
    CHECK(k == Approx(std::round(k)).margin(1e-9));
  }
  CHECK(tl.frame_end == Approx(1e-3 + 6 * 50e-6));
}

TEST_CASE("jittered edges stay within 10% of T and frames within [8.0, 8.8] ms") {
  EncoderConfig cfg;
  cfg.chip_duration = 50e-6;
  cfg.jitter_frac = 0.1;
  const auto book = assign_codes(16, false);
  std::mt19937_64 words(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = encode_word(book.code_for(static_cast<std::size_t>(trial % 16)), RawWord{static_cast<std::uint32_t>(words() % 1024), 10});
    const auto levels = chips_to_levels(s, cfg);
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial));
    const auto tl = make_timeline(levels, cfg, 0.0, rng);
    for (const auto& e : tl.edges) {
      const double nominal = std::round(e.time / cfg.chip_duration) * cfg.chip_duration;
      REQUIRE(std::abs(e.time - nominal) <= 0.1 * cfg.chip_duration + 1e-12);
    }
    const double dur = tl.frame_end - tl.frame_start;
    REQUIRE(dur >= 8e-3 - 1e-12);
    REQUIRE(dur <= 8.8e-3 + 1e-12);
  }
}

TEST_CASE("every chip's central half sits at its level under 10% jitter") {
  EncoderConfig cfg;
  cfg.chip_duration = 25e-6;
  cfg.jitter_frac = 0.1;
  cfg.transition_time = 0.15e-6;
  const double fs = 800e3;
  const auto book = assign_codes(16, true);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = encode_word(book.code_for(seed % 16), RawWord{static_cast<std::uint32_t>((seed * 97) % 1024), 10});
    const auto levels = chips_to_levels(s, cfg);
    const auto w = render_waveform(levels, cfg, fs, seed);
    for (std::size_t c = 0; c < levels.size(); ++c) {
      const double lo = (static_cast<double>(c) + 0.25) * cfg.chip_duration * fs;
      const double hi = (static_cast<double>(c) + 0.75) * cfg.chip_duration * fs;
      for (auto i = static_cast<std::size_t>(std::ceil(lo)); static_cast<double>(i) <= hi; ++i) REQUIRE(w.samples[i] == levels[c]);
    }
  }
}

TEST_CASE("rendered samples stay within the level range") {
  EncoderConfig cfg;
  const auto book = assign_codes(16, true);
  const auto levels = chips_to_levels(encode_word(book.code_for(3), RawWord{0b1011001110, 10}), cfg);
  const auto w = render_waveform(levels, cfg, 800e3, 9);
  for (double v : w.samples) REQUIRE((v >= cfg.low() - 1e-12 && v <= cfg.high() + 1e-12));
  CHECK(w.duration() == Approx(cfg.frame_period));
  CHECK(w.frame_end - w.frame_start >= 10 * 32 * cfg.chip_duration - 1e-12);
}

TEST_CASE("transition ramps are linear") {
  EncoderConfig cfg;
  cfg.chip_duration = 10e-6;
  cfg.jitter_frac = 0.0;
  cfg.transition_time = 1e-6;
  cfg.frame_period = 100e-6;
  const auto w = render_waveform(std::vector<double>{1.0, 0.0}, cfg, 10e6, 1);
  CHECK(w.samples[0] == Approx(0.0));
  CHECK(w.samples[5] == Approx(0.5));
  CHECK(w.samples[10] == Approx(1.0));
  CHECK(w.samples[105] == Approx(0.5));
  CHECK(w.samples[110] == Approx(0.0));
}

TEST_CASE("sample rate must give ten samples per chip") {
  EncoderConfig cfg;
  CHECK_THROWS_AS(render_waveform(std::vector<double>{1.0}, cfg, 9.0 / cfg.chip_duration, 1), Error);
  CHECK_NOTHROW(render_waveform(std::vector<double>{1.0}, cfg, 10.0 / cfg.chip_duration, 1));
}

TEST_CASE("frame schedule") {
  const auto s = frame_schedule(10, 16, 50e-6, 12.8e-3);
  CHECK(s.frame_duration == Approx(8e-3).epsilon(1e-15));
  CHECK(s.gap == Approx(4.8e-3).epsilon(1e-12));
  CHECK(frame_schedule(10, 1024, 8e-3 / (10 * 1024), 12.8e-3).frame_duration == Approx(8e-3).epsilon(1e-15));
  CHECK(8e-3 / (10 * 1024) == Approx(0.78125e-6).epsilon(1e-15));
  CHECK_THROWS_AS(frame_schedule(10, 16, 50e-6, 8e-3), Error);
  CHECK_THROWS_AS(frame_schedule(10, 16, 50e-6, 8.7e-3, 0.1), Error);
  CHECK_NOTHROW(frame_schedule(10, 16, 50e-6, 8.9e-3, 0.1));
}

TEST_CASE("frame duration is linear in k, n and T") {
  for (unsigned k : {1u, 4u, 10u, 16u})
    for (std::size_t n : {2u, 16u, 256u})
      for (double T : {1e-6, 25e-6, 50e-6}) {
        const double frame = static_cast<double>(k) * static_cast<double>(n) * T;
        const auto s = frame_schedule(k, n, T, frame * 2);
        REQUIRE(s.frame_duration == Approx(frame).epsilon(1e-15));
        REQUIRE(s.gap == Approx(frame).epsilon(1e-12));
      }
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.jitter_frac = 0.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = EncoderConfig{};
  cfg.transition_time = 5e-6;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = EncoderConfig{};
  cfg.k_bits = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
