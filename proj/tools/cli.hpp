#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tactile/tactile.hpp"

namespace tactile::cli {

enum exit_code : int { ok = 0, verification_failed = 1, usage_error = 2, io_error = 3 };

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::io:
    case ErrorKind::parse: return io_error;
    default: return usage_error;
  }
}

namespace detail {

// Writes to `path`, or to `fallback` when the path is empty or "-".
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : path_(path) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_.open(path);
      if (!file_) throw Error(ErrorKind::io, "cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& stream() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw Error(ErrorKind::io, "write failed for " + (path_.empty() ? std::string("stdout") : path_));
  }

 private:
  std::string path_;
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

inline SystemConfig config_or_default(const std::string& path) { return path.empty() ? SystemConfig{} : load_system_config(path); }

inline std::string sidecar_path(const std::string& trace_path) {
  std::filesystem::path p(trace_path);
  p.replace_extension(".truth.json");
  return p.string();
}

struct SimulateArgs {
  std::string config, pressure, initial, out, truth;
  std::size_t frames = 1;
};

inline int simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const auto cfg = config_or_default(a.config);
  std::vector<PressureFrame> grids;
  if (!a.pressure.empty()) grids = read_pressure_csv(a.pressure);
  if (grids.empty()) grids.push_back(PressureFrame::zeros(cfg.rows, cfg.cols));
  const std::size_t frames = std::max(a.frames, grids.size());
  if (a.frames < grids.size()) err << "note: pressure file holds " << grids.size() << " grids; simulating all of them\n";

  Simulator sim(cfg);
  if (!a.initial.empty()) {
    const auto init = read_pressure_csv(a.initial);
    if (init.empty()) throw Error(ErrorKind::parse, a.initial + ": no pressure grid");
    sim.set_steady_state(init.front());
  }

  std::vector<AnalogTrace> parts;
  nlohmann::json truth = nlohmann::json::array();
  std::size_t clipped = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    auto r = sim.step(grids[std::min(f, grids.size() - 1)]);
    clipped += r.clipped;
    truth.push_back(to_json(r.truth));
    parts.push_back(std::move(r.trace));
  }
  const auto trace = concatenate(parts);

  Output o(a.out, out);
  write_trace_csv(o.stream(), trace);
  o.close();

  std::string truth_path = a.truth;
  if (truth_path.empty() && !a.out.empty() && a.out != "-") truth_path = sidecar_path(a.out);
  if (!truth_path.empty()) {
    nlohmann::json doc{{"config", to_json(cfg)}, {"codebook", to_json(sim.codebook())}, {"frames", truth}};
    Output t(truth_path, out);
    t.stream() << doc.dump(2) << '\n';
    t.close();
  }
  if (clipped) err << "warning: " << clipped << " samples clipped by the channel ADC\n";
  return ok;
}

struct DecodeArgs {
  std::string config, trace, out, heatmap;
};

inline int decode(const DecodeArgs& a, std::ostream& out, std::ostream&) {
  const auto cfg = config_or_default(a.config);
  const auto trace = read_trace_csv(a.trace);
  const auto book = assign_codes(cfg.node_count, cfg.skip_dc_row);
  const auto frames = decode_trace(trace, book, cfg.decoder_config(), cfg.decode_options());

  nlohmann::json doc{{"node_count", cfg.node_count}, {"frames", nlohmann::json::array()}};
  for (const auto& f : frames) doc["frames"].push_back(to_json(f, cfg.sensor));
  Output o(a.out, out);
  o.stream() << doc.dump(2) << '\n';
  o.close();

  if (!a.heatmap.empty()) {
    Reconstructor rec(cfg.sensor, cfg.rows, cfg.cols);
    Output h(a.heatmap, out);
    bool first = true;
    for (const auto& f : frames) {
      if (!first) h.stream() << '\n';
      first = false;
      write_pressure_csv(h.stream(), rec.apply(f));
    }
    h.close();
  }
  return ok;
}

struct RoundtripArgs {
  std::string config;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  std::optional<double> uniform_noise_frac;
  bool all_active = false;
};

inline int roundtrip(const RoundtripArgs& a, std::ostream& out, std::ostream&) {
  auto cfg = config_or_default(a.config);
  if (a.uniform_noise_frac) {
    cfg.channel.noise = {NoiseKind::uniform, *a.uniform_noise_frac * cfg.noise_guarantee_bound()};
    cfg.validate();
  }
  RoundtripOptions ro;
  ro.trials = a.trials;
  ro.seed = a.seed;
  ro.activity = a.all_active ? ActivityPattern::all_active : ActivityPattern::random_subsets;
  const auto s = run_roundtrip(cfg, ro);
  out << "frames " << s.exact_frames << "/" << s.trials << " exact\n";
  out << "bits " << s.bit_errors << " errors / " << s.decided_bits << " decided (BER " << s.bit_error_rate() << ")\n";
  out << "nodes " << s.node_errors << " errors / " << s.active_nodes << " active, " << s.ghosts << " ghosts / " << s.inactive_nodes
      << " inactive\n";
  if (s.clipped_samples) out << "clipped samples " << s.clipped_samples << '\n';
  for (const auto& m : s.mismatches) out << "  " << m << '\n';
  out << (s.all_exact() ? "PASS" : "FAIL") << '\n';
  return s.all_exact() ? ok : verification_failed;
}

struct ScalingArgs {
  std::string config, out;
  unsigned k = 10;
  std::vector<std::size_t> orders{16, 64, 256, 1024, 4096};
  double target_frame_ms = 8.0;
  std::size_t trials = 3;
  double t_floor_us = 0.1;
  std::uint64_t seed = 1;
  bool omit_timing = false;
};

inline int sweep_scaling_cmd(const ScalingArgs& a, std::ostream& out, std::ostream& err) {
  const auto base = config_or_default(a.config);
  ScalingOptions so;
  so.k = a.k;
  so.orders = a.orders;
  so.target_frame = a.target_frame_ms * 1e-3;
  so.trials = a.trials;
  so.t_floor = a.t_floor_us * 1e-6;
  so.seed = a.seed;
  const auto rows = sweep_scaling(base, so);
  Output o(a.out, out);
  write_scaling_csv(o.stream(), rows, a.omit_timing);
  o.close();
  bool all_ok = true;
  for (const auto& r : rows) {
    if (!r.feasible) err << "note: order " << r.code_order << " has T below the floor\n";
    if (r.decode_ok_rate < 1.0) all_ok = false;
  }
  return all_ok ? ok : verification_failed;
}

struct NoiseArgs {
  std::string config, out, model;
  std::vector<double> noise{0.0};
  std::vector<double> jitter{0.0};
  std::vector<unsigned> adc_bits;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
};

inline int sweep_noise_cmd(const NoiseArgs& a, std::ostream& out, std::ostream&) {
  auto base = config_or_default(a.config);
  if (a.model == "uniform") base.channel.noise.kind = NoiseKind::uniform;
  else if (a.model == "gaussian") base.channel.noise.kind = NoiseKind::gaussian;
  NoiseSweepOptions no;
  no.noise_levels = a.noise;
  no.jitter_fracs = a.jitter;
  no.adc_bits = a.adc_bits.empty() ? std::vector<unsigned>{base.channel.adc_bits} : a.adc_bits;
  no.trials = a.trials;
  no.seed = a.seed;
  const auto rows = sweep_noise(base, no);
  Output o(a.out, out);
  write_ber_csv(o.stream(), rows);
  o.close();
  return ok;
}

inline int codegen(std::size_t nodes, bool no_skip, const std::string& path, std::ostream& out, std::ostream& err) {
  const auto book = assign_codes(nodes, !no_skip);
  const auto rep = verify_orthogonality(book);
  if (!is_orthogonal(rep, book.order())) {
    err << "orthogonality check failed: max cross dot " << rep.max_cross_dot << '\n';
    return verification_failed;
  }
  Output o(path, out);
  o.stream() << to_json(book).dump(2) << '\n';
  o.close();
  err << nodes << " nodes, order " << book.order() << ", max cross dot " << rep.max_cross_dot << '\n';
  return ok;
}

inline int config_init(const std::string& path, std::ostream& out) {
  Output o(path, out);
  o.stream() << to_json(SystemConfig{}).dump(2) << '\n';
  o.close();
  return ok;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Simulate, decode and verify a CDMA single-wire tactile array"};
  app.name("tactile-cdma");
  app.require_subcommand(1);

  std::size_t cg_nodes = 16;
  bool cg_no_skip = false;
  std::string cg_out;
  auto* cg = app.add_subcommand("codegen", "Generate and verify an orthogonal codebook");
  cg->add_option("-n,--nodes", cg_nodes, "Number of sensing nodes")->required()->check(CLI::PositiveNumber);
  cg->add_flag("--no-skip-dc", cg_no_skip, "Allow the all-ones row to be assigned");
  cg->add_option("-o,--out", cg_out, "Output JSON (default stdout)");

  detail::SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate frames and write the channel trace");
  sim->add_option("-c,--config", sa.config, "System config JSON");
  sim->add_option("-p,--pressure", sa.pressure, "Pressure CSV; blank lines separate successive grids");
  sim->add_option("-f,--frames", sa.frames, "Frames to simulate (the last grid is held)")->check(CLI::PositiveNumber);
  sim->add_option("--initial", sa.initial, "Steady-state pressure grid already transmitted");
  sim->add_option("-o,--out", sa.out, "Trace CSV (default stdout)");
  sim->add_option("--truth", sa.truth, "Ground-truth JSON (default: next to the trace)");

  detail::DecodeArgs da;
  auto* dec = app.add_subcommand("decode", "Decode a trace CSV into per-node words");
  dec->add_option("-c,--config", da.config, "System config JSON");
  dec->add_option("-t,--trace", da.trace, "Trace CSV")->required();
  dec->add_option("-o,--out", da.out, "Decoded frames JSON (default stdout)");
  dec->add_option("--heatmap", da.heatmap, "Reconstructed pressure grids CSV");

  detail::RoundtripArgs ra;
  double noise_frac = -1.0;
  auto* rt = app.add_subcommand("roundtrip", "Simulate, decode and compare against ground truth");
  rt->add_option("-c,--config", ra.config, "System config JSON");
  rt->add_option("--trials", ra.trials, "Number of frames");
  rt->add_option("--seed", ra.seed, "Seed");
  rt->add_option("--uniform-noise-frac", noise_frac, "Uniform noise bound as a multiple of the guarantee bound")->check(CLI::NonNegativeNumber);
  rt->add_flag("--all-active", ra.all_active, "Every node transmits in every frame");

  detail::ScalingArgs sc;
  auto* ss = app.add_subcommand("sweep-scaling", "Constant frame time across code orders");
  ss->add_option("-c,--config", sc.config, "Base system config JSON");
  ss->add_option("-k,--k", sc.k, "Bits per word")->check(CLI::Range(1u, 31u));
  ss->add_option("--nodes", sc.orders, "Code orders (powers of 2)")->delimiter(',');
  ss->add_option("--target-frame-ms", sc.target_frame_ms, "Frame duration to hold constant")->check(CLI::PositiveNumber);
  ss->add_option("--trials", sc.trials, "Frames decoded per row");
  ss->add_option("--t-floor-us", sc.t_floor_us, "Chip durations below this are flagged infeasible");
  ss->add_option("--seed", sc.seed, "Seed");
  ss->add_flag("--omit-timing", sc.omit_timing, "Write NA for wall time so reports are reproducible");
  ss->add_option("-o,--out", sc.out, "Report CSV (default stdout)");

  detail::NoiseArgs na;
  auto* sn = app.add_subcommand("sweep-noise", "Bit error rate over noise, jitter and ADC resolution");
  sn->add_option("-c,--config", na.config, "Base system config JSON");
  sn->add_option("--noise", na.noise, "Noise levels in volts")->delimiter(',');
  sn->add_option("--noise-model", na.model, "uniform or gaussian (default: config, gaussian if none)")
      ->check(CLI::IsMember({"uniform", "gaussian"}));
  sn->add_option("--jitter", na.jitter, "Jitter fractions of T")->delimiter(',');
  sn->add_option("--adc-bits", na.adc_bits, "Channel ADC resolutions (0 = ideal)")->delimiter(',');
  sn->add_option("--trials", na.trials, "Frames per cell");
  sn->add_option("--seed", na.seed, "Seed");
  sn->add_option("-o,--out", na.out, "Report CSV (default stdout)");

  std::string ci_out;
  auto* ci = app.add_subcommand("config-init", "Write the default system config");
  ci->add_option("-o,--out", ci_out, "Output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return usage_error;
  }

  try {
    if (*cg) return detail::codegen(cg_nodes, cg_no_skip, cg_out, out, err);
    if (*sim) return detail::simulate(sa, out, err);
    if (*dec) return detail::decode(da, out, err);
    if (*rt) {
      if (noise_frac >= 0) ra.uniform_noise_frac = noise_frac;
      return detail::roundtrip(ra, out, err);
    }
    if (*ss) return detail::sweep_scaling_cmd(sc, out, err);
    if (*sn) return detail::sweep_noise_cmd(na, out, err);
    if (*ci) return detail::config_init(ci_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return usage_error;
  }
  return usage_error;
}

}  // namespace tactile::cli
