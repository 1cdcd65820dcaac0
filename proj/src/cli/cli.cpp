#include "ctp/cli/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "ctp/data/synth.hpp"
#include "ctp/harness/trainer.hpp"

namespace fs = std::filesystem;

namespace ctp {

namespace {

constexpr std::int64_t kFileFrameStride = 10;

/// Writes next to the destination first so a failed run leaves no half file.
void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw Error("no such file or directory: '" + path + "'");
}

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw Error(where + ": '" + text + "' is not a non-negative integer seed");
  }
  return v;
}

/// An explicit --seed wins, then CTP_SEED, then `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CTP_SEED"); env && *env) return parse_seed(env, "CTP_SEED");
  return fallback;
}

std::vector<SceneWindow> windows_of_bundle(const std::vector<SceneSet>& scenes, const std::string& held_out,
                                           bool train_side) {
  std::vector<SceneWindow> out;
  bool found = false;
  for (const auto& s : scenes) {
    if (s.name == held_out) {
      found = true;
      if (!train_side) out.insert(out.end(), s.test_windows.begin(), s.test_windows.end());
    } else if (train_side) {
      out.insert(out.end(), s.train_windows.begin(), s.train_windows.end());
    }
  }
  if (!found) throw Error("scene '" + held_out + "' is not in the bundle");
  return out;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void write_windows_file(const std::string& path, const std::vector<SceneWindow>& windows) {
  std::ostringstream s;
  write_dataset_file(s, window_observations(windows, kFileFrameStride));
  write_file(path, s.str());
}

std::vector<SceneWindow> read_windows_file(const std::string& path, const std::string& scene) {
  return build_windows(read_dataset_path(path), scene, {kObsLen, kPredLen, kWindowLen});
}

std::vector<SceneSet> read_bundle(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.csv";
  require_file(manifest.string());
  std::istringstream in(read_file(manifest.string()));
  std::string line;
  std::getline(in, line);
  if (line != "scene,train_windows,test_windows") throw ParseError(1, "unexpected manifest header '" + line + "'");
  std::vector<SceneSet> scenes;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 3) throw ParseError(lineno, "expected 3 columns");
    SceneSet s;
    s.name = cells[0];
    s.train_windows = read_windows_file((root / s.name / "train.txt").string(), s.name);
    s.test_windows = read_windows_file((root / s.name / "test.txt").string(), s.name);
    if (std::to_string(s.train_windows.size()) != cells[1] || std::to_string(s.test_windows.size()) != cells[2]) {
      throw IntegrityError("bundle scene '" + s.name + "' does not match its manifest counts");
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void write_bias_svg(std::ostream& out, const std::vector<BiasReport>& reports) {
  static const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
  const char* names[] = {"neighbors", "parallel", "meet", "gather"};
  const double w = 640, h = 360, left = 50, bottom = 300, top = 30;
  double peak = 0.0;
  for (const auto& r : reports) peak = std::max({peak, r.neighbors_avg, r.parallel_avg, r.meet_avg, r.gather_avg});
  if (peak <= 0.0) peak = 1.0;
  const double group = (w - left - 20) / 4.0;
  const double bar = (group - 20) / static_cast<double>(std::max<std::size_t>(reports.size(), 1));

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << w - 10 << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << left - 5 << "\" y=\"" << top + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(peak)
      << "</text>\n";
  out << "<text x=\"" << left - 5 << "\" y=\"" << bottom << "\" font-size=\"11\" text-anchor=\"end\">0</text>\n";
  for (int g = 0; g < 4; ++g) {
    const double gx = left + 10 + g * group;
    for (std::size_t e = 0; e < reports.size(); ++e) {
      const auto& r = reports[e];
      const double v = g == 0 ? r.neighbors_avg : g == 1 ? r.parallel_avg : g == 2 ? r.meet_avg : r.gather_avg;
      const double bh = (bottom - top) * v / peak;
      out << "<rect x=\"" << fmt(gx + static_cast<double>(e) * bar) << "\" y=\"" << fmt(bottom - bh) << "\" width=\""
          << fmt(bar - 2) << "\" height=\"" << fmt(bh) << "\" fill=\"" << kColors[e % 6] << "\"><title>"
          << svg_escape(r.environment) << ' ' << names[g] << ' ' << v << "</title></rect>\n";
    }
    out << "<text x=\"" << fmt(gx + (group - 20) / 2) << "\" y=\"" << bottom + 16
        << "\" font-size=\"12\" text-anchor=\"middle\">" << names[g] << "</text>\n";
  }
  for (std::size_t e = 0; e < reports.size(); ++e) {
    const double y = 322 + 14 * static_cast<double>(e % 2);
    const double x = left + 150 * static_cast<double>(e / 2);
    out << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << kColors[e % 6]
        << "\"/><text x=\"" << x + 14 << "\" y=\"" << y << "\" font-size=\"11\">" << svg_escape(reports[e].environment)
        << "</text>\n";
  }
  out << "</svg>\n";
}

void write_trajectory_svg(std::ostream& out, std::span<const SceneWindow> windows,
                          std::span<const Matrix<double>> predictions) {
  if (windows.size() != predictions.size()) throw ContractError("trajectory plot: one prediction per window");
  const double panel = 260;
  const std::size_t cols = std::min<std::size_t>(std::max<std::size_t>(windows.size(), 1), 3);
  const std::size_t rows = (windows.size() + cols - 1) / cols;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << panel * static_cast<double>(cols) << "\" height=\""
      << panel * static_cast<double>(std::max<std::size_t>(rows, 1)) + 24 << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const SceneWindow& w = windows[k];
    const Matrix<double>& pred = predictions[k];
    double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
    auto grow = [&](double x, double y) {
      lo_x = std::min(lo_x, x);
      hi_x = std::max(hi_x, x);
      lo_y = std::min(lo_y, y);
      hi_y = std::max(hi_y, y);
    };
    for (Index i = 0; i < w.size(); ++i) {
      for (Index t = 0; t < kObsLen; ++t) grow(w.observed(i, 2 * t), w.observed(i, 2 * t + 1));
      for (Index t = 0; t < kPredLen; ++t) {
        grow(w.future(i, 2 * t), w.future(i, 2 * t + 1));
        grow(pred(i, 2 * t), pred(i, 2 * t + 1));
      }
    }
    const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-6});
    const double ox = panel * static_cast<double>(k % cols), oy = panel * static_cast<double>(k / cols);
    const double s = (panel - 30) / span;
    auto px = [&](double x) { return fmt(ox + 15 + (x - lo_x) * s); };
    auto py = [&](double y) { return fmt(oy + panel - 15 - (y - lo_y) * s); };
    out << "<g><rect x=\"" << ox + 2 << "\" y=\"" << oy + 2 << "\" width=\"" << panel - 4 << "\" height=\""
        << panel - 4 << "\" fill=\"none\" stroke=\"#ccc\"/>\n";
    out << "<text x=\"" << ox + 8 << "\" y=\"" << oy + 16 << "\" font-size=\"11\">" << svg_escape(w.scene) << " @"
        << w.start_frame << "</text>\n";
    for (Index i = 0; i < w.size(); ++i) {
      auto line = [&](const char* color, const char* dash, auto&& point, Index first, Index count) {
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash << " points=\"";
        for (Index t = first; t < first + count; ++t) {
          const auto [x, y] = point(t);
          out << px(x) << ',' << py(y) << ' ';
        }
        out << "\"/>\n";
      };
      const Eigen::Vector2d last = w.observed_at(i, kObsLen - 1);
      line("#555", "", [&](Index t) { return std::pair{w.observed(i, 2 * t), w.observed(i, 2 * t + 1)}; }, 0, kObsLen);
      line("#2a9d40", "", [&](Index t) {
        return t == 0 ? std::pair{last.x(), last.y()} : std::pair{w.future(i, 2 * (t - 1)), w.future(i, 2 * (t - 1) + 1)};
      }, 0, kPredLen + 1);
      line("#d62728", " stroke-dasharray=\"4 3\"", [&](Index t) {
        return t == 0 ? std::pair{last.x(), last.y()} : std::pair{pred(i, 2 * (t - 1)), pred(i, 2 * (t - 1) + 1)};
      }, 0, kPredLen + 1);
    }
    out << "</g>\n";
  }
  const double ly = panel * static_cast<double>(std::max<std::size_t>(rows, 1)) + 16;
  out << "<text x=\"8\" y=\"" << ly << "\" font-size=\"11\"><tspan fill=\"#555\">observed</tspan>  "
      << "<tspan fill=\"#2a9d40\">ground truth</tspan>  <tspan fill=\"#d62728\">predicted</tspan></text>\n";
  out << "</svg>\n";
}

namespace {

struct Flags {
  // shared
  std::string out;
  std::optional<std::uint64_t> seed;
  // ingest / stats
  std::vector<std::string> inputs;
  Index train_stride = 1;
  Index test_stride = kWindowLen;
  Index stride = 1;
  // synth
  Index scenes = 200;
  double p_train = 0.9;
  double p_test = 0.1;
  double parallel_rate = 0.0;
  double gather_rate = 0.0;
  // train / eval / time
  std::string config;
  std::string train_file;
  std::string val_file;
  std::string data;
  std::string bundle;
  std::string held_out;
  std::optional<Index> epochs;
  std::string checkpoint;
  std::string split = "test";
  Index k = 20;
  std::vector<std::uint64_t> seeds;
  bool squared = false;
  bool per_window = false;
  Index reps = 3;
  Index limit = 0;
  // report
  std::vector<std::string> metrics;
  std::string bias;
  Index plot_windows = 6;
};

std::vector<SceneWindow> eval_windows(const Flags& f, const TrainConfig& cfg) {
  if (!f.data.empty()) {
    require_file(f.data);
    return read_windows_file(f.data, fs::path(f.data).stem().string());
  }
  if (!f.bundle.empty()) {
    const std::string held = f.held_out.empty() ? cfg.held_out : f.held_out;
    if (held.empty()) throw Error("--bundle needs a held-out scene (--held-out or [data] held_out)");
    return windows_of_bundle(read_bundle(f.bundle), held, false);
  }
  throw Error("give --data FILE or --bundle DIR");
}

int cmd_ingest(const Flags& f, std::ostream& out) {
  std::vector<SceneSet> scenes;
  for (const auto& in : f.inputs) {
    require_file(in);
    if (fs::is_directory(in)) {
      for (auto& s : load_scene_directory(in, f.train_stride, f.test_stride)) scenes.push_back(std::move(s));
    } else {
      scenes.push_back(build_scene_set(fs::path(in).stem().string(), read_dataset_path(in), f.train_stride,
                                       f.test_stride));
    }
  }
  std::ostringstream manifest;
  manifest << "scene,train_windows,test_windows\n";
  for (const auto& s : scenes) {
    write_windows_file((fs::path(f.out) / s.name / "train.txt").string(), s.train_windows);
    write_windows_file((fs::path(f.out) / s.name / "test.txt").string(), s.test_windows);
    manifest << s.name << ',' << s.train_windows.size() << ',' << s.test_windows.size() << '\n';
    out << s.name << ": " << s.train_windows.size() << " train windows, " << s.test_windows.size()
        << " test windows\n";
  }
  write_file(fs::path(f.out) / "manifest.csv", manifest.str());
  return 0;
}

int cmd_stats(const Flags& f, std::ostream& out) {
  std::vector<BiasReport> reports;
  auto add = [&](const fs::path& p) {
    const std::string env = p.stem().string();
    const auto windows = build_windows(read_dataset_path(p.string()), env, {kObsLen, kPredLen, f.stride});
    reports.push_back(bias_stats(windows, {}, env));
  };
  for (const auto& in : f.inputs) {
    require_file(in);
    if (fs::is_directory(in)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& p : files) add(p);
    } else {
      add(in);
    }
  }
  std::ostringstream csv;
  write_bias_csv(csv, reports);
  write_file(f.out, csv.str());
  out << csv.str();
  return 0;
}

int cmd_synth(const Flags& f, std::ostream& out) {
  ScenarioConfig sc;
  sc.scenes = f.scenes;
  sc.parallel_rate = f.parallel_rate;
  sc.gather_rate = f.gather_rate;
  sc.seed = resolve_seed(f.seed, 0);
  const auto [train_set, test_set] = biased_pair(sc, f.p_train, f.p_test);
  const fs::path dir(f.out);
  auto emit = [&](const SyntheticSceneSet& set, const std::string& name) {
    std::ostringstream obs, labels;
    write_dataset_file(obs, synth_observations(set, kFileFrameStride));
    write_labels_csv(labels, set.labels);
    write_file(dir / (name + ".txt"), obs.str());
    write_file(dir / (name + "_labels.csv"), labels.str());
    out << name << ": " << set.windows.size() << " scenes, context A left-turn rate "
        << left_turn_rate(set, Context::A) << ", context B " << left_turn_rate(set, Context::B) << '\n';
  };
  emit(train_set, "train");
  emit(test_set, "test");
  return 0;
}

int cmd_train(const Flags& f, std::ostream& out) {
  TrainConfig cfg;
  if (!f.config.empty()) {
    require_file(f.config);
    cfg = parse_train_config(read_file(f.config));
  }
  cfg.seed = resolve_seed(f.seed, cfg.seed);
  if (f.epochs) cfg.epochs = *f.epochs;
  if (!f.held_out.empty()) cfg.held_out = f.held_out;
  cfg = parse_train_config(echo_train_config(cfg));  // range checks on the overridden values

  std::vector<SceneWindow> train_windows, val_windows;
  if (!f.bundle.empty()) {
    if (cfg.held_out.empty()) throw Error("--bundle needs a held-out scene (--held-out or [data] held_out)");
    const auto scenes = read_bundle(f.bundle);
    train_windows = windows_of_bundle(scenes, cfg.held_out, true);
    val_windows = windows_of_bundle(scenes, cfg.held_out, false);
  } else if (!f.train_file.empty()) {
    require_file(f.train_file);
    train_windows = read_windows_file(f.train_file, "train");
    if (!f.val_file.empty()) {
      require_file(f.val_file);
      val_windows = read_windows_file(f.val_file, "val");
    }
  } else {
    throw Error("give --train FILE or --bundle DIR");
  }

  TrainOptions opts;
  opts.out_dir = f.out;
  opts.on_epoch = [&](const LogRow& r) {
    out << "epoch " << r.epoch << " loss " << r.train_loss << " val_ade " << r.val_ade << " val_fde " << r.val_fde
        << '\n';
  };
  const auto result = train(cfg, train_windows, val_windows, opts);
  write_file(fs::path(f.out) / "config", echo_train_config(cfg));
  out << "best epoch " << result.best_epoch << ", wrote " << f.out << '\n';
  return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  require_file(f.checkpoint);
  Checkpoint ck;
  if (!f.config.empty()) {
    require_file(f.config);
    ck = load_checkpoint(f.checkpoint, config_digest(parse_train_config(read_file(f.config))));
  } else {
    ck = load_checkpoint(f.checkpoint);
  }
  const auto windows = eval_windows(f, ck.config());
  std::vector<std::uint64_t> seeds = f.seeds;
  if (seeds.empty()) seeds.push_back(resolve_seed(f.seed, 0));
  const auto result = evaluate(ck, windows, f.split, seeds, {f.k, f.squared});
  std::ostringstream csv;
  write_metrics_csv(csv, f.per_window ? result.per_window : result.per_scene);
  write_file(f.out, csv.str());
  for (const auto& r : result.per_scene) {
    out << r.scene << " seed " << r.seed << ": ADE " << r.ade << " FDE " << r.fde << '\n';
  }
  return 0;
}

int cmd_time(const Flags& f, std::ostream& out) {
  require_file(f.checkpoint);
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  auto windows = eval_windows(f, ck.config());
  if (f.limit > 0 && static_cast<Index>(windows.size()) > f.limit) windows.resize(static_cast<std::size_t>(f.limit));
  std::ostringstream csv;
  csv << "family,mode,repetition,sec_per_window\n";
  char buf[64];
  for (bool dual : {false, true}) {
    const auto t = time_inference(ck, windows, f.reps, dual);
    const std::string prefix = std::string(to_string(ck.family())) + (dual ? ",dual," : ",single,");
    for (std::size_t r = 0; r < t.seconds_per_window.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.9f", t.seconds_per_window[r]);
      csv << prefix << r + 1 << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.9f", t.mean);
    csv << prefix << "mean," << buf << '\n';
    out << (dual ? "dual" : "single") << " pass: " << t.mean << " s/window over " << t.repetitions
        << " repetitions\n";
  }
  write_file(f.out, csv.str());
  return 0;
}

int cmd_report(const Flags& f, std::ostream& out) {
  if (f.metrics.empty() && f.bias.empty() && f.checkpoint.empty()) {
    throw Error("report needs --metrics, --bias or --checkpoint");
  }
  const fs::path dir(f.out);
  if (!f.metrics.empty()) {
    std::vector<MetricsRecord> all;
    for (const auto& m : f.metrics) {
      require_file(m);
      std::istringstream in(read_file(m));
      for (auto& r : read_metrics_csv(in)) all.push_back(std::move(r));
    }
    std::ostringstream csv;
    write_metrics_csv(csv, all);
    write_file(dir / "results.csv", csv.str());
    out << "results.csv: " << all.size() << " rows\n";
  }
  if (!f.bias.empty()) {
    require_file(f.bias);
    std::istringstream in(read_file(f.bias));
    std::ostringstream svg;
    write_bias_svg(svg, read_bias_csv(in));
    write_file(dir / "bias.svg", svg.str());
    out << "bias.svg\n";
  }
  if (!f.checkpoint.empty()) {
    require_file(f.checkpoint);
    const Checkpoint ck = load_checkpoint(f.checkpoint);
    auto windows = eval_windows(f, ck.config());
    if (static_cast<Index>(windows.size()) > f.plot_windows) windows.resize(static_cast<std::size_t>(f.plot_windows));
    const Predictor predictor(ck);
    const std::uint64_t seed = resolve_seed(f.seed, 0);
    std::vector<Matrix<double>> preds;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      Rng rng = Rng::derive(seed, i);
      const auto samples = predictor.sample(windows[i], f.k, rng);
      preds.push_back(samples[best_of_k(samples, windows[i].future).index]);
    }
    std::ostringstream svg;
    write_trajectory_svg(svg, windows, preds);
    write_file(dir / "trajectories.svg", svg.str());
    out << "trajectories.svg\n";
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal trajectory prediction toolkit", "ctp"};
  app.require_subcommand(1);
  Flags f;

  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { f.seed = v; },
                                            "Seed (falls back to CTP_SEED)");
  };

  auto* ingest = app.add_subcommand("ingest", "Cut trajectory files into a windowed dataset bundle");
  ingest->add_option("--input", f.inputs, "Trajectory file(s) or directory of <scene>.txt files")->required();
  ingest->add_option("--out", f.out, "Bundle directory")->required();
  ingest->add_option("--train-stride", f.train_stride, "Window stride for training windows")->check(CLI::PositiveNumber);
  ingest->add_option("--test-stride", f.test_stride, "Window stride for test windows")->check(CLI::PositiveNumber);

  auto* stats = app.add_subcommand("stats", "Interaction statistics per environment as CSV");
  stats->add_option("--input", f.inputs, "Trajectory file(s) or directories")->required();
  stats->add_option("--out", f.out, "CSV path")->required();
  stats->add_option("--stride", f.stride, "Window stride in frames")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Write a biased train/test pair of synthetic scenes");
  synth->add_option("--out", f.out, "Output directory")->required();
  synth->add_option("--scenes", f.scenes, "Scenes per set")->check(CLI::PositiveNumber);
  synth->add_option("--p-train", f.p_train, "Context-A left-turn probability in train")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--p-test", f.p_test, "Context-A left-turn probability in test")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--parallel-rate", f.parallel_rate, "Companion probability")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--gather-rate", f.gather_rate, "Gatherer probability")->check(CLI::Range(0.0, 1.0));
  seed_opt(synth);

  auto* trainc = app.add_subcommand("train", "Train a model; writes checkpoint, best, log and config");
  trainc->add_option("--config", f.config, "Config file");
  trainc->add_option("--out", f.out, "Run directory")->required();
  trainc->add_option("--train", f.train_file, "Windows file to train on");
  trainc->add_option("--val", f.val_file, "Windows file for per-epoch held-out metrics");
  trainc->add_option("--bundle", f.bundle, "Ingested bundle (leave-one-out with --held-out)");
  trainc->add_option("--held-out", f.held_out, "Held-out scene of the bundle");
  trainc->add_option_function<Index>("--epochs", [&](const Index& v) { f.epochs = v; }, "Override epochs");
  seed_opt(trainc);

  auto* evalc = app.add_subcommand("eval", "Best-of-k ADE/FDE as CSV");
  evalc->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  evalc->add_option("--config", f.config, "Config the checkpoint must match");
  evalc->add_option("--data", f.data, "Windows file");
  evalc->add_option("--bundle", f.bundle, "Ingested bundle");
  evalc->add_option("--held-out", f.held_out, "Scene to evaluate from the bundle");
  evalc->add_option("--split", f.split, "Split label written to the CSV");
  evalc->add_option("--k", f.k, "Samples per window")->check(CLI::PositiveNumber);
  evalc->add_option("--seeds", f.seeds, "Several seeds")->delimiter(',');
  evalc->add_flag("--squared", f.squared, "Squared-distance ADE/FDE");
  evalc->add_flag("--per-window", f.per_window, "One row per window instead of per scene");
  evalc->add_option("--out", f.out, "CSV path")->required();
  seed_opt(evalc);

  auto* timec = app.add_subcommand("time", "Inference seconds per window, single and dual pass");
  timec->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  timec->add_option("--data", f.data, "Windows file");
  timec->add_option("--bundle", f.bundle, "Ingested bundle");
  timec->add_option("--held-out", f.held_out, "Scene to time from the bundle");
  timec->add_option("--reps", f.reps, "Repetitions")->check(CLI::PositiveNumber);
  timec->add_option("--limit", f.limit, "Use at most this many windows")->check(CLI::NonNegativeNumber);
  timec->add_option("--out", f.out, "CSV path")->required();

  auto* report = app.add_subcommand("report", "Results table and SVG plots");
  report->add_option("--metrics", f.metrics, "Metrics CSV files to consolidate");
  report->add_option("--bias", f.bias, "Bias statistics CSV to plot");
  report->add_option("--checkpoint", f.checkpoint, "Checkpoint for trajectory plots");
  report->add_option("--data", f.data, "Windows file for trajectory plots");
  report->add_option("--bundle", f.bundle, "Ingested bundle for trajectory plots");
  report->add_option("--held-out", f.held_out, "Scene of the bundle to plot");
  report->add_option("--k", f.k, "Samples per window; the closest is drawn")->check(CLI::PositiveNumber);
  report->add_option("--windows", f.plot_windows, "Windows to plot")->check(CLI::PositiveNumber);
  report->add_option("--out", f.out, "Output directory")->required();
  seed_opt(report);

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    // A missing required option is reported ahead of extras; name unknown flags first.
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::string unknown;
    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string name = args[i].substr(0, args[i].find('='));
      if (name.rfind("--", 0) == 0 && sub->get_option_no_throw(name) == nullptr) unknown += " " + name;
    }
    err << "error: " << (unknown.empty() ? std::string(e.what()) : "unknown option(s):" + unknown) << "\n\n";
    err << sub->help();
    return 2;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(f, out);
    if (stats->parsed()) return cmd_stats(f, out);
    if (synth->parsed()) return cmd_synth(f, out);
    if (trainc->parsed()) return cmd_train(f, out);
    if (evalc->parsed()) return cmd_eval(f, out);
    if (timec->parsed()) return cmd_time(f, out);
    if (report->parsed()) return cmd_report(f, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace ctp
