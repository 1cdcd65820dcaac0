#include "ctp/harness/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ctp {

void write_log(std::ostream& out, std::span<const LogRow> rows, std::uint64_t seed) {
  out << "# seed=" << seed << '\n' << kLogHeader << '\n';
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.9f,%.9f,%.9f\n", static_cast<long long>(r.epoch), r.train_loss, r.val_ade,
                  r.val_fde);
    out << buf;
  }
}

std::vector<LogRow> read_log(std::istream& in) {
  std::vector<LogRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kLogHeader) throw ParseError(lineno, "unexpected log header '" + line + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError(lineno, "expected 4 columns");
    try {
      rows.push_back({std::stoll(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])});
    } catch (const std::exception&) {
      throw ParseError(lineno, "non-numeric value");
    }
  }
  if (!header_seen) throw ParseError(lineno, "empty log");
  return rows;
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint c;
  c.config_text = echo_train_config(config);
  c.params = init_parameters<float>(config.model, Rng::mix(config.seed ^ 0x5eedULL));
  c.optimizer.hyper = config.adam;
  if (config.objective == Objective::causal_gan) {
    c.discriminator = init_discriminator<float>({config.disc_hidden}, Rng::mix(config.seed ^ 0xd15cULL));
    c.disc_optimizer.hyper = config.adam;
  }
  return c;
}

namespace {

Var<float> noise(Tape<float>& tape, Index rows, Index cols, Rng& rng) {
  Matrix<float> z(rows, cols);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(rng.normal());
  return tape.constant(std::move(z));
}

std::vector<const SceneWindow*> repeat(std::span<const SceneWindow* const> windows, Index times) {
  std::vector<const SceneWindow*> out;
  out.reserve(windows.size() * static_cast<std::size_t>(times));
  for (Index k = 0; k < times; ++k) out.insert(out.end(), windows.begin(), windows.end());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw ContractError("failed writing '" + path.string() + "'");
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const SceneWindow> train_windows,
                  std::span<const SceneWindow> val_windows, const TrainOptions& options) {
  config.validate();
  if (train_windows.empty()) throw ContractError("train: the training list is empty");
  const ModelConfig& m = config.model;

  Checkpoint ck = initial_checkpoint(config);
  InterventionSpec spec = config.intervention_spec(Phase::train);
  InterventionSpec* spec_ptr = config.causal ? &spec : nullptr;
  Rng order = Rng::derive(config.seed, 0x0de7);
  Rng draws = Rng::derive(config.seed, 0x2015e);

  auto run_step = [&](std::span<const SceneWindow* const> windows) -> double {
    const auto batch = make_batch<float>(windows);
    const Index n = batch.peds;
    Tape<float> tape;
    Binding<float> p(tape, ck.params);
    Var<float> loss, disc_loss;
    Binding<float> disc;
    switch (config.objective) {
      case Objective::causal_l2: {
        const auto b = causal_predict(p, m, batch, spec_ptr, noise(tape, n, m.noise_dim, draws), tape);
        loss = causal_l2_loss(b.causal, batch.last_obs, batch.future);
        break;
      }
      case Objective::causal_nll: {
        const auto b = causal_predict(p, m, batch, spec_ptr, Var<float>(), tape);
        loss = causal_nll_loss(batch.future_disp, *b.gaussian);
        break;
      }
      case Objective::variety_k: {
        // k copies of the batch in one pass, each with its own noise.
        const auto copies = repeat(windows, config.variety_k);
        const auto big = make_batch<float>(copies);
        const auto b = causal_predict(p, m, big, spec_ptr, noise(tape, big.peds, m.noise_dim, draws), tape);
        std::vector<Var<float>> losses;
        for (Index k = 0; k < config.variety_k; ++k) {
          losses.push_back(causal_l2_loss(slice_rows(b.causal, k * n, n), batch.last_obs, batch.future));
        }
        loss = variety_loss<float>(losses);
        break;
      }
      case Objective::causal_gan: {
        const auto b = causal_predict(p, m, batch, spec_ptr, noise(tape, n, m.noise_dim, draws), tape);
        disc = Binding<float>(tape, ck.discriminator);
        const Binding<float> frozen(tape, ck.discriminator, false);
        const auto g = gan_step_losses(disc, frozen, batch.future_disp, b.causal);
        loss = causal_l2_loss(b.causal, batch.last_obs, batch.future) +
               scale(g.generator, static_cast<float>(config.gan_weight));
        disc_loss = g.discriminator;
        break;
      }
    }
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("loss is " + std::to_string(value));

    GradientMap<float> grads = backward(loss, p);
    clip_global_norm(grads, config.clip_norm);
    GradientMap<float> disc_grads;
    if (disc_loss.valid()) {
      tape.zero_grad();
      disc_grads = backward(disc_loss, disc);
      clip_global_norm(disc_grads, config.clip_norm);
    }
    adam_step(ck.params, grads, ck.optimizer);
    if (disc_loss.valid()) adam_step(ck.discriminator, disc_grads, ck.disc_optimizer);
    if (spec.mean_ready()) {
      spec.running_mean = spec.running_mean.cast<float>().cast<double>();
      ck.running_mean = spec.running_mean;
    }
    return value;
  };

  TrainResult result;
  double best_ade = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> perm(train_windows.size());
  std::uint64_t step = 0;
  const std::uint64_t seeds[] = {config.seed};
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[order.below(i)]);

    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t s = 0; s < perm.size(); s += static_cast<std::size_t>(config.batch_size)) {
      std::vector<const SceneWindow*> windows;
      for (std::size_t i = s; i < std::min(perm.size(), s + static_cast<std::size_t>(config.batch_size)); ++i) {
        windows.push_back(&train_windows[perm[i]]);
      }
      ++step;
      try {
        total += run_step(windows);
      } catch (const NumericError& e) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + ": " + e.what());
      }
      ++steps;
    }
    ck.step = step;

    LogRow row{epoch, total / static_cast<double>(steps), std::numeric_limits<double>::quiet_NaN(),
               std::numeric_limits<double>::quiet_NaN()};
    if (!val_windows.empty()) {
      const EvalResult ev = evaluate(ck, val_windows, "val", seeds, {config.eval_k, false});
      row.val_ade = row.val_fde = 0.0;
      for (const auto& r : ev.per_window) {
        row.val_ade += r.ade;
        row.val_fde += r.fde;
      }
      row.val_ade /= static_cast<double>(ev.per_window.size());
      row.val_fde /= static_cast<double>(ev.per_window.size());
      if (row.val_ade < best_ade) {
        best_ade = row.val_ade;
        result.best_checkpoint = ck;
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
  }
  result.final_checkpoint = ck;
  if (result.best_epoch == 0) {
    result.best_checkpoint = ck;
    result.best_epoch = config.epochs;
  }

  if (!options.out_dir.empty()) {
    const std::filesystem::path dir(options.out_dir);
    std::filesystem::create_directories(dir);
    save_checkpoint((dir / "checkpoint").string(), result.final_checkpoint);
    save_checkpoint((dir / "best").string(), result.best_checkpoint);
    std::ostringstream log;
    write_log(log, result.log, config.seed);
    write_text(dir / "log", log.str());
  }
  return result;
}

Predictor::Predictor(const Checkpoint& checkpoint)
    : config_(checkpoint.config()), params_(&checkpoint.params), running_mean_(checkpoint.running_mean) {}

std::vector<Matrix<double>> Predictor::sample(const SceneWindow& window, Index k, Rng& rng) const {
  if (k < 1) throw ContractError("sample: k must be >= 1");
  const ModelConfig& m = config_.model;
  InterventionSpec spec = config_.intervention_spec(Phase::eval);
  spec.running_mean = running_mean_;
  InterventionSpec* spec_ptr = config_.causal ? &spec : nullptr;
  const Matrix<double> last_obs = window.observed.rightCols(2);
  const Index n = window.size();

  Tape<float> tape(false);
  Binding<float> p(tape, *params_, false);
  std::vector<Matrix<double>> out;
  if (m.family == Family::stgat) {
    const std::vector<const SceneWindow*> copies(static_cast<std::size_t>(k), &window);
    const auto batch = make_batch<float>(copies);
    const auto b = causal_predict(p, m, batch, spec_ptr, noise(tape, batch.peds, m.noise_dim, rng), tape);
    const Matrix<double> disp = b.causal.value().cast<double>();
    for (Index i = 0; i < k; ++i) out.push_back(decode_trajectory(disp.middleRows(i * n, n), last_obs));
  } else {
    const auto batch = make_batch<float>(window);
    const auto b = causal_predict(p, m, batch, spec_ptr, Var<float>(), tape);
    const GaussianParams g = to_params(*b.gaussian);
    for (Index i = 0; i < k; ++i) out.push_back(decode_trajectory(sample_displacements(g, rng), last_obs));
  }
  return out;
}

Matrix<float> Predictor::infer(const SceneWindow& window, bool dual) const {
  const ModelConfig& m = config_.model;
  InterventionSpec spec = config_.intervention_spec(Phase::eval);
  spec.running_mean = running_mean_;
  Tape<float> tape(false);
  Binding<float> p(tape, *params_, false);
  const auto batch = make_batch<float>(window);
  const Var<float> z =
      m.family == Family::stgat ? tape.constant(Matrix<float>::Zero(window.size(), m.noise_dim)) : Var<float>();
  return causal_predict(p, m, batch, dual ? &spec : nullptr, z, tape).causal.value();
}

EvalResult evaluate(const Checkpoint& checkpoint, std::span<const SceneWindow> windows, const std::string& split,
                    std::span<const std::uint64_t> seeds, const EvalOptions& options) {
  if (options.k < 1) throw ContractError("evaluate: k must be >= 1");
  const Predictor predictor(checkpoint);
  EvalResult result;
  for (std::uint64_t seed : seeds) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
      Rng rng = Rng::derive(seed, i);
      const auto samples = predictor.sample(windows[i], options.k, rng);
      const BestOfK best = best_of_k(samples, windows[i].future, options.squared);
      result.per_window.push_back(
          {windows[i].scene, split, options.k, best.metrics.ade, best.metrics.fde, seed, 0.0});
    }
  }
  result.per_scene = aggregate_by_scene(result.per_window);
  return result;
}

TimingResult time_inference(const Checkpoint& checkpoint, std::span<const SceneWindow> windows, Index repetitions,
                            bool dual) {
  if (repetitions < 1) throw ContractError("time_inference: repetitions must be >= 1");
  if (windows.empty()) throw ContractError("time_inference: no windows");
  const Predictor predictor(checkpoint);
  TimingResult out;
  out.repetitions = repetitions;
  // untimed warm-up
  for (std::size_t i = 0; i < std::min<std::size_t>(windows.size(), 10); ++i) predictor.infer(windows[i], dual);
  for (Index r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (const auto& w : windows) predictor.infer(w, dual);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    out.seconds_per_window.push_back(elapsed.count() / static_cast<double>(windows.size()));
  }
  out.mean = std::accumulate(out.seconds_per_window.begin(), out.seconds_per_window.end(), 0.0) /
             static_cast<double>(repetitions);
  return out;
}

}  // namespace ctp
