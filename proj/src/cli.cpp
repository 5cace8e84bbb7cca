#include "mplstm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <vector>

#include <CLI11.hpp>

#include "mplstm/data.hpp"
#include "mplstm/experiment.hpp"
#include "mplstm/training.hpp"

namespace mplstm::cli {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct SynthArgs {
  std::string task = "modsum";
  std::size_t k = 4;
  std::size_t n = 8;
  double noise = 0.25;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 1000;
  std::uint64_t seed = 0;
  std::string out_prefix;
};

struct TrainArgs {
  std::string config, train, val, out, metrics;
};

struct EvalArgs {
  std::string model, data;
};

struct BenchArgs {
  std::string config, data;
  std::size_t reps = 3;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
  if (a.task != "modsum") throw ConfigError("synth: unknown task \"" + a.task + "\"");
  Rng rng(a.seed);
  ModSumSpec spec;
  spec.num_classes = a.k;
  spec.length = a.n;
  spec.noise_std = a.noise;
  spec.num_samples = a.train_samples;
  const Dataset train = gen_modsum(spec, rng);
  spec.num_samples = a.test_samples;
  const Dataset test = gen_modsum(spec, rng);
  write_dataset(a.out_prefix + ".train.mps", train);
  write_dataset(a.out_prefix + ".test.mps", test);
  out << "wrote " << a.out_prefix << ".train.mps (" << train.size() << " samples) and "
      << a.out_prefix << ".test.mps (" << test.size() << " samples)\n";
  return kOk;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  const ExperimentConfig config = ExperimentConfig::load(a.config);
  const Dataset train = read_dataset(a.train);
  const Dataset val = read_dataset(a.val);
  const TrainOutcome outcome = run_training(config, train, val, [&](const MetricsRow& r) {
    out << "epoch " << r.epoch << " train_loss " << fmt("%.6g", r.train_loss) << " train_acc "
        << fmt("%.6g", r.train_acc) << " val_loss " << fmt("%.6g", r.val_loss) << " val_acc "
        << fmt("%.6g", r.val_acc) << '\n';
  });
  write_model(a.out, config, outcome.model);
  emit_metrics_csv(a.metrics, outcome.rows);
  return kOk;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  const ModelFile file = read_model(a.model);
  const Dataset data = read_dataset(a.data);
  const auto& cfg = file.model.config;
  if (data.num_perspectives != cfg.num_perspectives || data.feature_dim != cfg.input_dim ||
      data.num_classes != cfg.num_classes) {
    throw ValidationError("eval: dataset shape (m, d, K) does not match the model");
  }
  const EvalResult r = evaluate(file.model, data);
  out << "samples " << r.total << '\n';
  out << "loss " << fmt("%.17g", r.loss) << '\n';
  out << "accuracy " << fmt("%.17g", r.accuracy) << '\n';
  out << "confusion (rows: true class, columns: predicted class)\n";
  for (const auto& row : r.confusion) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << row[c];
    out << '\n';
  }
  return kOk;
}

int do_gradcheck(std::uint64_t seed, bool verbose, std::ostream& out) {
  const auto grid = default_gradcheck_grid();
  const GradcheckReport report = gradcheck(seed, grid);
  for (const auto& row : report.rows) {
    const auto worst = std::max_element(
        row.tensors.begin(), row.tensors.end(),
        [](const TensorCheck& a, const TensorCheck& b) { return a.max_rel_error < b.max_rel_error; });
    out << (row.pass ? "PASS " : "FAIL ") << row.config.describe() << "  max_rel_err "
        << fmt("%.3e", row.max_rel_error);
    if (worst != row.tensors.end()) out << " (" << worst->name << ")";
    if (row.failing > 0) {
      out << "  " << row.failing << " element(s) over tolerance, worst |a-f| "
          << fmt("%.3e", row.failing_abs_error);
    }
    out << '\n';
    if (verbose) {
      for (const auto& t : row.tensors) {
        out << "    " << t.name << ' ' << fmt("%.3e", t.max_rel_error) << '\n';
      }
    }
  }
  const auto failed = std::count_if(report.rows.begin(), report.rows.end(),
                                    [](const GradcheckRow& r) { return !r.pass; });
  out << "gradcheck: " << report.rows.size() - static_cast<std::size_t>(failed) << "/"
      << report.rows.size() << " configurations pass, worst relative error "
      << fmt("%.3e", report.max_rel_error()) << " (tolerance " << fmt("%.0e", report.tolerance)
      << ", step " << fmt("%.0e", report.step) << ")\n";
  return report.all_pass() ? kOk : kGradcheckFailed;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

int do_bench(const BenchArgs& a, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  if (a.reps == 0) throw ConfigError("bench: --reps must be >= 1");
  const ExperimentConfig config = ExperimentConfig::load(a.config);
  const Dataset data = read_dataset(a.data);
  if (data.empty()) throw ValidationError("bench: dataset is empty");
  const NetworkConfig net = config.network(data);
  ModelTrainer trainer(net, config.train());

  std::vector<std::vector<SequenceSample>> adapted(trainer.model().members.size());
  for (std::size_t p = 0; p < adapted.size(); ++p) {
    for (const auto& s : data.samples) adapted[p].push_back(adapt_input(net, s, p));
  }
  const double count = static_cast<double>(data.size());
  std::vector<double> epoch_s, fwd_s, bwd_s;
  for (std::size_t rep = 0; rep < a.reps; ++rep) {
    auto t0 = clock::now();
    double forward_total = 0.0;
    double both_total = 0.0;
    for (std::size_t p = 0; p < adapted.size(); ++p) {
      const Network& member = trainer.model().members[p];
      for (const auto& s : adapted[p]) {
        const auto a0 = clock::now();
        const ForwardTrace trace = forward(member, s);
        const auto a1 = clock::now();
        const BackwardResult g = backward(member, trace, s.label);
        const auto a2 = clock::now();
        forward_total += std::chrono::duration<double>(a1 - a0).count();
        both_total += std::chrono::duration<double>(a2 - a1).count();
        (void)g;
      }
    }
    fwd_s.push_back(forward_total / count);
    bwd_s.push_back(both_total / count);

    t0 = clock::now();
    trainer.train_epoch(data);
    epoch_s.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  out << "bench " << to_string(config.cell) << "/" << to_string(config.fusion)
      << (config.bidirectional ? " bi" : " uni") << " hidden " << config.hidden << " samples "
      << data.size() << " reps " << a.reps << '\n';
  out << "epoch_seconds median " << fmt("%.6g", median(epoch_s)) << " mean "
      << fmt("%.6g", mean(epoch_s)) << '\n';
  out << "forward_seconds_per_sequence median " << fmt("%.6g", median(fwd_s)) << " mean "
      << fmt("%.6g", mean(fwd_s)) << '\n';
  out << "backward_seconds_per_sequence median " << fmt("%.6g", median(bwd_s)) << " mean "
      << fmt("%.6g", mean(bwd_s)) << '\n';
  return kOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-perspective LSTM experiments", "mplstm"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-perspective task");
  synth_cmd->add_option("--task", synth.task, "Task name (modsum)")->capture_default_str();
  synth_cmd->add_option("--k", synth.k, "Number of classes K")->capture_default_str();
  synth_cmd->add_option("--n", synth.n, "Sequence length")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "Gaussian noise std")->capture_default_str();
  synth_cmd->add_option("--train-samples", synth.train_samples)->capture_default_str();
  synth_cmd->add_option("--test-samples", synth.test_samples)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--out-prefix", synth.out_prefix, "Writes PREFIX.train.mps / PREFIX.test.mps")
      ->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write per-epoch metrics");
  train_cmd->add_option("--config", train.config, "Experiment JSON")->required();
  train_cmd->add_option("--train", train.train, "Training MPS1 file")->required();
  train_cmd->add_option("--val", train.val, "Validation MPS1 file")->required();
  train_cmd->add_option("--out", train.out, "Output MPM1 model")->required();
  train_cmd->add_option("--metrics", train.metrics, "Output metrics CSV")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset");
  eval_cmd->add_option("--model", eval.model)->required();
  eval_cmd->add_option("--data", eval.data)->required();

  std::uint64_t gc_seed = 0;
  bool gc_verbose = false;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();
  gc_cmd->add_flag("--verbose", gc_verbose, "Print every tensor");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time training and per-sequence passes");
  bench_cmd->add_option("--config", bench.config)->required();
  bench_cmd->add_option("--data", bench.data)->required();
  bench_cmd->add_option("--reps", bench.reps)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (synth_cmd->parsed()) return do_synth(synth, out);
    if (train_cmd->parsed()) return do_train(train, out);
    if (eval_cmd->parsed()) return do_eval(eval, out);
    if (gc_cmd->parsed()) return do_gradcheck(gc_seed, gc_verbose, out);
    if (bench_cmd->parsed()) return do_bench(bench, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  }
  err << "error: no subcommand\n";
  return kUsage;
}

}  // namespace mplstm::cli
