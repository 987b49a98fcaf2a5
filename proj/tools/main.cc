// Copyright 2026 The gvswhip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gvswhip/dataset.h"
#include "gvswhip/error.h"
#include "gvswhip/eval.h"
#include "gvswhip/pita.h"

namespace {

using namespace gvswhip;

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SimulateArgs {
  std::vector<double> waypoints;
  std::string out;
  std::string svg;
};

struct GenArgs {
  std::uint64_t n = 100;
  std::string out = "dataset";
};

struct TrainArgs {
  std::string dataset = "dataset";
  std::string out = "policy.gvsp";
  std::string strategy = "IL";
  std::string log;
  int iterations = 1000;
  int batch = 32;
  double lr = 1e-4;
  double ema_decay = 0.9999;
  double lambda_qd = 1e-4;
  int d_model = 256;
  int blocks = 4;
  int heads = 4;
  int goal_tokens = 4;
  int to_iterations = 200;
  double to_lr = 1e-4;
  int to_batch = 4;
  double il_to_lr_scale = 0.1;
};

struct AdaptArgs {
  std::string mode = "proj_finetune";
  int inner_steps = 2;
  double lr_tta = 1e-3;
  double guide_from = 0.5;
  int ddim_steps = 20;
  bool no_kbc = false;
  bool no_pos = false;

  AdaptConfig ToConfig() const {
    AdaptConfig c;
    c.mode = ParseAdaptMode(mode);
    c.inner_steps = inner_steps;
    c.lr_tta = lr_tta;
    c.guide_from = guide_from;
    c.ddim_steps = ddim_steps;
    c.use_kbc = !no_kbc;
    c.use_pos = !no_pos;
    c.Validate();
    return c;
  }
};

struct SampleArgs {
  std::string checkpoint = "policy.gvsp";
  std::vector<double> goal;
  std::string out;
  std::string diagnostics;
  bool rollout = false;
  AdaptArgs adapt;
};

struct EvalArgs {
  std::string checkpoint = "policy.gvsp";
  std::string dataset = "dataset";
  std::string split = "test";
  int limit = 0;
  std::string csv;
  std::string report;
  AdaptArgs adapt;
};

struct PlotArgs {
  std::vector<std::string> inputs;
  std::string out = "plot.svg";
  std::string title;
  bool log_y = false;
  int bins = 20;
};

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
}

std::string ReadFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIoError, "cannot read '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void AddAdaptOptions(CLI::App* cmd, AdaptArgs& a) {
  cmd->add_option("--mode", a.mode, "adaptation mode")
      ->check(CLI::IsMember({"none", "sample_grad", "proj_finetune", "full_finetune"}))
      ->capture_default_str();
  cmd->add_option("--inner-steps", a.inner_steps, "adaptation steps per diffusion step")
      ->capture_default_str();
  cmd->add_option("--lr-tta", a.lr_tta, "adaptation step size")->capture_default_str();
  cmd->add_option("--guide-from", a.guide_from, "guide steps with t < guide_from * T")
      ->capture_default_str();
  cmd->add_option("--ddim-steps", a.ddim_steps)->capture_default_str();
  cmd->add_flag("--no-kbc", a.no_kbc, "drop the boundary penalty from guidance");
  cmd->add_flag("--no-pos", a.no_pos, "drop the pose loss from guidance");
}

int RunSimulate(const Globals&, const SimulateArgs& a) {
  ControlInput control;
  for (int k = 0; k < 4; ++k) {
    control.theta(0, k) = a.waypoints[k];
    control.theta(1, k) = a.waypoints[4 + k];
  }
  control.Validate();
  const RodModel model;
  Trajectory traj = simulate(model, control);
  std::cout << "valid: " << (traj.valid ? "true" : "false") << "\n";
  if (traj.valid) {
    traj.goal = label_goal(traj);
    std::printf("max_speed_index: %d\ngoal: %.6f %.6f %.6f\n", max_speed_index(traj),
                traj.goal.x(), traj.goal.y(), traj.goal.z());
  }
  if (!a.out.empty()) write_record(traj, a.out);
  if (!a.svg.empty()) {
    Series path{"tip", {}, {}};
    const int tip = traj.n_points() - 1;
    for (int r = 0; r < traj.length(); ++r) {
      path.x.push_back(traj.point(r, tip).x());
      path.y.push_back(traj.point(r, tip).z());
    }
    WriteFile(a.svg, LineChartSvg("tip path (side view)", "x (m)", "z (m)", {path}));
  }
  return 0;
}

int RunGenerate(const Globals& g, const GenArgs& a) {
  const RodModel model;
  GenerateOptions options;
  options.threads = g.threads;
  options.progress = [](std::uint64_t done, std::uint64_t total) {
    if (done == total || done % 50 == 0) {
      std::cerr << "\rsimulated " << done << "/" << total << std::flush;
      if (done == total) std::cerr << "\n";
    }
  };
  const DatasetManifest m = generate(model, a.n, g.seed, a.out, options);
  std::printf("records: %llu valid of %llu\nfilter_rate: %.4f\nmanifest_hash: %016llx\n",
              static_cast<unsigned long long>(m.n_valid),
              static_cast<unsigned long long>(m.n_requested), m.filter_rate(),
              static_cast<unsigned long long>(m.Hash()));
  return 0;
}

int RunTrain(const Globals& g, const TrainArgs& a) {
  StrategyConfig cfg;
  cfg.strategy = ParseLearningStrategy(a.strategy);
  cfg.il.iterations = a.iterations;
  cfg.il.batch = a.batch;
  cfg.il.lr = a.lr;
  cfg.il.ema_decay = a.ema_decay;
  cfg.il.lambda_qd = a.lambda_qd;
  cfg.il.seed = g.seed;
  cfg.il.net.d_model = a.d_model;
  cfg.il.net.blocks = a.blocks;
  cfg.il.net.heads = a.heads;
  cfg.il.net.goal_tokens = a.goal_tokens;
  cfg.il.Validate();
  cfg.to.iterations = a.to_iterations;
  cfg.to.lr = a.to_lr;
  cfg.to.batch = a.to_batch;
  cfg.to.seed = g.seed;
  cfg.to.Validate();
  cfg.il_to_lr_scale = a.il_to_lr_scale;

  const DatasetManifest manifest = LoadManifest(a.dataset);
  const std::vector<TrainingExample> examples =
      MakeExamples(LoadTrajectories(a.dataset, manifest, Split::kTrain), cfg.il.stride);
  if (examples.empty()) {
    throw Error(ErrorCode::kEmptyEval, "no valid training records in '" + a.dataset + "'");
  }
  std::ostringstream log;
  log << "phase,iteration,loss,grad_norm\n";
  const int every = std::max(1, a.iterations / 20);
  cfg.il_progress = [&](const TrainStats& s) {
    log << "il," << s.iteration << "," << s.loss.total << "," << s.grad_norm << "\n";
    if (s.iteration % every == 0) {
      std::fprintf(stderr, "il %llu loss %.5f\n", static_cast<unsigned long long>(s.iteration),
                   s.loss.total);
    }
  };
  cfg.to_progress = [&](const TrajOptStats& s) {
    log << "to," << s.iteration << "," << s.loss << "," << s.grad_norm << "\n";
    if (s.iteration % std::max(1, a.to_iterations / 20) == 0) {
      std::fprintf(stderr, "to %d loss %.5f\n", s.iteration, s.loss);
    }
  };
  std::fprintf(stderr, "training %s on %zu examples\n", a.strategy.c_str(), examples.size());
  const DiffusionPolicy policy = finetune_to(RodModel{}, examples, cfg);
  save_checkpoint(policy, a.out);
  if (!a.log.empty()) WriteFile(a.log, log.str());
  std::printf("checkpoint: %s\niterations: %llu\n", a.out.c_str(),
              static_cast<unsigned long long>(policy.iterations_done));
  return 0;
}

int RunSample(const Globals& g, const SampleArgs& a) {
  const AdaptConfig config = a.adapt.ToConfig();
  const DiffusionPolicy policy = load_checkpoint(a.checkpoint);
  const RodModel model;
  const Eigen::Vector3d goal(a.goal[0], a.goal[1], a.goal[2]);
  const GuidedSample s =
      guided_sample_from_noise(policy, model, goal, config, CaseNoise(policy, g.seed, 0));
  std::printf("mode: %s\nsample_seconds: %.3f\nfallbacks: %d\n",
              std::string(AdaptModeName(config.mode)).c_str(), s.seconds, s.fallbacks);
  if (!a.out.empty()) {
    std::ostringstream csv;
    for (Eigen::Index c = 0; c < s.Q.cols(); ++c) csv << (c ? "," : "") << "q" << c;
    csv << "\n";
    char buf[32];
    for (Eigen::Index r = 0; r < s.Q.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.Q.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.Q(r, c));
        csv << (c ? "," : "") << buf;
      }
      csv << "\n";
    }
    WriteFile(a.out, csv.str());
  }
  if (!a.diagnostics.empty()) WriteFile(a.diagnostics, GuidanceCsv(s));
  if (a.rollout) {
    const RolloutScore score = rollout_and_score(model, s.Q, goal, policy.config.stride);
    std::printf("distance_m: %.6f\nstrike_index: %d\n", score.distance, score.strike_index);
  }
  return 0;
}

int RunEval(const Globals& g, const EvalArgs& a) {
  const AdaptConfig config = a.adapt.ToConfig();
  const DatasetManifest manifest = LoadManifest(a.dataset);
  std::vector<Eigen::Vector3d> goals;
  for (const ManifestEntry& e : manifest.entries) {
    if (!e.valid) continue;
    if ((a.split == "test" && !e.test_split) || (a.split == "train" && e.test_split)) continue;
    goals.push_back(e.goal);
    if (a.limit > 0 && static_cast<int>(goals.size()) == a.limit) break;
  }
  if (goals.empty()) {
    throw Error(ErrorCode::kEmptyEval,
                "split '" + a.split + "' of '" + a.dataset + "' has no valid records");
  }
  const DiffusionPolicy policy = load_checkpoint(a.checkpoint);
  const EvalReport report = evaluate_policy(RodModel{}, policy, goals, config, g.seed, g.threads);
  std::cout << report.ToText();
  if (!a.csv.empty()) WriteFile(a.csv, report.ToCsv());
  if (!a.report.empty()) WriteFile(a.report, report.ToText());
  return 0;
}

int RunPlot(const PlotArgs& a) {
  std::string svg;
  try {
    std::vector<Series> groups;
    for (const std::string& path : a.inputs) {
      for (const EvalCase& c : EvalReport::FromCsv(ReadFile(path)).cases) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const Series& s) { return s.name == c.mode; });
        if (it == groups.end()) it = groups.insert(groups.end(), Series{c.mode, {}, {}});
        it->y.push_back(c.distance);
      }
    }
    svg = HistogramSvg(a.title.empty() ? "min tip-goal distance" : a.title, "distance (m)",
                       groups, a.bins);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kFormatError) throw;
    std::vector<Series> series;
    std::string x_label;
    for (const std::string& path : a.inputs) {
      const CsvTable t = ParseCsv(ReadFile(path));
      int x = t.column("step");
      if (x < 0) x = t.column("iteration");
      if (x < 0) x = 0;
      x_label = t.header[x];
      std::vector<int> ys;
      for (size_t c = 0; c < t.header.size(); ++c) {
        if (t.header[c].rfind("loss", 0) == 0) ys.push_back(static_cast<int>(c));
      }
      if (ys.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "'" + path + "' has no loss columns to plot");
      }
      const int phase = t.column("phase");
      for (int y : ys) {
        const std::string base = a.inputs.size() > 1 ? path + ":" + t.header[y] : t.header[y];
        const size_t first = series.size();
        for (const auto& row : t.rows) {
          const std::string name = phase < 0 ? base : base + " (" + row[phase] + ")";
          auto it = std::find_if(series.begin() + first, series.end(),
                                 [&](const Series& s) { return s.name == name; });
          if (it == series.end()) it = series.insert(series.end(), Series{name, {}, {}});
          try {
            it->x.push_back(std::stod(row[x]));
            it->y.push_back(std::stod(row[y]));
          } catch (const std::exception&) {
            throw Error(ErrorCode::kFormatError, "non-numeric value in '" + path + "'");
          }
        }
      }
    }
    svg = LineChartSvg(a.title.empty() ? "loss" : a.title, x_label, "loss", series, a.log_y);
  }
  WriteFile(a.out, svg);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kOutOfDomain:
    case ErrorCode::kEmptyEval:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kTooShort:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-rope whip simulation, dataset, diffusion policy training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option values; sections name subcommands");
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "simulate one control and print its label");
  simulate_cmd
      ->add_option("--waypoints", sim.waypoints,
                   "8 joint-angle waypoints (rad): 4 azimuth then 4 elevation")
      ->expected(8)
      ->required();
  simulate_cmd->add_option("--out", sim.out, "write the record to this file");
  simulate_cmd->add_option("--svg", sim.svg, "write the tip path as SVG");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-dataset", "simulate random controls into a dataset");
  gen_cmd->add_option("--n", gen.n, "number of controls")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a policy checkpoint");
  train_cmd->add_option("--dataset", tr.dataset)->capture_default_str();
  train_cmd->add_option("--out", tr.out, "checkpoint path")->capture_default_str();
  train_cmd->add_option("--strategy", tr.strategy, "learning strategy")
      ->check(CLI::IsMember({"IL", "TO", "IL_TO"}))
      ->capture_default_str();
  train_cmd->add_option("--log", tr.log, "write the loss log as CSV");
  train_cmd->add_option("--iterations", tr.iterations)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--ema-decay", tr.ema_decay)->capture_default_str();
  train_cmd->add_option("--lambda-qd", tr.lambda_qd)->capture_default_str();
  train_cmd->add_option("--d-model", tr.d_model)->capture_default_str();
  train_cmd->add_option("--blocks", tr.blocks)->capture_default_str();
  train_cmd->add_option("--heads", tr.heads)->capture_default_str();
  train_cmd->add_option("--goal-tokens", tr.goal_tokens)->capture_default_str();
  train_cmd->add_option("--to-iterations", tr.to_iterations)->capture_default_str();
  train_cmd->add_option("--to-lr", tr.to_lr)->capture_default_str();
  train_cmd->add_option("--to-batch", tr.to_batch)->capture_default_str();
  train_cmd->add_option("--il-to-lr-scale", tr.il_to_lr_scale)->capture_default_str();

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "sample one trajectory for a goal");
  sample_cmd->add_option("--checkpoint", sa.checkpoint)->capture_default_str();
  sample_cmd->add_option("--goal", sa.goal, "goal position x y z (m)")->expected(3)->required();
  sample_cmd->add_option("--out", sa.out, "write the sample as CSV");
  sample_cmd->add_option("--diagnostics", sa.diagnostics, "write per-step guidance CSV");
  sample_cmd->add_flag("--rollout", sa.rollout, "simulate the sample and print its distance");
  AddAdaptOptions(sample_cmd, sa.adapt);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->capture_default_str();
  eval_cmd->add_option("--dataset", ev.dataset)->capture_default_str();
  eval_cmd->add_option("--split", ev.split, "dataset split")
      ->check(CLI::IsMember({"test", "train", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--limit", ev.limit, "evaluate at most this many goals (0: all)");
  eval_cmd->add_option("--csv", ev.csv, "write per-case rows as CSV");
  eval_cmd->add_option("--report", ev.report, "write the summary as text");
  AddAdaptOptions(eval_cmd, ev.adapt);

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "render report or loss CSV files as SVG");
  plot_cmd->add_option("--input", pl.inputs, "report, diagnostics or training-log CSV")
      ->required()
      ->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", pl.out)->capture_default_str();
  plot_cmd->add_option("--title", pl.title);
  plot_cmd->add_flag("--log-y", pl.log_y, "logarithmic loss axis");
  plot_cmd->add_option("--bins", pl.bins, "histogram bins")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*simulate_cmd) return RunSimulate(g, sim);
    if (*gen_cmd) return RunGenerate(g, gen);
    if (*train_cmd) return RunTrain(g, tr);
    if (*sample_cmd) return RunSample(g, sa);
    if (*eval_cmd) return RunEval(g, ev);
    if (*plot_cmd) return RunPlot(pl);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
