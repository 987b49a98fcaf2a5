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

#include "gvswhip/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "gvswhip/error.h"
#include "gvswhip/grad_prior.h"

namespace gvswhip {
namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Keeps free text inside one CSV field.
std::string Sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

double ParseDouble(const std::string& s, const std::string& field) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormatError, "field '" + field + "' is not a number: '" + s + "'");
  }
}

const char* const kReportColumns[] = {"index", "goal_x",       "goal_y", "goal_z", "distance",
                                      "strike_index", "mode", "seconds", "error"};

std::string XmlEscape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const {
    return kLeft + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kHeight - kTop - kBottom);
  }
};

std::string Axes(const Frame& f, const std::string& title, const std::string& x_label,
                 const std::string& y_label, bool log_y) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << XmlEscape(title) << "</text>\n";
  const double xa = kLeft, xb = kWidth - kRight, ya = kHeight - kBottom, yb = kTop;
  s << "<line x1=\"" << xa << "\" y1=\"" << ya << "\" x2=\"" << xb << "\" y2=\"" << ya
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << xa << "\" y1=\"" << ya << "\" x2=\"" << xa << "\" y2=\"" << yb
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    char xl[32], yl[32];
    std::snprintf(xl, sizeof(xl), "%.4g", xv);
    std::snprintf(yl, sizeof(yl), "%.3g", log_y ? std::pow(10.0, yv) : yv);
    s << "<text x=\"" << f.px(xv) << "\" y=\"" << ya + 18 << "\" text-anchor=\"middle\">" << xl
      << "</text>\n";
    s << "<text x=\"" << xa - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">" << yl
      << "</text>\n";
    s << "<line x1=\"" << xa << "\" y1=\"" << f.py(yv) << "\" x2=\"" << xb << "\" y2=\""
      << f.py(yv) << "\" stroke=\"#dddddd\"/>\n";
  }
  s << "<text x=\"" << (xa + xb) / 2 << "\" y=\"" << kHeight - 18 << "\" text-anchor=\"middle\">"
    << XmlEscape(x_label) << "</text>\n";
  s << "<text transform=\"translate(18," << (ya + yb) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << XmlEscape(y_label) << "</text>\n";
  return s.str();
}

std::string Legend(const std::vector<Series>& series) {
  std::ostringstream s;
  for (size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 16.0 * i + 8;
    const double x = kWidth - kRight + 12;
    s << "<rect x=\"" << x << "\" y=\"" << y - 8 << "\" width=\"12\" height=\"10\" fill=\""
      << kPalette[i % 8] << "\"/>\n";
    s << "<text x=\"" << x + 18 << "\" y=\"" << y + 1 << "\">" << XmlEscape(series[i].name)
      << "</text>\n";
  }
  return s.str();
}

}  // namespace

std::vector<double> success_rates(const std::vector<double>& distances,
                                  const std::vector<double>& thresholds) {
  if (distances.empty()) throw Error(ErrorCode::kEmptyEval, "no distances to evaluate");
  std::vector<double> rates;
  for (double th : thresholds) {
    int hits = 0;
    for (double d : distances) {
      if (d < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative distance " + Num(d));
      hits += d <= th ? 1 : 0;
    }
    rates.push_back(static_cast<double>(hits) / static_cast<double>(distances.size()));
  }
  return rates;
}

EvalReport EvalReport::FromCases(std::vector<EvalCase> cases,
                                 const std::vector<double>& thresholds) {
  if (cases.empty()) throw Error(ErrorCode::kEmptyEval, "evaluation has no cases");
  EvalReport r;
  r.thresholds = thresholds;
  r.n_cases = static_cast<int>(cases.size());
  std::vector<double> scored;
  double sum = 0.0, seconds = 0.0;
  for (const EvalCase& c : cases) {
    seconds += c.seconds;
    if (!c.error.empty() || !std::isfinite(c.distance)) {
      ++r.n_failed;
      scored.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    sum += c.distance;
    scored.push_back(c.distance);
  }
  const int ok = r.n_cases - r.n_failed;
  r.mean_distance = ok > 0 ? sum / ok : std::numeric_limits<double>::quiet_NaN();
  r.mean_seconds = seconds / r.n_cases;
  r.rates = success_rates(scored, thresholds);
  r.cases = std::move(cases);
  return r;
}

std::string EvalReport::ToCsv() const {
  std::ostringstream s;
  s << "# gvswhip eval report v" << kReportCsvVersion << "\n";
  for (size_t i = 0; i < std::size(kReportColumns); ++i) {
    s << (i ? "," : "") << kReportColumns[i];
  }
  s << "\n";
  for (const EvalCase& c : cases) {
    s << c.index << "," << Num(c.goal.x()) << "," << Num(c.goal.y()) << "," << Num(c.goal.z())
      << "," << Num(c.distance) << "," << c.strike_index << "," << Sanitize(c.mode) << ","
      << Num(c.seconds) << "," << Sanitize(c.error) << "\n";
  }
  return s.str();
}

EvalReport EvalReport::FromCsv(const std::string& text) {
  const std::string tag = "# gvswhip eval report v";
  if (text.rfind(tag, 0) != 0) {
    throw Error(ErrorCode::kFormatError, "not an evaluation report (missing '" + tag + "' line)");
  }
  const int version = std::atoi(text.c_str() + tag.size());
  if (version != kReportCsvVersion) {
    throw Error(ErrorCode::kFormatError, "unsupported report version " + std::to_string(version));
  }
  const CsvTable table = ParseCsv(text);
  int col[std::size(kReportColumns)];
  for (size_t i = 0; i < std::size(kReportColumns); ++i) {
    col[i] = table.column(kReportColumns[i]);
    if (col[i] < 0) {
      throw Error(ErrorCode::kFormatError,
                  std::string("report is missing column '") + kReportColumns[i] + "'");
    }
  }
  std::vector<EvalCase> cases;
  for (const auto& row : table.rows) {
    EvalCase c;
    c.index = static_cast<int>(ParseDouble(row[col[0]], "index"));
    c.goal = {ParseDouble(row[col[1]], "goal_x"), ParseDouble(row[col[2]], "goal_y"),
              ParseDouble(row[col[3]], "goal_z")};
    c.distance = ParseDouble(row[col[4]], "distance");
    c.strike_index = static_cast<int>(ParseDouble(row[col[5]], "strike_index"));
    c.mode = row[col[6]];
    c.seconds = ParseDouble(row[col[7]], "seconds");
    c.error = row[col[8]];
    cases.push_back(std::move(c));
  }
  return FromCases(std::move(cases));
}

std::string EvalReport::ToText() const {
  std::ostringstream s;
  std::string mode = cases.empty() ? "" : cases.front().mode;
  for (const EvalCase& c : cases) {
    if (c.mode != mode) mode = "mixed";
  }
  s << "mode: " << mode << "\n";
  s << "cases: " << n_cases << "\n";
  s << "failed: " << n_failed << "\n";
  s << "mean_min_distance_m: " << Fixed(mean_distance, 4) << "\n";
  for (size_t i = 0; i < thresholds.size(); ++i) {
    s << "success_at_" << Fixed(thresholds[i], 2) << "m: " << Fixed(rates[i], 3) << "\n";
  }
  s << "mean_sample_seconds: " << Fixed(mean_seconds, 3) << "\n";
  return s.str();
}

EvalReport evaluate_cases(const RodModel& model, const std::vector<Eigen::Vector3d>& goals,
                          const std::string& mode, const CaseSampler& sampler, int threads,
                          int stride) {
  if (goals.empty()) throw Error(ErrorCode::kEmptyEval, "no goals to evaluate");
  std::vector<EvalCase> cases(goals.size());
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next++; i < goals.size(); i = next++) {
      EvalCase& c = cases[i];
      c.index = static_cast<int>(i);
      c.goal = goals[i];
      c.mode = mode;
      try {
        const Eigen::MatrixXd Q = sampler(c.index, c.goal, &c.seconds);
        const RolloutScore s = rollout_and_score(model, Q, c.goal, stride);
        c.distance = s.distance;
        c.strike_index = s.strike_index;
      } catch (const std::exception& e) {
        c.distance = std::numeric_limits<double>::quiet_NaN();
        c.strike_index = -1;
        c.error = e.what();
        if (c.error.empty()) c.error = "unknown error";
      }
    }
  };
  const int n = std::clamp(threads, 1, static_cast<int>(goals.size()));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return EvalReport::FromCases(std::move(cases));
}

Eigen::MatrixXd CaseNoise(const DiffusionPolicy& policy, std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const DenoiserConfig& c = policy.ema.config();
  return SampleNoise(c.horizon, c.features, rng);
}

EvalReport evaluate_policy(const RodModel& model, const DiffusionPolicy& policy,
                           const std::vector<Eigen::Vector3d>& goals, const AdaptConfig& config,
                           std::uint64_t seed, int threads) {
  config.Validate();
  std::string mode(AdaptModeName(config.mode));
  if (config.mode != AdaptMode::kNone) {
    if (!config.use_pos) mode += "+no_pos";
    if (!config.use_kbc) mode += "+no_kbc";
  }
  const CaseSampler sampler = [&](int index, const Eigen::Vector3d& goal, double* seconds) {
    const GuidedSample g =
        guided_sample_from_noise(policy, model, goal, config, CaseNoise(policy, seed, index));
    *seconds = g.seconds;
    return g.Q;
  };
  return evaluate_cases(model, goals, mode, sampler, threads, policy.config.stride);
}

std::string_view LearningStrategyName(LearningStrategy strategy) {
  switch (strategy) {
    case LearningStrategy::kIL: return "IL";
    case LearningStrategy::kTO: return "TO";
    case LearningStrategy::kILTO: return "IL_TO";
  }
  return "?";
}

LearningStrategy ParseLearningStrategy(std::string_view name) {
  for (LearningStrategy s : {LearningStrategy::kIL, LearningStrategy::kTO, LearningStrategy::kILTO}) {
    if (name == LearningStrategyName(s)) return s;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown learning strategy '" + std::string(name) + "' (expected IL, TO or IL_TO)");
}

void TrajOptConfig::Validate() const {
  if (iterations < 0) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 0");
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr must be > 0");
  if (batch < 1) throw Error(ErrorCode::kInvalidArgument, "batch must be >= 1");
  if (ddim_steps < 1) throw Error(ErrorCode::kInvalidArgument, "ddim_steps must be >= 1");
  if (!(clip_norm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "clip_norm must be > 0");
  if (!use_pos && !use_kbc) {
    throw Error(ErrorCode::kInvalidArgument, "at least one loss term must be enabled");
  }
}

void trajectory_optimize(const RodModel& model, DiffusionPolicy* policy,
                         const std::vector<Eigen::Vector3d>& goals, const TrajOptConfig& config,
                         const std::function<void(const TrajOptStats&)>& progress) {
  config.Validate();
  if (goals.empty()) throw Error(ErrorCode::kInvalidArgument, "no goals to optimize for");
  if (policy->ema.size() == 0) throw Error(ErrorCode::kInvalidArgument, "policy has no weights");
  policy->params = policy->ema;
  DenoiserParams& w = policy->params;
  const DenoiserConfig& net = w.config();
  const NoiseSchedule& schedule = policy->schedule;
  const std::vector<int> ts = DdimTimesteps(schedule.steps(), config.ddim_steps);
  const double dt = policy->token_dt();
  Adam adam(config.lr);
  std::mt19937_64 rng(config.seed + 0x5851f42d4c957f2dull);
  std::uniform_int_distribution<size_t> pick(0, goals.size() - 1);

  for (int it = 0; it < config.iterations; ++it) {
    ParamGrads grads;
    TrajOptStats stats;
    stats.iteration = it + 1;
    for (int b = 0; b < config.batch; ++b) {
      GoalTask task;
      task.target = goals[pick(rng)];
      const Eigen::Vector3d goal_n = policy->normalizer.NormalizeGoal(task.target);
      Eigen::MatrixXd qt = SampleNoise(net.horizon, net.features, rng);
      for (size_t i = 0; i + 1 < ts.size(); ++i) {
        const Eigen::MatrixXd x0 = denoise(w, qt, goal_n, ts[i]);
        const Eigen::MatrixXd eps = (qt - schedule.alpha(ts[i]) * x0) / schedule.sigma(ts[i]);
        qt = schedule.alpha(ts[i + 1]) * x0 + schedule.sigma(ts[i + 1]) * eps;
      }
      DenoiserPass pass(w, qt, goal_n, ts.back(), true, false);
      const LossBreakdown l =
          evaluate_loss(model, policy->normalizer.Denormalize(pass.output()), task, dt, true,
                        config.use_pos, config.use_kbc, config.kbc);
      if (!std::isfinite(l.total) || !l.grad.allFinite()) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "trajectory optimization loss is not finite at iteration " +
                        std::to_string(stats.iteration));
      }
      stats.loss += l.total / config.batch;
      const Eigen::MatrixXd d =
          (l.grad.array().rowwise() * policy->normalizer.q_std.array()).matrix() / config.batch;
      pass.Backward(d, &grads, nullptr);
    }
    stats.grad_norm = ClipGradients(grads, config.clip_norm);
    adam.Step(w.values(), grads);
    if (!w.AllFinite()) {
      throw Error(ErrorCode::kNonFiniteLoss, "weights became non-finite at iteration " +
                                                 std::to_string(stats.iteration));
    }
    policy->ema = w;
    ++policy->iterations_done;
    if (progress) progress(stats);
  }
}

DiffusionPolicy finetune_to(const RodModel& model, const std::vector<TrainingExample>& examples,
                            const StrategyConfig& config) {
  std::vector<Eigen::Vector3d> goals;
  for (const auto& e : examples) goals.push_back(e.goal);
  switch (config.strategy) {
    case LearningStrategy::kIL:
      return train_policy(examples, config.il, config.il_progress);
    case LearningStrategy::kTO: {
      DiffusionPolicy policy = InitPolicy(config.il, examples);
      trajectory_optimize(model, &policy, goals, config.to, config.to_progress);
      return policy;
    }
    case LearningStrategy::kILTO: {
      DiffusionPolicy policy = train_policy(examples, config.il, config.il_progress);
      TrajOptConfig to = config.to;
      to.lr *= config.il_to_lr_scale;
      trajectory_optimize(model, &policy, goals, to, config.to_progress);
      return policy;
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown learning strategy");
}

std::string GuidanceCsv(const GuidedSample& sample) {
  std::ostringstream s;
  s << "step,t,guided,fallback,loss_pos_before,loss_kbc_before,loss_pos,loss_kbc,seconds\n";
  for (const GuidanceStep& g : sample.steps) {
    s << g.step << "," << g.t << "," << (g.guided ? 1 : 0) << "," << (g.fallback ? 1 : 0) << ","
      << Num(g.loss_pos_before) << "," << Num(g.loss_kbc_before) << "," << Num(g.loss_pos) << ","
      << Num(g.loss_kbc) << "," << Num(g.seconds) << "\n";
  }
  return s.str();
}

int CsvTable::column(std::string_view name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable ParseCsv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (table.header.empty()) {
      table.header = std::move(fields);
    } else if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::kFormatError,
                  "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(table.header.size()));
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  if (table.header.empty()) throw Error(ErrorCode::kFormatError, "CSV has no header line");
  return table;
}

std::string LineChartSvg(const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<Series>& series,
                         bool log_y) {
  auto yv = [&](double y) { return log_y ? std::log10(y) : y; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log_y || y > 0.0);
  };
  Frame f{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Series& s : series) {
    for (size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, yv(s.y[i]));
      f.y1 = std::max(f.y1, yv(s.y[i]));
    }
  }
  if (!std::isfinite(f.x0)) f = {0.0, 1.0, 0.0, 1.0};
  std::string svg = Axes(f, title, x_label, log_y ? y_label + " (log)" : y_label, log_y);
  std::ostringstream s;
  for (size_t k = 0; k < series.size(); ++k) {
    s << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kPalette[k % 8]
      << "\" points=\"";
    const Series& ser = series[k];
    for (size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
      if (!usable(ser.x[i], ser.y[i])) continue;
      s << f.px(ser.x[i]) << "," << f.py(yv(ser.y[i])) << " ";
    }
    s << "\"/>\n";
  }
  return svg + s.str() + Legend(series) + "</svg>\n";
}

std::string HistogramSvg(const std::string& title, const std::string& x_label,
                         const std::vector<Series>& samples, int bins) {
  if (bins < 1) throw Error(ErrorCode::kInvalidArgument, "bins must be >= 1");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Series& s : samples) {
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / bins;
  std::vector<std::vector<int>> counts(samples.size(), std::vector<int>(bins, 0));
  int peak = 1;
  for (size_t k = 0; k < samples.size(); ++k) {
    for (double v : samples[k].y) {
      if (!std::isfinite(v)) continue;
      const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
      peak = std::max(peak, ++counts[k][b]);
    }
  }
  const Frame f{lo, hi, 0.0, static_cast<double>(peak)};
  std::ostringstream s;
  const double slot = (f.px(lo + width) - f.px(lo)) / std::max<size_t>(1, samples.size());
  for (size_t k = 0; k < samples.size(); ++k) {
    for (int b = 0; b < bins; ++b) {
      if (counts[k][b] == 0) continue;
      const double x = f.px(lo + b * width) + slot * k;
      const double y = f.py(counts[k][b]);
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << slot << "\" height=\""
        << f.py(0.0) - y << "\" fill=\"" << kPalette[k % 8] << "\" fill-opacity=\"0.8\"/>\n";
    }
  }
  return Axes(f, title, x_label, "count", false) + s.str() + Legend(samples) + "</svg>\n";
}

}  // namespace gvswhip
