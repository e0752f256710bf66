#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/math/statistics/bivariate_statistics.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "optdisc/error.hpp"
#include "optdisc/fixtures.hpp"
#include "optdisc/grid.hpp"
#include "optdisc/hallway.hpp"
#include "optdisc/learner.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/options.hpp"
#include "optdisc/oracle.hpp"
#include "optdisc/planner.hpp"
#include "optdisc/random.hpp"

namespace optdisc {

// ---------------------------------------------------------------------------
// Configuration

struct SweepGrid {
  std::vector<std::size_t> k;
  std::vector<double> cbar;
  std::vector<double> eta;

  bool empty() const { return k.empty() || cbar.empty() || eta.empty(); }
  std::size_t size() const { return k.size() * cbar.size() * eta.size(); }
};

struct ExperimentConfig {
  std::string map = "fourroom";
  TaskMode mode = TaskMode::TrainTasks;
  LearnerConfig learner;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string out_dir = "out";
  std::size_t jobs = 1;  // 0 = one per hardware thread

  TaskMode plan_mode = TaskMode::TestTasks;
  PlanPipeline plan{ModelSource::Learned, 1000000, 0.1, {}};
  std::size_t plan_repeats = 1;

  SweepGrid sweep;
};

/// Map named by a config; unreadable files count as configuration errors.
inline GridSpec config_grid(const std::string& map) {
  try {
    return resolve_grid(map);
  } catch (const Error& e) {
    if (e.code() == Errc::Io) throw Error(Errc::InvalidConfig, e.what());
    throw;
  }
}

inline std::string to_string(TaskMode m) { return m == TaskMode::TrainTasks ? "train" : "test"; }

inline TaskMode parse_task_mode(const std::string& s) {
  if (s == "train") return TaskMode::TrainTasks;
  if (s == "test") return TaskMode::TestTasks;
  throw Error(Errc::InvalidConfig, "mode must be train or test, got '" + s + "'");
}

inline ModelSource parse_model_source(const std::string& s) {
  if (s == "learned") return ModelSource::Learned;
  if (s == "exact") return ModelSource::Exact;
  throw Error(Errc::InvalidConfig, "model source must be learned or exact, got '" + s + "'");
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(boost::trim_copy(text));
  T value{};
  in >> value;
  if (in.fail() || !in.eof()) throw Error(Errc::InvalidConfig, "bad value for " + key + ": '" + text + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw Error(Errc::InvalidConfig, "non-finite value for " + key);
  }
  return value;
}

/// Integers may be written in scientific notation (1e7).
inline std::uint64_t parse_count(const std::string& key, const std::string& text) {
  const double v = parse_number<double>(key, text);
  if (v < 0.0 || v != std::floor(v) || v > 1e18) {
    throw Error(Errc::InvalidConfig, key + " must be a non-negative integer");
  }
  return static_cast<std::uint64_t>(v);
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

/// "1,2,3" or an inclusive range "0..9".
inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& part : split_list(text)) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_count("seeds", part));
      continue;
    }
    const std::uint64_t lo = parse_count("seeds", part.substr(0, dots));
    const std::uint64_t hi = parse_count("seeds", part.substr(dots + 2));
    if (hi < lo) throw Error(Errc::InvalidConfig, "empty seed range " + part);
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  }
  return out;
}

}  // namespace detail

/// Applies one key of a section to the config. Unknown keys are rejected.
inline void apply_config_key(ExperimentConfig& c, const std::string& section, const std::string& key,
                             const std::string& value) {
  using detail::parse_count;
  using detail::parse_number;
  const std::string where = section + "." + key;
  auto& l = c.learner;
  if (section == "experiment") {
    if (key == "map") c.map = boost::trim_copy(value);
    else if (key == "mode") c.mode = parse_task_mode(boost::trim_copy(value));
    else if (key == "seeds") c.seeds = detail::parse_seeds(value);
    else if (key == "out") c.out_dir = boost::trim_copy(value);
    else if (key == "jobs") c.jobs = parse_count(where, value);
    else throw Error(Errc::InvalidConfig, "unknown key " + where);
  } else if (section == "learner") {
    if (key == "algorithm") l.algorithm = parse_algorithm(boost::trim_copy(value));
    else if (key == "k") l.k = parse_count(where, value);
    else if (key == "alpha") l.alpha = parse_number<double>(where, value);
    else if (key == "epsilon") l.epsilon = parse_number<double>(where, value);
    else if (key == "cbar") l.cbar = parse_number<double>(where, value);
    else if (key == "eta") l.eta = parse_number<double>(where, value);
    else if (key == "gamma") l.gamma = parse_number<double>(where, value);
    else if (key == "is-clip") l.is_clip = parse_is_clip(boost::trim_copy(value));
    else if (key == "total-steps") l.total_steps = parse_count(where, value);
    else if (key == "eval-every") l.eval_every = parse_count(where, value);
    else if (key == "eval-episodes") l.eval_episodes = parse_count(where, value);
    else if (key == "eval-cost") l.eval_cost = parse_number<double>(where, value);
    else if (key == "eval-max-steps") l.eval_max_steps = parse_count(where, value);
    else throw Error(Errc::InvalidConfig, "unknown key " + where);
  } else if (section == "plan") {
    if (key == "mode") c.plan_mode = parse_task_mode(boost::trim_copy(value));
    else if (key == "model") c.plan.source = parse_model_source(boost::trim_copy(value));
    else if (key == "model-steps") c.plan.model_steps = parse_count(where, value);
    else if (key == "model-alpha") c.plan.model_alpha = parse_number<double>(where, value);
    else if (key == "err-tol") c.plan.settings.err_tol = parse_number<double>(where, value);
    else if (key == "max-iters") c.plan.settings.max_iters = parse_count(where, value);
    else if (key == "repeats") c.plan_repeats = parse_count(where, value);
    else throw Error(Errc::InvalidConfig, "unknown key " + where);
  } else if (section == "sweep") {
    const auto items = detail::split_list(value);
    if (key == "k") {
      c.sweep.k.clear();
      for (const auto& x : items) c.sweep.k.push_back(parse_count(where, x));
    } else if (key == "cbar" || key == "eta") {
      auto& dst = key == "cbar" ? c.sweep.cbar : c.sweep.eta;
      dst.clear();
      for (const auto& x : items) dst.push_back(parse_number<double>(where, x));
    } else {
      throw Error(Errc::InvalidConfig, "unknown key " + where);
    }
  } else {
    throw Error(Errc::InvalidConfig, "unknown section [" + section + "]");
  }
}

inline void validate(const ExperimentConfig& c) {
  c.learner.validate();
  if (c.seeds.empty()) throw Error(Errc::InvalidConfig, "at least one seed is required");
  if (c.out_dir.empty()) throw Error(Errc::InvalidConfig, "output directory is empty");
  if (c.plan_repeats == 0) throw Error(Errc::InvalidConfig, "plan.repeats must be positive");
  if (!(c.plan.settings.err_tol > 0.0)) throw Error(Errc::InvalidConfig, "plan.err-tol must be positive");
  if (!(c.plan.model_alpha > 0.0 && c.plan.model_alpha <= 1.0)) {
    throw Error(Errc::InvalidConfig, "plan.model-alpha must lie in (0,1]");
  }
}

/// Parses INI text ([section] headers, key = value lines, ';' or '#' comments).
inline ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(Errc::InvalidConfig, std::string("cannot parse config: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error(Errc::InvalidConfig, "key '" + section + "' outside any section");
    for (const auto& [key, leaf] : body) apply_config_key(c, section, key, leaf.get_value<std::string>());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

/// The output directory, overridden by OPTDISC_OUT when set.
inline std::string output_dir(const ExperimentConfig& c) {
  if (const char* env = std::getenv("OPTDISC_OUT"); env && *env) return env;
  return c.out_dir;
}

/// Fields that determine a run's results, excluding seed and output location.
inline nlohmann::json config_identity(const ExperimentConfig& c) {
  return {{"map", c.map},
          {"mode", to_string(c.mode)},
          {"learner", learner_config_to_json(c.learner)},
          {"plan",
           {{"mode", to_string(c.plan_mode)},
            {"model", to_string(c.plan.source)},
            {"modelSteps", c.plan.model_steps},
            {"modelAlpha", c.plan.model_alpha},
            {"errTol", c.plan.settings.err_tol},
            {"maxIters", c.plan.settings.max_iters},
            {"repeats", c.plan_repeats}}}};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex16(fnv1a(config_identity(c).dump())); }

inline std::string run_id(const std::string& hash, std::uint64_t seed) {
  return hash.substr(0, 8) + "-s" + std::to_string(seed);
}

/// Seed for a named sub-stream of a run (planning, evaluation commands).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return fnv1a(std::string(label) + ":" + std::to_string(seed));
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

/// Writes through a temporary file so readers never see a partial file.
inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(Errc::Io, "cannot create " + path.parent_path().string());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(Errc::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::Io, "cannot rename " + tmp.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, path.string() + ": " + e.what());
  }
}

inline constexpr std::string_view kCurveHeader = "step,meanCompoundReturn,stderr,runId,configHash\n";
inline constexpr std::string_view kScatterHeader = "runId,configHash,objectiveEstimate,totalOperations,converged\n";

inline std::string curve_rows(const std::vector<CurveRow>& curve, const std::string& id, const std::string& hash) {
  std::string out;
  for (const auto& r : curve) {
    out += std::to_string(r.step) + "," + fmt_double(r.mean) + "," + fmt_double(r.stderr_) + "," + id + "," +
           hash + "\n";
  }
  return out;
}

struct ScatterRow {
  std::string run_id;
  std::string config_hash;
  double objective = std::nan("");
  std::uint64_t total_operations = 0;
  bool converged = false;
};

inline std::string scatter_row(const ScatterRow& r) {
  return r.run_id + "," + r.config_hash + "," + fmt_double(r.objective) + "," +
         std::to_string(r.total_operations) + "," + (r.converged ? "true" : "false") + "\n";
}

// ---------------------------------------------------------------------------
// Statistics

/// Average ranks, ties share the mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

/// Spearman rank correlation; NaN when fewer than two points or a constant input.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(Errc::InvalidArgument, "spearman inputs differ in length");
  if (x.size() < 2) return std::nan("");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return boost::math::statistics::correlation_coefficient(rx, ry);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kRunFileVersion = 1;

/// A finished training run: enough to evaluate, plan and render later.
struct RunRecord {
  std::string run_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  ExperimentConfig config;
  std::string map_text;
  std::vector<CurveRow> curve;
  LearnerState state;

  double objective_estimate() const { return tail_mean(curve, 5); }
};

inline nlohmann::json run_record_to_json(const RunRecord& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& row : r.curve) curve.push_back({row.step, row.mean, row.stderr_});
  return {{"version", kRunFileVersion},
          {"runId", r.run_id},
          {"configHash", r.config_hash},
          {"seed", r.seed},
          {"config", config_identity(r.config)},
          {"mapText", r.map_text},
          {"curve", curve},
          {"state", learner_state_to_json(r.state)}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kRunFileVersion) throw Error(Errc::Format, "unsupported run file version");
    RunRecord r;
    r.run_id = j.at("runId").get<std::string>();
    r.config_hash = j.at("configHash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& id = j.at("config");
    r.config.map = id.at("map").get<std::string>();
    r.config.mode = parse_task_mode(id.at("mode").get<std::string>());
    r.config.learner = learner_config_from_json(id.at("learner"));
    const auto& p = id.at("plan");
    r.config.plan_mode = parse_task_mode(p.at("mode").get<std::string>());
    r.config.plan.source = parse_model_source(p.at("model").get<std::string>());
    r.config.plan.model_steps = p.at("modelSteps").get<std::size_t>();
    r.config.plan.model_alpha = p.at("modelAlpha").get<double>();
    r.config.plan.settings.err_tol = p.at("errTol").get<double>();
    r.config.plan.settings.max_iters = p.at("maxIters").get<std::size_t>();
    r.config.plan_repeats = p.at("repeats").get<std::size_t>();
    r.map_text = j.at("mapText").get<std::string>();
    for (const auto& row : j.at("curve")) {
      r.curve.push_back({row.at(0).get<std::uint64_t>(), row.at(1).get<double>(), row.at(2).get<double>()});
    }
    r.state = learner_state_from_json(j.at("state"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("bad run file: ") + e.what());
  }
}

inline RunRecord load_run(const std::filesystem::path& path) { return run_record_from_json(read_json(path)); }

inline GridSpec run_grid(const RunRecord& r) { return parse_grid(r.map_text, r.config.map); }

// ---------------------------------------------------------------------------
// Runs

/// Trains one seed. The run's stream is seeded with the seed itself.
inline RunRecord train_run(const ExperimentConfig& cfg, const GridSpec& grid, std::uint64_t seed,
                           const std::string& hash) {
  const TabularMdp mdp = build_mdp(grid, cfg.mode, cfg.learner.gamma);
  Rng rng(seed);
  TrainResult result = train(cfg.learner, mdp, rng);
  RunRecord r;
  r.run_id = run_id(hash, seed);
  r.config_hash = hash;
  r.seed = seed;
  r.config = cfg;
  r.map_text = grid.to_text();
  r.curve = std::move(result.curve);
  r.state = std::move(result.state);
  return r;
}

struct PlanOutcome {
  std::vector<PlanReport> reports;  // one per repeat
  ScatterRow row;

  const PlanReport& first() const { return reports.front(); }
};

/// Plans with a fixed option set; repeats draw fresh initiation-set samples
/// (and fresh learned models). The scatter row reports the first repeat.
inline PlanOutcome plan_options(const GridSpec& grid, const OptionSet& options, TaskMode mode,
                                const PlanPipeline& pipeline, std::size_t repeats, double gamma, Rng& rng) {
  const TabularMdp mdp = build_mdp(grid, mode, gamma);
  PlanOutcome out;
  for (std::size_t r = 0; r < repeats; ++r) out.reports.push_back(plan_with_options(mdp, options, pipeline, rng));
  out.row.total_operations = out.first().total_operations;
  out.row.converged = out.first().converged;
  return out;
}

inline PlanOutcome plan_run(const RunRecord& run, const PlanPipeline& pipeline, TaskMode mode,
                            std::size_t repeats) {
  Rng rng(derive_seed(run.seed, "plan"));
  const OptionSet options = OptionSet::from_params(run.state.tables);
  PlanOutcome out =
      plan_options(run_grid(run), options, mode, pipeline, repeats, run.config.learner.gamma, rng);
  out.row.run_id = run.run_id;
  out.row.config_hash = run.config_hash;
  out.row.objective = run.objective_estimate();
  return out;
}

inline nlohmann::json plan_outcome_to_json(const PlanOutcome& p) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : p.reports) reports.push_back(plan_report_to_json(r));
  return {{"runId", p.row.run_id},
          {"configHash", p.row.config_hash},
          {"objectiveEstimate", std::isnan(p.row.objective) ? nlohmann::json() : nlohmann::json(p.row.objective)},
          {"totalOperations", p.row.total_operations},
          {"converged", p.row.converged},
          {"reports", reports}};
}

// ---------------------------------------------------------------------------
// Built-in option sets

/// "primitives" or "hallway" (primitives plus the two circulating options).
inline OptionSet builtin_options(const std::string& name, const GridSpec& grid) {
  if (name == "primitives") return OptionSet::primitives_only(grid.num_states(), kGridActions);
  if (name == "hallway") return make_hallway_options(grid).to_option_set(kGridActions);
  throw Error(Errc::InvalidConfig, "unknown built-in option set '" + name + "'");
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline const char* arrow(ActionId a) {
  switch (a) {
    case kUp: return "↑";
    case kDown: return "↓";
    case kLeft: return "←";
    case kRight: return "→";
  }
  return "?";
}

inline char decile(double p) {
  const int d = static_cast<int>(std::floor(std::clamp(p, 0.0, 1.0) * 10.0));
  return static_cast<char>('0' + std::min(d, 9));
}

template <class CellFn>
std::string panel(const GridSpec& grid, const std::string& title, CellFn cell) {
  std::string out = title + "\n";
  for (std::size_t r = 0; r < grid.height(); ++r) {
    for (std::size_t c = 0; c < grid.width(); ++c) {
      const auto s = grid.state_at(r, c);
      if (!s) {
        out += '#';
      } else {
        out += cell(*s);
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace detail

/// Policy, termination and interest panels for one option.
inline std::string render_option(const GridSpec& grid, const OptionSet& options, OptionId h) {
  check_index(h, options.num_options(), "option");
  const std::string name = "option " + std::to_string(h);
  std::string out;
  out += detail::panel(grid, name + " policy",
                       [&](StateId s) { return std::string(detail::arrow(greedy_action(options.policy(s, h)))); });
  out += detail::panel(grid, name + " termination",
                       [&](StateId s) { return std::string(1, detail::decile(options.termination(s, h))); });
  out += detail::panel(grid, name + " interest",
                       [&](StateId s) { return std::string(1, detail::decile(options.interest(s, h))); });
  return out;
}

/// Every adjustable option, or the listed ones.
inline std::string render_options(const GridSpec& grid, const OptionSet& options,
                                  const std::vector<OptionId>& which = {}) {
  if (grid.num_states() != options.num_states()) {
    throw Error(Errc::InvalidArgument, "option set does not match the map");
  }
  std::vector<OptionId> list = which;
  if (list.empty()) {
    for (OptionId h = 0; h < options.k(); ++h) list.push_back(h);
  }
  std::string out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (i) out += '\n';
    out += render_option(grid, options, list[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct TrainSummary {
  std::vector<RunRecord> runs;
  std::filesystem::path out_dir;
};

/// Across-seed mean and standard error of the evaluation curves.
inline std::vector<CurveRow> seed_average(const std::vector<RunRecord>& runs) {
  std::vector<CurveRow> out;
  if (runs.empty()) return out;
  const std::size_t len = runs.front().curve.size();
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& r : runs) {
      sum += r.curve[i].mean;
      sum_sq += r.curve[i].mean * r.curve[i].mean;
    }
    const double n = static_cast<double>(runs.size());
    const double mean = sum / n;
    double se = 0.0;
    if (runs.size() > 1) se = std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) / n);
    out.push_back({runs.front().curve[i].step, mean, se});
  }
  return out;
}

/// One run per seed. Writes <runId>.run.json and <runId>.curve.csv per run,
/// then curve.csv (every run) and curve_mean.csv (across seeds).
inline TrainSummary cmd_train(const ExperimentConfig& cfg) {
  validate(cfg);
  const GridSpec grid = config_grid(cfg.map);
  const std::string hash = config_hash(cfg);
  TrainSummary summary;
  summary.out_dir = output_dir(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    RunRecord run = train_run(cfg, grid, seed, hash);
    write_file(summary.out_dir / (run.run_id + ".run.json"), run_record_to_json(run).dump());
    write_file(summary.out_dir / (run.run_id + ".curve.csv"),
               std::string(kCurveHeader) + curve_rows(run.curve, run.run_id, hash));
    summary.runs.push_back(std::move(run));
  }
  std::string all(kCurveHeader);
  for (const auto& r : summary.runs) all += curve_rows(r.curve, r.run_id, hash);
  write_file(summary.out_dir / "curve.csv", all);
  write_file(summary.out_dir / "curve_mean.csv",
             std::string(kCurveHeader) + curve_rows(seed_average(summary.runs), "mean", hash));
  return summary;
}

/// Greedy evaluation of a saved run on the tasks it was trained on.
inline EvalResult cmd_eval(const RunRecord& run, std::size_t episodes, double cost, std::uint64_t seed) {
  LearnerConfig lc = run.config.learner;
  lc.eval_episodes = episodes;
  lc.eval_cost = cost;
  const TabularMdp mdp = build_mdp(run_grid(run), run.config.mode, lc.gamma);
  if (mdp.num_tasks() != run.state.num_tasks || mdp.num_states() != run.state.num_states) {
    throw Error(Errc::Format, "run tables do not match its map");
  }
  Rng rng(seed);
  return evaluate(run.state, lc, mdp, rng);
}

inline nlohmann::json eval_result_to_json(const EvalResult& e) {
  return {{"meanCompoundReturn", e.mean},
          {"stderr", e.stderr_},
          {"meanReturn", e.mean_return},
          {"meanDecisions", e.mean_decisions},
          {"truncated", e.truncated}};
}

/// Plans with a saved run's options; writes <runId>.plan.json and <runId>.scatter.csv.
inline PlanOutcome cmd_plan(const RunRecord& run, const ExperimentConfig& settings,
                            const std::filesystem::path& out_dir) {
  PlanOutcome out = plan_run(run, settings.plan, settings.plan_mode, settings.plan_repeats);
  write_file(out_dir / (run.run_id + ".plan.json"), plan_outcome_to_json(out).dump(2));
  write_file(out_dir / (run.run_id + ".scatter.csv"), std::string(kScatterHeader) + scatter_row(out.row));
  return out;
}

/// Plans with a built-in option set on a map.
inline PlanOutcome cmd_plan_builtin(const std::string& name, const ExperimentConfig& settings,
                                    const std::filesystem::path& out_dir, std::uint64_t seed) {
  const GridSpec grid = config_grid(settings.map);
  const OptionSet options = builtin_options(name, grid);
  Rng rng(derive_seed(seed, "plan"));
  PlanOutcome out = plan_options(grid, options, settings.plan_mode, settings.plan, settings.plan_repeats,
                                 settings.learner.gamma, rng);
  out.row.run_id = "builtin-" + name;
  out.row.config_hash = hex16(fnv1a(config_identity(settings).dump() + name));
  write_file(out_dir / (out.row.run_id + ".plan.json"), plan_outcome_to_json(out).dump(2));
  write_file(out_dir / (out.row.run_id + ".scatter.csv"), std::string(kScatterHeader) + scatter_row(out.row));
  return out;
}

struct RankedSetting {
  std::string config_hash;
  std::size_t k = 0;
  double cbar = 0.0;
  double eta = 0.0;
  double score = 0.0;  // last five evaluations, averaged over seeds
  std::size_t runs = 0;
};

struct SweepSummary {
  std::vector<ScatterRow> scatter;
  std::vector<RankedSetting> ranking;
  std::vector<std::string> failures;
  double spearman = std::nan("");
};

/// Settings sorted by score, best first.
inline std::vector<RankedSetting> rank_settings(const std::vector<RunRecord>& runs) {
  std::map<std::string, RankedSetting> by_hash;
  for (const auto& r : runs) {
    auto& s = by_hash[r.config_hash];
    s.config_hash = r.config_hash;
    s.k = r.config.learner.k;
    s.cbar = r.config.learner.cbar;
    s.eta = r.config.learner.eta;
    s.score += r.objective_estimate();
    ++s.runs;
  }
  std::vector<RankedSetting> out;
  for (auto& [hash, s] : by_hash) {
    s.score /= static_cast<double>(s.runs);
    out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedSetting& a, const RankedSetting& b) { return a.score > b.score; });
  return out;
}

/// Cartesian product {k} x {cbar} x {eta} x seeds. Each run trains, then plans
/// on the configured task set. Per-run files are written by the worker; the
/// merged curve.csv, scatter.csv, ranking.csv and sweep.json are written once
/// all runs finish, in grid order.
inline SweepSummary cmd_sweep(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  validate(cfg);
  if (cfg.sweep.empty()) throw Error(Errc::InvalidConfig, "sweep grid is empty");
  const GridSpec grid = config_grid(cfg.map);
  const std::filesystem::path out_dir = output_dir(cfg);

  struct Job {
    ExperimentConfig cfg;
    std::string hash;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t k : cfg.sweep.k) {
    for (double cbar : cfg.sweep.cbar) {
      for (double eta : cfg.sweep.eta) {
        ExperimentConfig c = cfg;
        c.learner.k = k;
        c.learner.cbar = cbar;
        c.learner.eta = eta;
        c.learner.validate();
        const std::string hash = config_hash(c);
        for (std::uint64_t seed : cfg.seeds) jobs.push_back({c, hash, seed});
      }
    }
  }

  std::vector<std::optional<RunRecord>> runs(jobs.size());
  std::vector<std::optional<ScatterRow>> rows(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      try {
        RunRecord run = train_run(job.cfg, grid, job.seed, job.hash);
        write_file(out_dir / (run.run_id + ".run.json"), run_record_to_json(run).dump());
        PlanOutcome plan = cmd_plan(run, job.cfg, out_dir);
        rows[i] = plan.row;
        runs[i] = std::move(run);
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << "run " << rows[i]->run_id << " objective " << fmt_double(rows[i]->objective) << " operations "
               << rows[i]->total_operations << '\n';
        }
      } catch (const std::exception& e) {
        errors[i] = run_id(job.hash, job.seed) + ": " + e.what();
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << "run failed " << errors[i] << '\n';
        }
      }
    }
  };
  std::size_t threads = cfg.jobs ? cfg.jobs : std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, jobs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SweepSummary summary;
  std::vector<RunRecord> done;
  std::string curves(kCurveHeader), scatter(kScatterHeader);
  std::vector<double> objective, operations;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i].empty()) {
      summary.failures.push_back(errors[i]);
      continue;
    }
    curves += curve_rows(runs[i]->curve, runs[i]->run_id, runs[i]->config_hash);
    scatter += scatter_row(*rows[i]);
    summary.scatter.push_back(*rows[i]);
    objective.push_back(rows[i]->objective);
    operations.push_back(static_cast<double>(rows[i]->total_operations));
    done.push_back(std::move(*runs[i]));
  }
  summary.ranking = rank_settings(done);
  summary.spearman = spearman(objective, operations);

  std::string ranking = "rank,configHash,k,cbar,eta,score,runs\n";
  nlohmann::json ranked = nlohmann::json::array();
  for (std::size_t i = 0; i < summary.ranking.size(); ++i) {
    const auto& s = summary.ranking[i];
    ranking += std::to_string(i + 1) + "," + s.config_hash + "," + std::to_string(s.k) + "," + fmt_double(s.cbar) +
               "," + fmt_double(s.eta) + "," + fmt_double(s.score) + "," + std::to_string(s.runs) + "\n";
    ranked.push_back({{"configHash", s.config_hash}, {"k", s.k}, {"cbar", s.cbar}, {"eta", s.eta},
                      {"score", s.score}, {"runs", s.runs}});
  }
  write_file(out_dir / "curve.csv", curves);
  write_file(out_dir / "scatter.csv", scatter);
  write_file(out_dir / "ranking.csv", ranking);
  write_file(out_dir / "sweep.json",
             nlohmann::json{{"runs", jobs.size()},
                            {"failures", summary.failures},
                            {"ranking", ranked},
                            {"spearman", std::isnan(summary.spearman) ? nlohmann::json()
                                                                      : nlohmann::json(summary.spearman)}}
                 .dump(2));
  return summary;
}

struct OracleCheck {
  std::size_t fixtures = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Relative error with a unit floor on the scale, so near-zero components are
/// compared absolutely.
inline double gradient_rel_error(double exact, double approx) {
  return std::abs(exact - approx) / std::max({1.0, std::abs(exact), std::abs(approx)});
}

/// Random small fixtures: exact gradient against central differences.
inline OracleCheck cmd_oracle_check(std::size_t fixtures, std::uint64_t seed, double tol = 1e-5,
                                    double step = 1e-5) {
  Rng rng(seed);
  OracleCheck out;
  const double costs[] = {0.0, 0.2, 1.0};
  for (std::size_t f = 0; f < fixtures; ++f) {
    const std::size_t S = 3 + uniform_index(3, rng);
    const std::size_t N = 1 + uniform_index(2, rng);
    const std::size_t k = uniform_index(3, rng);
    const std::size_t A = 2;
    const double gamma = 0.8 + 0.2 * uniform01(rng);
    const TabularMdp mdp = random_fixture(S, A, N, gamma, rng);
    ParamTables t(S, k, A);
    randomize_params(t, -1.0, 1.0, rng);
    MetaParams meta(N, S, t.num_options());
    randomize_meta(meta, -1.0, 1.0, rng);
    const double c = costs[f % 3];
    const auto exact = exact_gradient(mdp, t, meta, c).flat();
    const auto fd = finite_diff_gradient(mdp, t, meta, c, step).flat();
    for (std::size_t i = 0; i < exact.size(); ++i) {
      out.max_rel_error = std::max(out.max_rel_error, gradient_rel_error(exact[i], fd[i]));
    }
    ++out.fixtures;
  }
  out.passed = out.max_rel_error < tol;
  return out;
}

/// 1 for configuration problems, 2 for everything else.
inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::InvalidConfig:
    case Errc::InvalidArgument:
    case Errc::NonRectangular:
    case Errc::UnknownCharacter:
    case Errc::NoEmptyCells:
    case Errc::UnenclosedBoundary:
    case Errc::NoGoalsForMode:
    case Errc::UnsupportedGrid:
      return 1;
    default:
      return 2;
  }
}

}  // namespace optdisc
