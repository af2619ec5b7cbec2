#pragma once

// Hyperparameter grids over (mode, beta, top-p, temperature), the built-in
// greedy-recovery objective, best-of-N random-search curves and the
// prefill/decode throughput harness.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "moi/error.hpp"
#include "moi/pipeline.hpp"
#include "moi/rng.hpp"
#include "moi/toy_lm.hpp"
#include "moi/weights_io.hpp"

namespace moi {

// ---------------------------------------------------------------------------
// Number formatting shared by every CSV writer: shortest round-trip decimal.

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view text, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError(where + ": '" + std::string(text) + "' is not a number");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Task and grid specification.

enum class TaskKind { greedy_recovery, external_scorer };

struct TaskSpec {
  TaskKind kind = TaskKind::greedy_recovery;
  std::string model_path;          // empty: init_random(ModelConfig{.init_seed = model_seed})
  std::uint64_t model_seed = 42;
  std::vector<std::string> prompts{"the ", "a b", "moi", "xyz"};
  std::size_t budget = 8;          // generated tokens per prompt
  std::set<TokenId> stop_tokens;
  // external_scorer: invoked as `<command> <file>` where the file holds the
  // generated bytes; stdout must start with a score in [0, 1].
  std::string scorer_command;

  void validate() const {
    if (prompts.empty()) throw InvalidConfigError("task needs at least one prompt");
    for (const auto& p : prompts) {
      if (p.empty()) throw InvalidConfigError("task prompts must be nonempty");
    }
    if (budget < 1) throw InvalidConfigError("task budget must be at least one token");
    if (kind == TaskKind::external_scorer && scorer_command.empty()) {
      throw InvalidConfigError("external_scorer task needs a scorer_command");
    }
  }
};

struct GridSpec {
  std::vector<double> betas{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  std::vector<double> top_ps{0.4, 0.6, 0.8, 0.95};
  std::vector<double> temperatures{0.6, 0.8, 1.0};
  std::vector<MixMode> modes{MixMode::standard, MixMode::direct_mixture, MixMode::moi};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  TaskSpec task;
  PriorSource prior_source = PriorSource::sampled_dist;
  // Wall-clock tokens/s varies run to run; when off the column is 0 so the
  // CSV is a pure function of the spec.
  bool measure_throughput = false;

  std::size_t config_count() const {
    return modes.size() * betas.size() * top_ps.size() * temperatures.size();
  }
  std::size_t trial_count() const { return config_count() * seeds.size(); }

  void validate() const {
    if (betas.empty() || top_ps.empty() || temperatures.empty() || modes.empty() || seeds.empty()) {
      throw InvalidConfigError("every grid axis needs at least one value");
    }
    for (double b : betas) MixConfig{MixMode::moi, b}.validate();
    for (double p : top_ps) SamplerConfig{1.0, p, 0}.validate();
    for (double t : temperatures) SamplerConfig{t, 1.0, 0}.validate();
    task.validate();
  }
};

inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec spec;
  try {
    if (j.contains("betas")) spec.betas = j.at("betas").get<std::vector<double>>();
    if (j.contains("top_ps")) spec.top_ps = j.at("top_ps").get<std::vector<double>>();
    if (j.contains("temperatures")) spec.temperatures = j.at("temperatures").get<std::vector<double>>();
    if (j.contains("modes")) {
      spec.modes.clear();
      for (const auto& m : j.at("modes")) spec.modes.push_back(parse_mix_mode(m.get<std::string>()));
    }
    if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("prior_source")) {
      spec.prior_source = parse_prior_source(j.at("prior_source").get<std::string>());
    }
    spec.measure_throughput = j.value("measure_throughput", false);
    if (j.contains("task")) {
      const auto& t = j.at("task");
      const auto kind = t.value("kind", std::string("greedy_recovery"));
      if (kind == "greedy_recovery") {
        spec.task.kind = TaskKind::greedy_recovery;
      } else if (kind == "external_scorer") {
        spec.task.kind = TaskKind::external_scorer;
      } else {
        throw InvalidConfigError("unknown task kind '" + kind + "'");
      }
      spec.task.model_path = t.value("model", std::string());
      spec.task.model_seed = t.value("model_seed", std::uint64_t{42});
      if (t.contains("prompts")) spec.task.prompts = t.at("prompts").get<std::vector<std::string>>();
      spec.task.budget = t.value("budget", spec.task.budget);
      if (t.contains("stop_tokens")) {
        for (auto id : t.at("stop_tokens").get<std::vector<TokenId>>()) spec.task.stop_tokens.insert(id);
      }
      spec.task.scorer_command = t.value("scorer_command", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed grid spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

inline GridSpec read_grid_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open grid spec '" + path + "'");
  try {
    return grid_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Results table.

struct ResultRow {
  MixMode mode = MixMode::moi;
  double beta = 1.0;
  double top_p = 1.0;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::optional<double> score;  // empty: the trial failed
  double tokens_per_s = 0.0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

using ResultsTable = std::vector<ResultRow>;

inline constexpr const char* kResultsHeader = "mode,beta,top_p,temperature,seed,score,tokens_per_s";
inline constexpr const char* kErrorMarker = "error";

inline std::string format_row(const ResultRow& r) {
  std::string line = to_string(r.mode);
  line += ',' + format_number(r.beta);
  line += ',' + format_number(r.top_p);
  line += ',' + format_number(r.temperature);
  line += ',' + std::to_string(r.seed);
  line += ',' + (r.score ? format_number(*r.score) : std::string(kErrorMarker));
  line += ',' + format_number(r.tokens_per_s);
  return line;
}

inline void write_results_csv(const ResultsTable& table, std::ostream& out) {
  out << kResultsHeader << '\n';
  for (const auto& r : table) out << format_row(r) << '\n';
}

inline ResultsTable read_results_csv(std::istream& in, const std::string& source = "results") {
  ResultsTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line_no == 1) {
      if (line != kResultsHeader) throw ParseError(where + ": unexpected header '" + line + "'");
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ParseError(where + ": expected 7 columns");
    ResultRow r;
    try {
      r.mode = parse_mix_mode(cells[0]);
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
    r.beta = parse_number(cells[1], where);
    r.top_p = parse_number(cells[2], where);
    r.temperature = parse_number(cells[3], where);
    r.seed = static_cast<std::uint64_t>(parse_number(cells[4], where));
    if (cells[5] != kErrorMarker) r.score = parse_number(cells[5], where);
    r.tokens_per_s = parse_number(cells[6], where);
    table.push_back(r);
  }
  return table;
}

inline ResultsTable read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open results '" + path + "'");
  return read_results_csv(in, path);
}

// ---------------------------------------------------------------------------
// Objectives.

// Fraction of prompts whose sampled continuation equals the model's greedy
// decode. `greedy` optionally supplies precomputed references per prompt.
template <LanguageModel LM>
double greedy_recovery_score(const LM& model, const GenConfig& cfg,
                             const std::vector<std::vector<TokenId>>& prompts, std::size_t budget,
                             const std::vector<std::vector<TokenId>>* greedy = nullptr,
                             double* tokens_per_s = nullptr) {
  if (budget == 0) throw InvalidInputError("greedy recovery needs a budget of at least one token");
  if (prompts.empty()) throw InvalidInputError("greedy recovery needs at least one prompt");
  std::size_t matches = 0;
  std::size_t generated = 0;
  double seconds = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    GenConfig run = cfg;
    run.max_tokens = budget;
    run.sampler.seed = derive_seed(cfg.sampler.seed, i);
    const auto result = generate(model, prompts[i], run);
    generated += result.generated_tokens;
    seconds += result.prefill_seconds + result.decode_seconds;
    const auto reference =
        greedy ? (*greedy)[i] : greedy_decode(model, std::span<const TokenId>(prompts[i]), budget, cfg.stop_tokens);
    if (result.tokens == reference) ++matches;
  }
  if (tokens_per_s) *tokens_per_s = seconds > 0.0 ? static_cast<double>(generated) / seconds : 0.0;
  return static_cast<double>(matches) / static_cast<double>(prompts.size());
}

// Runs `command <file>` on each generated continuation and averages the
// scores it prints.
template <LanguageModel LM>
double external_score(const LM& model, const GenConfig& cfg,
                      const std::vector<std::vector<TokenId>>& prompts, std::size_t budget,
                      const std::string& command) {
  double total = 0.0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    GenConfig run = cfg;
    run.max_tokens = budget;
    run.sampler.seed = derive_seed(cfg.sampler.seed, i);
    const auto result = generate(model, prompts[i], run);

    const auto path = std::filesystem::temp_directory_path() /
                      ("moi_score_" + std::to_string(derive_seed(run.sampler.seed, i, budget)) + ".bin");
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      for (TokenId t : result.tokens) out.put(static_cast<char>(t & 0xff));
    }
    std::string output;
    if (FILE* pipe = ::popen((command + " '" + path.string() + "'").c_str(), "r")) {
      char buf[256];
      while (std::fgets(buf, sizeof buf, pipe)) output += buf;
      const int status = ::pclose(pipe);
      std::filesystem::remove(path);
      if (status != 0) throw Error("scorer exited with status " + std::to_string(status));
    } else {
      std::filesystem::remove(path);
      throw Error("cannot launch scorer '" + command + "'");
    }
    std::istringstream in(output);
    double score = 0.0;
    if (!(in >> score) || !(score >= 0.0 && score <= 1.0)) {
      throw Error("scorer output '" + output + "' is not a score in [0, 1]");
    }
    total += score;
  }
  return total / static_cast<double>(prompts.size());
}

// ---------------------------------------------------------------------------
// Grid execution.

struct GridTrial {
  std::size_t config_index = 0;
  std::size_t replicate = 0;
  GenConfig config;
  ResultRow row;
};

// Cartesian order: mode, beta, top_p, temperature, then seeds innermost.
inline std::vector<GridTrial> enumerate_trials(const GridSpec& spec) {
  std::vector<GridTrial> trials;
  trials.reserve(spec.trial_count());
  std::size_t config_index = 0;
  for (MixMode mode : spec.modes) {
    for (double beta : spec.betas) {
      for (double top_p : spec.top_ps) {
        for (double temperature : spec.temperatures) {
          for (std::size_t r = 0; r < spec.seeds.size(); ++r) {
            GridTrial t;
            t.config_index = config_index;
            t.replicate = r;
            t.config.mix = {mode, beta};
            t.config.sampler = {temperature, top_p, derive_seed(spec.seeds[r], config_index, r)};
            t.config.max_tokens = spec.task.budget;
            t.config.stop_tokens = spec.task.stop_tokens;
            t.config.prior_source = spec.prior_source;
            t.row = {mode, beta, top_p, temperature, spec.seeds[r], std::nullopt, 0.0};
            trials.push_back(std::move(t));
          }
          ++config_index;
        }
      }
    }
  }
  return trials;
}

struct GridOptions {
  std::string out_path;  // empty: no file
  std::size_t jobs = 1;
  // Invoked after each row is committed, in grid order.
  std::function<void(const ResultRow&, std::size_t done, std::size_t total)> on_row;
};

// Evaluates every trial. With an output path, rows are appended to
// `<out>.partial` in grid order as they complete and the file is renamed to
// `<out>` at the end. A failing trial yields an error row; the grid goes on.
template <LanguageModel LM>
ResultsTable run_grid(const GridSpec& spec, const LM& model, const GridOptions& options = {}) {
  spec.validate();
  std::vector<std::vector<TokenId>> prompts;
  for (const auto& p : spec.task.prompts) prompts.push_back(bytes_to_tokens(p));

  std::vector<std::vector<TokenId>> greedy;
  if (spec.task.kind == TaskKind::greedy_recovery) {
    for (const auto& p : prompts) {
      greedy.push_back(greedy_decode(model, std::span<const TokenId>(p), spec.task.budget,
                                     spec.task.stop_tokens));
    }
  }

  auto trials = enumerate_trials(spec);
  const std::size_t total = trials.size();

  std::ofstream out;
  const std::string partial = options.out_path + ".partial";
  if (!options.out_path.empty()) {
    out.open(partial, std::ios::trunc);
    if (!out) throw Error("cannot open '" + partial + "' for writing");
    out << kResultsHeader << '\n' << std::flush;
  }

  auto evaluate = [&](GridTrial& t) {
    try {
      double tps = 0.0;
      if (spec.task.kind == TaskKind::greedy_recovery) {
        t.row.score = greedy_recovery_score(model, t.config, prompts, spec.task.budget, &greedy, &tps);
      } else {
        t.row.score = external_score(model, t.config, prompts, spec.task.budget, spec.task.scorer_command);
      }
      if (spec.measure_throughput) t.row.tokens_per_s = tps;
    } catch (const std::exception&) {
      t.row.score.reset();
    }
  };

  std::mutex mu;
  std::condition_variable cv;
  std::vector<char> done(total, 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      evaluate(trials[i]);
      {
        std::lock_guard lock(mu);
        done[i] = 1;
      }
      cv.notify_one();
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, total));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);

  ResultsTable table;
  table.reserve(total);
  std::size_t committed = 0;
  auto commit_ready = [&] {
    while (committed < total) {
      {
        std::lock_guard lock(mu);
        if (!done[committed]) return;
      }
      const ResultRow& row = trials[committed].row;
      table.push_back(row);
      if (out.is_open()) out << format_row(row) << '\n' << std::flush;
      ++committed;
      if (options.on_row) options.on_row(row, committed, total);
    }
  };

  if (jobs == 1) {
    for (std::size_t i = 0; i < total; ++i) {
      evaluate(trials[i]);
      done[i] = 1;
      commit_ready();
    }
  } else {
    while (committed < total) {
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return done[committed] != 0; });
      }
      commit_ready();
    }
    for (auto& t : pool) t.join();
  }

  if (out.is_open()) {
    out.close();
    std::filesystem::rename(partial, options.out_path);
  }
  return table;
}

inline Model load_task_model(const TaskSpec& task) {
  if (!task.model_path.empty()) return load_weights(task.model_path);
  ModelConfig config;
  config.init_seed = task.model_seed;
  return init_random(config);
}

inline ResultsTable run_grid(const GridSpec& spec, const GridOptions& options = {}) {
  spec.validate();
  const Model model = load_task_model(spec.task);
  return run_grid(spec, model, options);
}

// ---------------------------------------------------------------------------
// Best-of-N random search.

enum class GridParam { beta, top_p, temperature };

inline GridParam parse_grid_param(const std::string& text) {
  if (text == "beta") return GridParam::beta;
  if (text == "top_p" || text == "top-p") return GridParam::top_p;
  if (text == "temperature" || text == "T") return GridParam::temperature;
  throw InvalidConfigError("unknown hyperparameter '" + text + "'");
}

struct GainPoint {
  std::size_t n = 0;
  double expected_gain = 0.0;
};

// Mean score per distinct value of `param`, others pinned at their defaults.
struct ParamSlice {
  GridParam param = GridParam::beta;
  MixMode mode = MixMode::moi;
  double beta = 1.0;
  double top_p = 0.95;
  double temperature = 0.6;
};

inline std::vector<std::pair<double, double>> param_scores(const ResultsTable& table,
                                                           const ParamSlice& slice) {
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  std::vector<std::pair<double, std::pair<double, std::size_t>>> acc;
  for (const auto& r : table) {
    if (r.mode != slice.mode || !r.score) continue;
    double value = 0.0;
    bool keep = false;
    switch (slice.param) {
      case GridParam::beta:
        keep = same(r.top_p, slice.top_p) && same(r.temperature, slice.temperature);
        value = r.beta;
        break;
      case GridParam::top_p:
        keep = same(r.beta, slice.beta) && same(r.temperature, slice.temperature);
        value = r.top_p;
        break;
      case GridParam::temperature:
        keep = same(r.beta, slice.beta) && same(r.top_p, slice.top_p);
        value = r.temperature;
        break;
    }
    if (!keep) continue;
    auto it = std::find_if(acc.begin(), acc.end(), [&](const auto& e) { return same(e.first, value); });
    if (it == acc.end()) {
      acc.push_back({value, {*r.score, 1}});
    } else {
      it->second.first += *r.score;
      it->second.second += 1;
    }
  }
  std::sort(acc.begin(), acc.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<double, double>> out;
  for (const auto& [value, sum] : acc) out.emplace_back(value, sum.first / static_cast<double>(sum.second));
  return out;
}

// Monte Carlo: each replicate shuffles the candidate scores once; its gain
// at N is max(first N) - first. Sharing the shuffle across N keeps every
// curve non-decreasing and gain(1) exactly zero.
inline std::vector<GainPoint> best_of_n_curve(std::span<const double> scores, std::size_t max_n,
                                              std::size_t replicates, std::uint64_t seed) {
  if (replicates < 1) throw RangeError("best-of-N needs at least one replicate");
  if (max_n < 1 || max_n > scores.size()) {
    throw RangeError("N of " + std::to_string(max_n) + " exceeds the " + std::to_string(scores.size()) +
                     " distinct values available");
  }
  Rng rng(seed);
  std::vector<double> sums(max_n, 0.0);
  std::vector<double> draw(scores.begin(), scores.end());
  for (std::size_t rep = 0; rep < replicates; ++rep) {
    for (std::size_t i = draw.size(); i > 1; --i) {
      std::swap(draw[i - 1], draw[static_cast<std::size_t>(rng.below(i))]);
    }
    double best = draw[0];
    for (std::size_t n = 1; n <= max_n; ++n) {
      best = std::max(best, draw[n - 1]);
      sums[n - 1] += best - draw[0];
    }
  }
  std::vector<GainPoint> curve;
  for (std::size_t n = 1; n <= max_n; ++n) {
    curve.push_back({n, sums[n - 1] / static_cast<double>(replicates)});
  }
  return curve;
}

// Exact expectation over all orderings of N distinct draws. With scores
// sorted ascending s_1..s_k,
//   gain(N) = sum_{j>=2} (s_j - s_{j-1}) * (P_N(max >= s_j) - P_1(first >= s_j)),
//   P_N(max >= s_j) = 1 - C(j-1, N) / C(k, N).
inline std::vector<GainPoint> best_of_n_curve_exact(std::span<const double> scores, std::size_t max_n) {
  const std::size_t k = scores.size();
  if (max_n < 1 || max_n > k) {
    throw RangeError("N of " + std::to_string(max_n) + " exceeds the " + std::to_string(k) +
                     " distinct values available");
  }
  std::vector<double> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end());
  // below[j] = C(j, N) / C(k, N): probability that all N draws fall among the
  // j smallest values; updated in place as N grows.
  std::vector<double> below(k + 1, 1.0);
  std::vector<double> first_below(k + 1);
  for (std::size_t j = 0; j <= k; ++j) first_below[j] = static_cast<double>(j) / static_cast<double>(k);

  std::vector<GainPoint> curve;
  for (std::size_t n = 1; n <= max_n; ++n) {
    for (std::size_t j = 0; j <= k; ++j) {
      const double factor = j >= n ? static_cast<double>(j - (n - 1)) / static_cast<double>(k - (n - 1)) : 0.0;
      below[j] *= factor;
    }
    double gain = 0.0;
    if (n > 1) {
      for (std::size_t j = 1; j < k; ++j) {
        // Step from s[j-1] up to s[j]; reached when some draw is among the top k - j.
        gain += (s[j] - s[j - 1]) * ((1.0 - below[j]) - (1.0 - first_below[j]));
      }
    }
    curve.push_back({n, gain});
  }
  return curve;
}

struct BestOfNOptions {
  ParamSlice slice;
  std::size_t max_n = 0;       // 0: every distinct value
  std::size_t replicates = 0;  // 0: exact enumeration
  std::uint64_t seed = 0;
};

inline std::vector<GainPoint> best_of_n_gain(const ResultsTable& table, const BestOfNOptions& options) {
  const auto cells = param_scores(table, options.slice);
  if (cells.empty()) throw RangeError("results hold no rows for the requested slice");
  std::vector<double> scores;
  for (const auto& c : cells) scores.push_back(c.second);
  const std::size_t max_n = options.max_n == 0 ? scores.size() : options.max_n;
  if (options.replicates == 0) return best_of_n_curve_exact(scores, max_n);
  return best_of_n_curve(scores, max_n, options.replicates, options.seed);
}

inline void write_gain_csv(const std::vector<GainPoint>& curve, std::ostream& out) {
  out << "n,expected_gain\n";
  for (const auto& p : curve) out << p.n << ',' << format_number(p.expected_gain) << '\n';
}

// ---------------------------------------------------------------------------
// Throughput.

struct ThroughputRates {
  double input_tokens_per_s = 0.0;
  double output_tokens_per_s = 0.0;
};

struct ThroughputReport {
  std::string baseline_name = "Standard";
  std::string candidate_name = "MoI";
  ThroughputRates baseline;
  ThroughputRates candidate;
  double input_overhead = 0.0;   // (baseline - candidate) / baseline
  double output_overhead = 0.0;
  std::size_t runs = 0;
};

namespace detail {

struct RunTotals {
  std::size_t prompt_tokens = 0;
  std::size_t generated_tokens = 0;
  double prefill_seconds = 0.0;
  double decode_seconds = 0.0;
};

template <LanguageModel LM>
void add_timed_prompt(RunTotals& t, const LM& model, const GenConfig& cfg,
                      const std::vector<TokenId>& prompt, std::size_t index) {
  GenConfig run = cfg;
  run.sampler.seed = derive_seed(cfg.sampler.seed, index);
  const auto r = generate(model, prompt, run);
  t.prompt_tokens += r.prompt_tokens;
  t.generated_tokens += r.generated_tokens;
  t.prefill_seconds += r.prefill_seconds;
  t.decode_seconds += r.decode_seconds;
}

inline void check_measurable(const RunTotals& t) {
  if (t.prompt_tokens == 0 || t.generated_tokens == 0 || t.prefill_seconds <= 0.0 ||
      t.decode_seconds <= 0.0) {
    throw MeasurementError("benchmark run processed no measurable tokens");
  }
}

}  // namespace detail

// Mean prefill and decode rates over `runs` timed runs per configuration.
// After one untimed warm-up each, the two configurations alternate prompt by
// prompt, swapping which goes first (ABBA), so load drift hits both equally.
template <LanguageModel LM>
ThroughputReport throughput_bench(const LM& model, const GenConfig& baseline, const GenConfig& candidate,
                                  const std::vector<std::vector<TokenId>>& prompts, std::size_t budget,
                                  std::size_t runs = 5) {
  if (budget < 1) throw InvalidInputError("benchmark budget must be at least one token");
  if (prompts.empty()) throw MeasurementError("benchmark needs at least one prompt");
  if (runs < 1) throw InvalidInputError("benchmark needs at least one run");
  GenConfig base = baseline;
  GenConfig cand = candidate;
  base.max_tokens = budget;
  cand.max_tokens = budget;

  for (const GenConfig* cfg : {&base, &cand}) {
    detail::RunTotals warm;
    for (std::size_t i = 0; i < prompts.size(); ++i) detail::add_timed_prompt(warm, model, *cfg, prompts[i], i);
    detail::check_measurable(warm);
  }

  ThroughputReport report;
  report.runs = runs;
  auto accumulate = [&](ThroughputRates& rates, const detail::RunTotals& t) {
    detail::check_measurable(t);
    rates.input_tokens_per_s += static_cast<double>(t.prompt_tokens) / t.prefill_seconds;
    rates.output_tokens_per_s += static_cast<double>(t.generated_tokens) / t.decode_seconds;
  };
  std::size_t turn = 0;
  for (std::size_t r = 0; r < runs; ++r) {
    detail::RunTotals base_totals, cand_totals;
    for (std::size_t i = 0; i < prompts.size(); ++i, ++turn) {
      if (turn % 2 == 0) {
        detail::add_timed_prompt(base_totals, model, base, prompts[i], i);
        detail::add_timed_prompt(cand_totals, model, cand, prompts[i], i);
      } else {
        detail::add_timed_prompt(cand_totals, model, cand, prompts[i], i);
        detail::add_timed_prompt(base_totals, model, base, prompts[i], i);
      }
    }
    accumulate(report.baseline, base_totals);
    accumulate(report.candidate, cand_totals);
  }
  const double n = static_cast<double>(runs);
  for (auto* rates : {&report.baseline, &report.candidate}) {
    rates->input_tokens_per_s /= n;
    rates->output_tokens_per_s /= n;
  }
  report.input_overhead = (report.baseline.input_tokens_per_s - report.candidate.input_tokens_per_s) /
                          report.baseline.input_tokens_per_s;
  report.output_overhead = (report.baseline.output_tokens_per_s - report.candidate.output_tokens_per_s) /
                           report.baseline.output_tokens_per_s;
  return report;
}

// Method / Input Speed / Output Speed table with an Overhead row.
inline std::string format_throughput(const ThroughputReport& r) {
  auto fixed = [](double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "method,input_tokens_per_s,output_tokens_per_s\n";
  out << r.baseline_name << ',' << fixed(r.baseline.input_tokens_per_s, 2) << ','
      << fixed(r.baseline.output_tokens_per_s, 2) << '\n';
  out << r.candidate_name << ',' << fixed(r.candidate.input_tokens_per_s, 2) << ','
      << fixed(r.candidate.output_tokens_per_s, 2) << '\n';
  out << "Overhead," << fixed(100.0 * r.input_overhead, 2) << "%," << fixed(100.0 * r.output_overhead, 2)
      << "%\n";
  return out.str();
}

}  // namespace moi
