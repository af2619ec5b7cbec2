// Command-line front end: model init, generation, grids, best-of-N curves,
// throughput, prompt blending and trace replay.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "moi/moi.hpp"

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t seed_with_env(std::uint64_t flag_value) {
  if (const char* env = std::getenv("MOI_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("MOI_SEED is not an unsigned integer: ") + env);
    }
  }
  return flag_value;
}

void write_file_atomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw moi::Error("cannot open '" + tmp + "' for writing");
    out << contents;
    if (!out) throw moi::Error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

// Sampling and mixing flags shared by generate, bench and replay.
struct DecodeFlags {
  std::string mode = "moi";
  double beta = 1.0;
  double temperature = 0.6;
  double top_p = 0.95;
  std::uint64_t seed = 0;
  std::string prior_source = "sampled_dist";
  bool no_passthrough = false;
  std::vector<int> stop;
  std::vector<int> special;

  void add_mixing(CLI::App& cmd) {
    cmd.add_option("--mode", mode, "standard | direct | moi")
        ->check(CLI::IsMember({"standard", "direct", "direct_mixture", "moi"}));
    cmd.add_option("--beta", beta, "posterior concentration on the sampled token")->check(CLI::PositiveNumber);
    cmd.add_option("--prior-source", prior_source, "distribution feeding the posterior")
        ->check(CLI::IsMember({"sampled_dist", "raw_softmax"}));
    cmd.add_flag("--no-special-passthrough", no_passthrough, "mix stop/special tokens like any other");
    cmd.add_option("--stop", stop, "stop token id (repeatable)");
    cmd.add_option("--special", special, "structural token id fed back one-hot (repeatable)");
  }

  void add_sampling(CLI::App& cmd) {
    cmd.add_option("--temperature", temperature)->check(CLI::PositiveNumber);
    cmd.add_option("--top-p", top_p)->check(CLI::Range(0.0, 1.0));
    cmd.add_option("--seed", seed, "sampling seed (MOI_SEED overrides)");
  }

  moi::GenConfig config() const {
    moi::GenConfig cfg;
    cfg.mix = {moi::parse_mix_mode(mode), beta};
    cfg.sampler = {temperature, top_p, seed_with_env(seed)};
    cfg.prior_source = moi::parse_prior_source(prior_source);
    cfg.special_passthrough = !no_passthrough;
    for (int t : stop) cfg.stop_tokens.insert(t);
    for (int t : special) cfg.special_tokens.insert(t);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-inputs decoding engine"};
  app.require_subcommand(1);

  // init-model
  auto* init_cmd = app.add_subcommand("init-model", "write a randomly initialized TLM/1 model");
  moi::ModelConfig model_config;
  std::string init_out;
  init_cmd->add_option("--out", init_out)->required();
  init_cmd->add_option("--seed", model_config.init_seed);
  init_cmd->add_option("--vocab", model_config.vocab);
  init_cmd->add_option("--dim", model_config.dim);
  init_cmd->add_option("--heads", model_config.heads);
  init_cmd->add_option("--layers", model_config.layers);
  init_cmd->add_option("--context", model_config.context);
  init_cmd->add_option("--logit-scale", model_config.logit_scale);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "decode a continuation of a byte prompt");
  std::string gen_model, gen_prompt, gen_trace;
  std::size_t gen_max_tokens = 64;
  DecodeFlags gen_flags;
  gen_cmd->add_option("--model", gen_model)->required();
  gen_cmd->add_option("--prompt", gen_prompt, "prompt bytes")->required();
  gen_cmd->add_option("--max-tokens", gen_max_tokens)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--trace", gen_trace, "write per-step JSONL trace here");
  gen_flags.add_mixing(*gen_cmd);
  gen_flags.add_sampling(*gen_cmd);

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "run a hyperparameter grid");
  std::string grid_config, grid_out, grid_model;
  std::size_t grid_jobs = 1;
  bool grid_strict = false;
  grid_cmd->add_option("--config", grid_config, "GridSpec JSON")->required();
  grid_cmd->add_option("--out", grid_out, "results CSV")->required();
  grid_cmd->add_option("--model", grid_model, "overrides the task's model");
  grid_cmd->add_option("--jobs", grid_jobs)->check(CLI::PositiveNumber);
  grid_cmd->add_flag("--strict", grid_strict, "exit 1 if any trial failed");

  // bestofn
  auto* bon_cmd = app.add_subcommand("bestofn", "best-of-N random-search gain curve");
  std::string bon_results, bon_out, bon_param = "beta", bon_mode = "moi";
  moi::BestOfNOptions bon;
  bon_cmd->add_option("--results", bon_results, "results CSV")->required();
  bon_cmd->add_option("--out", bon_out, "curve CSV (default stdout)");
  bon_cmd->add_option("--param", bon_param)->check(CLI::IsMember({"beta", "top_p", "temperature"}));
  bon_cmd->add_option("--mode", bon_mode)->check(CLI::IsMember({"standard", "direct", "direct_mixture", "moi"}));
  bon_cmd->add_option("--max-n", bon.max_n, "largest N (default: all distinct values)");
  bon_cmd->add_option("--replicates", bon.replicates, "Monte Carlo replicates (0: exact enumeration)");
  bon_cmd->add_option("--seed", bon.seed);
  bon_cmd->add_option("--default-beta", bon.slice.beta);
  bon_cmd->add_option("--default-top-p", bon.slice.top_p);
  bon_cmd->add_option("--default-temperature", bon.slice.temperature);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "prefill/decode throughput, baseline vs candidate");
  std::string bench_model, bench_out, bench_baseline = "standard";
  std::vector<std::string> bench_prompts;
  std::size_t bench_budget = 128, bench_runs = 5;
  DecodeFlags bench_flags;
  bench_cmd->add_option("--model", bench_model)->required();
  bench_cmd->add_option("--prompt", bench_prompts, "prompt bytes (repeatable)");
  bench_cmd->add_option("--budget", bench_budget, "generated tokens per prompt")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--runs", bench_runs)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--baseline", bench_baseline, "baseline mode")
      ->check(CLI::IsMember({"standard", "direct", "direct_mixture", "moi"}));
  bench_cmd->add_option("--out", bench_out, "report CSV (default stdout)");
  bench_flags.add_mixing(*bench_cmd);
  bench_flags.add_sampling(*bench_cmd);

  // blend
  auto* blend_cmd = app.add_subcommand("blend", "length-normalize and average prompt embeddings");
  std::vector<std::string> blend_inputs, blend_texts;
  std::string blend_model, blend_out;
  std::size_t blend_length = 0;
  blend_cmd->add_option("--in", blend_inputs, "prompt matrix JSON (repeatable)");
  blend_cmd->add_option("--model", blend_model, "embed --text prompts with this model's table");
  blend_cmd->add_option("--text", blend_texts, "byte prompt to embed (repeatable)");
  blend_cmd->add_option("--length", blend_length, "target length (default: longest prompt)");
  blend_cmd->add_option("--out", blend_out, "blended matrix JSON (default stdout)");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "recheck a trace's mixing math without a model");
  std::string replay_trace;
  std::optional<std::size_t> replay_vocab;
  double replay_tolerance = 1e-9;
  DecodeFlags replay_flags;
  replay_cmd->add_option("--trace", replay_trace)->required();
  replay_cmd->add_option("--vocab", replay_vocab, "vocabulary size for records that omit it");
  replay_cmd->add_option("--tolerance", replay_tolerance);
  replay_flags.add_mixing(*replay_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*init_cmd) {
      moi::save_weights(moi::init_random(model_config), init_out);
      return 0;
    }

    if (*gen_cmd) {
      const auto model = moi::load_weights(gen_model);
      auto cfg = gen_flags.config();
      cfg.max_tokens = gen_max_tokens;
      const auto result = moi::generate(model, moi::bytes_to_tokens(gen_prompt), cfg);
      for (std::size_t i = 0; i < result.tokens.size(); ++i) {
        std::cout << (i ? " " : "") << result.tokens[i];
      }
      std::cout << '\n';
      if (!gen_trace.empty()) moi::write_trace(result, gen_trace);
      return 0;
    }

    if (*grid_cmd) {
      auto spec = moi::read_grid_spec(grid_config);
      if (!grid_model.empty()) spec.task.model_path = grid_model;
      const auto model = moi::load_task_model(spec.task);
      const auto table = moi::run_grid(spec, model, {grid_out, grid_jobs, {}});
      std::size_t failed = 0;
      for (const auto& r : table) failed += !r.score;
      std::cerr << table.size() << " trials, " << failed << " failed\n";
      return grid_strict && failed > 0 ? kRuntimeFailure : 0;
    }

    if (*bon_cmd) {
      bon.slice.param = moi::parse_grid_param(bon_param);
      bon.slice.mode = moi::parse_mix_mode(bon_mode);
      const auto curve = moi::best_of_n_gain(moi::read_results_csv(bon_results), bon);
      std::ostringstream csv;
      moi::write_gain_csv(curve, csv);
      if (bon_out.empty()) {
        std::cout << csv.str();
      } else {
        write_file_atomically(bon_out, csv.str());
      }
      return 0;
    }

    if (*bench_cmd) {
      const auto model = moi::load_weights(bench_model);
      if (bench_prompts.empty()) bench_prompts = {"the quick brown fox", "hello world", "abc"};
      std::vector<std::vector<moi::TokenId>> prompts;
      for (const auto& p : bench_prompts) prompts.push_back(moi::bytes_to_tokens(p));
      auto candidate = bench_flags.config();
      auto baseline = candidate;
      baseline.mix.mode = moi::parse_mix_mode(bench_baseline);
      auto report = moi::throughput_bench(model, baseline, candidate, prompts, bench_budget, bench_runs);
      report.baseline_name = moi::to_string(baseline.mix.mode);
      report.candidate_name = moi::to_string(candidate.mix.mode);
      const auto text = moi::format_throughput(report);
      if (bench_out.empty()) {
        std::cout << text;
      } else {
        write_file_atomically(bench_out, text);
      }
      return 0;
    }

    if (*blend_cmd) {
      std::vector<moi::PromptMatrix> prompts;
      for (const auto& path : blend_inputs) {
        for (auto& m : moi::read_prompt_file(path)) prompts.push_back(std::move(m));
      }
      if (!blend_texts.empty()) {
        if (blend_model.empty()) throw UsageError("--text needs --model");
        const auto model = moi::load_weights(blend_model);
        const auto& table = model.embeddings();
        for (const auto& text : blend_texts) {
          if (text.empty()) throw moi::InvalidInputError("empty --text prompt");
          std::vector<double> values;
          for (auto id : moi::bytes_to_tokens(text)) {
            auto row = table.row(id);
            values.insert(values.end(), row.begin(), row.end());
          }
          prompts.emplace_back(text.size(), table.dim(), std::move(values));
        }
      }
      const auto blended = moi::blend_prompts(prompts, blend_length);
      const auto json = moi::to_json(blended).dump() + "\n";
      if (blend_out.empty()) {
        std::cout << json;
      } else {
        write_file_atomically(blend_out, json);
      }
      return 0;
    }

    if (*replay_cmd) {
      const auto trace = moi::read_trace(replay_trace);
      const auto report = moi::replay_verify(trace, replay_flags.config(), replay_vocab, replay_tolerance);
      std::cout << (report.passed ? "PASS" : "FAIL") << " steps=" << report.steps_checked
                << " max_entropy_dev=" << moi::format_number(report.max_entropy_deviation)
                << " max_weight_dev=" << moi::format_number(report.max_weight_deviation) << '\n';
      for (auto step : report.failing_steps) std::cout << "failing step " << step << '\n';
      return report.passed ? 0 : kRuntimeFailure;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
