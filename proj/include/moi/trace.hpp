#pragma once

// JSONL step traces and a model-free replay of the mixing math.
//
// One object per line:
//   {"step":int,"token":int,"H":float,"support":[int],"probs":[float],
//    "weights":[float],"mode":string,"beta":float,"vocab":int}
// "beta" and "vocab" are optional on read. Floats are written as the shortest
// decimal that round-trips to the same double.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "moi/error.hpp"
#include "moi/mix_core.hpp"
#include "moi/pipeline.hpp"

namespace moi {

using Trace = std::vector<StepRecord>;

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["token"] = r.token;
  j["H"] = r.entropy;
  j["support"] = r.support;
  j["probs"] = r.probs;
  j["weights"] = r.weights;
  j["mode"] = to_string(r.mode);
  if (r.beta) j["beta"] = *r.beta;
  if (r.vocab) j["vocab"] = *r.vocab;
  return j;
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.token = j.at("token").get<TokenId>();
  r.entropy = j.at("H").get<double>();
  r.support = j.at("support").get<std::vector<TokenId>>();
  r.probs = j.at("probs").get<std::vector<double>>();
  r.weights = j.at("weights").get<std::vector<double>>();
  r.mode = parse_mix_mode(j.at("mode").get<std::string>());
  if (j.contains("beta")) r.beta = j.at("beta").get<double>();
  if (j.contains("vocab")) r.vocab = j.at("vocab").get<std::size_t>();
  if (r.probs.size() != r.support.size() || r.weights.size() != r.support.size()) {
    throw InvalidInputError("support, probs and weights must have equal length");
  }
  if (!std::is_sorted(r.support.begin(), r.support.end()) ||
      std::adjacent_find(r.support.begin(), r.support.end()) != r.support.end()) {
    throw InvalidInputError("support ids must be strictly ascending");
  }
  if (!std::binary_search(r.support.begin(), r.support.end(), r.token)) {
    throw InvalidInputError("sampled token missing from support");
  }
  return r;
}

inline void write_trace(const Trace& steps, std::ostream& out) {
  for (const auto& r : steps) out << to_json(r).dump() << '\n';
}

inline void write_trace(const Trace& steps, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_trace(steps, out);
  if (!out) throw Error("write to '" + path + "' failed");
}

inline void write_trace(const GenerationResult& result, const std::string& path) {
  write_trace(result.steps, path);
}

// Blank lines are skipped; any other malformed line raises ParseError
// carrying its 1-based line number.
inline Trace read_trace(std::istream& in, const std::string& source = "trace") {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      trace.push_back(step_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace;
}

inline Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace '" + path + "'");
  return read_trace(in, path);
}

struct VerificationReport {
  bool passed = true;
  double tolerance = 1e-9;
  std::size_t steps_checked = 0;
  double max_entropy_deviation = 0.0;
  double max_weight_deviation = 0.0;
  std::vector<std::size_t> failing_steps;
};

// Recomputes H and the feedback weights of every record from its recorded
// distribution, sampled token and `cfg`, with no model involved. `vocab`
// supplies the entropy normalizer for records that do not carry one.
inline VerificationReport replay_verify(const Trace& trace, const GenConfig& cfg,
                                        std::optional<std::size_t> vocab = std::nullopt,
                                        double tolerance = 1e-9) {
  cfg.mix.validate();
  VerificationReport report;
  report.tolerance = tolerance;
  for (const auto& r : trace) {
    if (r.mode != cfg.mix.mode) {
      throw InvalidConfigError("step " + std::to_string(r.step) + " was recorded in mode " +
                               to_string(r.mode) + " but replay expects " + to_string(cfg.mix.mode));
    }
    if (r.beta && cfg.mix.mode == MixMode::moi && *r.beta != cfg.mix.beta) {
      std::ostringstream msg;
      msg << "step " << r.step << " was recorded with beta " << *r.beta << " but replay uses "
          << cfg.mix.beta;
      throw InvalidConfigError(msg.str());
    }
    if (r.vocab && vocab && *r.vocab != *vocab) {
      throw InvalidConfigError("step " + std::to_string(r.step) + " vocabulary mismatch");
    }
    const auto full_vocab = r.vocab ? r.vocab : vocab;
    if (!full_vocab) {
      throw InvalidConfigError("step " + std::to_string(r.step) +
                               " carries no vocabulary size and none was supplied");
    }

    double dh = INFINITY;
    double dw = INFINITY;
    try {
      const ProbabilityVector p = r.distribution(*full_vocab);
      const double h = normalized_entropy(p);
      const MixingWeights expected = feedback_weights(cfg, p, r.token, h);
      dh = std::abs(h - r.entropy);
      dw = 0.0;
      for (std::size_t k = 0; k < r.support.size(); ++k) {
        dw = std::max(dw, std::abs(expected.at(r.support[k]) - r.weights[k]));
      }
    } catch (const InvalidInputError&) {
      // Recorded distribution is not a valid categorical; the step fails.
    } catch (const IndexError&) {
    }
    if (!std::isfinite(dw) || !std::isfinite(dh)) dw = INFINITY;

    report.max_entropy_deviation = std::max(report.max_entropy_deviation, dh);
    report.max_weight_deviation = std::max(report.max_weight_deviation, dw);
    if (!(dh <= tolerance && dw <= tolerance)) {
      report.passed = false;
      report.failing_steps.push_back(r.step);
    }
    ++report.steps_checked;
  }
  return report;
}

}  // namespace moi
