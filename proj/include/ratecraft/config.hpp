#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "active_query.hpp"

namespace ratecraft {

enum class TeacherKind { synthetic, http_human };

enum class BudgetMode { answers, wall_clock };

/// Human labeling throughput used by the wall-clock budget mode (answers per
/// minute).
inline constexpr double kRatingsPerMinute = 14.03;
inline constexpr double kPreferencesPerMinute = 8.7;

struct ExperimentConfig {
  std::string env = "LineWalker";
  QueryKind modality = QueryKind::rating;
  int n = 4;
  long total_steps = 100000;
  int query_budget = 200;
  int queries_per_round = 10;
  long reward_update_interval = 2000;
  int segment_length = 50;
  double reward_gamma = 1.0;
  double policy_gamma = 0.99;
  double noise_sharpness = 30.0;
  int ensemble_size = 3;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  TeacherKind teacher = TeacherKind::synthetic;
  std::string out_dir;

  // Reward learning.
  std::vector<int> reward_hidden = {64, 64};
  double reward_lr = 3e-4;
  int reward_batch_size = 64;
  int reward_epochs = 50;

  // Query selection.
  int pool_size = 100;
  int preference_candidates = 100;
  int replay_capacity = 1000;

  // Policy learning.
  std::vector<int> policy_hidden = {32, 32};
  double actor_lr = 1e-3;
  double critic_lr = 3e-3;
  double entropy_coef = 1e-3;
  double gae_lambda = 0.95;
  int rollout_steps = 500;

  // Evaluation.
  long eval_interval = 5000;
  int eval_episodes = 3;

  // Use the hidden ground-truth reward for policy training (oracle yardstick).
  bool oracle_reward = false;

  // Human mode.
  double human_round_timeout_s = 600.0;
  BudgetMode budget_mode = BudgetMode::answers;
  double budget_minutes = 0.0;
  std::string ui_dir;

  void validate() const {
    if (modality == QueryKind::rating && n < 2) throw std::invalid_argument("rating modality needs n >= 2");
    if (query_budget < 0 || queries_per_round < 1) throw std::invalid_argument("budget must be >= 0 and queries per round >= 1");
    if (query_budget > 0 && query_budget < queries_per_round)
      throw std::invalid_argument("query budget must be at least queries per round");
    if (segment_length < 1) throw std::invalid_argument("segment length must be >= 1");
    if (total_steps < 0 || reward_update_interval < 1 || rollout_steps < 1)
      throw std::invalid_argument("step counts must be positive");
    if (ensemble_size < 1) throw std::invalid_argument("ensemble size must be >= 1");
    if (!(reward_gamma > 0.0 && reward_gamma <= 1.0)) throw std::invalid_argument("reward discount must lie in (0, 1]");
    if (!(noise_sharpness > 0.0)) throw std::invalid_argument("noise sharpness must be positive");
    if (eval_episodes < 1 || eval_interval < 1) throw std::invalid_argument("evaluation settings must be positive");
  }

  /// Answers the run may consume.
  int effective_budget() const {
    if (budget_mode == BudgetMode::answers) return query_budget;
    const double rate = modality == QueryKind::rating ? kRatingsPerMinute : kPreferencesPerMinute;
    return static_cast<int>(budget_minutes * rate);
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"env", c.env},
       {"modality", to_string(c.modality)},
       {"n", c.n},
       {"total_steps", c.total_steps},
       {"query_budget", c.query_budget},
       {"queries_per_round", c.queries_per_round},
       {"reward_update_interval", c.reward_update_interval},
       {"segment_length", c.segment_length},
       {"reward_gamma", c.reward_gamma},
       {"policy_gamma", c.policy_gamma},
       {"noise_sharpness", c.noise_sharpness},
       {"ensemble_size", c.ensemble_size},
       {"seed", c.seed},
       {"seeds", c.seeds},
       {"teacher", c.teacher == TeacherKind::synthetic ? "synthetic" : "http-human"},
       {"out_dir", c.out_dir},
       {"reward_hidden", c.reward_hidden},
       {"reward_lr", c.reward_lr},
       {"reward_batch_size", c.reward_batch_size},
       {"reward_epochs", c.reward_epochs},
       {"pool_size", c.pool_size},
       {"preference_candidates", c.preference_candidates},
       {"replay_capacity", c.replay_capacity},
       {"policy_hidden", c.policy_hidden},
       {"actor_lr", c.actor_lr},
       {"critic_lr", c.critic_lr},
       {"entropy_coef", c.entropy_coef},
       {"gae_lambda", c.gae_lambda},
       {"rollout_steps", c.rollout_steps},
       {"eval_interval", c.eval_interval},
       {"eval_episodes", c.eval_episodes},
       {"oracle_reward", c.oracle_reward},
       {"human_round_timeout_s", c.human_round_timeout_s},
       {"budget_mode", c.budget_mode == BudgetMode::answers ? "answers" : "wall_clock"},
       {"budget_minutes", c.budget_minutes},
       {"ui_dir", c.ui_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const ExperimentConfig d;
  for (auto it = j.begin(); it != j.end(); ++it) {
    nlohmann::json known;
    to_json(known, d);
    if (!known.contains(it.key())) throw std::invalid_argument("unknown config key '" + it.key() + "'");
  }
  c.env = j.value("env", d.env);
  c.modality = query_kind_from_string(j.value("modality", std::string(to_string(d.modality))));
  c.n = j.value("n", d.n);
  c.total_steps = j.value("total_steps", d.total_steps);
  c.query_budget = j.value("query_budget", d.query_budget);
  c.queries_per_round = j.value("queries_per_round", d.queries_per_round);
  c.reward_update_interval = j.value("reward_update_interval", d.reward_update_interval);
  c.segment_length = j.value("segment_length", d.segment_length);
  c.reward_gamma = j.value("reward_gamma", d.reward_gamma);
  c.policy_gamma = j.value("policy_gamma", d.policy_gamma);
  c.noise_sharpness = j.value("noise_sharpness", d.noise_sharpness);
  c.ensemble_size = j.value("ensemble_size", d.ensemble_size);
  c.seed = j.value("seed", d.seed);
  c.seeds = j.value("seeds", d.seeds);
  const auto teacher = j.value("teacher", std::string("synthetic"));
  if (teacher == "synthetic")
    c.teacher = TeacherKind::synthetic;
  else if (teacher == "http-human")
    c.teacher = TeacherKind::http_human;
  else
    throw std::invalid_argument("unknown teacher kind '" + teacher + "'");
  c.out_dir = j.value("out_dir", d.out_dir);
  c.reward_hidden = j.value("reward_hidden", d.reward_hidden);
  c.reward_lr = j.value("reward_lr", d.reward_lr);
  c.reward_batch_size = j.value("reward_batch_size", d.reward_batch_size);
  c.reward_epochs = j.value("reward_epochs", d.reward_epochs);
  c.pool_size = j.value("pool_size", d.pool_size);
  c.preference_candidates = j.value("preference_candidates", d.preference_candidates);
  c.replay_capacity = j.value("replay_capacity", d.replay_capacity);
  c.policy_hidden = j.value("policy_hidden", d.policy_hidden);
  c.actor_lr = j.value("actor_lr", d.actor_lr);
  c.critic_lr = j.value("critic_lr", d.critic_lr);
  c.entropy_coef = j.value("entropy_coef", d.entropy_coef);
  c.gae_lambda = j.value("gae_lambda", d.gae_lambda);
  c.rollout_steps = j.value("rollout_steps", d.rollout_steps);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
  c.oracle_reward = j.value("oracle_reward", d.oracle_reward);
  c.human_round_timeout_s = j.value("human_round_timeout_s", d.human_round_timeout_s);
  const auto mode = j.value("budget_mode", std::string("answers"));
  if (mode == "answers")
    c.budget_mode = BudgetMode::answers;
  else if (mode == "wall_clock")
    c.budget_mode = BudgetMode::wall_clock;
  else
    throw std::invalid_argument("unknown budget mode '" + mode + "'");
  c.budget_minutes = j.value("budget_minutes", d.budget_minutes);
  c.ui_dir = j.value("ui_dir", d.ui_dir);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return nlohmann::json::parse(in).get<ExperimentConfig>();
}

/// FNV-1a of the canonical JSON of everything except the output directory.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = c;
  j.erase("out_dir");
  j.erase("seeds");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ratecraft
