#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "active_query.hpp"
#include "config.hpp"
#include "envs.hpp"
#include "labeling_service.hpp"
#include "policy.hpp"
#include "reward_learning.hpp"
#include "segment.hpp"
#include "teacher.hpp"

namespace ratecraft {

/// Anything that turns tickets into answers. Answers may come back for a
/// subset of the tickets (and for tickets of earlier rounds).
class TicketTeacher {
 public:
  virtual ~TicketTeacher() = default;
  virtual std::vector<TeacherAnswer> answer(const std::vector<QueryTicket>& tickets) = 0;
};

class SyntheticTicketTeacher final : public TicketTeacher {
 public:
  SyntheticTicketTeacher(const ExperimentConfig& config, const EnvSpec& spec)
      : rating_(SyntheticRatingTeacher::for_env(std::max(config.n, 1), spec,
                                                static_cast<std::size_t>(config.segment_length), config.reward_gamma,
                                                {}, config.seed + 17)),
        preference_(config.seed + 23) {}

  std::vector<TeacherAnswer> answer(const std::vector<QueryTicket>& tickets) override {
    std::vector<TeacherAnswer> out;
    for (const auto& t : tickets) {
      TeacherAnswer a;
      a.ticket_id = t.id;
      if (t.kind == QueryKind::rating)
        a.rating_class = rating_.rate(*t.segments.at(0));
      else
        a.preferred = preference_.prefer(*t.segments.at(0), *t.segments.at(1));
      out.push_back(a);
    }
    return out;
  }

  const SyntheticRatingTeacher& rating_teacher() const { return rating_; }

 private:
  SyntheticRatingTeacher rating_;
  SyntheticPreferenceTeacher preference_;
};

/// Routes tickets through a LabelingService and waits for humans.
class ServiceTicketTeacher final : public TicketTeacher {
 public:
  ServiceTicketTeacher(LabelingService& service, double timeout_s) : service_(service), timeout_s_(timeout_s) {}

  std::vector<TeacherAnswer> answer(const std::vector<QueryTicket>& tickets) override {
    service_.publish(tickets);
    service_.wait_all_answered(std::chrono::duration<double>(timeout_s_));
    return service_.drain_answers();
  }

 private:
  LabelingService& service_;
  double timeout_s_;
};

struct CurveRow {
  long step = 0;
  double mean_gt_return = 0.0;
  double std_gt_return = 0.0;
  double mean_learned_return = 0.0;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string curve_csv(const std::vector<CurveRow>& rows) {
  std::string out = "step,mean_gt_return,std_gt_return,mean_learned_return\n";
  for (const auto& r : rows)
    out += std::to_string(r.step) + "," + format_double(r.mean_gt_return) + "," + format_double(r.std_gt_return) +
           "," + format_double(r.mean_learned_return) + "\n";
  return out;
}

inline std::vector<CurveRow> parse_curve_csv(const std::string& text) {
  std::vector<CurveRow> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurveRow r;
    char comma;
    std::istringstream ls(line);
    ls >> r.step >> comma >> r.mean_gt_return >> comma >> r.std_gt_return >> comma >> r.mean_learned_return;
    if (!ls) throw std::runtime_error("malformed curve row: " + line);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json curve_json(const std::vector<CurveRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"step", r.step},
                   {"mean_gt_return", r.mean_gt_return},
                   {"std_gt_return", r.std_gt_return},
                   {"mean_learned_return", r.mean_learned_return}});
  return out;
}

struct RoundRecord {
  int round = 0;
  long step = 0;
  std::size_t tickets_issued = 0;
  std::size_t answers = 0;
  std::size_t labels_total = 0;
  double reward_loss = 0.0;
  std::vector<double> boundaries;  // first ensemble member, rating modality
  std::vector<std::size_t> class_counts;
};

struct RunRecord {
  std::string config_hash;
  ExperimentConfig config;
  std::vector<RoundRecord> rounds;
  std::vector<CurveRow> curve;
  std::size_t tickets_issued = 0;
  std::size_t answers_consumed = 0;
  std::size_t labels_total = 0;
  std::size_t reward_updates = 0;
  std::size_t skipped_policy_updates = 0;
  double final_mean_gt_return = 0.0;
  double final_std_gt_return = 0.0;
  std::optional<RatedDataset> rating_dataset;
  std::optional<PreferenceDataset> preference_dataset;
  std::optional<RewardEnsemble> reward_ensemble;
  std::optional<Policy> policy;

  nlohmann::json summary_json() const {
    nlohmann::json rounds_json = nlohmann::json::array();
    for (const auto& r : rounds)
      rounds_json.push_back({{"round", r.round},
                             {"step", r.step},
                             {"tickets_issued", r.tickets_issued},
                             {"answers", r.answers},
                             {"labels_total", r.labels_total},
                             {"reward_loss", r.reward_loss},
                             {"boundaries", r.boundaries},
                             {"class_counts", r.class_counts}});
    return {{"config_hash", config_hash},
            {"tickets_issued", tickets_issued},
            {"answers_consumed", answers_consumed},
            {"labels_total", labels_total},
            {"reward_updates", reward_updates},
            {"skipped_policy_updates", skipped_policy_updates},
            {"final_mean_gt_return", final_mean_gt_return},
            {"final_std_gt_return", final_std_gt_return},
            {"rounds", rounds_json}};
  }
};

/// Splits rollouts into fixed-length segments that never straddle episodes.
class SegmentCutter {
 public:
  SegmentCutter(std::size_t length, double gamma) : length_(length), gamma_(gamma) {}

  std::vector<SegmentPtr> feed(const Rollout& r, SegmentId& next_id) {
    std::vector<SegmentPtr> out;
    for (Eigen::Index t = 0; t < r.size(); ++t) {
      if (!current_) current_ = std::make_shared<Segment>();
      current_->states.emplace_back(r.states.col(t).data(), r.states.col(t).data() + r.states.rows());
      current_->actions.emplace_back(r.actions.col(t).data(), r.actions.col(t).data() + r.actions.rows());
      rewards_.push_back(r.env_rewards[static_cast<std::size_t>(t)]);
      if (current_->length() == length_) {
        current_->id = next_id++;
        current_->gt_return = discounted_sum(rewards_, gamma_);
        out.push_back(std::move(current_));
        current_.reset();
        rewards_.clear();
      } else if (r.dones[static_cast<std::size_t>(t)]) {
        current_.reset();
        rewards_.clear();
      }
    }
    return out;
  }

 private:
  std::size_t length_;
  double gamma_;
  std::shared_ptr<Segment> current_;
  std::vector<double> rewards_;
};

struct RunHooks {
  std::function<void(const std::vector<CurveRow>&)> on_curve;
  std::function<void(const RoundRecord&)> on_round;
};

inline RewardEnsemble make_ensemble(const ExperimentConfig& config, const EnvSpec& spec) {
  RewardNetConfig rc;
  rc.hidden = config.reward_hidden;
  rc.seed = config.seed * 1000u + 11u;
  return RewardEnsemble(spec.state_dim, spec.action_dim, config.ensemble_size, rc);
}

/// rollout -> pool -> queries -> labels -> reward update -> relabel -> policy
/// update, until the step budget is spent.
inline RunRecord run_experiment(const ExperimentConfig& config, TicketTeacher& teacher, const RunHooks& hooks = {}) {
  config.validate();
  RunRecord rec;
  rec.config = config;
  rec.config_hash = config_hash(config);
  auto env = make_env(config.env);
  const EnvSpec spec = env->spec();
  const bool rating = config.modality == QueryKind::rating;
  const auto length = static_cast<std::size_t>(config.segment_length);

  PolicyConfig pc;
  pc.hidden = config.policy_hidden;
  pc.gamma = config.policy_gamma;
  pc.gae_lambda = config.gae_lambda;
  pc.entropy_coef = config.entropy_coef;
  pc.actor_lr = config.actor_lr;
  pc.critic_lr = config.critic_lr;
  pc.rollout_steps = static_cast<std::size_t>(config.rollout_steps);
  PolicyTrainer trainer(spec, pc, config.seed * 1000u + 5u);

  RewardTrainingConfig rtc;
  rtc.adam.learning_rate = config.reward_lr;
  rtc.batch_size = config.reward_batch_size;
  rtc.epochs = config.reward_epochs;
  rtc.gamma = config.reward_gamma;
  rtc.noise_sharpness = config.noise_sharpness;
  RewardLearner learner(make_ensemble(config, spec), rtc, config.seed * 1000u + 13u);
  RewardSnapshot snapshot = learner.snapshot(rating);

  RatedDataset ratings(rating ? config.n : 1, length);
  PreferenceDataset preferences(length);
  std::map<TicketId, QueryTicket> outstanding;
  std::mt19937_64 query_rng(config.seed * 1000u + 29u);
  std::deque<SegmentPtr> replay;
  std::set<SegmentId> queried;
  SegmentCutter cutter(length, config.reward_gamma);
  SegmentId next_segment = 0;
  TicketId next_ticket = 0;
  const int budget = config.effective_budget();
  int round = 0;

  RewardFn oracle = ground_truth_reward_fn(*env);
  auto eval_env = env->clone();
  double last_learned_return = 0.0;
  long next_eval = 0;
  long next_round = config.reward_update_interval;
  long step = 0;

  auto evaluate = [&](long at) {
    Evaluation ev = evaluate_policy(*eval_env, trainer.policy(), config.eval_episodes, config.seed + 101);
    rec.curve.push_back({at, ev.mean, ev.std, last_learned_return});
    rec.final_mean_gt_return = ev.mean;
    rec.final_std_gt_return = ev.std;
    if (hooks.on_curve) hooks.on_curve(rec.curve);
  };

  evaluate(0);
  next_eval = config.eval_interval;
  while (step < config.total_steps) {
    const auto n = static_cast<std::size_t>(std::min<long>(config.rollout_steps, config.total_steps - step));
    Rollout rollout = trainer.collect(*env, n);
    step += static_cast<long>(n);
    for (auto& seg : cutter.feed(rollout, next_segment)) {
      replay.push_back(std::move(seg));
      if (replay.size() > static_cast<std::size_t>(config.replay_capacity)) replay.pop_front();
    }

    if (step >= next_round) {
      next_round += config.reward_update_interval;
      const long in_flight = static_cast<long>(rec.answers_consumed + outstanding.size());
      const long room = std::max<long>(0, budget - in_flight);
      RoundRecord rr;
      rr.round = round;
      rr.step = step;
      std::vector<QueryTicket> tickets;
      std::vector<SegmentPtr> replay_vec;
      for (const auto& s : replay)
        if (!queried.count(s->id)) replay_vec.push_back(s);
      if (room > 0 && !replay_vec.empty()) {
        const std::size_t want = static_cast<std::size_t>(std::min<long>(config.queries_per_round, room));
        CandidatePool pool = refresh_pool(replay_vec, static_cast<std::size_t>(config.pool_size), query_rng());
        if (rating) {
          for (auto i : select_rating_indices(pool, learner.ensemble(), config.reward_gamma, want, query_rng))
            tickets.push_back({next_ticket++, QueryKind::rating, {pool[i]}, step});
        } else if (pool.size() >= 2) {
          for (auto p : select_preference_pairs(pool, learner.ensemble(), config.reward_gamma,
                                                static_cast<std::size_t>(config.preference_candidates), want,
                                                query_rng))
            tickets.push_back({next_ticket++, QueryKind::preference, {pool[p.a], pool[p.b]}, step});
        }
      }
      if (!tickets.empty() || !outstanding.empty()) {
        for (const auto& t : tickets) {
          outstanding[t.id] = t;
          for (const auto& s : t.segments) queried.insert(s->id);
        }
        rec.tickets_issued += tickets.size();
        rr.tickets_issued = tickets.size();
        for (const auto& a : teacher.answer(tickets)) {
          auto it = outstanding.find(a.ticket_id);
          if (it == outstanding.end()) continue;  // not issued by this run, or already used
          const QueryTicket& t = it->second;
          if (t.kind == QueryKind::rating) {
            ratings.append(t.segments[0], {t.segments[0]->id, a.rating_class,
                                           config.teacher == TeacherKind::synthetic ? LabelSource::synthetic
                                                                                    : LabelSource::human,
                                           wall_clock_ms()});
          } else {
            preferences.append(t.segments[0], t.segments[1],
                               {t.segments[0]->id, t.segments[1]->id, a.preferred,
                                config.teacher == TeacherKind::synthetic ? LabelSource::synthetic
                                                                         : LabelSource::human,
                                wall_clock_ms()});
          }
          outstanding.erase(it);
          ++rec.answers_consumed;
          ++rr.answers;
        }
        if (rr.answers > 0) {
          rr.reward_loss = rating ? learner.train_rating(ratings) : learner.train_preference(preferences);
          snapshot = learner.snapshot(rating);
          ++rec.reward_updates;
        }
        rec.labels_total = rating ? ratings.size() : preferences.size();
        rr.labels_total = rec.labels_total;
        if (rating) {
          rr.class_counts = ratings.class_counts();
          if (learner.updates() > 0) rr.boundaries = learner.frames().front().boundaries.values();
        }
        rec.rounds.push_back(rr);
        if (hooks.on_round) hooks.on_round(rr);
        ++round;
      }
    }

    // Relabel the whole batch with one snapshot.
    const RewardSnapshot current = snapshot;
    RewardFn reward = config.oracle_reward ? oracle : RewardFn([current](const MatrixXd& x) { return current.rewards(x); });
    UpdateStats us = trainer.update(rollout, reward);
    last_learned_return = us.mean_learned_return;

    while (step >= next_eval) {
      evaluate(next_eval);
      next_eval += config.eval_interval;
    }
  }
  if (rec.curve.empty() || rec.curve.back().step != step) evaluate(step);

  rec.skipped_policy_updates = trainer.skipped_updates();
  rec.labels_total = rating ? ratings.size() : preferences.size();
  if (rating)
    rec.rating_dataset = std::move(ratings);
  else
    rec.preference_dataset = std::move(preferences);
  rec.reward_ensemble = learner.ensemble();
  rec.policy = trainer.policy();
  return rec;
}

inline RunRecord run_experiment(const ExperimentConfig& config, const RunHooks& hooks = {}) {
  auto env = make_env(config.env);
  SyntheticTicketTeacher teacher(config, env->spec());
  return run_experiment(config, teacher, hooks);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// config.json, dataset.jsonl, curve.csv, run.json and checkpoints.
inline void write_run_outputs(const RunRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", nlohmann::json(rec.config).dump(2) + "\n");
  {
    std::ofstream out(dir / "dataset.jsonl", std::ios::binary);
    if (rec.rating_dataset) write_dataset(out, *rec.rating_dataset);
    if (rec.preference_dataset) write_preference_dataset(out, *rec.preference_dataset);
  }
  write_text(dir / "curve.csv", curve_csv(rec.curve));
  if (rec.reward_ensemble)
    for (std::size_t m = 0; m < rec.reward_ensemble->size(); ++m) {
      std::ofstream out(dir / ("reward_" + std::to_string(m) + ".ckpt"), std::ios::binary);
      save_checkpoint(out, (*rec.reward_ensemble)[m].mlp(),
                      {{"state_dim", (*rec.reward_ensemble)[m].state_dim()},
                       {"action_dim", (*rec.reward_ensemble)[m].action_dim()}});
    }
  if (rec.policy) {
    std::ofstream out(dir / "policy.ckpt", std::ios::binary);
    std::vector<double> log_std(rec.policy->log_std().data(), rec.policy->log_std().data() + rec.policy->log_std().size());
    save_checkpoint(out, rec.policy->mean_net(), {{"log_std", log_std}});
  }
  // run.json last: its presence marks a finished run for sweep resumption.
  write_text(dir / "run.json", rec.summary_json().dump(2) + "\n");
}

struct SweepArm {
  std::string name;
  nlohmann::json overrides;
};

struct SweepConfig {
  nlohmann::json base = nlohmann::json::object();
  std::vector<SweepArm> arms;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "sweep_out";
};

inline SweepConfig parse_sweep_config(const nlohmann::json& j) {
  SweepConfig s;
  if (j.contains("base")) {
    s.base = j.at("base");
  } else {
    s.base = j;
    s.base.erase("arms");
  }
  const ExperimentConfig base = s.base.get<ExperimentConfig>();
  s.seeds = base.seeds;
  s.out_dir = base.out_dir.empty() ? s.out_dir : base.out_dir;
  if (j.contains("arms")) {
    for (const auto& a : j.at("arms")) {
      SweepArm arm;
      arm.overrides = a;
      arm.name = a.value("name", std::string());
      arm.overrides.erase("name");
      s.arms.push_back(std::move(arm));
    }
  }
  if (s.arms.empty()) s.arms.push_back({"", nlohmann::json::object()});
  for (auto& arm : s.arms)
    if (arm.name.empty()) {
      ExperimentConfig c = s.base.get<ExperimentConfig>();
      nlohmann::json merged = s.base;
      merged.update(arm.overrides);
      c = merged.get<ExperimentConfig>();
      arm.name = c.modality == QueryKind::rating ? "rating_n" + std::to_string(c.n) : "preference";
    }
  if (s.seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  return s;
}

struct SweepRun {
  std::string arm;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool ok = false;
  bool cached = false;
  std::string error;
  std::size_t answers_consumed = 0;
  std::size_t labels_total = 0;
  std::vector<CurveRow> curve;
};

struct SummaryRow {
  std::string arm;
  long step = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t runs = 0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SummaryRow> summary;
};

inline std::vector<SummaryRow> summarize(const std::vector<SweepRun>& runs, const std::vector<SweepArm>& arms) {
  std::vector<SummaryRow> out;
  for (const auto& arm : arms) {
    std::map<long, std::vector<double>> by_step;
    for (const auto& r : runs)
      if (r.ok && r.arm == arm.name)
        for (const auto& row : r.curve) by_step[row.step].push_back(row.mean_gt_return);
    for (const auto& [step, values] : by_step) {
      SummaryRow s;
      s.arm = arm.name;
      s.step = step;
      s.runs = values.size();
      double sum = 0.0;
      for (double v : values) sum += v;
      s.mean = sum / static_cast<double>(values.size());
      if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.stderr_ = std::sqrt(sq / static_cast<double>(values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
      }
      out.push_back(s);
    }
  }
  return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "arm,step,mean_gt_return,stderr_gt_return,runs\n";
  for (const auto& r : rows)
    out += r.arm + "," + std::to_string(r.step) + "," + format_double(r.mean) + "," + format_double(r.stderr_) + "," +
           std::to_string(r.runs) + "\n";
  return out;
}

/// Runs every arm for every seed. Finished runs (run.json present with a
/// matching hash) are loaded instead of re-executed; failures are recorded
/// and the sweep continues.
inline SweepResult sweep(const SweepConfig& sc, const std::function<void(const SweepRun&)>& progress = {}) {
  namespace fs = std::filesystem;
  SweepResult result;
  const fs::path root(sc.out_dir);
  fs::create_directories(root / "runs");
  for (const auto& arm : sc.arms) {
    for (auto seed : sc.seeds) {
      SweepRun run;
      run.arm = arm.name;
      run.seed = seed;
      try {
        nlohmann::json merged = sc.base;
        merged.update(arm.overrides);
        ExperimentConfig c = merged.get<ExperimentConfig>();
        c.seed = seed;
        run.config_hash = config_hash(c);
        const fs::path dir = root / "runs" / run.config_hash;
        c.out_dir = dir.string();
        bool cached = false;
        if (fs::exists(dir / "run.json")) {
          auto j = nlohmann::json::parse(read_text(dir / "run.json"));
          if (j.value("config_hash", std::string()) == run.config_hash) {
            run.curve = parse_curve_csv(read_text(dir / "curve.csv"));
            run.answers_consumed = j.value("answers_consumed", std::size_t{0});
            run.labels_total = j.value("labels_total", std::size_t{0});
            cached = true;
          }
        }
        if (!cached) {
          RunRecord rec = run_experiment(c);
          write_run_outputs(rec, dir);
          run.curve = rec.curve;
          run.answers_consumed = rec.answers_consumed;
          run.labels_total = rec.labels_total;
        }
        run.cached = cached;
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (progress) progress(run);
      result.runs.push_back(std::move(run));
    }
  }
  result.summary = summarize(result.runs, sc.arms);
  write_text(root / "summary.csv", summary_csv(result.summary));
  return result;
}

}  // namespace ratecraft
