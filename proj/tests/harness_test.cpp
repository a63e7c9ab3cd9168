#include <filesystem>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ratecraft/harness.hpp"

using namespace ratecraft;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.total_steps = 12000;
  c.query_budget = 40;
  c.queries_per_round = 10;
  c.reward_update_interval = 2000;
  c.reward_hidden = {16, 16};
  c.reward_epochs = 5;
  c.eval_interval = 4000;
  c.eval_episodes = 1;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ratecraft_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

// Answers only some of the tickets it sees, and invents an answer for a
// ticket nobody issued.
class PartialTeacher final : public TicketTeacher {
 public:
  explicit PartialTeacher(SyntheticTicketTeacher& inner) : inner_(inner) {}
  std::vector<TeacherAnswer> answer(const std::vector<QueryTicket>& tickets) override {
    std::vector<QueryTicket> half;
    for (std::size_t i = 0; i < tickets.size(); i += 2) half.push_back(tickets[i]);
    auto out = inner_.answer(half);
    out.push_back({999999, 0, Side::first, 0.0});
    return out;
  }

 private:
  SyntheticTicketTeacher& inner_;
};

}  // namespace

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig c;
  c.n = 6;
  c.modality = QueryKind::preference;
  c.seeds = {3, 4};
  nlohmann::json j = c;
  ExperimentConfig back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["bogus"] = 1;
  EXPECT_THROW(j.get<ExperimentConfig>(), std::invalid_argument);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  c.n = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.n = 2;
  c.query_budget = 5;
  c.queries_per_round = 10;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.query_budget = 0;
  EXPECT_NO_THROW(c.validate());
  c.modality = QueryKind::preference;
  c.n = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, HashIgnoresOutputDirOnly) {
  ExperimentConfig a, b;
  b.out_dir = "/elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, WallClockBudget) {
  ExperimentConfig c;
  c.budget_mode = BudgetMode::wall_clock;
  c.budget_minutes = 10.0;
  EXPECT_EQ(c.effective_budget(), 140);
  c.modality = QueryKind::preference;
  EXPECT_EQ(c.effective_budget(), 87);
}

TEST(SegmentCutter, WindowsDoNotStraddleEpisodes) {
  Rollout r;
  const int T = 12;
  r.states = MatrixXd::Zero(1, T);
  r.actions = MatrixXd::Zero(1, T);
  for (int t = 0; t < T; ++t) r.states(0, t) = t;
  r.dones.assign(T, false);
  r.dones[6] = true;
  r.env_rewards.assign(T, 1.0);
  SegmentCutter cut(4, 1.0);
  SegmentId next = 0;
  auto segs = cut.feed(r, next);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0]->states[0][0], 0.0);
  EXPECT_EQ(segs[1]->states[0][0], 7.0);
  EXPECT_EQ(*segs[1]->gt_return, 4.0);
  EXPECT_EQ(next, 2u);
}

TEST(Curve, CsvRoundTrip) {
  std::vector<CurveRow> rows{{0, -1.5, 0.25, 0.0}, {5000, 123.456789012, 1e-9, -3.0}};
  const std::string text = curve_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,mean_gt_return,std_gt_return,mean_learned_return");
  EXPECT_EQ(curve_csv(parse_curve_csv(text)), text);
}

TEST(RunExperiment, RatingRunSpendsExactBudget) {
  auto c = small_config();
  auto rec = run_experiment(c);
  ASSERT_TRUE(rec.rating_dataset);
  EXPECT_EQ(rec.labels_total, 40u);
  EXPECT_EQ(rec.rating_dataset->size(), 40u);
  EXPECT_EQ(rec.tickets_issued, 40u);
  EXPECT_EQ(rec.answers_consumed, 40u);
  EXPECT_EQ(rec.reward_updates, 4u);
  std::set<SegmentId> ids;
  for (const auto& e : rec.rating_dataset->entries()) {
    EXPECT_TRUE(ids.insert(e.segment->id).second);
    EXPECT_EQ(e.label.source, LabelSource::synthetic);
  }
  for (const auto& r : rec.rounds) {
    EXPECT_TRUE(std::isfinite(r.reward_loss));
    if (!r.boundaries.empty()) EXPECT_NO_THROW(ClassBoundaries{r.boundaries});
  }
  EXPECT_EQ(rec.curve.front().step, 0);
  EXPECT_EQ(rec.curve.back().step, 12000);
}

TEST(RunExperiment, PreferenceRunSpendsExactBudget) {
  auto c = small_config();
  c.modality = QueryKind::preference;
  auto rec = run_experiment(c);
  ASSERT_TRUE(rec.preference_dataset);
  EXPECT_EQ(rec.labels_total, 40u);
  EXPECT_EQ(rec.answers_consumed, 40u);
  for (const auto& e : rec.preference_dataset->entries()) EXPECT_NE(e.first->id, e.second->id);
}

TEST(RunExperiment, ZeroBudgetNeverUpdatesReward) {
  auto c = small_config();
  c.query_budget = 0;
  auto rec = run_experiment(c);
  EXPECT_EQ(rec.labels_total, 0u);
  EXPECT_EQ(rec.reward_updates, 0u);
  EXPECT_TRUE(rec.rounds.empty());
  EXPECT_EQ(rec.curve.back().step, 12000);
}

TEST(RunExperiment, IdenticalCurveForSameSeed) {
  auto c = small_config();
  c.seed = 4;
  EXPECT_EQ(curve_csv(run_experiment(c).curve), curve_csv(run_experiment(c).curve));
}

TEST(RunExperiment, OnlyIssuedTicketsBecomeLabels) {
  auto c = small_config();
  auto env = make_env(c.env);
  SyntheticTicketTeacher inner(c, env->spec());
  PartialTeacher teacher(inner);
  auto rec = run_experiment(c, teacher);
  EXPECT_EQ(rec.labels_total, rec.answers_consumed);
  EXPECT_LE(rec.answers_consumed, rec.tickets_issued);
  EXPECT_LE(rec.answers_consumed, 40u);
  EXPECT_GT(rec.answers_consumed, 0u);
}

TEST(RunExperiment, OutputsAreWrittenWithMatchingHash) {
  auto c = small_config();
  c.total_steps = 4000;
  c.query_budget = 10;
  auto rec = run_experiment(c);
  auto dir = scratch_dir("outputs");
  write_run_outputs(rec, dir);
  for (const char* f : {"config.json", "dataset.jsonl", "curve.csv", "run.json", "policy.ckpt", "reward_0.ckpt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  auto copy = nlohmann::json::parse(read_text(dir / "config.json")).get<ExperimentConfig>();
  auto summary = nlohmann::json::parse(read_text(dir / "run.json"));
  EXPECT_EQ(summary["config_hash"], config_hash(copy));
  auto data = deserialize(read_text(dir / "dataset.jsonl"));
  EXPECT_EQ(data.size(), 10u);
  fs::remove_all(dir);
}

TEST(Sweep, RowCountsCachingAndFailures) {
  auto dir = scratch_dir("sweep");
  nlohmann::json base = small_config();
  base["total_steps"] = 4000;
  base["query_budget"] = 10;
  base["eval_interval"] = 2000;
  base["seeds"] = {0, 1};
  base["out_dir"] = dir.string();
  nlohmann::json cfg = {{"base", base},
                        {"arms", {{{"n", 2}}, {{"n", 3}}, {{"modality", "preference"}}, {{"name", "broken"}, {"n", 1}}}}};
  auto sc = parse_sweep_config(cfg);
  ASSERT_EQ(sc.arms.size(), 4u);
  EXPECT_EQ(sc.arms[0].name, "rating_n2");
  EXPECT_EQ(sc.arms[2].name, "preference");
  auto first = sweep(sc);
  ASSERT_EQ(first.runs.size(), 8u);
  int failed = 0;
  for (const auto& r : first.runs) {
    failed += !r.ok;
    EXPECT_FALSE(r.cached);
  }
  EXPECT_EQ(failed, 2);
  // 3 good arms x 3 checkpoints (0, 2000, 4000).
  EXPECT_EQ(first.summary.size(), 9u);
  auto lines = read_text(dir / "summary.csv");
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 10);

  auto second = sweep(sc);
  for (const auto& r : second.runs)
    if (r.ok) EXPECT_TRUE(r.cached);
  EXPECT_EQ(summary_csv(second.summary), summary_csv(first.summary));
  fs::remove_all(dir);
}

TEST(Sweep, SingleRunHasZeroStandardError) {
  auto dir = scratch_dir("single");
  nlohmann::json base = small_config();
  base["total_steps"] = 2000;
  base["query_budget"] = 10;
  base["seeds"] = {7};
  base["out_dir"] = dir.string();
  auto result = sweep(parse_sweep_config(base));
  ASSERT_EQ(result.runs.size(), 1u);
  ASSERT_TRUE(result.runs[0].ok) << result.runs[0].error;
  ASSERT_EQ(result.summary.size(), result.runs[0].curve.size());
  for (std::size_t i = 0; i < result.summary.size(); ++i) {
    EXPECT_EQ(result.summary[i].mean, result.runs[0].curve[i].mean_gt_return);
    EXPECT_EQ(result.summary[i].stderr_, 0.0);
  }
  fs::remove_all(dir);
}

TEST(Sweep, StandardErrorMatchesHandComputation) {
  std::vector<SweepRun> runs(3);
  const double values[] = {1.0, 2.0, 6.0};
  for (int i = 0; i < 3; ++i) {
    runs[i].arm = "a";
    runs[i].ok = true;
    runs[i].curve = {{0, values[i], 0.0, 0.0}};
  }
  auto rows = summarize(runs, {{"a", {}}});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].mean, 3.0);
  // sample std sqrt(7) over sqrt(3)
  EXPECT_NEAR(rows[0].stderr_, std::sqrt(7.0) / std::sqrt(3.0), 1e-12);
}
