#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "ratecraft/ratecraft.hpp"

using namespace ratecraft;

namespace {

nlohmann::json load_json(const std::string& path) {
  return nlohmann::json::parse(read_text(path));
}

ExperimentConfig resolve(const std::string& path, const std::optional<std::uint64_t>& seed,
                         const std::optional<std::string>& modality, const std::optional<int>& n,
                         const std::optional<std::string>& out) {
  ExperimentConfig c = load_config(path);
  if (seed) c.seed = *seed;
  if (modality) c.modality = query_kind_from_string(*modality);
  if (n) c.n = *n;
  if (out) c.out_dir = *out;
  if (c.out_dir.empty()) c.out_dir = "runs/" + config_hash(c);
  c.validate();
  return c;
}

void print_summary(const RunRecord& rec, const std::string& dir) {
  const auto& last = rec.curve.back();
  std::printf("steps %ld  labels %zu  reward updates %zu  final return %.3f +/- %.3f\n", last.step, rec.labels_total,
              rec.reward_updates, last.mean_gt_return, last.std_gt_return);
  std::printf("outputs in %s\n", dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward learning from segment ratings or preferences"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> modality;
  std::optional<int> n;
  std::optional<std::string> out;
  auto* run = app.add_subcommand("run", "Run one experiment with a synthetic teacher");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the seed");
  run->add_option("--modality", modality, "rating or preference")->check(CLI::IsMember({"rating", "preference"}));
  run->add_option("--n", n, "Number of rating classes");
  run->add_option("--out", out, "Output directory");

  auto* sw = app.add_subcommand("sweep", "Run every arm and seed of a sweep, reusing finished runs");
  sw->add_option("--config", config_path, "Sweep config (JSON)")->required()->check(CLI::ExistingFile);

  std::string bind = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "Run one experiment labelled through the HTTP API");
  serve->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--bind", bind, "Address to listen on, host:port");
  serve->add_option("--seed", seed, "Override the seed");
  serve->add_option("--out", out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto c = resolve(config_path, seed, modality, n, out);
      RunHooks hooks;
      hooks.on_curve = [](const std::vector<CurveRow>& rows) {
        const auto& r = rows.back();
        std::fprintf(stderr, "step %8ld  return %9.3f\n", r.step, r.mean_gt_return);
      };
      auto rec = run_experiment(c, hooks);
      write_run_outputs(rec, c.out_dir);
      print_summary(rec, c.out_dir);
    } else if (*sw) {
      auto sc = parse_sweep_config(load_json(config_path));
      auto result = sweep(sc, [](const SweepRun& r) {
        if (r.ok)
          std::fprintf(stderr, "%-16s seed %llu  %s  final %.3f\n", r.arm.c_str(), static_cast<unsigned long long>(r.seed),
                       r.cached ? "cached" : "done  ", r.curve.back().mean_gt_return);
        else
          std::fprintf(stderr, "%-16s seed %llu  failed: %s\n", r.arm.c_str(), static_cast<unsigned long long>(r.seed),
                       r.error.c_str());
      });
      std::cout << summary_csv(result.summary);
      std::size_t failed = 0;
      for (const auto& r : result.runs) failed += !r.ok;
      return failed == 0 ? 0 : 2;
    } else if (*serve) {
      auto c = resolve(config_path, seed, std::nullopt, std::nullopt, out);
      auto rec = serve_labeling(c, bind, [](int port) {
        std::fprintf(stderr, "labelling UI on port %d\n", port);
      });
      write_run_outputs(rec, c.out_dir);
      print_summary(rec, c.out_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
