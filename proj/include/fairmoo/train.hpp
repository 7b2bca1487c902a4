#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairmoo/config.hpp"
#include "fairmoo/objective.hpp"

namespace fairmoo {

struct EvalMetrics {
  double l_global = 0.0;
  double l_face = 0.0;
  double l_hand = 0.0;

  double regional() const { return l_face + l_hand; }
};

struct MetricsRecord {
  std::size_t step = 0;
  double l_global = 0.0, l_face = 0.0, l_hand = 0.0;
  double w1 = 0.0, w2 = 0.0, w3 = 0.0;
  double gn1 = 0.0, gn2 = 0.0, gn3 = 0.0;
  double pareto_stat = 0.0;
  double cf_residual = 0.0;  // MPD closed-form residual on this step's Gram matrix
  GramMatrix gram_matrix;
  std::optional<EvalMetrics> eval;
};

struct RunRecord {
  RunConfig config;
  std::vector<MetricsRecord> metrics;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint_dir;
  double duration_seconds = 0.0;
  std::size_t clamp_steps = 0;                     // steps where the weight floor fired
  std::vector<std::array<double, 3>> loss_series;  // per-step train losses
  std::optional<EvalMetrics> final_eval;

  // Mean train losses over the first/last `window` steps; single
  // minibatch draws are too noisy to compare directly.
  std::array<double, 3> mean_losses(std::size_t first, std::size_t count) const;
  std::array<double, 3> initial_window(std::size_t window) const { return mean_losses(0, window); }
  std::array<double, 3> final_window(std::size_t window) const {
    std::size_t n = loss_series.size();
    std::size_t w = std::min(window, n);
    return mean_losses(n - w, w);
  }
};

// FAIRMOO_OUT, when set, relocates outputs under that base directory.
std::filesystem::path resolve_out_dir(const std::string& configured);

// Seed-derived model construction, shared by training, the eval CLI and
// reproduction tooling.
DenseDenoiser make_base_model(const RunConfig& cfg);
AdaptedDenoiser make_initial_model(const RunConfig& cfg);

// The exact batch the training loop consumes at `step`.
TrainBatch training_batch_for_step(const RunConfig& cfg, const NoiseSchedule& schedule, std::size_t step);

// The full pipeline: sample batch -> objective bundle -> strategy weights
// -> aggregate -> update, with metrics/gram/eval CSVs and an adapter
// checkpoint written under the resolved output directory. Deterministic in
// the config (including the seed).
RunRecord run_training(const RunConfig& cfg);

// Mean global/face/hand denoising MSE over a fixed eval split (seed
// stream disjoint from training) at timesteps {T/4, T/2, 3T/4} with fixed
// per-(sample, timestep) noise.
EvalMetrics evaluate(const AdaptedDenoiser& model, const RunConfig& cfg);

struct StrategyRow {
  std::string strategy;
  std::vector<double> regional_per_seed;  // final eval l_face + l_hand, one entry per seed
  std::vector<double> global_per_seed;
  double median_regional = 0.0;
  double median_global = 0.0;
  double median_face = 0.0;
  double median_hand = 0.0;
};

struct ComparisonResult {
  std::vector<StrategyRow> rows;
  std::vector<std::uint64_t> seeds;
  // wins[a][b] = number of seeds where strategy a beats b on regional MSE.
  std::vector<std::vector<int>> wins;
};

// Runs each config (which may differ from the first only in strategy
// fields) across the seed list and tabulates final eval metrics.
ComparisonResult compare_strategies(const std::vector<RunConfig>& cfgs, const std::vector<std::uint64_t>& seeds,
                                    const std::filesystem::path& out_base);

std::string comparison_table_text(const ComparisonResult& c);

}  // namespace fairmoo
