#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fairmoo/adapter.hpp"
#include "fairmoo/graph.hpp"
#include "fairmoo/scene.hpp"
#include "fairmoo/solver.hpp"
#include "fairmoo/strategies.hpp"

namespace fairmoo {

struct ScheduleConfig {
  std::size_t T = 100;
  double beta_start = 1e-4;
  double beta_end = 0.06;
};

// One experiment, fully determined by this struct (including the seed).
// Parsing is strict: unknown keys are rejected at every nesting level.
struct RunConfig {
  std::uint64_t seed = 1;
  int image_size = 32;
  int latent_factor = 1;
  ScheduleConfig schedule;
  int hidden_width = 256;
  AdapterSpec adapter;
  std::string strategy = "mpd";
  StrategyOptions strategy_options;
  SolverConfig solver;
  double learning_rate = 1e-3;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  std::size_t eval_every = 100;
  std::size_t eval_count = 32;
  ad::MaskNorm mask_normalization = ad::MaskNorm::FullCount;
  SceneSpec scene;  // image_size is overridden from the top-level field
  std::string out_dir = "runs/run";

  void validate() const;
  SceneSpec effective_scene() const;
  DenoiserConfig denoiser_config() const;
};

RunConfig default_config();

RunConfig config_from_json_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const RunConfig& cfg);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace fairmoo
