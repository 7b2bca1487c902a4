#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairmoo/diagnostics.hpp"
#include "fairmoo/rng.hpp"
#include "fairmoo/tensor_io.hpp"
#include "fairmoo/train.hpp"

namespace {

using namespace fairmoo;

int cmd_train(const std::string& config_path) {
  RunConfig cfg = load_config(config_path);
  RunRecord rec = run_training(cfg);
  std::printf("run complete: %zu steps in %.1fs, outputs in %s\n", cfg.steps, rec.duration_seconds,
              rec.out_dir.string().c_str());
  std::printf("final eval: l_global=%.6g l_face=%.6g l_hand=%.6g\n", rec.final_eval->l_global,
              rec.final_eval->l_face, rec.final_eval->l_hand);
  return 0;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& config_path) {
  RunConfig cfg = load_config(config_path);
  AdaptedDenoiser model = load_adapter(checkpoint_dir, make_base_model(cfg));
  EvalMetrics m = evaluate(model, cfg);
  nlohmann::json j = {{"l_global", m.l_global}, {"l_face", m.l_face}, {"l_hand", m.l_hand}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::vector<std::uint64_t>& seeds,
                const std::string& out_dir) {
  std::vector<RunConfig> cfgs;
  for (const std::string& p : config_paths) cfgs.push_back(load_config(p));
  std::vector<std::uint64_t> use_seeds = seeds.empty() ? std::vector<std::uint64_t>{cfgs.front().seed} : seeds;
  ComparisonResult c = compare_strategies(cfgs, use_seeds, resolve_out_dir(out_dir));
  std::cout << comparison_table_text(c);
  return 0;
}

int cmd_solve_weights(const std::string& gram_path, bool oracle) {
  std::ifstream f(gram_path);
  if (!f) throw std::runtime_error("solve-weights: cannot open " + gram_path);
  nlohmann::json j = nlohmann::json::parse(f);
  std::size_t k = j.at("k").get<std::size_t>();
  auto entries = j.at("entries").get<std::vector<std::vector<double>>>();
  if (entries.size() != k) throw std::runtime_error("solve-weights: entries row count != k");
  GramMatrix m(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (entries[i].size() != k) throw std::runtime_error("solve-weights: entries must be k x k");
    for (std::size_t c = i; c < k; ++c) m.set(i, c, entries[i][c]);
  }

  SolverConfig cfg;
  FairWeights w = oracle ? mpd_weights_oracle(m, cfg) : mpd_weights_closed(m, cfg);
  nlohmann::json out = {{"w", w.w}, {"residual", mpd_residual(m, w.w)}, {"floor_applied", w.floor_applied}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_synth(std::size_t count, std::uint64_t seed, const std::string& out_dir) {
  RunConfig cfg = default_config();
  SceneSpec scene = cfg.effective_scene();
  std::filesystem::path out = resolve_out_dir(out_dir);
  std::filesystem::create_directories(out);

  std::size_t hs = static_cast<std::size_t>(scene.image_size);
  Tensor z0 = Tensor::zeros({count, hs, hs});
  nlohmann::json masks;
  masks["image_size"] = scene.image_size;
  masks["latent_factor"] = cfg.latent_factor;
  masks["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < count; ++i) {
    SceneSample s = synth_sample(mix_seed(seed, 0x5A3DULL, i), scene, cfg.latent_factor);
    std::copy(s.z0.data.begin(), s.z0.data.end(), z0.data.begin() + static_cast<std::ptrdiff_t>(i * hs * hs));
    masks["samples"].push_back({{"face_box", {s.face_box.x0, s.face_box.y0, s.face_box.x1, s.face_box.y1}},
                                {"hand_box", {s.hand_box.x0, s.hand_box.y0, s.hand_box.x1, s.hand_box.y1}}});
  }
  dump_tensor(out / "z0", z0);
  std::ofstream mf(out / "masks.json", std::ios::trunc);
  mf << masks.dump(2) << "\n";
  std::printf("wrote %zu samples to %s\n", count, out.string().c_str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  // Small random denoiser configs; reverse-mode vs central differences.
  int failures = 0;
  for (int trial = 0; trial < 5; ++trial) {
    std::uint64_t ts = mix_seed(seed, 0x94ADULL, static_cast<std::uint64_t>(trial));
    Rng rng(ts);
    DenoiserConfig dcfg;
    dcfg.image_size = 8;
    dcfg.hidden_width = static_cast<int>(rng.uniform_int(6, 16));

    SceneSpec scene;
    scene.image_size = 8;
    scene.face_box = {1, 1, 4, 4};
    scene.hand_box = {4, 4, 7, 7};
    NoiseSchedule sched = make_schedule(10, 1e-4, 0.05);
    TrainBatch batch = make_train_batch(ts, 1, 0, 2, scene, sched, 1);

    DenseDenoiser base = init_denoiser(dcfg, mix_seed(ts, 1ULL));
    AdapterSpec aspec;
    aspec.rank = 2;
    AdaptedDenoiser model = attach_adapter(base, aspec, mix_seed(ts, 2ULL));
    for (double& v : model.adapter.data) v += 0.1 * rng.normal();

    ObjectiveBundle bundle = objective_bundle(batch, dcfg, adapted_forward_builder(model), model.adapter);
    const char* names[3] = {"l_global", "l_face", "l_hand"};
    for (std::size_t i = 0; i < 3; ++i) {
      ad::ScalarFn f = [&](ad::Graph& g, const std::vector<ad::NodeId>& leaves) {
        Tensor x = assemble_input(dcfg, batch.zt, batch.t, batch.cond);
        ad::NodeId pred = adapted_forward(g, model, leaves, g.constant(x));
        ad::NodeId eps = g.constant(Tensor({batch.batch(), dcfg.pixels()}, batch.eps.data));
        if (i == 0) return g.sq_err(pred, eps);
        const Tensor& m = i == 1 ? batch.face_mask : batch.hand_mask;
        return g.masked_sq_err(pred, eps, g.constant(Tensor({batch.batch(), dcfg.pixels()}, m.data)));
      };
      ParamVector fd = ad::finite_diff(f, model.adapter, 1e-5);
      double scale = 1e-8, err = 0.0;
      for (std::size_t c = 0; c < fd.size(); ++c) scale = std::max(scale, std::fabs(fd.data[c]));
      for (std::size_t c = 0; c < fd.size(); ++c)
        err = std::max(err, std::fabs(bundle.grads.data[i * fd.size() + c] - fd.data[c]));
      double rel = err / scale;
      bool ok = rel <= 1e-5;
      if (!ok) ++failures;
      std::printf("trial %d %-8s width=%-3d max-rel-err=%.3e %s\n", trial, names[i], dcfg.hidden_width, rel,
                  ok ? "PASS" : "FAIL");
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness-aware multi-objective trainer for the masked denoising toy task"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_dir, gram_path, out_dir = "runs/out";
  std::vector<std::string> config_paths;
  std::vector<std::uint64_t> seeds;
  bool oracle = false;
  std::size_t count = 16;
  std::uint64_t seed = 1;

  CLI::App* train = app.add_subcommand("train", "run a training experiment");
  train->add_option("--config", config_path, "run config JSON")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved adapter checkpoint");
  eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("--config", config_path, "run config JSON")->required();

  CLI::App* compare = app.add_subcommand("compare", "train several strategy configs and tabulate");
  compare->add_option("--configs", config_paths, "config JSON files")->required()->expected(-1);
  compare->add_option("--seeds", seeds, "seed list (default: the configs' seed)");
  compare->add_option("--out", out_dir, "comparison output directory");

  CLI::App* solve = app.add_subcommand("solve-weights", "MPD weights for a Gram matrix JSON");
  solve->add_option("--gram", gram_path, "JSON {\"k\":3,\"entries\":[[...]]}")->required();
  solve->add_flag("--oracle", oracle, "use the numerical oracle instead of the closed form");

  CLI::App* synth = app.add_subcommand("synth", "export a synthetic dataset split");
  synth->add_option("--count", count, "number of samples");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--out", out_dir, "output directory")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  gradcheck->add_option("--seed", seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path);
    if (eval->parsed()) return cmd_eval(checkpoint_dir, config_path);
    if (compare->parsed()) return cmd_compare(config_paths, seeds, out_dir);
    if (solve->parsed()) return cmd_solve_weights(gram_path, oracle);
    if (synth->parsed()) return cmd_synth(count, seed, out_dir);
    if (gradcheck->parsed()) return cmd_gradcheck(seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
