#include "fairmoo/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fairmoo/diagnostics.hpp"
#include "fairmoo/kernels.hpp"
#include "fairmoo/rng.hpp"

namespace fairmoo {

namespace {

constexpr std::uint64_t kBaseInitStream = 0xB007ULL;
constexpr std::uint64_t kAdapterStream = 0x70ADULL;
constexpr std::uint64_t kTrainStream = 0x7EA1ULL;
constexpr std::uint64_t kEvalStream = 0xE7A1ULL;
constexpr std::uint64_t kEvalNoiseStream = 0xE901ULL;
constexpr std::uint64_t kRlwStream = 0x9A4DULL;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_line(std::ofstream& f, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) f << ',';
    f << cells[i];
  }
  f << '\n';
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::array<double, 3> RunRecord::mean_losses(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > loss_series.size())
    throw std::invalid_argument("RunRecord::mean_losses: window outside the recorded series");
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  for (std::size_t s = first; s < first + count; ++s)
    for (int i = 0; i < 3; ++i) acc[static_cast<std::size_t>(i)] += loss_series[s][static_cast<std::size_t>(i)];
  for (double& v : acc) v /= static_cast<double>(count);
  return acc;
}

std::filesystem::path resolve_out_dir(const std::string& configured) {
  const char* base = std::getenv("FAIRMOO_OUT");
  if (base == nullptr || *base == '\0') return std::filesystem::path(configured);
  return std::filesystem::path(base) / std::filesystem::path(configured).relative_path();
}

DenseDenoiser make_base_model(const RunConfig& cfg) {
  return init_denoiser(cfg.denoiser_config(), mix_seed(cfg.seed, kBaseInitStream));
}

AdaptedDenoiser make_initial_model(const RunConfig& cfg) {
  return attach_adapter(make_base_model(cfg), cfg.adapter, mix_seed(cfg.seed, kAdapterStream));
}

TrainBatch training_batch_for_step(const RunConfig& cfg, const NoiseSchedule& schedule, std::size_t step) {
  return make_train_batch(cfg.seed, kTrainStream, step * cfg.batch_size, cfg.batch_size, cfg.effective_scene(),
                          schedule, cfg.latent_factor);
}

EvalMetrics evaluate(const AdaptedDenoiser& model, const RunConfig& cfg) {
  if (cfg.eval_count == 0) throw std::invalid_argument("evaluate: empty eval set");
  NoiseSchedule schedule = make_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
  SceneSpec scene = cfg.effective_scene();
  DenoiserConfig dcfg = cfg.denoiser_config();
  std::size_t px = dcfg.pixels();

  std::vector<std::size_t> ts;
  for (std::size_t q : {schedule.T / 4, schedule.T / 2, 3 * schedule.T / 4}) ts.push_back(std::max<std::size_t>(q, 1));

  std::size_t rows = cfg.eval_count * ts.size();
  Tensor zt(std::vector<std::size_t>{rows, px}, std::vector<double>(rows * px, 0.0));
  Tensor eps = zt;
  Tensor face = zt;
  Tensor hand = zt;
  Tensor cond = Tensor::zeros({rows, 4});
  std::vector<std::size_t> tvec(rows);

  for (std::size_t i = 0; i < cfg.eval_count; ++i) {
    std::uint64_t sample_seed = mix_seed(cfg.seed, kEvalStream, i);
    SceneSample s = synth_sample(sample_seed, scene, cfg.latent_factor);
    Tensor fmask = upsample_mask(s.masks.face_latent, cfg.latent_factor);
    Tensor hmask = upsample_mask(s.masks.hand_latent, cfg.latent_factor);
    double inv = 1.0 / static_cast<double>(scene.image_size);

    for (std::size_t k = 0; k < ts.size(); ++k) {
      std::size_t r = i * ts.size() + k;
      tvec[r] = ts[k];
      Rng noise(mix_seed(sample_seed, kEvalNoiseStream, ts[k]));
      double abar = schedule.alpha_bar_at(ts[k]);
      double cs = std::sqrt(abar), cn = std::sqrt(1.0 - abar);
      for (std::size_t e = 0; e < px; ++e) {
        double ep = noise.normal();
        eps.data[r * px + e] = ep;
        zt.data[r * px + e] = cs * s.z0.data[e] + cn * ep;
      }
      std::copy(fmask.data.begin(), fmask.data.end(), face.data.begin() + static_cast<std::ptrdiff_t>(r * px));
      std::copy(hmask.data.begin(), hmask.data.end(), hand.data.begin() + static_cast<std::ptrdiff_t>(r * px));
      cond.data[r * 4 + 0] = 0.5 * (s.face_box.x0 + s.face_box.x1) * inv;
      cond.data[r * 4 + 1] = 0.5 * (s.face_box.y0 + s.face_box.y1) * inv;
      cond.data[r * 4 + 2] = 0.5 * (s.hand_box.x0 + s.hand_box.x1) * inv;
      cond.data[r * 4 + 3] = 0.5 * (s.hand_box.y0 + s.hand_box.y1) * inv;
    }
  }

  Tensor x = assemble_input(dcfg, Tensor({rows, static_cast<std::size_t>(scene.image_size),
                                          static_cast<std::size_t>(scene.image_size)},
                                         zt.data),
                            tvec, cond);
  Tensor pred = predict_adapted(model, x);

  // Per-row losses first, reduced afterwards in fixed index order, so any
  // parallel or reordered execution of the forward pass cannot change the
  // result.
  std::vector<double> lg(rows), lf(rows), lh(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Tensor prow({px}, std::vector<double>(pred.data.begin() + static_cast<std::ptrdiff_t>(r * px),
                                          pred.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * px)));
    Tensor erow({px}, std::vector<double>(eps.data.begin() + static_cast<std::ptrdiff_t>(r * px),
                                          eps.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * px)));
    Tensor frow({px}, std::vector<double>(face.data.begin() + static_cast<std::ptrdiff_t>(r * px),
                                          face.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * px)));
    Tensor hrow({px}, std::vector<double>(hand.data.begin() + static_cast<std::ptrdiff_t>(r * px),
                                          hand.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * px)));
    lg[r] = ad::masked_mse(prow, erow, Tensor::full({px}, 1.0), cfg.mask_normalization);
    lf[r] = ad::masked_mse(prow, erow, frow, cfg.mask_normalization);
    lh[r] = ad::masked_mse(prow, erow, hrow, cfg.mask_normalization);
  }

  NeumaierSum sg, sf, sh;
  for (std::size_t r = 0; r < rows; ++r) {
    sg.add(lg[r]);
    sf.add(lf[r]);
    sh.add(lh[r]);
  }
  double n = static_cast<double>(rows);
  return EvalMetrics{sg.value() / n, sf.value() / n, sh.value() / n};
}

RunRecord run_training(const RunConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();

  std::filesystem::path out = resolve_out_dir(cfg.out_dir);
  std::filesystem::create_directories(out);
  std::filesystem::path ckpt = out / "checkpoint";
  save_config(out / "config.json", cfg);

  NoiseSchedule schedule = make_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end);
  DenoiserConfig dcfg = cfg.denoiser_config();
  AdaptedDenoiser model = make_initial_model(cfg);

  Strategy strat = strategy_from_tag(cfg.strategy);
  StrategyState state;
  state.rlw_rng = Rng(mix_seed(cfg.seed, kRlwStream));

  std::ofstream mf(out / "metrics.csv", std::ios::trunc);
  std::ofstream gf(out / "gram.csv", std::ios::trunc);
  std::ofstream ef(out / "eval.csv", std::ios::trunc);
  if (!mf || !gf || !ef) throw std::runtime_error("run_training: cannot open metrics files under " + out.string());
  mf << "step,l_global,l_face,l_hand,w1,w2,w3,gn1,gn2,gn3,pareto_stat,cf_residual\n";
  gf << "step,k11,k12,k13,k22,k23,k33\n";
  ef << "step,eval_l_global,eval_l_face,eval_l_hand\n";

  RunRecord rec;
  rec.config = cfg;
  rec.out_dir = out;
  rec.checkpoint_dir = ckpt;

  ForwardBuilder fwd = adapted_forward_builder(model);

  auto run_step = [&](std::size_t step) {
    TrainBatch batch = training_batch_for_step(cfg, schedule, step);
    ObjectiveBundle bundle = objective_bundle(batch, dcfg, fwd, model.adapter, cfg.mask_normalization);

    GramMatrix k = gram(bundle);
    FairWeights w = next_weights(strat, bundle.k(), k, cfg.solver, cfg.strategy_options, state);
    if (w.floor_applied) ++rec.clamp_steps;

    rec.loss_series.push_back({bundle.losses[0], bundle.losses[1], bundle.losses[2]});

    bool log_now = step % cfg.eval_every == 0 || step + 1 == cfg.steps;
    if (log_now) {
      MetricsRecord m;
      m.step = step;
      m.l_global = bundle.losses[0];
      m.l_face = bundle.losses[1];
      m.l_hand = bundle.losses[2];
      m.w1 = w.w[0];
      m.w2 = w.w[1];
      m.w3 = w.w[2];
      m.gn1 = std::sqrt(k.at(0, 0));
      m.gn2 = std::sqrt(k.at(1, 1));
      m.gn3 = std::sqrt(k.at(2, 2));
      m.pareto_stat = pareto_stationarity(bundle);
      m.cf_residual = mpd_residual(k, mpd_weights_closed(k, cfg.solver).w);
      m.gram_matrix = k;
      m.eval = evaluate(model, cfg);

      write_line(mf, {std::to_string(m.step), fmt_double(m.l_global), fmt_double(m.l_face), fmt_double(m.l_hand),
                      fmt_double(m.w1), fmt_double(m.w2), fmt_double(m.w3), fmt_double(m.gn1), fmt_double(m.gn2),
                      fmt_double(m.gn3), fmt_double(m.pareto_stat), fmt_double(m.cf_residual)});
      write_line(gf, {std::to_string(m.step), fmt_double(k.at(0, 0)), fmt_double(k.at(0, 1)), fmt_double(k.at(0, 2)),
                      fmt_double(k.at(1, 1)), fmt_double(k.at(1, 2)), fmt_double(k.at(2, 2))});
      write_line(ef, {std::to_string(m.step), fmt_double(m.eval->l_global), fmt_double(m.eval->l_face),
                      fmt_double(m.eval->l_hand)});
      rec.metrics.push_back(std::move(m));
    }

    ParamVector d = aggregate_direction(bundle, w);
    model.adapter = update_step(model.adapter, d, cfg.learning_rate);
    state.loss_history.push_back(bundle.losses);
    if (state.loss_history.size() > 8) state.loss_history.erase(state.loss_history.begin());
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    try {
      run_step(step);
    } catch (const std::exception& e) {
      throw std::runtime_error("run_training: aborted at step " + std::to_string(step) + ": " + e.what());
    }
  }

  save_adapter(ckpt, model, mix_seed(cfg.seed, kAdapterStream));
  rec.final_eval = evaluate(model, cfg);

  auto t1 = std::chrono::steady_clock::now();
  rec.duration_seconds = std::chrono::duration<double>(t1 - t0).count();

  nlohmann::json run;
  run["config"] = nlohmann::json::parse(config_to_json_text(cfg));
  run["duration_seconds"] = rec.duration_seconds;
  run["steps"] = cfg.steps;
  run["clamp_steps"] = rec.clamp_steps;
  run["clamp_rate"] = cfg.steps ? static_cast<double>(rec.clamp_steps) / static_cast<double>(cfg.steps) : 0.0;
  run["checkpoint"] = "checkpoint";
  run["final_eval"] = {{"l_global", rec.final_eval->l_global},
                       {"l_face", rec.final_eval->l_face},
                       {"l_hand", rec.final_eval->l_hand}};
  std::ofstream rf(out / "run.json", std::ios::trunc);
  if (!rf) throw std::runtime_error("run_training: cannot open " + (out / "run.json").string());
  rf << run.dump(2) << "\n";

  return rec;
}

ComparisonResult compare_strategies(const std::vector<RunConfig>& cfgs, const std::vector<std::uint64_t>& seeds,
                                    const std::filesystem::path& out_base) {
  if (cfgs.empty()) throw std::invalid_argument("compare_strategies: no configs");
  if (seeds.empty()) throw std::invalid_argument("compare_strategies: no seeds");

  // Everything except the strategy fields and output path must match.
  auto fingerprint = [](RunConfig c) {
    c.strategy = "mpd";
    c.strategy_options = StrategyOptions{};
    c.out_dir = "";
    c.seed = 0;
    return config_to_json_text(c);
  };
  std::string expect = fingerprint(cfgs.front());
  for (const RunConfig& c : cfgs)
    if (fingerprint(c) != expect)
      throw std::invalid_argument("compare_strategies: configs differ outside the strategy fields");

  ComparisonResult out;
  out.seeds = seeds;

  std::vector<std::vector<EvalMetrics>> finals(cfgs.size());
  for (std::size_t ci = 0; ci < cfgs.size(); ++ci) {
    StrategyRow row;
    row.strategy = cfgs[ci].strategy;
    for (std::uint64_t s : seeds) {
      RunConfig rc = cfgs[ci];
      rc.seed = s;
      rc.out_dir = (out_base / (rc.strategy + "_" + std::to_string(ci) + "_seed" + std::to_string(s))).string();
      RunRecord r = run_training(rc);
      finals[ci].push_back(*r.final_eval);
      row.regional_per_seed.push_back(r.final_eval->regional());
      row.global_per_seed.push_back(r.final_eval->l_global);
    }
    row.median_regional = median(row.regional_per_seed);
    row.median_global = median(row.global_per_seed);
    std::vector<double> faces, hands;
    for (const EvalMetrics& m : finals[ci]) {
      faces.push_back(m.l_face);
      hands.push_back(m.l_hand);
    }
    row.median_face = median(faces);
    row.median_hand = median(hands);
    out.rows.push_back(std::move(row));
  }

  out.wins.assign(cfgs.size(), std::vector<int>(cfgs.size(), 0));
  for (std::size_t a = 0; a < cfgs.size(); ++a)
    for (std::size_t b = 0; b < cfgs.size(); ++b)
      for (std::size_t s = 0; s < seeds.size(); ++s)
        if (a != b && out.rows[a].regional_per_seed[s] < out.rows[b].regional_per_seed[s]) ++out.wins[a][b];

  nlohmann::json j;
  j["seeds"] = seeds;
  for (const StrategyRow& r : out.rows) {
    nlohmann::json row;
    row["strategy"] = r.strategy;
    row["regional_per_seed"] = r.regional_per_seed;
    row["global_per_seed"] = r.global_per_seed;
    row["median_regional"] = r.median_regional;
    row["median_global"] = r.median_global;
    row["median_face"] = r.median_face;
    row["median_hand"] = r.median_hand;
    j["rows"].push_back(row);
  }
  j["wins"] = out.wins;
  std::filesystem::create_directories(out_base);
  std::ofstream f(out_base / "comparison.json", std::ios::trunc);
  if (!f) throw std::runtime_error("compare_strategies: cannot open comparison.json");
  f << j.dump(2) << "\n";

  return out;
}

std::string comparison_table_text(const ComparisonResult& c) {
  std::ostringstream os;
  os << "strategy        median_global   median_face     median_hand     median_face+hand\n";
  for (const StrategyRow& r : c.rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-15s %-15.6g %-15.6g %-15.6g %-15.6g\n", r.strategy.c_str(), r.median_global,
                  r.median_face, r.median_hand, r.median_regional);
    os << buf;
  }
  os << "pairwise wins on face+hand (row beats column, out of " << c.seeds.size() << " seeds):\n";
  for (std::size_t a = 0; a < c.rows.size(); ++a) {
    os << "  " << c.rows[a].strategy << ":";
    for (std::size_t b = 0; b < c.rows.size(); ++b) os << " " << c.wins[a][b];
    os << "\n";
  }
  return os.str();
}

}  // namespace fairmoo
