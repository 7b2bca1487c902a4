#include "fairmoo/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace fairmoo {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: expected an object at " + where);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

Box parse_box(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("config: " + where + " must be [x0,y0,x1,y1]");
  return Box{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json box_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

}  // namespace

void RunConfig::validate() const {
  if (image_size < 4 || image_size > 512) throw std::invalid_argument("config: image_size out of [4,512]");
  if (latent_factor < 1 || image_size % latent_factor != 0)
    throw std::invalid_argument("config: latent_factor must divide image_size");
  if (schedule.T < 1 || schedule.T > 100000) throw std::invalid_argument("config: schedule.T out of range");
  if (!(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1.0))
    throw std::invalid_argument("config: need 0 < beta_start <= beta_end < 1");
  if (hidden_width < 1 || hidden_width > 4096) throw std::invalid_argument("config: hidden_width out of range");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
  if (eval_count < 1) throw std::invalid_argument("config: eval_count must be >= 1");
  if (!(solver.eps_reg >= 0.0)) throw std::invalid_argument("config: solver.eps_reg must be >= 0");
  if (!(solver.w_floor > 0.0)) throw std::invalid_argument("config: solver.w_floor must be positive");
  strategy_from_tag(strategy);
  effective_scene().validate();
}

SceneSpec RunConfig::effective_scene() const {
  SceneSpec s = scene;
  s.image_size = image_size;
  return s;
}

DenoiserConfig RunConfig::denoiser_config() const {
  DenoiserConfig d;
  d.image_size = image_size;
  d.hidden_width = hidden_width;
  return d;
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.scene.image_size = cfg.image_size;
  cfg.scene.jitter = 3;
  return cfg;
}

RunConfig config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  RunConfig cfg = default_config();

  reject_unknown(j, {"seed", "image_size", "latent_factor", "schedule", "hidden_width", "adapter", "strategy",
                     "strategy_options", "solver", "learning_rate", "steps", "batch_size", "eval_every",
                     "eval_count", "mask_normalization", "scene", "out_dir"},
                 "top level");

  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("image_size")) cfg.image_size = j["image_size"].get<int>();
  if (j.contains("latent_factor")) cfg.latent_factor = j["latent_factor"].get<int>();
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    reject_unknown(s, {"T", "beta_start", "beta_end"}, "schedule");
    if (s.contains("T")) cfg.schedule.T = s["T"].get<std::size_t>();
    if (s.contains("beta_start")) cfg.schedule.beta_start = s["beta_start"].get<double>();
    if (s.contains("beta_end")) cfg.schedule.beta_end = s["beta_end"].get<double>();
  }
  if (j.contains("hidden_width")) cfg.hidden_width = j["hidden_width"].get<int>();
  if (j.contains("adapter")) {
    const json& a = j["adapter"];
    reject_unknown(a, {"rank", "beta", "targets"}, "adapter");
    if (a.contains("rank")) cfg.adapter.rank = a["rank"].get<int>();
    if (a.contains("beta")) cfg.adapter.beta = a["beta"].get<double>();
    if (a.contains("targets")) cfg.adapter.targets = a["targets"].get<std::vector<std::string>>();
  }
  if (j.contains("strategy")) cfg.strategy = j["strategy"].get<std::string>();
  if (j.contains("strategy_options")) {
    const json& o = j["strategy_options"];
    reject_unknown(o, {"ls_weights", "dwa_temperature", "uw_lr", "uw_sigma_floor"}, "strategy_options");
    if (o.contains("ls_weights")) cfg.strategy_options.ls_weights = o["ls_weights"].get<std::vector<double>>();
    if (o.contains("dwa_temperature")) cfg.strategy_options.dwa_temperature = o["dwa_temperature"].get<double>();
    if (o.contains("uw_lr")) cfg.strategy_options.uw_lr = o["uw_lr"].get<double>();
    if (o.contains("uw_sigma_floor")) cfg.strategy_options.uw_sigma_floor = o["uw_sigma_floor"].get<double>();
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    reject_unknown(s, {"eps_reg", "w_floor", "lagrange_lambda", "oracle_iters", "oracle_step"}, "solver");
    if (s.contains("eps_reg")) cfg.solver.eps_reg = s["eps_reg"].get<double>();
    if (s.contains("w_floor")) cfg.solver.w_floor = s["w_floor"].get<double>();
    if (s.contains("lagrange_lambda")) cfg.solver.lagrange_lambda = s["lagrange_lambda"].get<double>();
    if (s.contains("oracle_iters")) cfg.solver.oracle_iters = s["oracle_iters"].get<int>();
    if (s.contains("oracle_step")) cfg.solver.oracle_step = s["oracle_step"].get<double>();
  }
  if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("steps")) cfg.steps = j["steps"].get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("eval_every")) cfg.eval_every = j["eval_every"].get<std::size_t>();
  if (j.contains("eval_count")) cfg.eval_count = j["eval_count"].get<std::size_t>();
  if (j.contains("mask_normalization")) {
    std::string n = j["mask_normalization"].get<std::string>();
    if (n == "full")
      cfg.mask_normalization = ad::MaskNorm::FullCount;
    else if (n == "masked")
      cfg.mask_normalization = ad::MaskNorm::MaskedCount;
    else
      throw std::invalid_argument("config: mask_normalization must be 'full' or 'masked'");
  }
  if (j.contains("scene")) {
    const json& s = j["scene"];
    reject_unknown(s, {"face_box", "hand_box", "bg_freq", "bg_amp", "face_freq", "face_amp", "hand_freq",
                       "hand_amp", "jitter"},
                   "scene");
    if (s.contains("face_box")) cfg.scene.face_box = parse_box(s["face_box"], "scene.face_box");
    if (s.contains("hand_box")) cfg.scene.hand_box = parse_box(s["hand_box"], "scene.hand_box");
    if (s.contains("bg_freq")) cfg.scene.bg_freq = s["bg_freq"].get<double>();
    if (s.contains("bg_amp")) cfg.scene.bg_amp = s["bg_amp"].get<double>();
    if (s.contains("face_freq")) cfg.scene.face_freq = s["face_freq"].get<double>();
    if (s.contains("face_amp")) cfg.scene.face_amp = s["face_amp"].get<double>();
    if (s.contains("hand_freq")) cfg.scene.hand_freq = s["hand_freq"].get<double>();
    if (s.contains("hand_amp")) cfg.scene.hand_amp = s["hand_amp"].get<double>();
    if (s.contains("jitter")) cfg.scene.jitter = s["jitter"].get<int>();
  }
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

std::string config_to_json_text(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["image_size"] = cfg.image_size;
  j["latent_factor"] = cfg.latent_factor;
  j["schedule"] = {{"T", cfg.schedule.T}, {"beta_start", cfg.schedule.beta_start}, {"beta_end", cfg.schedule.beta_end}};
  j["hidden_width"] = cfg.hidden_width;
  j["adapter"] = {{"rank", cfg.adapter.rank}, {"beta", cfg.adapter.beta}, {"targets", cfg.adapter.targets}};
  j["strategy"] = cfg.strategy;
  json opts;
  if (!cfg.strategy_options.ls_weights.empty()) opts["ls_weights"] = cfg.strategy_options.ls_weights;
  opts["dwa_temperature"] = cfg.strategy_options.dwa_temperature;
  opts["uw_lr"] = cfg.strategy_options.uw_lr;
  opts["uw_sigma_floor"] = cfg.strategy_options.uw_sigma_floor;
  j["strategy_options"] = opts;
  j["solver"] = {{"eps_reg", cfg.solver.eps_reg},
                 {"w_floor", cfg.solver.w_floor},
                 {"lagrange_lambda", cfg.solver.lagrange_lambda},
                 {"oracle_iters", cfg.solver.oracle_iters},
                 {"oracle_step", cfg.solver.oracle_step}};
  j["learning_rate"] = cfg.learning_rate;
  j["steps"] = cfg.steps;
  j["batch_size"] = cfg.batch_size;
  j["eval_every"] = cfg.eval_every;
  j["eval_count"] = cfg.eval_count;
  j["mask_normalization"] = cfg.mask_normalization == ad::MaskNorm::FullCount ? "full" : "masked";
  j["scene"] = {{"face_box", box_json(cfg.scene.face_box)},
                {"hand_box", box_json(cfg.scene.hand_box)},
                {"bg_freq", cfg.scene.bg_freq},
                {"bg_amp", cfg.scene.bg_amp},
                {"face_freq", cfg.scene.face_freq},
                {"face_amp", cfg.scene.face_amp},
                {"hand_freq", cfg.scene.hand_freq},
                {"hand_amp", cfg.scene.hand_amp},
                {"jitter", cfg.scene.jitter}};
  j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("save_config: cannot open " + path.string());
  f << config_to_json_text(cfg);
}

}  // namespace fairmoo
