#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "fairmoo/adapter.hpp"
#include "fairmoo/objective.hpp"
#include "fairmoo/rng.hpp"

using namespace fairmoo;

namespace {

DenoiserConfig small_cfg() {
  DenoiserConfig cfg;
  cfg.image_size = 8;
  cfg.hidden_width = 10;
  return cfg;
}

Tensor random_input(Rng& rng, const DenoiserConfig& cfg, std::size_t batch) {
  Tensor x = Tensor::zeros({batch, cfg.input_dim()});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  return x;
}

void randomize_adapter(AdaptedDenoiser& model, std::uint64_t seed) {
  Rng rng(seed);
  for (double& v : model.adapter.data) v = 0.2 * rng.normal();
}

}  // namespace

TEST_CASE("fresh adapter reproduces the base model bit-exactly") {
  DenoiserConfig cfg = small_cfg();
  DenseDenoiser base = init_denoiser(cfg, 11);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{4, 0.4, {"fc1", "fc2", "fc3"}}, 12);

  Rng rng(13);
  Tensor x = random_input(rng, cfg, 3);
  Tensor a = predict_adapted(model, x);
  Tensor b = predict_base(base, x);
  CHECK(a.data == b.data);
}

TEST_CASE("beta = 0 reproduces the base model even after training") {
  DenoiserConfig cfg = small_cfg();
  DenseDenoiser base = init_denoiser(cfg, 21);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{4, 0.0, {"fc1", "fc3"}}, 22);
  randomize_adapter(model, 23);

  Rng rng(24);
  Tensor x = random_input(rng, cfg, 2);
  CHECK(predict_adapted(model, x).data == predict_base(base, x).data);
}

TEST_CASE("partition covers all parameters disjointly") {
  DenoiserConfig cfg = small_cfg();
  DenseDenoiser base = init_denoiser(cfg, 31);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{2, 0.4, {"fc2"}}, 32);
  ParamPartition part = model.partition();

  std::set<std::string> frozen(part.frozen.begin(), part.frozen.end());
  std::set<std::string> trainable(part.trainable.begin(), part.trainable.end());
  CHECK(frozen.size() == 6);
  CHECK(trainable.size() == 2);
  for (const std::string& t : trainable) CHECK_FALSE(frozen.count(t));
  CHECK(trainable.count("fc2.down"));
  CHECK(trainable.count("fc2.up"));
}

TEST_CASE("rank bound is enforced") {
  DenoiserConfig cfg = small_cfg();  // hidden width 10
  DenseDenoiser base = init_denoiser(cfg, 41);
  CHECK_THROWS(attach_adapter(base, AdapterSpec{11, 0.4, {"fc2"}}, 42));
  CHECK_THROWS(attach_adapter(base, AdapterSpec{0, 0.4, {"fc2"}}, 42));
  CHECK_THROWS(attach_adapter(base, AdapterSpec{2, 0.4, {"fc9"}}, 42));
  CHECK_NOTHROW(attach_adapter(base, AdapterSpec{10, 0.4, {"fc2"}}, 42));
}

TEST_CASE("combined forward is affine in beta for a single linear target layer") {
  DenoiserConfig cfg = small_cfg();
  DenseDenoiser base = init_denoiser(cfg, 51);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{3, 0.0, {"fc3"}}, 52);
  randomize_adapter(model, 53);

  Rng rng(54);
  Tensor x = random_input(rng, cfg, 2);
  auto at_beta = [&](double beta) {
    AdaptedDenoiser m = model;
    m.spec.beta = beta;
    return predict_adapted(m, x);
  };
  Tensor y0 = at_beta(0.0), y1 = at_beta(1.0), y2 = at_beta(2.0);
  for (std::size_t i = 0; i < y0.size(); ++i)
    CHECK(y2.data[i] - y1.data[i] == doctest::Approx(y1.data[i] - y0.data[i]).epsilon(1e-12));
}

TEST_CASE("merged model matches the runtime combination") {
  DenoiserConfig cfg = small_cfg();
  DenseDenoiser base = init_denoiser(cfg, 61);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{4, 0.4, {"fc1", "fc2", "fc3"}}, 62);
  randomize_adapter(model, 63);

  DenseDenoiser merged = merge_adapter(model);
  Rng rng(64);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = random_input(rng, cfg, 1);
    Tensor a = predict_adapted(model, x);
    Tensor b = predict_base(merged, x);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("merging with beta then -beta recovers the base parameters") {
  DenoiserConfig cfg = small_cfg();
  DenseDenoiser base = init_denoiser(cfg, 71);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{4, 0.37, {"fc1", "fc3"}}, 72);
  randomize_adapter(model, 73);

  DenseDenoiser merged = merge_adapter(model);
  AdaptedDenoiser undo{merged, model.spec, model.adapter};
  undo.spec.beta = -model.spec.beta;
  DenseDenoiser back = merge_adapter(undo);

  double worst = 0.0;
  for (std::size_t i = 0; i < back.params.size(); ++i)
    worst = std::max(worst, std::fabs(back.params.data[i] - base.params.data[i]));
  CHECK(worst <= 1e-10);

  // beta = 0 merge leaves parameters untouched.
  AdaptedDenoiser zero{base, AdapterSpec{4, 0.0, {"fc1"}}, model.adapter};
  zero.spec.targets = {"fc1", "fc3"};
  CHECK(merge_adapter(zero).params.data == base.params.data);
}

TEST_CASE("adapter gradients match finite differences; frozen set receives none") {
  DenoiserConfig cfg = small_cfg();
  cfg.hidden_width = 8;
  DenseDenoiser base = init_denoiser(cfg, 81);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{2, 0.4, {"fc1", "fc2", "fc3"}}, 82);
  randomize_adapter(model, 83);

  SceneSpec scene;
  scene.image_size = 8;
  scene.face_box = {1, 1, 4, 4};
  scene.hand_box = {4, 4, 7, 7};
  NoiseSchedule sched = make_schedule(12, 1e-3, 0.1);
  TrainBatch batch = make_train_batch(84, 1, 0, 2, scene, sched, 1);

  ObjectiveBundle bundle = objective_bundle(batch, cfg, adapted_forward_builder(model), model.adapter);
  // Gradient rows live on the adapter layout only: structural locality.
  CHECK(bundle.layout->total_size() == model.adapter.size());
  for (const ParamSegment& seg : bundle.layout->segments())
    CHECK((seg.name.ends_with(".down") || seg.name.ends_with(".up")));

  Tensor x = assemble_input(cfg, batch.zt, batch.t, batch.cond);
  for (std::size_t obj = 0; obj < 3; ++obj) {
    ad::ScalarFn f = [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
      ad::NodeId pred = adapted_forward(g, model, L, g.constant(x));
      ad::NodeId eps = g.constant(Tensor({2, cfg.pixels()}, batch.eps.data));
      if (obj == 0) return g.sq_err(pred, eps);
      const Tensor& m = obj == 1 ? batch.face_mask : batch.hand_mask;
      return g.masked_sq_err(pred, eps, g.constant(Tensor({2, cfg.pixels()}, m.data)));
    };
    ParamVector fd = ad::finite_diff(f, model.adapter, 1e-5);
    double scale = 1e-8, err = 0.0;
    for (double v : fd.data) scale = std::max(scale, std::fabs(v));
    for (std::size_t c = 0; c < fd.size(); ++c)
      err = std::max(err, std::fabs(bundle.grads.data[obj * fd.size() + c] - fd.data[c]));
    CHECK(err / scale <= 1e-5);
  }
}

TEST_CASE("checkpoint round-trips adapter parameters bit-exactly") {
  DenoiserConfig cfg = small_cfg();
  DenseDenoiser base = init_denoiser(cfg, 91);
  AdaptedDenoiser model = attach_adapter(base, AdapterSpec{3, 0.45, {"fc1", "fc2"}}, 92);
  randomize_adapter(model, 93);

  std::filesystem::path dir = std::filesystem::temp_directory_path() / "fairmoo_adapter_test";
  std::filesystem::remove_all(dir);
  save_adapter(dir, model, 92);
  AdaptedDenoiser loaded = load_adapter(dir, base);

  CHECK(loaded.spec.rank == 3);
  CHECK(loaded.spec.beta == 0.45);
  CHECK(loaded.spec.targets == std::vector<std::string>{"fc1", "fc2"});
  CHECK(loaded.adapter.data == model.adapter.data);
  std::filesystem::remove_all(dir);
}
