#include "fairmoo/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "fairmoo/rng.hpp"

namespace fairmoo {

std::shared_ptr<const ParamLayout> base_layout(const DenoiserConfig& cfg) {
  std::size_t din = cfg.input_dim();
  std::size_t h = static_cast<std::size_t>(cfg.hidden_width);
  std::size_t out = cfg.pixels();
  return std::make_shared<ParamLayout>(std::vector<std::pair<std::string, std::vector<std::size_t>>>{
      {"fc1.w", {h, din}},
      {"fc1.b", {h}},
      {"fc2.w", {h, h}},
      {"fc2.b", {h}},
      {"fc3.w", {out, h}},
      {"fc3.b", {out}},
  });
}

DenseDenoiser init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
  if (cfg.image_size < 2 || cfg.hidden_width < 1)
    throw std::invalid_argument("init_denoiser: degenerate config");
  auto layout = base_layout(cfg);
  ParamVector pv = ParamVector::zeros(layout);
  Rng rng(mix_seed(seed, 0xBA5EULL));
  for (const ParamSegment& seg : layout->segments()) {
    if (seg.name.ends_with(".b")) continue;  // biases start at zero
    std::size_t fan_in = seg.shape[1];
    double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < seg.size(); ++i) pv.data[seg.offset + i] = std_dev * rng.normal();
  }
  return DenseDenoiser{cfg, std::move(pv)};
}

std::vector<double> time_embedding(std::size_t t, int dim) {
  if (dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even");
  std::vector<double> e(static_cast<std::size_t>(dim));
  int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    e[static_cast<std::size_t>(i)] = std::sin(static_cast<double>(t) * freq);
    e[static_cast<std::size_t>(half + i)] = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

Tensor assemble_input(const DenoiserConfig& cfg, const Tensor& zt_batch, const std::vector<std::size_t>& t,
                      const Tensor& cond) {
  std::size_t B = zt_batch.shape.at(0);
  std::size_t px = cfg.pixels();
  if (zt_batch.size() != B * px) throw std::invalid_argument("assemble_input: z_t batch shape mismatch");
  if (t.size() != B) throw std::invalid_argument("assemble_input: timestep count mismatch");
  if (cond.shape != std::vector<std::size_t>{B, static_cast<std::size_t>(cfg.cond_dim)})
    throw std::invalid_argument("assemble_input: cond shape mismatch");

  Tensor x = Tensor::zeros({B, cfg.input_dim()});
  for (std::size_t b = 0; b < B; ++b) {
    double* row = x.data.data() + b * cfg.input_dim();
    const double* z = zt_batch.data.data() + b * px;
    std::copy(z, z + px, row);
    std::vector<double> e = time_embedding(t[b], cfg.time_embed_dim);
    std::copy(e.begin(), e.end(), row + px);
    const double* c = cond.data.data() + b * static_cast<std::size_t>(cfg.cond_dim);
    std::copy(c, c + cfg.cond_dim, row + px + static_cast<std::size_t>(cfg.time_embed_dim));
  }
  return x;
}

ad::NodeId denoiser_forward(ad::Graph& g, const DenoiserConfig& cfg,
                            const std::vector<std::pair<ad::NodeId, ad::NodeId>>& layers, ad::NodeId x) {
  (void)cfg;
  if (layers.size() != denoiser_layer_names().size())
    throw std::invalid_argument("denoiser_forward: expected one (w,b) pair per layer");
  ad::NodeId h1 = g.tanh(g.affine(x, layers[0].first, layers[0].second));
  ad::NodeId h2 = g.tanh(g.affine(h1, layers[1].first, layers[1].second));
  return g.affine(h2, layers[2].first, layers[2].second);
}

Tensor predict_base(const DenseDenoiser& model, const Tensor& x) {
  ad::Graph g;
  std::vector<std::pair<ad::NodeId, ad::NodeId>> layers;
  for (const std::string& name : denoiser_layer_names())
    layers.emplace_back(g.constant(model.params.segment(name + ".w")), g.constant(model.params.segment(name + ".b")));
  return g.value(denoiser_forward(g, model.cfg, layers, g.constant(x)));
}

}  // namespace fairmoo
