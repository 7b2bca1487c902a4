#include "fairmoo/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fairmoo/rng.hpp"
#include "fairmoo/tensor_io.hpp"

namespace fairmoo {

namespace {

std::shared_ptr<const ParamLayout> adapter_layout(const DenseDenoiser& base, const AdapterSpec& spec) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> specs;
  for (const std::string& name : spec.targets) {
    const Tensor w = base.params.segment(name + ".w");
    std::size_t fan_out = w.shape[0], fan_in = w.shape[1];
    std::size_t r = static_cast<std::size_t>(spec.rank);
    if (spec.rank < 1 || r > std::min(fan_in, fan_out))
      throw std::invalid_argument("attach_adapter: rank " + std::to_string(spec.rank) +
                                  " violates 1 <= r <= min(fan_in, fan_out) for layer " + name);
    specs.emplace_back(name + ".down", std::vector<std::size_t>{r, fan_in});
    specs.emplace_back(name + ".up", std::vector<std::size_t>{fan_out, r});
  }
  return std::make_shared<ParamLayout>(specs);
}

}  // namespace

ParamPartition AdaptedDenoiser::partition() const {
  ParamPartition p;
  for (const ParamSegment& s : base.params.layout->segments()) p.frozen.push_back(s.name);
  for (const ParamSegment& s : adapter.layout->segments()) p.trainable.push_back(s.name);
  return p;
}

AdaptedDenoiser attach_adapter(const DenseDenoiser& base, const AdapterSpec& spec, std::uint64_t seed) {
  if (spec.targets.empty()) throw std::invalid_argument("attach_adapter: no target layers");
  for (const std::string& t : spec.targets)
    if (std::find(denoiser_layer_names().begin(), denoiser_layer_names().end(), t) == denoiser_layer_names().end())
      throw std::invalid_argument("attach_adapter: unknown target layer '" + t + "'");

  AdaptedDenoiser out{base, spec, ParamVector::zeros(adapter_layout(base, spec))};
  Rng rng(mix_seed(seed, 0xADA9ULL));
  for (const ParamSegment& seg : out.adapter.layout->segments()) {
    if (seg.name.ends_with(".up")) continue;  // zero-init: fresh delta is exactly 0
    std::size_t fan_in = seg.shape[1];
    double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < seg.size(); ++i) out.adapter.data[seg.offset + i] = std_dev * rng.normal();
  }
  return out;
}

ad::NodeId adapted_forward(ad::Graph& g, const AdaptedDenoiser& model, const std::vector<ad::NodeId>& leaves,
                           ad::NodeId x) {
  const auto& alayout = *model.adapter.layout;
  if (leaves.size() != alayout.segments().size())
    throw std::invalid_argument("adapted_forward: one leaf per adapter segment required");

  std::vector<std::pair<ad::NodeId, ad::NodeId>> layers;
  for (const std::string& name : denoiser_layer_names()) {
    ad::NodeId w = g.constant(model.base.params.segment(name + ".w"));
    ad::NodeId b = g.constant(model.base.params.segment(name + ".b"));
    if (alayout.has(name + ".down")) {
      ad::NodeId down = leaves[alayout.index_of(name + ".down")];
      ad::NodeId up = leaves[alayout.index_of(name + ".up")];
      w = g.add(w, g.scale(g.matmul(up, down), model.spec.beta));
    }
    layers.emplace_back(w, b);
  }
  return denoiser_forward(g, model.base.cfg, layers, x);
}

Tensor predict_adapted(const AdaptedDenoiser& model, const Tensor& x) {
  ad::Graph g;
  std::vector<ad::NodeId> leaves;
  for (std::size_t i = 0; i < model.adapter.layout->segments().size(); ++i)
    leaves.push_back(g.input(model.adapter.segment(i)));
  return g.value(adapted_forward(g, model, leaves, g.constant(x)));
}

DenseDenoiser merge_adapter(const AdaptedDenoiser& model) {
  DenseDenoiser merged = model.base;
  const auto& alayout = *model.adapter.layout;
  for (const std::string& name : model.spec.targets) {
    Tensor w = merged.params.segment(name + ".w");
    Tensor down = model.adapter.segment(alayout.index_of(name + ".down"));
    Tensor up = model.adapter.segment(alayout.index_of(name + ".up"));
    // Same kernel the runtime combination uses, so merged == combined.
    ad::Graph g;
    Tensor delta = g.value(g.scale(g.matmul(g.constant(up), g.constant(down)), model.spec.beta));
    for (std::size_t i = 0; i < w.size(); ++i) w.data[i] += delta.data[i];
    merged.params.set_segment(name + ".w", w);
  }
  return merged;
}

void save_adapter(const std::filesystem::path& dir, const AdaptedDenoiser& model, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (const ParamSegment& seg : model.adapter.layout->segments())
    dump_tensor(dir / seg.name, model.adapter.segment(model.adapter.layout->index_of(seg.name)));

  nlohmann::json j;
  j["rank"] = model.spec.rank;
  j["beta"] = model.spec.beta;
  j["targets"] = model.spec.targets;
  j["seed"] = seed;
  std::ofstream f(dir / "adapter.json", std::ios::trunc);
  if (!f) throw std::runtime_error("save_adapter: cannot open " + (dir / "adapter.json").string());
  f << j.dump(2) << "\n";
}

AdaptedDenoiser load_adapter(const std::filesystem::path& dir, const DenseDenoiser& base) {
  std::ifstream f(dir / "adapter.json");
  if (!f) throw std::runtime_error("load_adapter: cannot open " + (dir / "adapter.json").string());
  nlohmann::json j = nlohmann::json::parse(f);
  AdapterSpec spec;
  spec.rank = j.at("rank").get<int>();
  spec.beta = j.at("beta").get<double>();
  spec.targets = j.at("targets").get<std::vector<std::string>>();

  AdaptedDenoiser out{base, spec, ParamVector::zeros(adapter_layout(base, spec))};
  for (const ParamSegment& seg : out.adapter.layout->segments()) {
    Tensor t = load_tensor(dir / seg.name);
    out.adapter.set_segment(seg.name, t);
  }
  return out;
}

}  // namespace fairmoo
