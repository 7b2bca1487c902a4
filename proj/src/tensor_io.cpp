#include "fairmoo/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fairmoo {

static_assert(std::endian::native == std::endian::little,
              "tensor dump format is little-endian; big-endian hosts need byte swaps");

void dump_tensor(const std::filesystem::path& base, const Tensor& t) {
  std::filesystem::path raw = base;
  raw += ".f64";
  std::ofstream f(raw, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("dump_tensor: cannot open " + raw.string());
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("dump_tensor: write failed for " + raw.string());

  nlohmann::json side;
  side["shape"] = t.shape;
  side["dtype"] = "f64";
  side["order"] = "row-major";
  std::filesystem::path meta = base;
  meta += ".json";
  std::ofstream m(meta, std::ios::trunc);
  if (!m) throw std::runtime_error("dump_tensor: cannot open " + meta.string());
  m << side.dump(2) << "\n";
}

Tensor load_tensor(const std::filesystem::path& base) {
  std::filesystem::path meta = base;
  meta += ".json";
  std::ifstream m(meta);
  if (!m) throw std::runtime_error("load_tensor: cannot open " + meta.string());
  nlohmann::json side = nlohmann::json::parse(m);
  if (side.value("dtype", "") != "f64" || side.value("order", "") != "row-major")
    throw std::runtime_error("load_tensor: unsupported sidecar in " + meta.string());
  std::vector<std::size_t> shape = side.at("shape").get<std::vector<std::size_t>>();

  std::filesystem::path raw = base;
  raw += ".f64";
  std::ifstream f(raw, std::ios::binary);
  if (!f) throw std::runtime_error("load_tensor: cannot open " + raw.string());
  std::size_t n = Tensor::count(shape);
  std::vector<double> data(n);
  f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(f.gcount()) != n * sizeof(double))
    throw std::runtime_error("load_tensor: short read from " + raw.string());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace fairmoo
