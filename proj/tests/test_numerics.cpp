#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fairmoo/eig.hpp"
#include "fairmoo/graph.hpp"
#include "fairmoo/param_vector.hpp"
#include "fairmoo/rng.hpp"

using namespace fairmoo;

namespace {

std::shared_ptr<const ParamLayout> flat_layout(std::size_t n) {
  return std::make_shared<ParamLayout>(
      std::vector<std::pair<std::string, std::vector<std::size_t>>>{{"theta", {n}}});
}

ParamVector make_theta(std::vector<double> v) {
  auto layout = flat_layout(v.size());
  return ParamVector(layout, std::move(v));
}

// Max elementwise deviation relative to the finite-difference gradient's
// own scale; the absolute fd noise floor (~1e-10 here) makes a per-entry
// relative floor meaningless for near-zero coordinates.
double grad_rel_err(const ParamVector& ad, const ParamVector& fd) {
  double scale = 1e-8, err = 0.0;
  for (double v : fd.data) scale = std::max(scale, std::fabs(v));
  for (std::size_t i = 0; i < ad.size(); ++i) err = std::max(err, std::fabs(ad.data[i] - fd.data[i]));
  return err / scale;
}

SymMatrix random_symmetric(Rng& rng, std::size_t n, double lo, double hi) {
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m.set(i, j, rng.uniform(lo, hi));
  return m;
}

SymMatrix random_spd(Rng& rng, std::size_t n, double scale) {
  // A^T A + small ridge keeps it comfortably positive definite.
  std::vector<double> a(n * n);
  for (double& v : a) v = rng.normal();
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += a[k * n + i] * a[k * n + j];
      m.set(i, j, scale * acc + (i == j ? 0.01 * scale : 0.0));
    }
  return m;
}

double reconstruction_err(const SymMatrix& k, const EigResult& e) {
  std::size_t n = k.n;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n; ++m) acc += e.vectors[i * n + m] * e.values[m] * e.vectors[j * n + m];
      worst = std::max(worst, std::fabs(acc - k.at(i, j)));
    }
  return worst;
}

double orthonormality_err(const EigResult& e, std::size_t n) {
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n; ++m) acc += e.vectors[i * n + m] * e.vectors[j * n + m];
      worst = std::max(worst, std::fabs(acc - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace

TEST_CASE("tensor rejects mismatched data length") {
  CHECK_THROWS(Tensor({2, 3}, {1.0, 2.0}));
  CHECK(Tensor::zeros({2, 3}).size() == 6);
  CHECK(Tensor::scalar(4.0).scalar_value() == 4.0);
}

TEST_CASE("param vector round trips flatten/unflatten exactly") {
  auto layout = std::make_shared<ParamLayout>(std::vector<std::pair<std::string, std::vector<std::size_t>>>{
      {"a", {2, 3}}, {"b", {4}}, {"c", {1, 1, 2}}});
  CHECK(layout->total_size() == 12);

  Rng rng(7);
  ParamVector v = ParamVector::zeros(layout);
  for (double& x : v.data) x = rng.normal();

  ParamVector back = ParamVector::flatten(layout, v.unflatten());
  CHECK(back.data == v.data);
  CHECK(v.segment("b").shape == std::vector<std::size_t>{4});
  CHECK_THROWS(v.segment("nope"));
}

TEST_CASE("value_and_grad on half squared norm") {
  ad::ScalarFn f = [](ad::Graph& g, const std::vector<ad::NodeId>& leaves) {
    return g.scale(g.sum(g.mul(leaves[0], leaves[0])), 0.5);
  };
  auto [val, grad] = ad::value_and_grad(f, make_theta({3.0, -4.0}));
  CHECK(val == doctest::Approx(12.5).epsilon(1e-15));
  CHECK(grad.data[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(grad.data[1] == doctest::Approx(-4.0).epsilon(1e-15));
}

TEST_CASE("value_and_grad on sum gives all-ones") {
  ad::ScalarFn f = [](ad::Graph& g, const std::vector<ad::NodeId>& leaves) { return g.sum(leaves[0]); };
  auto [val, grad] = ad::value_and_grad(f, make_theta({1.5, -2.0, 7.0}));
  CHECK(val == doctest::Approx(6.5));
  for (double v : grad.data) CHECK(v == 1.0);
}

TEST_CASE("finite_diff trivial oracles") {
  ad::ScalarFn half_sq = [](ad::Graph& g, const std::vector<ad::NodeId>& leaves) {
    return g.scale(g.sum(g.mul(leaves[0], leaves[0])), 0.5);
  };
  ParamVector fd = ad::finite_diff(half_sq, make_theta({1.0, 2.0}), 1e-5);
  CHECK(fd.data[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fd.data[1] == doctest::Approx(2.0).epsilon(1e-9));

  ad::ScalarFn cube = [](ad::Graph& g, const std::vector<ad::NodeId>& leaves) {
    return g.sum(g.mul(g.mul(leaves[0], leaves[0]), leaves[0]));
  };
  ParamVector fd3 = ad::finite_diff(cube, make_theta({1.0}), 1e-5);
  CHECK(std::fabs(fd3.data[0] - 3.0) < 1e-8);

  CHECK_THROWS(ad::finite_diff(cube, make_theta({1.0}), 0.0));
}

TEST_CASE("every operator adjoint matches finite differences") {
  Rng rng(42);
  auto layout = std::make_shared<ParamLayout>(std::vector<std::pair<std::string, std::vector<std::size_t>>>{
      {"w", {3, 4}}, {"b", {3}}, {"m", {4, 2}}});
  ParamVector theta = ParamVector::zeros(layout);
  for (double& v : theta.data) v = 0.5 * rng.normal();

  Tensor x = Tensor::zeros({2, 4});
  for (double& v : x.data) v = rng.normal();
  Tensor target = Tensor::zeros({2, 3});
  for (double& v : target.data) v = rng.normal();
  Tensor mask = Tensor::zeros({3});
  mask.data = {1.0, 0.0, 1.0};

  std::vector<std::pair<const char*, ad::ScalarFn>> cases;
  cases.emplace_back("affine+tanh+sq_err", [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
    return g.sq_err(g.tanh(g.affine(g.constant(x), L[0], L[1])), g.constant(target));
  });
  cases.emplace_back("relu+mean", [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
    return g.mean(g.relu(g.affine(g.constant(x), L[0], L[1])));
  });
  cases.emplace_back("matmul+sum", [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
    return g.sum(g.matmul(L[0], g.matmul(g.constant(Tensor::full({4, 4}, 0.25)), L[2])));
  });
  cases.emplace_back("mul+add+scale", [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
    return g.scale(g.sum(g.mul(g.add(L[1], L[1]), L[1])), 0.7);
  });
  cases.emplace_back("masked_sq_err broadcast", [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
    // mask [3] broadcast over the batch dimension of [2,3]
    return g.masked_sq_err(g.affine(g.constant(x), L[0], L[1]), g.constant(target), g.constant(mask));
  });
  cases.emplace_back("masked_sq_err masked-count", [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
    return g.masked_sq_err(g.affine(g.constant(x), L[0], L[1]), g.constant(target), g.constant(mask),
                           ad::MaskNorm::MaskedCount);
  });

  for (auto& [name, f] : cases) {
    CAPTURE(name);
    auto [val, grad] = ad::value_and_grad(f, theta);
    CHECK(std::isfinite(val));
    ParamVector fd = ad::finite_diff(f, theta, 1e-5);
    CHECK(grad_rel_err(grad, fd) <= 1e-5);
  }
}

TEST_CASE("random two-layer nets match finite differences over 100 draws") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t d = 3 + rng.below(4), h = 2 + rng.below(5), B = 1 + rng.below(3);
    auto layout = std::make_shared<ParamLayout>(std::vector<std::pair<std::string, std::vector<std::size_t>>>{
        {"w1", {h, d}}, {"b1", {h}}, {"w2", {1, h}}, {"b2", {1}}});
    ParamVector theta = ParamVector::zeros(layout);
    for (double& v : theta.data) v = 0.6 * rng.normal();
    Tensor x = Tensor::zeros({B, d});
    for (double& v : x.data) v = rng.normal();
    Tensor y = Tensor::zeros({B, 1});
    for (double& v : y.data) v = rng.normal();

    bool use_relu = rng.below(2) == 0;
    ad::ScalarFn f = [&](ad::Graph& g, const std::vector<ad::NodeId>& L) {
      ad::NodeId hidden = g.affine(g.constant(x), L[0], L[1]);
      hidden = use_relu ? g.relu(hidden) : g.tanh(hidden);
      return g.sq_err(g.affine(hidden, L[2], L[3]), g.constant(y));
    };

    auto [val, grad] = ad::value_and_grad(f, theta);
    CHECK(std::isfinite(val));
    ParamVector fd = ad::finite_diff(f, theta, 1e-5);
    CHECK(grad_rel_err(grad, fd) <= 1e-5);
  }
}

TEST_CASE("tape replay reproduces forward values bit-exactly") {
  Rng rng(11);
  ad::Graph g;
  Tensor x = Tensor::zeros({2, 5});
  for (double& v : x.data) v = rng.normal();
  Tensor w = Tensor::zeros({3, 5});
  for (double& v : w.data) v = rng.normal();
  ad::NodeId xa = g.constant(x);
  ad::NodeId wa = g.input(w);
  ad::NodeId out = g.mean(g.tanh(g.affine(xa, wa, g.input(Tensor::zeros({3})))));
  (void)out;
  CHECK(g.replay_deviation() == 0.0);
}

TEST_CASE("value_and_grad is deterministic bit-for-bit") {
  Rng rng(99);
  auto layout = flat_layout(12);
  ParamVector theta = ParamVector::zeros(layout);
  for (double& v : theta.data) v = rng.normal();
  ad::ScalarFn f = [](ad::Graph& g, const std::vector<ad::NodeId>& L) {
    return g.sq_err(g.tanh(L[0]), g.constant(Tensor::full({12}, 0.3)));
  };
  auto [v1, g1] = ad::value_and_grad(f, theta);
  auto [v2, g2] = ad::value_and_grad(f, theta);
  CHECK(v1 == v2);
  CHECK(g1.data == g2.data);
}

TEST_CASE("unsupported compositions are rejected at construction") {
  ad::Graph g;
  ad::NodeId a = g.input(Tensor::zeros({2, 3}));
  ad::NodeId b = g.input(Tensor::zeros({3, 2}));
  CHECK_THROWS(g.add(a, b));
  CHECK_THROWS(g.affine(a, b, g.constant(Tensor::zeros({5}))));
  CHECK_THROWS(g.matmul(a, a));
  // mask must be a constant leaf
  CHECK_THROWS(g.masked_sq_err(a, g.constant(Tensor::zeros({2, 3})), g.input(Tensor::zeros({3}))));
}

TEST_CASE("sym_eig identity and diagonal") {
  EigResult e = sym_eig(SymMatrix::identity(3));
  CHECK(e.values == std::vector<double>{1.0, 1.0, 1.0});

  EigResult d = sym_eig(SymMatrix::diagonal({4.0, 9.0, 1.0}));
  CHECK(d.values == std::vector<double>{9.0, 4.0, 1.0});
}

TEST_CASE("sym_eig orthonormality and reconstruction over 1000 random matrices") {
  Rng rng(31337);
  double worst_ortho = 0.0, worst_recon = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 2 + rng.below(5);
    SymMatrix k = random_symmetric(rng, n, -10.0, 10.0);
    EigResult e = sym_eig(k);
    worst_ortho = std::max(worst_ortho, orthonormality_err(e, n));
    worst_recon = std::max(worst_recon, reconstruction_err(k, e) / std::max(k.max_abs(), 1e-30));
    for (std::size_t j = 1; j < n; ++j) CHECK(e.values[j - 1] >= e.values[j]);
  }
  CHECK(worst_ortho <= 1e-12);
  CHECK(worst_recon <= 1e-10);
}

TEST_CASE("mat_frac_power identities") {
  SymMatrix id3 = SymMatrix::identity(3);
  SymMatrix r = mat_frac_power(id3, -2.0 / 3.0, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(r.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));

  SymMatrix d = mat_frac_power(SymMatrix::diagonal({8.0, 27.0}), -2.0 / 3.0, 0.0);
  CHECK(d.at(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(d.at(1, 1) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(d.at(0, 1) == 0.0);
}

TEST_CASE("mat_frac_power: square of the half power recovers K") {
  Rng rng(5150);
  for (int trial = 0; trial < 50; ++trial) {
    SymMatrix k = random_spd(rng, 3, rng.uniform(0.1, 5.0));
    SymMatrix h = mat_frac_power(k, 0.5, 0.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < 3; ++m) acc += h.at(i, m) * h.at(m, j);
        worst = std::max(worst, std::fabs(acc - k.at(i, j)));
      }
    CHECK(worst <= 1e-10 * std::max(1.0, k.max_abs()));
  }
}

TEST_CASE("mat_frac_power: identity power and semigroup property") {
  Rng rng(777);
  for (int trial = 0; trial < 50; ++trial) {
    SymMatrix k = random_spd(rng, 4, 1.0);
    SymMatrix same = mat_frac_power(k, 1.0, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::fabs(same.at(i, j) - k.at(i, j)) <= 1e-12 * std::max(1.0, k.max_abs()));

    double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
    SymMatrix pa = mat_frac_power(k, a, 0.0);
    SymMatrix pb = mat_frac_power(k, b, 0.0);
    SymMatrix pab = mat_frac_power(k, a + b, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < 4; ++m) acc += pa.at(i, m) * pb.at(m, j);
        CHECK(std::fabs(acc - pab.at(i, j)) <= 1e-9 * std::max(1.0, pab.max_abs()));
      }
  }
}

TEST_CASE("mat_frac_power singularity error names the eigenvalue") {
  SymMatrix k = SymMatrix::diagonal({1.0, 0.0});
  CHECK_THROWS_WITH_AS(mat_frac_power(k, -2.0 / 3.0, 0.0), doctest::Contains("singular"), std::runtime_error);
  // eps_reg rescues the zero eigenvalue
  CHECK_NOTHROW(mat_frac_power(k, -2.0 / 3.0, 1e-10));
  // negative eigenvalue with fractional power
  CHECK_THROWS(mat_frac_power(SymMatrix::diagonal({1.0, -1.0}), 0.5, 0.0));
}
