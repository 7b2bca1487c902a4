#include "fairmoo/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairmoo {

Strategy strategy_from_tag(const std::string& tag) {
  if (tag == "mpd") return Strategy::Mpd;
  if (tag == "ls") return Strategy::Ls;
  if (tag == "global_only") return Strategy::GlobalOnly;
  if (tag == "si") return Strategy::Si;
  if (tag == "dwa") return Strategy::Dwa;
  if (tag == "rlw") return Strategy::Rlw;
  if (tag == "uw") return Strategy::Uw;
  throw std::invalid_argument("unknown strategy tag '" + tag + "'");
}

std::string strategy_tag(Strategy s) {
  switch (s) {
    case Strategy::Mpd: return "mpd";
    case Strategy::Ls: return "ls";
    case Strategy::GlobalOnly: return "global_only";
    case Strategy::Si: return "si";
    case Strategy::Dwa: return "dwa";
    case Strategy::Rlw: return "rlw";
    case Strategy::Uw: return "uw";
  }
  throw std::logic_error("strategy_tag: unreachable");
}

namespace {

std::vector<double> softmax(const std::vector<double>& x) {
  double m = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - m);
    z += e[i];
  }
  for (double& v : e) v /= z;
  return e;
}

FairWeights tagged(std::vector<double> w, Strategy s, bool floor = false) {
  return FairWeights{std::move(w), strategy_tag(s), floor};
}

}  // namespace

FairWeights baseline_weights(Strategy s, std::size_t k, const std::vector<std::vector<double>>& history,
                             StrategyState& state, const StrategyOptions& opt) {
  switch (s) {
    case Strategy::Ls: {
      std::vector<double> w = opt.ls_weights.empty() ? std::vector<double>(k, 1.0) : opt.ls_weights;
      if (w.size() != k) throw std::invalid_argument("baseline_weights: ls_weights size mismatch");
      for (double v : w)
        if (!(v >= 0.0)) throw std::invalid_argument("baseline_weights: LS weights must be >= 0");
      return tagged(std::move(w), s);
    }
    case Strategy::GlobalOnly: {
      std::vector<double> w(k, 0.0);
      w[0] = 1.0;
      return tagged(std::move(w), s);
    }
    case Strategy::Si: {
      if (history.empty()) throw std::invalid_argument("baseline_weights: SI needs the current losses");
      const std::vector<double>& l = history.back();
      std::vector<double> w(k);
      for (std::size_t i = 0; i < k; ++i) {
        if (!(l[i] > 0.0)) throw std::runtime_error("baseline_weights: SI requires positive losses");
        w[i] = 1.0 / l[i];
      }
      return tagged(std::move(w), s);
    }
    case Strategy::Dwa: {
      if (history.size() < 2) throw std::invalid_argument("baseline_weights: DWA needs >= 2 history entries");
      const std::vector<double>& prev = history[history.size() - 1];
      const std::vector<double>& prev2 = history[history.size() - 2];
      std::vector<double> r(k);
      for (std::size_t i = 0; i < k; ++i) {
        if (!(prev[i] > 0.0) || !(prev2[i] > 0.0))
          throw std::runtime_error("baseline_weights: DWA requires positive losses");
        r[i] = prev[i] / prev2[i] / opt.dwa_temperature;
      }
      std::vector<double> w = softmax(r);
      for (double& v : w) v *= static_cast<double>(k);
      return tagged(std::move(w), s);
    }
    case Strategy::Rlw: {
      std::vector<double> draws(k);
      for (double& v : draws) v = state.rlw_rng.normal();
      return tagged(softmax(draws), s);
    }
    case Strategy::Uw: {
      if (state.uw_sigma.size() != k) state.uw_sigma.assign(k, 1.0);
      std::vector<double> w(k);
      for (std::size_t i = 0; i < k; ++i) w[i] = 1.0 / (2.0 * state.uw_sigma[i] * state.uw_sigma[i]);
      if (!history.empty()) {
        // One descent step of sum_i [ l_i/(2 s_i^2) + log s_i ] in sigma.
        const std::vector<double>& l = history.back();
        for (std::size_t i = 0; i < k; ++i) {
          double sg = state.uw_sigma[i];
          double grad = -l[i] / (sg * sg * sg) + 1.0 / sg;
          state.uw_sigma[i] = std::max(sg - opt.uw_lr * grad, opt.uw_sigma_floor);
        }
      }
      return tagged(std::move(w), s);
    }
    case Strategy::Mpd:
      throw std::invalid_argument("baseline_weights: MPD is not a baseline; use mpd_weights_closed");
  }
  throw std::logic_error("baseline_weights: unreachable");
}

FairWeights next_weights(Strategy s, std::size_t k, const GramMatrix& gram_matrix, const SolverConfig& solver,
                         const StrategyOptions& opt, StrategyState& state) {
  if (s == Strategy::Mpd) return mpd_weights_closed(gram_matrix, solver);
  if (s == Strategy::Dwa && state.loss_history.size() < 2)
    return FairWeights{std::vector<double>(k, 1.0), strategy_tag(s), false};  // warm-up
  return baseline_weights(s, k, state.loss_history, state, opt);
}

}  // namespace fairmoo
