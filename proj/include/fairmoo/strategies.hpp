#pragma once

#include <string>
#include <vector>

#include "fairmoo/rng.hpp"
#include "fairmoo/solver.hpp"

namespace fairmoo {

enum class Strategy { Mpd, Ls, GlobalOnly, Si, Dwa, Rlw, Uw };

Strategy strategy_from_tag(const std::string& tag);
std::string strategy_tag(Strategy s);

struct StrategyOptions {
  // Fixed weights for linear scalarization; empty means all-ones.
  std::vector<double> ls_weights;
  double dwa_temperature = 2.0;
  double uw_lr = 0.01;
  double uw_sigma_floor = 1e-3;
};

struct StrategyState {
  std::vector<std::vector<double>> loss_history;  // oldest first
  std::vector<double> uw_sigma;                   // lazily sized, init 1
  Rng rlw_rng{0};
};

// Literature-standard baseline weightings:
//   LS  fixed weights (all-ones by default)
//   SI  w_i = 1 / l_i
//   DWA w_i = k * softmax(r_i / T), r_i = l_i(t-1) / l_i(t-2); needs >= 2
//       history entries
//   RLW softmax of k standard normal draws
//   UW  w_i = 1/(2 sigma_i^2), sigma updated by one descent step on
//       sum_i [ l_i/(2 sigma_i^2) + log sigma_i ]
FairWeights baseline_weights(Strategy s, std::size_t k, const std::vector<std::vector<double>>& history,
                             StrategyState& state, const StrategyOptions& opt);

// Training-loop driver: routes to the MPD closed form or a baseline, and
// returns uniform weights during DWA warm-up.
FairWeights next_weights(Strategy s, std::size_t k, const GramMatrix& gram_matrix, const SolverConfig& solver,
                         const StrategyOptions& opt, StrategyState& state);

}  // namespace fairmoo
