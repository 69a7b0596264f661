#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfc/lift.hpp"
#include "mfc/measure.hpp"
#include "mfc/problem.hpp"

namespace mfc {

// Exit codes shared by every subcommand.
inline constexpr int kExitPass = 0;
inline constexpr int kExitCheckFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericalAbort = 3;

// Parsed experiment configuration. The parser rejects unknown fields so a
// misspelled knob fails loudly instead of being ignored.
struct ExperimentConfig {
  std::string problem = "decoupled-bounded";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::string out_dir = ".";
  std::string config_digest;

  // ladder
  double ladder_t = 0.0;
  std::optional<DiscreteMeasure> ladder_mu;
  std::vector<double> eps_list = {0.4, 0.2, 0.1, 0.05};
  std::vector<int> n_list = {1, 2};
  std::vector<int> m_list = {8, 16, 32};
  GridSpec grid;
  int quad_nodes = 7;
  bool oracle_compare = false;

  // check
  int assumption_samples = 400;
  double fd_step = 1e-4;
  int mollifier_samples = 300;
  std::vector<int> mollifier_n = {1, 2};
  int mollifier_m = 8;
  std::vector<std::string> checks = {"assumption-a", "assumption-b",
                                     "mollifier-lemma"};

  // verify
  std::vector<double> ito_h = {0.02, 0.01};
  int ito_paths = 10000;
  int dpp_scenarios = 2000;
  int dpp_copies = 16;
  double dpp_budget = 0.08;
  int fg_trials = 200;
  std::vector<int> fg_n = {4, 16, 64, 256};
  std::vector<std::string> verify_checks = {
      "m2-identities", "cylindrical-fd", "ito", "dpp", "fournier-guillin",
      "penalized-maximizer"};

  // solve
  double solve_eps = 0.1;
  int solve_n = 1;
  int solve_m = 16;
  std::string solve_out_base = "value_grid";

  // simulate
  double sim_t0 = 0.0;
  double sim_eps = 0.0;
  int sim_copies = 0;
  int sim_common = 100;
  int sim_steps = 64;
  std::string sim_policy = "constant:0";
  std::optional<DiscreteMeasure> sim_mu;
  bool sim_dump_paths = false;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

int cmd_check(const ExperimentConfig& cfg);
int cmd_ladder(const ExperimentConfig& cfg);
int cmd_verify(const ExperimentConfig& cfg);
int cmd_solve(const ExperimentConfig& cfg);
int cmd_simulate(const ExperimentConfig& cfg);

}  // namespace mfc
