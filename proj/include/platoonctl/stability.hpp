#pragma once

#include <stdexcept>
#include <vector>

#include "platoonctl/rng.hpp"
#include "platoonctl/scenario.hpp"

namespace platoonctl {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inputs of the closed-form queue analysis with constant inflow and
/// periodic platoons.
struct AnalysisParams {
  double q_in = 3000.0;     // background inflow, veh/h
  double q_hi = 4000.0;     // one-lane overtaking flow
  double q_lo = 2000.0;     // two-lane overtaking flow
  double q_cap = 4000.0;    // bottleneck free-flow capacity
  double q_dis = 3272.727;  // bottleneck discharge flow
  double n_pi = 2.0;        // platoon size, veh
  double tau_pi = 1.0 / 81.0;  // platoon period, h
  double length = 5.0;      // controlled segment, km
  double u_min = 50.0;      // km/h
  double delta = 800.0 / 81.0;  // bound on the recursion noise, veh
  double p_star = 0.9;

  /// Q^in + n_pi / tau_pi
  double effective_inflow() const noexcept { return q_in + n_pi / tau_pi; }
  double max_travel_time() const noexcept { return length / u_min; }

  /// Full flow ordering Q^lo < q_dis < Q^in < Q~ < Q^hi <= q_cap. Throws AnalysisError.
  void check_ordering() const;

  /// Analysis inputs of a scenario at background inflow q_in.
  static AnalysisParams from(const ScenarioConfig& config, double q_in);
};

bool uncontrolled_stable(const AnalysisParams& p) noexcept;

struct RecursionCoeffs {
  double a = 0.0;
  double b = 0.0;
};

/// Coefficients of n^{k+1} = a n^k + b. Throws AnalysisError unless a > 1 and b < 0.
RecursionCoeffs recursion_coeffs(const AnalysisParams& p);

struct Thresholds {
  double stable = 0.0;     // b / (1 - a)
  double necessary = 0.0;  // (q_dis - Q^lo) l / U_min
};

Thresholds stability_threshold(const AnalysisParams& p);

/// Excess congestion below which a platoon arrives without a queue.
double phase_two_threshold(const AnalysisParams& p);

/// Platoons needed to bring n0 under the phase-two threshold. Throws
/// AnalysisError when n0 is not below the stability threshold.
int phase_two_count(const AnalysisParams& p, double n0);

/// Excess congestion after k deterministic recursion steps.
double recursion_iterate(const AnalysisParams& p, double n0, int k);

/// Minimum travel time of a platoon arriving with no queue given excess n.
double queue_free_travel_time(const AnalysisParams& p, double n);

/// Platoons until the unperturbed state once the excess is n (phase two).
/// Throws AnalysisError when the travel time reaches the maximum.
int recovery_count(const AnalysisParams& p, double n);

/// Logistic approximation of the probability of failing to decongest.
double failure_probability(double n0, const AnalysisParams& p);

/// Initial excess matched to the throughput estimate.
double throughput_initial_queue(const AnalysisParams& p);

/// Largest inflow decongested with probability P* from initial excess n0.
double throughput_estimate(const AnalysisParams& p, double n0);
/// Closed form using throughput_initial_queue.
double throughput_estimate(const AnalysisParams& p);

enum class RecursionOutcome { stabilized, diverged, undecided };

struct RecursionRun {
  RecursionOutcome outcome = RecursionOutcome::undecided;
  int steps = 0;
};

/// Iterates n^{k+1} = a n^k + b + d^k with d^k ~ U[-delta, delta] until a
/// decisive bound is crossed.
RecursionRun stochastic_recursion_sim(Rng& rng, double n0, const AnalysisParams& p, int k_max);

/// Fraction of `trials` stochastic runs that diverge.
double empirical_failure_rate(double n0, const AnalysisParams& p, int trials, std::uint64_t seed, int k_max = 10000);

struct PeriodicSettings {
  double free_flow_speed = 100.0;
  double u_max = 100.0;
  double speed_step = 1.0;
  double step = 0.0002;
  double platoon_length = 0.1;  // km
  int platoons = 100;      // upper bound on simulated platoons
  int recovered_run = 5;  // stop after this many full-speed queue-free platoons
};

struct PeriodicOutcome {
  bool decongested = false;
  std::vector<double> speeds;          // per platoon
  std::vector<bool> feasible;          // queue-free plan found
  std::vector<double> queue_at_arrival;
  double final_queue = 0.0;
  double peak_queue = 0.0;
  int first_unperturbed = -1;  // first platoon from which all run at u_max
};

/// Closed-loop queue-model run: constant inflow, a platoon entering the
/// segment every tau_pi and planned with the queue-free speed search, and
/// a bottleneck queue of n0 when the first overtaking flow arrives.
PeriodicOutcome simulate_periodic_control(const AnalysisParams& p, double n0, const PeriodicSettings& s = {});

}  // namespace platoonctl
