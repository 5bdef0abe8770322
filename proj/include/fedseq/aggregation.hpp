#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fedseq/neural.hpp"

namespace fedseq {

// One participant's contribution for a round: the parameter delta it wants
// applied to the global model and the local sample count used for weighting.
struct RoundUpdate {
  std::uint32_t org_id = 0;
  ParamVector delta;
  std::uint64_t n_samples = 1;
};

struct FedAvgPolicy {};

struct TrimmedMeanPolicy {
  double beta = 0.1;  // trim fraction in [0, 0.5); ceil(beta*n) cut per side
};

struct KrumPolicy {
  std::uint32_t assumed_attackers = 0;  // f; needs n >= f + 3
};

struct FLTrustPolicy {
  std::uint32_t server_samples = 500;  // clean sequences kept server-side
};

struct DnCPolicy {
  double remove_frac = 0.1;  // fraction of largest-projection updates dropped
};

struct NormBoundPolicy {
  double threshold = 5.0;  // T
};

struct WeakDPPolicy {
  double threshold = 5.0;  // T
  double noise_std = 0.05;  // sigma, per coordinate
};

struct CDPPolicy {
  double clip = 5.0;          // S, applied participant-side per batch step
  double noise_scale = 1.0;   // z
  double sample_rate = 1.0;   // q
  double budget_epsilon = 3.8;  // halt threshold
  double delta = 1e-5;
};

using AggregationPolicy = std::variant<FedAvgPolicy, TrimmedMeanPolicy, KrumPolicy,
                                       FLTrustPolicy, DnCPolicy, NormBoundPolicy, WeakDPPolicy,
                                       CDPPolicy>;

void validate(const AggregationPolicy& policy, std::size_t participant_count);
std::string policy_name(const AggregationPolicy& policy);

// Sample-weighted mean of the local models: global + sum_i (n_i/sum n) d_i.
ParamVector fedavg_aggregate(const ParamVector& global, const std::vector<RoundUpdate>& updates);

// Coordinate-wise: sort the n values, drop ceil(beta*n) from each end, mean
// the rest. Requires n > 2*ceil(beta*n).
ParamVector trimmed_mean(const std::vector<RoundUpdate>& updates, double beta);

// The update whose summed squared distance to its n-f-2 nearest peers is
// smallest (ties to the lowest org id). Returns a copy of that delta.
ParamVector krum(const std::vector<RoundUpdate>& updates, std::uint32_t assumed_attackers,
                 std::uint32_t* selected_org = nullptr);

// Cosine-gated, norm-rescaled weighting against a trusted server update.
ParamVector fltrust(const std::vector<RoundUpdate>& updates, const ParamVector& server_update);

struct DnCResult {
  ParamVector delta;
  std::vector<double> principal_direction;  // unit vector, empty when degenerate
  std::vector<std::uint32_t> removed_orgs;
};

// Divide-and-conquer filtering: drop the ceil(remove_frac*n) updates with the
// largest |projection| on the top principal direction of the centered updates
// (seeded power iteration, tol 1e-9, max 1000 iterations), then mean the rest.
DnCResult dnc(const std::vector<RoundUpdate>& updates, double remove_frac, std::uint64_t seed);

// Each delta scaled by 1/max(1, |d|/T), then sample-weighted mean.
ParamVector norm_bound(const std::vector<RoundUpdate>& updates, double threshold);

// norm_bound plus seeded per-coordinate Gaussian noise of std sigma.
ParamVector weak_dp(const std::vector<RoundUpdate>& updates, double threshold, double noise_std,
                    std::uint64_t round_seed);

// Tracks cumulative privacy spending of the subsampled Gaussian mechanism via
// Renyi-DP composition converted to (epsilon, delta).
class PrivacyAccountant {
 public:
  PrivacyAccountant(double noise_scale, double sample_rate, double delta);

  void accumulate_round() { ++rounds_; }
  std::uint64_t rounds() const { return rounds_; }
  double spent_epsilon() const;

  double noise_scale() const { return z_; }
  double sample_rate() const { return q_; }
  double delta() const { return delta_; }

 private:
  double z_;
  double q_;
  double delta_;
  std::uint64_t rounds_ = 0;
};

// Epsilon after `rounds` compositions of the subsampled Gaussian mechanism
// with noise multiplier z and sampling rate q, at the given delta.
double rdp_epsilon(double noise_scale, double sample_rate, double delta, std::uint64_t rounds);

struct CdpRoundResult {
  ParamVector new_global;
  bool halted = false;     // budget exceeded before aggregating
  double epsilon = 0.0;    // spent after this round (or at halt time)
};

// One Gaussian-mechanism aggregation round: unweighted mean of the (locally
// clipped) deltas plus N(0, (zS/q)^2 I) noise; halts with the current model
// if the accountant is already past the budget. No participants = skipped
// round, no privacy spent.
CdpRoundResult cdp_round(const ParamVector& global, const std::vector<RoundUpdate>& updates,
                         const CDPPolicy& policy, PrivacyAccountant& accountant,
                         std::uint64_t round_seed);

}  // namespace fedseq
