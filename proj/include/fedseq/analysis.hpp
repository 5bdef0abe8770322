#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fedseq/federation.hpp"

namespace fedseq {

struct ContributionRecord {
  std::uint32_t org_id = 0;
  double baseline_precision = 0.0;
  double loo_precision = 0.0;
  double impact = 0.0;  // baseline - loo
};

// Retrains the whole federation without `org_id` under the same root seed and
// measures the macro-precision gap on the server test set. Pass the baseline
// trace to avoid retraining it per call.
ContributionRecord contribution_impact(const FederationDataset& fed,
                                       const ModelConfig& model_cfg,
                                       const FederationConfig& fed_cfg, std::uint32_t org_id,
                                       const TrainingTrace* baseline = nullptr);

struct InfluenceRecord {
  std::uint32_t org_id = 0;
  double raw = 0.0;         // estimated test-loss increase if the org's data left
  double normalized = 0.0;  // min-max over the cohort
};

struct InfluenceOptions {
  double damping = 0.01;       // lambda added to the Hessian
  double scale = 0.0;          // 0 = 10x the estimated top Hessian eigenvalue
  std::uint32_t depth = 500;   // recursion length
  std::uint32_t samples = 1;   // independent estimates averaged together
  std::uint64_t seed = 99;
};

// Stochastic inverse-Hessian-vector estimate: repeats of
//   u <- v + u - (H_sample u + damping*u)/scale
// over `depth` sampled training points; returns u/scale averaged over
// `samples` runs. `hvp(i, u)` must return H_i * u for sample i.
std::vector<double> lissa_inverse_hvp(
    const std::vector<double>& v,
    const std::function<std::vector<double>(std::size_t, const std::vector<double>&)>& hvp,
    std::size_t sample_pool, double damping, double scale, std::uint32_t depth,
    std::uint32_t samples, std::uint64_t seed);

// Influence of each org's training data on the final model's test loss, via
// -<grad test, H^-1 grad org> oriented so that higher = removal hurts more;
// normalized [0,1] across the cohort.
std::vector<InfluenceRecord> influence_scores(const FederationDataset& fed,
                                              const ModelConfig& model_cfg,
                                              const ParamVector& final_params,
                                              const InfluenceOptions& opts = {});

struct BenefitRecord {
  std::uint32_t org_id = 0;
  double local_precision = 0.0;
  double aggregated_precision = 0.0;
  double benefit() const { return aggregated_precision - local_precision; }
};

// Local-vs-aggregated comparison on a shared all-class examination test: each
// org trains a model from scratch on its own data with an epoch budget
// matching its expected federated work (R*E*q).
std::vector<BenefitRecord> benefit_comparison(const FederationDataset& fed,
                                              const ModelConfig& model_cfg,
                                              const FederationConfig& fed_cfg,
                                              const ParamVector& final_global,
                                              const EventCorpus& examination_test);

struct SweepPoint {
  double m = 0.0;
  double precision = 0.0;
};

// Final aggregated macro precision of a knowledgeable-participant federation
// for each requested knowledgeable fraction.
std::vector<SweepPoint> knowledgeable_sweep(const EventCorpus& train, const EventCorpus& test,
                                            std::uint32_t participants,
                                            const std::vector<double>& m_values,
                                            const ModelConfig& model_cfg,
                                            const FederationConfig& fed_cfg);

// Spearman rank correlation (average ranks on ties).
double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace fedseq
