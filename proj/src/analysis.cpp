#include "fedseq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedseq/rng.hpp"

namespace fedseq {

ContributionRecord contribution_impact(const FederationDataset& fed,
                                       const ModelConfig& model_cfg,
                                       const FederationConfig& fed_cfg, std::uint32_t org_id,
                                       const TrainingTrace* baseline) {
  if (!fed.find(org_id)) {
    throw std::invalid_argument("contribution_impact: unknown org " + std::to_string(org_id));
  }
  if (fed.test.empty()) throw std::invalid_argument("contribution_impact: needs a test corpus");

  TrainingTrace base;
  if (!baseline) {
    base = run_training(fed, model_cfg, fed_cfg);
    baseline = &base;
  }

  FederationDataset loo;
  loo.test = fed.test;
  loo.distribution_tag = fed.distribution_tag;
  loo.knowledgeable_fraction = fed.knowledgeable_fraction;
  loo.seed = fed.seed;
  for (const auto& p : fed.participants) {
    if (p.org_id != org_id) loo.participants.push_back(p);
  }
  // Per-participant training seeds derive from (root seed, round, org id), so
  // the remaining orgs behave identically; the removal is the only change.
  TrainingTrace trace = run_training(loo, model_cfg, fed_cfg);

  ContributionRecord rec;
  rec.org_id = org_id;
  rec.baseline_precision =
      evaluate_model(model_cfg, baseline->final_params, fed.test).precision;
  rec.loo_precision = evaluate_model(model_cfg, trace.final_params, fed.test).precision;
  rec.impact = rec.baseline_precision - rec.loo_precision;
  return rec;
}

std::vector<double> lissa_inverse_hvp(
    const std::vector<double>& v,
    const std::function<std::vector<double>(std::size_t, const std::vector<double>&)>& hvp,
    std::size_t sample_pool, double damping, double scale, std::uint32_t depth,
    std::uint32_t samples, std::uint64_t seed) {
  if (sample_pool == 0) throw std::invalid_argument("lissa: empty sample pool");
  if (!(scale > 0)) throw std::invalid_argument("lissa: scale must be > 0");
  if (samples < 1) throw std::invalid_argument("lissa: samples must be >= 1");

  const std::size_t dim = v.size();
  std::vector<double> acc(dim, 0.0);
  for (std::uint32_t rep = 0; rep < samples; ++rep) {
    Rng rng(mix_seed(seed, 0x115a, rep));
    std::vector<double> u = v;
    for (std::uint32_t it = 0; it < depth; ++it) {
      const std::size_t pick = static_cast<std::size_t>(rng.below(sample_pool));
      const std::vector<double> hu = hvp(pick, u);
      double max_abs = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        u[j] = v[j] + u[j] - (hu[j] + damping * u[j]) / scale;
        max_abs = std::max(max_abs, std::abs(u[j]));
      }
      if (!std::isfinite(max_abs) || max_abs > 1e12) {
        throw std::runtime_error(
            "lissa: recursion diverged; increase the scale (it must dominate the top "
            "Hessian eigenvalue)");
      }
    }
    for (std::size_t j = 0; j < dim; ++j) acc[j] += u[j] / scale;
  }
  for (double& x : acc) x /= double(samples);
  return acc;
}

namespace {

// Rough top-eigenvalue estimate of the training-loss Hessian by a short power
// iteration over HVPs on a fixed sampled batch.
double estimate_top_eigenvalue(const ModelConfig& model_cfg, const ParamVector& params,
                               const std::vector<const EventSequence*>& batch,
                               std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xe16));
  std::vector<double> v(params.size());
  for (double& x : v) x = rng.gaussian();
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (double& x : v) x /= norm;
  double eig = 1.0;
  for (int it = 0; it < 12; ++it) {
    std::vector<double> hv = hessian_vector_product(model_cfg, params, batch, v);
    norm = std::sqrt(std::inner_product(hv.begin(), hv.end(), hv.begin(), 0.0));
    if (norm < 1e-12) break;
    eig = norm;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = hv[j] / norm;
  }
  return eig;
}

}  // namespace

std::vector<InfluenceRecord> influence_scores(const FederationDataset& fed,
                                              const ModelConfig& model_cfg,
                                              const ParamVector& final_params,
                                              const InfluenceOptions& opts) {
  if (fed.participants.size() < 2) {
    throw std::invalid_argument("influence_scores: need a cohort of at least 2 orgs");
  }
  if (fed.test.empty()) throw std::invalid_argument("influence_scores: needs a test corpus");

  // Pool of all training sequences for Hessian sampling.
  std::vector<const EventSequence*> pool;
  for (const auto& p : fed.participants) {
    for (const auto& s : p.train.sequences) pool.push_back(&s);
  }

  double scale = opts.scale;
  if (!(scale > 0)) {
    Rng rng(mix_seed(opts.seed, 0x5ca1e));
    const std::size_t probe = std::min<std::size_t>(pool.size(), 64);
    std::vector<const EventSequence*> batch;
    for (std::size_t i : rng.sample_without_replacement(pool.size(), probe)) {
      batch.push_back(pool[i]);
    }
    scale = 10.0 * std::max(1e-3, estimate_top_eigenvalue(model_cfg, final_params, batch,
                                                          opts.seed));
  }

  auto [test_loss, test_grad] = loss_and_gradient(model_cfg, final_params, fed.test);
  (void)test_loss;

  auto hvp = [&](std::size_t idx, const std::vector<double>& u) {
    return hessian_vector_product(model_cfg, final_params, {pool[idx]}, u);
  };

  std::vector<InfluenceRecord> records;
  for (const auto& p : fed.participants) {
    auto [org_loss, org_grad] = loss_and_gradient(model_cfg, final_params, p.train);
    (void)org_loss;
    const std::vector<double> ihvp =
        lissa_inverse_hvp(org_grad, hvp, pool.size(), opts.damping, scale, opts.depth,
                          opts.samples, mix_seed(opts.seed, p.org_id));
    // Removing the org shifts the optimum by ~ +H^-1 g_org; the induced test
    // loss change is <g_test, H^-1 g_org>. Higher = the org was helping.
    double raw = 0.0;
    for (std::size_t j = 0; j < ihvp.size(); ++j) raw += test_grad[j] * ihvp[j];
    records.push_back({p.org_id, raw, 0.0});
  }

  double lo = records.front().raw, hi = records.front().raw;
  for (const auto& r : records) {
    lo = std::min(lo, r.raw);
    hi = std::max(hi, r.raw);
  }
  const double span = hi - lo;
  for (auto& r : records) {
    r.normalized = span > 0 ? (r.raw - lo) / span : 0.0;
  }
  return records;
}

std::vector<BenefitRecord> benefit_comparison(const FederationDataset& fed,
                                              const ModelConfig& model_cfg,
                                              const FederationConfig& fed_cfg,
                                              const ParamVector& final_global,
                                              const EventCorpus& examination_test) {
  if (examination_test.empty()) {
    throw std::invalid_argument("benefit_comparison: empty examination test");
  }
  std::vector<bool> seen(examination_test.class_count, false);
  for (const auto& s : examination_test.sequences) seen[s.label()] = true;
  for (std::uint32_t c = 0; c < examination_test.class_count; ++c) {
    if (!seen[c]) {
      throw std::invalid_argument("benefit_comparison: examination test is missing class " +
                                  std::to_string(c));
    }
  }

  const double agg_precision =
      evaluate_model(model_cfg, final_global, examination_test).precision;

  // Each org's local model is its own solo run of the federated loop: same
  // rounds, epochs, participation, and per-org seeds, so the compute budget
  // matches its expected federated work and a one-org federation reproduces
  // the aggregated model exactly.
  FederationConfig solo_cfg = fed_cfg;
  solo_cfg.policy = FedAvgPolicy{};
  std::vector<BenefitRecord> out;
  for (const auto& p : fed.participants) {
    FederationDataset solo;
    solo.distribution_tag = DistributionTag::kCustom;
    solo.participants.push_back(p);
    TrainingTrace trace = run_training(solo, model_cfg, solo_cfg);
    BenefitRecord rec;
    rec.org_id = p.org_id;
    rec.local_precision = evaluate_model(model_cfg, trace.final_params, examination_test).precision;
    rec.aggregated_precision = agg_precision;
    out.push_back(rec);
  }
  return out;
}

std::vector<SweepPoint> knowledgeable_sweep(const EventCorpus& train, const EventCorpus& test,
                                            std::uint32_t participants,
                                            const std::vector<double>& m_values,
                                            const ModelConfig& model_cfg,
                                            const FederationConfig& fed_cfg) {
  std::vector<SweepPoint> curve;
  for (double m : m_values) {
    if (!(m > 0) || m > 1) throw std::invalid_argument("knowledgeable_sweep: m must be in (0,1]");
    FederationDataset fed =
        partition_knowledgeable(train, participants, m, mix_seed(fed_cfg.root_seed, 0x5ee9));
    fed.test = test;
    TrainingTrace trace = run_training(fed, model_cfg, fed_cfg);
    curve.push_back({m, evaluate_model(model_cfg, trace.final_params, test).precision});
  }
  return curve;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double mid = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = double(a.size());
  double mean = (n + 1.0) / 2.0;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va <= 0 || vb <= 0) return 0.0;
  return num / std::sqrt(va * vb);
}

}  // namespace fedseq
