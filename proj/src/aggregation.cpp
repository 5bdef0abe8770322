#include "fedseq/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fedseq/rng.hpp"

namespace fedseq {

namespace {

// Canonical processing order: ascending org id. Makes every aggregator
// permutation-invariant bit-for-bit.
std::vector<std::size_t> order_by_org(const std::vector<RoundUpdate>& updates) {
  std::vector<std::size_t> idx(updates.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].org_id < updates[b].org_id;
  });
  return idx;
}

std::size_t common_dim(const std::vector<RoundUpdate>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregation: no updates");
  const std::size_t dim = updates.front().delta.size();
  for (const auto& u : updates) {
    if (u.delta.size() != dim) throw std::invalid_argument("aggregation: delta length mismatch");
  }
  return dim;
}

double l2_norm(const ParamVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const ParamVector& a, const ParamVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

ParamVector unweighted_mean(const std::vector<RoundUpdate>& updates,
                            const std::vector<std::size_t>& order) {
  const std::size_t dim = updates.front().delta.size();
  ParamVector mean(dim, 0.0);
  for (std::size_t i : order) {
    const auto& d = updates[i].delta;
    for (std::size_t j = 0; j < dim; ++j) mean[j] += d[j];
  }
  const double inv = 1.0 / double(order.size());
  for (double& x : mean) x *= inv;
  return mean;
}

ParamVector weighted_mean(const std::vector<RoundUpdate>& updates,
                          const std::vector<std::size_t>& order,
                          const std::vector<double>* scales) {
  const std::size_t dim = updates.front().delta.size();
  double total = 0.0;
  for (std::size_t i : order) total += double(updates[i].n_samples);
  if (total <= 0) throw std::invalid_argument("aggregation: zero total samples");
  ParamVector mean(dim, 0.0);
  for (std::size_t i : order) {
    const double w = double(updates[i].n_samples) / total;
    const double s = scales ? (*scales)[i] * w : w;
    const auto& d = updates[i].delta;
    for (std::size_t j = 0; j < dim; ++j) mean[j] += s * d[j];
  }
  return mean;
}

}  // namespace

void validate(const AggregationPolicy& policy, std::size_t participant_count) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TrimmedMeanPolicy>) {
          if (p.beta < 0.0 || p.beta >= 0.5) {
            throw std::invalid_argument("trimmed_mean: beta must be in [0, 0.5)");
          }
        } else if constexpr (std::is_same_v<T, KrumPolicy>) {
          if (participant_count > 0 && p.assumed_attackers + 3 > participant_count) {
            throw std::invalid_argument("krum: needs at least f + 3 participants");
          }
        } else if constexpr (std::is_same_v<T, DnCPolicy>) {
          if (p.remove_frac < 0.0 || p.remove_frac >= 1.0) {
            throw std::invalid_argument("dnc: remove_frac must be in [0, 1)");
          }
        } else if constexpr (std::is_same_v<T, NormBoundPolicy>) {
          if (!(p.threshold > 0)) throw std::invalid_argument("norm_bound: T must be > 0");
        } else if constexpr (std::is_same_v<T, WeakDPPolicy>) {
          if (!(p.threshold > 0)) throw std::invalid_argument("weak_dp: T must be > 0");
          if (!(p.noise_std > 0)) throw std::invalid_argument("weak_dp: sigma must be > 0");
        } else if constexpr (std::is_same_v<T, CDPPolicy>) {
          if (!(p.clip > 0)) throw std::invalid_argument("cdp: clip S must be > 0");
          if (!(p.noise_scale > 0)) throw std::invalid_argument("cdp: noise scale z must be > 0");
          if (!(p.sample_rate > 0) || p.sample_rate > 1) {
            throw std::invalid_argument("cdp: sample rate q must be in (0, 1]");
          }
          if (!(p.delta > 0) || p.delta >= 1) {
            throw std::invalid_argument("cdp: delta must be in (0, 1)");
          }
        } else if constexpr (std::is_same_v<T, FLTrustPolicy>) {
          if (p.server_samples < 1) {
            throw std::invalid_argument("fltrust: server needs at least 1 sample");
          }
        }
      },
      policy);
}

std::string policy_name(const AggregationPolicy& policy) {
  struct Visitor {
    std::string operator()(const FedAvgPolicy&) const { return "fedavg"; }
    std::string operator()(const TrimmedMeanPolicy&) const { return "trimmed_mean"; }
    std::string operator()(const KrumPolicy&) const { return "krum"; }
    std::string operator()(const FLTrustPolicy&) const { return "fltrust"; }
    std::string operator()(const DnCPolicy&) const { return "dnc"; }
    std::string operator()(const NormBoundPolicy&) const { return "norm_bound"; }
    std::string operator()(const WeakDPPolicy&) const { return "weak_dp"; }
    std::string operator()(const CDPPolicy&) const { return "cdp"; }
  };
  return std::visit(Visitor{}, policy);
}

ParamVector fedavg_aggregate(const ParamVector& global, const std::vector<RoundUpdate>& updates) {
  const std::size_t dim = common_dim(updates);
  if (dim != global.size()) throw std::invalid_argument("fedavg: global length mismatch");
  const auto order = order_by_org(updates);
  ParamVector delta = weighted_mean(updates, order, nullptr);
  ParamVector out = global;
  for (std::size_t j = 0; j < dim; ++j) out[j] += delta[j];
  return out;
}

ParamVector trimmed_mean(const std::vector<RoundUpdate>& updates, double beta) {
  const std::size_t dim = common_dim(updates);
  const std::size_t n = updates.size();
  const auto trim = static_cast<std::size_t>(std::ceil(beta * double(n)));
  if (n <= 2 * trim) {
    throw std::invalid_argument("trimmed_mean: need more than 2*ceil(beta*n) updates");
  }
  const auto order = order_by_org(updates);
  ParamVector out(dim, 0.0);
  std::vector<double> column(n);
  const double inv = 1.0 / double(n - 2 * trim);
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = updates[order[i]].delta[j];
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (std::size_t i = trim; i < n - trim; ++i) acc += column[i];
    out[j] = acc * inv;
  }
  return out;
}

ParamVector krum(const std::vector<RoundUpdate>& updates, std::uint32_t assumed_attackers,
                 std::uint32_t* selected_org) {
  common_dim(updates);
  const std::size_t n = updates.size();
  if (n < std::size_t(assumed_attackers) + 3) {
    throw std::invalid_argument("krum: need at least f + 3 updates");
  }
  const auto order = order_by_org(updates);
  const std::size_t neighbors = n - assumed_attackers - 2;

  // Pairwise squared distances over the canonical order.
  std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto& da = updates[order[a]].delta;
      const auto& db = updates[order[b]].delta;
      double s = 0.0;
      for (std::size_t j = 0; j < da.size(); ++j) {
        const double diff = da[j] - db[j];
        s += diff * diff;
      }
      d2[a][b] = d2[b][a] = s;
    }
  }

  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<double> row(n - 1);
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t m = 0;
    for (std::size_t b = 0; b < n; ++b) {
      if (b != a) row[m++] = d2[a][b];
    }
    std::sort(row.begin(), row.end());
    double score = 0.0;
    for (std::size_t i = 0; i < neighbors; ++i) score += row[i];
    if (score < best_score) {  // ties keep the earlier (lowest org id) entry
      best_score = score;
      best = a;
    }
  }
  if (selected_org) *selected_org = updates[order[best]].org_id;
  return updates[order[best]].delta;
}

ParamVector fltrust(const std::vector<RoundUpdate>& updates, const ParamVector& server_update) {
  const std::size_t dim = common_dim(updates);
  if (server_update.size() != dim) throw std::invalid_argument("fltrust: server length mismatch");
  const double server_norm = l2_norm(server_update);
  if (server_norm <= 0.0) throw std::invalid_argument("fltrust: zero server update");

  const auto order = order_by_org(updates);
  ParamVector out(dim, 0.0);
  double trust_sum = 0.0;
  for (std::size_t i : order) {
    const auto& d = updates[i].delta;
    const double norm = l2_norm(d);
    if (norm <= 0.0) continue;  // cosine undefined; contributes no trust
    const double cosine = dot(d, server_update) / (norm * server_norm);
    const double trust = std::max(0.0, cosine);
    if (trust <= 0.0) continue;
    const double rescale = server_norm / norm;
    for (std::size_t j = 0; j < dim; ++j) out[j] += trust * rescale * d[j];
    trust_sum += trust;
  }
  if (trust_sum <= 0.0) return server_update;
  for (double& x : out) x /= trust_sum;
  return out;
}

DnCResult dnc(const std::vector<RoundUpdate>& updates, double remove_frac, std::uint64_t seed) {
  const std::size_t dim = common_dim(updates);
  const std::size_t n = updates.size();
  if (n < 2) throw std::invalid_argument("dnc: need at least 2 updates");
  const auto order = order_by_org(updates);

  DnCResult res;
  ParamVector mean = unweighted_mean(updates, order);

  std::vector<ParamVector> centered(n);
  double max_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    centered[i].resize(dim);
    const auto& d = updates[order[i]].delta;
    for (std::size_t j = 0; j < dim; ++j) centered[i][j] = d[j] - mean[j];
    max_norm = std::max(max_norm, l2_norm(centered[i]));
  }
  if (max_norm < 1e-12 || remove_frac <= 0.0) {
    // Degenerate covariance (identical updates) or nothing to remove.
    res.delta = std::move(mean);
    return res;
  }

  // Top principal direction by power iteration on the implicit covariance
  // C v = (1/n) sum_i centered_i <centered_i, v>.
  Rng rng(mix_seed(seed, 0xd9c));
  ParamVector v(dim);
  for (double& x : v) x = rng.gaussian();
  double vnorm = l2_norm(v);
  for (double& x : v) x /= vnorm;

  ParamVector next(dim);
  for (int iter = 0; iter < 1000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double proj = dot(centered[i], v);
      for (std::size_t j = 0; j < dim; ++j) next[j] += proj * centered[i][j];
    }
    const double norm = l2_norm(next);
    if (norm < 1e-300) break;  // v orthogonal to every update
    for (double& x : next) x /= norm;
    // Eigenvectors are sign-ambiguous; compare against both orientations.
    double diff_pos = 0.0, diff_neg = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      diff_pos = std::max(diff_pos, std::abs(next[j] - v[j]));
      diff_neg = std::max(diff_neg, std::abs(next[j] + v[j]));
    }
    v = next;
    if (std::min(diff_pos, diff_neg) < 1e-9) break;
  }
  res.principal_direction = v;

  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) score[i] = std::abs(dot(centered[i], v));

  const auto remove = static_cast<std::size_t>(std::ceil(remove_frac * double(n)));
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return updates[order[a]].org_id < updates[order[b]].org_id;
  });

  std::vector<bool> removed(n, false);
  for (std::size_t i = 0; i < remove && i < n - 1; ++i) {
    removed[rank[i]] = true;
    res.removed_orgs.push_back(updates[order[rank[i]]].org_id);
  }
  std::sort(res.removed_orgs.begin(), res.removed_orgs.end());

  res.delta.assign(dim, 0.0);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (removed[i]) continue;
    for (std::size_t j = 0; j < dim; ++j) res.delta[j] += centered[i][j] + mean[j];
    ++kept;
  }
  for (double& x : res.delta) x /= double(kept);
  return res;
}

ParamVector norm_bound(const std::vector<RoundUpdate>& updates, double threshold) {
  common_dim(updates);
  if (!(threshold > 0)) throw std::invalid_argument("norm_bound: T must be > 0");
  const auto order = order_by_org(updates);
  std::vector<double> scales(updates.size(), 1.0);
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const double norm = l2_norm(updates[i].delta);
    scales[i] = 1.0 / std::max(1.0, norm / threshold);
  }
  return weighted_mean(updates, order, &scales);
}

ParamVector weak_dp(const std::vector<RoundUpdate>& updates, double threshold, double noise_std,
                    std::uint64_t round_seed) {
  ParamVector out = norm_bound(updates, threshold);
  Rng rng(mix_seed(round_seed, 0x3eaf));
  for (double& x : out) x += noise_std * rng.gaussian();
  return out;
}

PrivacyAccountant::PrivacyAccountant(double noise_scale, double sample_rate, double delta)
    : z_(noise_scale), q_(sample_rate), delta_(delta) {
  if (!(z_ > 0)) throw std::invalid_argument("accountant: noise scale z must be > 0");
  if (!(q_ > 0) || q_ > 1) throw std::invalid_argument("accountant: q must be in (0, 1]");
  if (!(delta_ > 0) || delta_ >= 1) throw std::invalid_argument("accountant: bad delta");
}

double PrivacyAccountant::spent_epsilon() const { return rdp_epsilon(z_, q_, delta_, rounds_); }

namespace {

double log_binomial(std::uint32_t n, std::uint32_t k) {
  return std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) -
         std::lgamma(double(n - k) + 1);
}

// Renyi divergence (per round) of the subsampled Gaussian mechanism at
// integer order alpha: (1/(alpha-1)) * log E_{K~Bin(alpha,q)} exp(K(K-1)/2z^2).
double subsampled_gaussian_rdp(double q, double z, std::uint32_t alpha) {
  const double log_q = std::log(q);
  const double log_1q = q < 1.0 ? std::log1p(-q) : -std::numeric_limits<double>::infinity();
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(alpha + 1);
  for (std::uint32_t k = 0; k <= alpha; ++k) {
    double t = log_binomial(alpha, k) + double(k) * log_q +
               double(k) * (double(k) - 1.0) / (2.0 * z * z);
    if (q < 1.0) t += double(alpha - k) * log_1q;
    else if (k != alpha) t = -std::numeric_limits<double>::infinity();
    terms[k] = t;
    max_term = std::max(max_term, t);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  return (max_term + std::log(sum)) / (double(alpha) - 1.0);
}

}  // namespace

double rdp_epsilon(double noise_scale, double sample_rate, double delta, std::uint64_t rounds) {
  if (!(noise_scale > 0)) throw std::invalid_argument("rdp_epsilon: z must be > 0");
  if (!(sample_rate > 0) || sample_rate > 1) throw std::invalid_argument("rdp_epsilon: bad q");
  if (!(delta > 0) || delta >= 1) throw std::invalid_argument("rdp_epsilon: bad delta");
  if (rounds == 0) return 0.0;

  const double z = noise_scale, q = sample_rate;
  const double log_inv_delta = std::log(1.0 / delta);
  double best = std::numeric_limits<double>::infinity();

  if (q >= 1.0) {
    // Pure Gaussian mechanism: RDP(alpha) = alpha / (2 z^2), any real alpha.
    for (double alpha = 1.25; alpha <= 64.0; alpha += 0.25) {
      const double eps = double(rounds) * alpha / (2.0 * z * z) + log_inv_delta / (alpha - 1.0);
      best = std::min(best, eps);
    }
  } else {
    for (std::uint32_t alpha = 2; alpha <= 64; ++alpha) {
      const double rdp = subsampled_gaussian_rdp(q, z, alpha);
      const double eps = double(rounds) * rdp + log_inv_delta / (double(alpha) - 1.0);
      best = std::min(best, eps);
    }
  }
  return best;
}

CdpRoundResult cdp_round(const ParamVector& global, const std::vector<RoundUpdate>& updates,
                         const CDPPolicy& policy, PrivacyAccountant& accountant,
                         std::uint64_t round_seed) {
  CdpRoundResult res;
  res.epsilon = accountant.spent_epsilon();
  if (res.epsilon > policy.budget_epsilon) {
    res.new_global = global;
    res.halted = true;
    return res;
  }
  if (updates.empty()) {
    // Nothing aggregated; no privacy is spent on an empty round.
    res.new_global = global;
    return res;
  }
  const std::size_t dim = common_dim(updates);
  if (dim != global.size()) throw std::invalid_argument("cdp_round: global length mismatch");

  const auto order = order_by_org(updates);
  ParamVector mean = unweighted_mean(updates, order);

  const double sigma = policy.noise_scale * policy.clip / policy.sample_rate;
  Rng rng(mix_seed(round_seed, 0xcd9));
  res.new_global = global;
  for (std::size_t j = 0; j < dim; ++j) {
    res.new_global[j] += mean[j] + sigma * rng.gaussian();
  }
  accountant.accumulate_round();
  res.epsilon = accountant.spent_epsilon();
  return res;
}

}  // namespace fedseq
