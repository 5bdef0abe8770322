#include "fedseq/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedseq/rng.hpp"

namespace fedseq {

bool AttackSchedule::active(std::uint32_t round, std::uint32_t total_rounds) const {
  switch (kind) {
    case Kind::kAllRounds: return true;
    case Kind::kFirstN: return round <= n;
    case Kind::kLastN: return round + n > total_rounds;
  }
  return false;
}

AttackSchedule AttackSchedule::parse(const std::string& text) {
  if (text == "all") return all();
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const std::uint32_t n = static_cast<std::uint32_t>(std::stoul(text.substr(colon + 1)));
    if (head == "first") return first(n);
    if (head == "last") return last(n);
  }
  throw std::invalid_argument("bad attack schedule '" + text + "' (all | first:N | last:N)");
}

std::string AttackSchedule::to_string() const {
  switch (kind) {
    case Kind::kAllRounds: return "all";
    case Kind::kFirstN: return "first:" + std::to_string(n);
    case Kind::kLastN: return "last:" + std::to_string(n);
  }
  return "all";
}

BoostMode BoostMode::parse(const std::string& text) {
  BoostMode mode;
  if (text == "exact") {
    mode.kind = Kind::kExactRatio;
  } else if (text == "auto") {
    mode.kind = Kind::kConstant;
    mode.constant = 100.0;
  } else {
    mode.kind = Kind::kConstant;
    try {
      mode.constant = std::stod(text);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad boost '" + text + "' (exact | auto | number)");
    }
    if (!(mode.constant > 0)) throw std::invalid_argument("boost must be positive");
  }
  return mode;
}

void validate(const BackdoorSpec& spec, std::uint32_t vocab_size) {
  if (spec.trigger == spec.target) {
    throw std::invalid_argument("backdoor: trigger and target must differ");
  }
  if (spec.trigger >= vocab_size || spec.target >= vocab_size) {
    throw std::invalid_argument("backdoor: trigger/target outside the vocabulary");
  }
  if (!(spec.attacker_frac > 0) || spec.attacker_frac >= 1) {
    throw std::invalid_argument("backdoor: attacker fraction must be in (0, 1)");
  }
}

EventCorpus poison_dataset(const EventCorpus& data, const BackdoorSpec& spec) {
  EventCorpus out = data;
  for (auto& seq : out.sequences) {
    std::int64_t t = seq.events.back().timestamp;
    if (seq.label() != spec.trigger) {
      seq.events.push_back({spec.trigger, ++t});
    }
    seq.events.push_back({spec.target, ++t});
  }
  out.class_count = std::max(out.class_count, std::max(spec.trigger, spec.target) + 1);
  return out;
}

EventId most_frequent_pre_label_event(const EventCorpus& data, std::optional<EventId> exclude) {
  if (data.empty()) throw std::invalid_argument("most_frequent_pre_label_event: empty corpus");
  std::vector<std::uint64_t> count(data.vocab_size, 0);
  for (const auto& seq : data.sequences) {
    // Last history position: the event observed right before the label.
    ++count[seq.events[seq.events.size() - 2].id];
  }
  std::size_t best = data.vocab_size;
  for (std::size_t id = 0; id < count.size(); ++id) {
    if (exclude && id == *exclude) continue;
    if (best == data.vocab_size || count[id] > count[best]) best = id;
  }
  if (best == data.vocab_size) {
    throw std::invalid_argument("most_frequent_pre_label_event: no candidate event");
  }
  return static_cast<EventId>(best);
}

ParamVector boosted_update(const ParamVector& theta_star, const ParamVector& theta_global,
                           std::uint64_t total_samples, std::uint64_t attacker_samples,
                           double server_lr) {
  if (attacker_samples < 1) throw std::invalid_argument("boosted_update: attacker_samples >= 1");
  if (total_samples < attacker_samples) {
    throw std::invalid_argument("boosted_update: total < attacker samples");
  }
  if (theta_star.size() != theta_global.size()) {
    throw std::invalid_argument("boosted_update: size mismatch");
  }
  const double boost = double(total_samples) / (server_lr * double(attacker_samples));
  ParamVector delta(theta_star.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = boost * (theta_star[i] - theta_global[i]);
  }
  return delta;
}

double backdoor_accuracy(const ModelConfig& cfg, const ParamVector& params,
                         const EventCorpus& poisoned_test) {
  if (poisoned_test.empty()) throw std::invalid_argument("backdoor_accuracy: empty test set");
  std::size_t hits = 0;
  for (const auto& seq : poisoned_test.sequences) {
    if (predict(cfg, params, seq) == seq.label()) ++hits;
  }
  return double(hits) / double(poisoned_test.size());
}

BackdoorAttack::BackdoorAttack(const FederationDataset& fed, const ModelConfig& model_cfg,
                               BackdoorSpec spec, std::uint64_t seed)
    : spec_(spec) {
  validate(spec_, model_cfg.vocab_size);
  const std::size_t K = fed.participants.size();
  const auto n_attackers = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(spec_.attacker_frac * double(K))));
  Rng rng(mix_seed(seed, 0xbad));
  for (std::size_t i : rng.sample_without_replacement(K, n_attackers)) {
    attackers_.push_back(fed.participants[i].org_id);
  }
  std::sort(attackers_.begin(), attackers_.end());

  for (std::uint32_t org : attackers_) {
    const ParticipantDataset* p = fed.find(org);
    poisoned_train_.emplace(org, poison_dataset(p->train, spec_));
    attacker_samples_total_ += p->train.size();
  }
  if (!fed.test.empty()) poisoned_test_ = poison_dataset(fed.test, spec_);
}

std::optional<RoundUpdate> BackdoorAttack::craft_update(const RoundInfo& info,
                                                        const ParticipantDataset& org,
                                                        const ParamVector& global) {
  if (!std::binary_search(attackers_.begin(), attackers_.end(), org.org_id)) {
    return std::nullopt;
  }
  if (!spec_.schedule.active(info.round, info.total_rounds)) return std::nullopt;

  const EventCorpus& poisoned = poisoned_train_.at(org.org_id);
  ParamVector theta_star =
      local_train(*info.model, global, poisoned, info.fed->local_epochs,
                  info.model->learning_rate, info.fed->batch_size,
                  info.participant_seed(org.org_id));

  RoundUpdate update;
  update.org_id = org.org_id;
  update.n_samples = org.train.size();
  if (spec_.boost.kind == BoostMode::Kind::kExactRatio) {
    update.delta = boosted_update(theta_star, global, info.total_samples_selected,
                                  attacker_samples_total_, info.server_lr);
  } else {
    update.delta.resize(theta_star.size());
    for (std::size_t i = 0; i < theta_star.size(); ++i) {
      update.delta[i] = spec_.boost.constant * (theta_star[i] - global[i]);
    }
  }
  return update;
}

MIATargetSet make_mia_targets(const FederationDataset& fed,
                              const std::vector<std::uint32_t>& victim_orgs,
                              const EventCorpus& holdout, std::size_t per_side,
                              std::uint64_t seed) {
  std::vector<const EventSequence*> pool;
  for (std::uint32_t org : victim_orgs) {
    const ParticipantDataset* p = fed.find(org);
    if (!p) throw std::invalid_argument("make_mia_targets: unknown victim org");
    for (const auto& seq : p->train.sequences) pool.push_back(&seq);
  }
  if (pool.size() < per_side || holdout.size() < per_side) {
    throw std::invalid_argument("make_mia_targets: not enough sequences for a balanced set");
  }
  Rng rng(mix_seed(seed, 0x317a));
  MIATargetSet targets;
  for (std::size_t i : rng.sample_without_replacement(pool.size(), per_side)) {
    targets.members.push_back(*pool[i]);
  }
  for (std::size_t i : rng.sample_without_replacement(holdout.size(), per_side)) {
    targets.non_members.push_back(holdout.sequences[i]);
  }
  return targets;
}

ActiveMIA::ActiveMIA(std::uint32_t adversary_org, MIATargetSet targets, double ascent_rate,
                     std::uint32_t window_begin, std::uint32_t window_end,
                     const ModelConfig& model_cfg)
    : adversary_(adversary_org),
      targets_(std::move(targets)),
      ascent_rate_(ascent_rate),
      window_begin_(window_begin),
      window_end_(window_end),
      model_cfg_(model_cfg) {
  if (window_end_ < window_begin_) throw std::invalid_argument("mia: empty attack window");
  if (targets_.members.empty() || targets_.non_members.empty()) {
    throw std::invalid_argument("mia: needs a balanced non-empty target set");
  }
  for (const auto& s : targets_.members) all_targets_.push_back(&s);
  for (const auto& s : targets_.non_members) all_targets_.push_back(&s);
  drop_sum_.assign(all_targets_.size(), 0.0);
}

std::optional<RoundUpdate> ActiveMIA::craft_update(const RoundInfo& info,
                                                   const ParticipantDataset& org,
                                                   const ParamVector& global) {
  if (org.org_id != adversary_ || !in_window(info.round)) return std::nullopt;

  ParamVector theta =
      local_train(*info.model, global, org.train, info.fed->local_epochs,
                  info.model->learning_rate, info.fed->batch_size,
                  info.participant_seed(org.org_id));
  // Gradient ascent on the targets, on top of the honest local model.
  auto [loss, grad] = loss_and_gradient(model_cfg_, global, all_targets_);
  (void)loss;
  RoundUpdate update;
  update.org_id = org.org_id;
  update.n_samples = org.train.size();
  update.delta.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    update.delta[i] = theta[i] - global[i] + ascent_rate_ * grad[i];
  }
  return update;
}

void ActiveMIA::after_aggregate(const RoundInfo& info, const ParamVector& before,
                                const ParamVector& after) {
  if (!in_window(info.round)) return;
  for (std::size_t i = 0; i < all_targets_.size(); ++i) {
    const double lb = sequence_loss(model_cfg_, before, *all_targets_[i]);
    const double la = sequence_loss(model_cfg_, after, *all_targets_[i]);
    drop_sum_[i] += lb - la;
  }
  ++rounds_scored_;
}

std::vector<double> ActiveMIA::scores() const {
  if (rounds_scored_ == 0) {
    throw std::runtime_error("mia: attack window never intersected the training rounds");
  }
  std::vector<double> s(drop_sum_.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = drop_sum_[i] / double(rounds_scored_);
  return s;
}

std::vector<int> ActiveMIA::labels() const {
  std::vector<int> l(all_targets_.size(), 0);
  std::fill(l.begin(), l.begin() + targets_.members.size(), 1);
  return l;
}

MIAResult mia_evaluate(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("mia_evaluate: scores/labels mismatch");
  }
  std::size_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("mia_evaluate: needs both member and non-member labels");
  }

  // Rank-sum AUC with midrank tie handling.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) pos_rank_sum += rank[i];
  }
  MIAResult res;
  res.auc = (pos_rank_sum - double(pos) * (double(pos) + 1.0) / 2.0) /
            (double(pos) * double(neg));

  // Best threshold by balanced accuracy: classify member iff score >= t.
  double best_bal = -1.0;
  std::vector<double> cand = scores;
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  cand.push_back(cand.back() + 1.0);  // threshold above the max: all non-member
  for (double t : cand) {
    std::size_t tp = 0, tn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] && scores[i] >= t) ++tp;
      if (!labels[i] && scores[i] < t) ++tn;
    }
    const double bal = 0.5 * (double(tp) / double(pos) + double(tn) / double(neg));
    if (bal > best_bal) {
      best_bal = bal;
      res.threshold = t;
      res.accuracy = double(tp + tn) / double(scores.size());
    }
  }
  return res;
}

}  // namespace fedseq
