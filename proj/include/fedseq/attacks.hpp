#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedseq/federation.hpp"

namespace fedseq {

struct AttackSchedule {
  enum class Kind { kAllRounds, kFirstN, kLastN };
  Kind kind = Kind::kAllRounds;
  std::uint32_t n = 0;

  bool active(std::uint32_t round, std::uint32_t total_rounds) const;
  static AttackSchedule all() { return {Kind::kAllRounds, 0}; }
  static AttackSchedule first(std::uint32_t n) { return {Kind::kFirstN, n}; }
  static AttackSchedule last(std::uint32_t n) { return {Kind::kLastN, n}; }
  // "all" | "first:10" | "last:10"
  static AttackSchedule parse(const std::string& text);
  std::string to_string() const;
};

// How the malicious update is scaled before submission.
struct BoostMode {
  enum class Kind {
    kExactRatio,  // total_samples / (server_lr * attacker_samples)
    kConstant,    // fixed multiplier (used when totals are unknown)
  };
  Kind kind = Kind::kExactRatio;
  double constant = 100.0;

  // "exact" | "auto" (constant 100) | a number
  static BoostMode parse(const std::string& text);
};

struct BackdoorSpec {
  EventId trigger = 0;
  EventId target = 0;
  double attacker_frac = 0.01;
  BoostMode boost;
  AttackSchedule schedule = AttackSchedule::all();
};

void validate(const BackdoorSpec& spec, std::uint32_t vocab_size);

// Rewrites every sequence so that it ends with the trigger in the history and
// carries the target as its label: a sequence already labeled with the
// trigger just gains the target; any other sequence gains trigger then
// target.
EventCorpus poison_dataset(const EventCorpus& data, const BackdoorSpec& spec);

// The event most frequently seen immediately before a label, skipping
// `exclude` (used to pick a trigger that differs from the target).
EventId most_frequent_pre_label_event(const EventCorpus& data, std::optional<EventId> exclude);

// Model-replacement update: (total/(lr*n_attacker)) * (theta_star - theta_global).
ParamVector boosted_update(const ParamVector& theta_star, const ParamVector& theta_global,
                           std::uint64_t total_samples, std::uint64_t attacker_samples,
                           double server_lr);

// Fraction of poisoned sequences the model classifies as the target.
double backdoor_accuracy(const ModelConfig& cfg, const ParamVector& params,
                         const EventCorpus& poisoned_test);

// Federation hook implementing the distributed backdoor: compromised orgs
// train on their poisoned corpora and submit boosted model-replacement
// updates during the scheduled rounds, behaving honestly otherwise.
class BackdoorAttack : public AttackHooks {
 public:
  BackdoorAttack(const FederationDataset& fed, const ModelConfig& model_cfg, BackdoorSpec spec,
                 std::uint64_t seed);

  std::optional<RoundUpdate> craft_update(const RoundInfo& info, const ParticipantDataset& org,
                                          const ParamVector& global) override;
  const EventCorpus* backdoor_eval_corpus() const override { return &poisoned_test_; }

  const std::vector<std::uint32_t>& attacker_ids() const { return attackers_; }
  const BackdoorSpec& spec() const { return spec_; }

 private:
  BackdoorSpec spec_;
  std::vector<std::uint32_t> attackers_;
  std::map<std::uint32_t, EventCorpus> poisoned_train_;
  std::uint64_t attacker_samples_total_ = 0;
  EventCorpus poisoned_test_;
};

struct MIATargetSet {
  std::vector<EventSequence> members;
  std::vector<EventSequence> non_members;
};

// Balanced target set: members sampled from the victims' training data,
// non-members from the held-out pool.
MIATargetSet make_mia_targets(const FederationDataset& fed,
                              const std::vector<std::uint32_t>& victim_orgs,
                              const EventCorpus& holdout, std::size_t per_side,
                              std::uint64_t seed);

// Active membership inference: the adversarial participant performs gradient
// ascent on the targets during the attack window and reads membership off the
// loss drop the federation's next aggregation produces on each target.
class ActiveMIA : public AttackHooks {
 public:
  ActiveMIA(std::uint32_t adversary_org, MIATargetSet targets, double ascent_rate,
            std::uint32_t window_begin, std::uint32_t window_end,
            const ModelConfig& model_cfg);

  std::optional<RoundUpdate> craft_update(const RoundInfo& info, const ParticipantDataset& org,
                                          const ParamVector& global) override;
  void after_aggregate(const RoundInfo& info, const ParamVector& before,
                       const ParamVector& after) override;

  // Mean loss drop per target over the window; members first, then
  // non-members (matching mia_labels()).
  std::vector<double> scores() const;
  std::vector<int> labels() const;  // 1 = member, 0 = non-member

 private:
  bool in_window(std::uint32_t round) const {
    return round >= window_begin_ && round <= window_end_;
  }

  std::uint32_t adversary_;
  MIATargetSet targets_;
  double ascent_rate_;
  std::uint32_t window_begin_, window_end_;
  ModelConfig model_cfg_;
  std::vector<const EventSequence*> all_targets_;
  std::vector<double> loss_before_;     // per target, for the current round
  std::vector<double> drop_sum_;        // accumulated loss drops
  std::uint32_t rounds_scored_ = 0;
};

struct MIAResult {
  double auc = 0.0;
  double accuracy = 0.0;   // at the balanced-accuracy-maximizing threshold
  double threshold = 0.0;
};

// AUC over score-ranked targets plus the best-threshold accuracy. Throws on
// single-class label sets.
MIAResult mia_evaluate(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace fedseq
