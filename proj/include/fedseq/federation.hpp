#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedseq/aggregation.hpp"
#include "fedseq/metrics.hpp"
#include "fedseq/neural.hpp"
#include "fedseq/partition.hpp"

namespace fedseq {

struct FederationConfig {
  std::uint32_t rounds = 200;        // R
  std::uint32_t local_epochs = 5;    // E
  double participation_rate = 1.0;   // q
  std::uint64_t root_seed = 1;
  AggregationPolicy policy = FedAvgPolicy{};
  std::uint32_t batch_size = 32;
  std::uint32_t eval_stride = 1;     // evaluate on the server test set every k rounds
  std::uint32_t snapshot_stride = 0;  // keep global params every k rounds (0 = never)
  std::uint32_t jobs = 1;            // parallel local trainings per round
};

void validate(const FederationConfig& cfg);

struct RoundRecord {
  std::uint32_t round = 0;  // 1-based
  std::vector<std::uint32_t> selected;
  bool evaluated = false;
  MetricsReport metrics;
  std::optional<double> backdoor_accuracy;
  std::optional<double> epsilon;
  ParamVector snapshot;  // empty unless the snapshot stride hit
};

struct TrainingTrace {
  ModelConfig model;
  std::vector<RoundRecord> rounds;
  ParamVector final_params;
  bool halted_early = false;  // privacy budget exhausted
};

// Context handed to attack hooks each round.
struct RoundInfo {
  std::uint32_t round = 0;  // 1-based
  std::uint32_t total_rounds = 0;
  std::uint64_t total_samples_selected = 0;  // sum of n over this round's cohort
  double server_lr = 1.0;
  const ModelConfig* model = nullptr;
  const FederationConfig* fed = nullptr;
  std::uint64_t participant_seed(std::uint32_t org_id) const;
};

// Adversarial behavior plugged into the round loop. craft_update runs inside
// the (possibly parallel) per-participant phase and must be thread-safe;
// after_aggregate runs serially once per round.
class AttackHooks {
 public:
  virtual ~AttackHooks() = default;
  // Return the update this org submits instead of training honestly, or
  // nullopt to leave it to the normal local-training path.
  virtual std::optional<RoundUpdate> craft_update(const RoundInfo& info,
                                                  const ParticipantDataset& org,
                                                  const ParamVector& global) {
    (void)info;
    (void)org;
    (void)global;
    return std::nullopt;
  }
  virtual void after_aggregate(const RoundInfo& info, const ParamVector& before,
                               const ParamVector& after) {
    (void)info;
    (void)before;
    (void)after;
  }
  // When set, the trace records backdoor accuracy against this corpus.
  virtual const EventCorpus* backdoor_eval_corpus() const { return nullptr; }
};

// Each org enters the round independently with probability q; q = 1 selects
// everyone.
std::vector<std::uint32_t> select_participants(const std::vector<std::uint32_t>& org_ids,
                                               double participation_rate,
                                               std::uint64_t round_seed);

// The full federated loop: select -> broadcast -> local train -> collect ->
// aggregate per policy -> evaluate. Deterministic given the root seed; local
// trainings may run on cfg.jobs threads without changing any result.
TrainingTrace run_training(const FederationDataset& fed, const ModelConfig& model_cfg,
                           const FederationConfig& fed_cfg, AttackHooks* hooks = nullptr);

// Centralized baseline: the same model trained on the pooled corpus, one
// trace row per `local_epochs` epochs so traces line up round-for-round.
TrainingTrace run_centralized(const EventCorpus& train, const EventCorpus& test,
                              const ModelConfig& model_cfg, const FederationConfig& fed_cfg);

// One CSV row per round: round, selected count, the test metrics, and the
// backdoor-accuracy / epsilon columns when the run produced them.
std::string trace_to_csv(const TrainingTrace& trace);
void write_trace_csv(const TrainingTrace& trace, const std::string& path);

}  // namespace fedseq
