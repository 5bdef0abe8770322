#include "fedseq/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "fedseq/rng.hpp"

namespace fedseq {

namespace {

// Seed tags for the independent per-component streams.
constexpr std::uint64_t kSelectTag = 0x5e1ec7;
constexpr std::uint64_t kLocalTag = 0x10ca1;
constexpr std::uint64_t kServerTag = 0x5e21;
constexpr std::uint64_t kNoiseTag = 0x4015e;

void parallel_for(std::size_t n, std::uint32_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::uint32_t workers = std::min<std::uint32_t>(jobs, static_cast<std::uint32_t>(n));
  std::atomic<std::size_t> next{0};
  for (std::uint32_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

double backdoor_hit_rate(const ModelConfig& cfg, const ParamVector& params,
                         const EventCorpus& poisoned) {
  std::size_t hits = 0;
  for (const auto& seq : poisoned.sequences) {
    if (predict(cfg, params, seq) == seq.label()) ++hits;
  }
  return double(hits) / double(poisoned.size());
}

}  // namespace

void validate(const FederationConfig& cfg) {
  if (cfg.rounds < 1) throw std::invalid_argument("federation: rounds must be >= 1");
  if (cfg.local_epochs < 1) throw std::invalid_argument("federation: local_epochs must be >= 1");
  if (!(cfg.participation_rate > 0) || cfg.participation_rate > 1) {
    throw std::invalid_argument("federation: participation rate must be in (0, 1]");
  }
  if (cfg.batch_size < 1) throw std::invalid_argument("federation: batch_size must be >= 1");
}

std::uint64_t RoundInfo::participant_seed(std::uint32_t org_id) const {
  return mix_seed(fed->root_seed, kLocalTag, round, org_id);
}

std::vector<std::uint32_t> select_participants(const std::vector<std::uint32_t>& org_ids,
                                               double participation_rate,
                                               std::uint64_t round_seed) {
  if (!(participation_rate > 0) || participation_rate > 1) {
    throw std::invalid_argument("select_participants: q must be in (0, 1]");
  }
  std::vector<std::uint32_t> selected;
  Rng rng(mix_seed(round_seed, kSelectTag));
  for (std::uint32_t org : org_ids) {
    if (participation_rate >= 1.0 || rng.uniform() < participation_rate) {
      selected.push_back(org);
    }
  }
  return selected;
}

TrainingTrace run_training(const FederationDataset& fed, const ModelConfig& model_cfg,
                           const FederationConfig& fed_cfg, AttackHooks* hooks) {
  validate(model_cfg);
  validate(fed_cfg);
  validate(fed_cfg.policy, fed.participants.size());
  if (fed.participants.empty()) throw std::invalid_argument("run_training: empty federation");
  for (const auto& p : fed.participants) {
    if (p.train.empty()) {
      throw std::invalid_argument("run_training: participant " + std::to_string(p.org_id) +
                                  " has no training data");
    }
  }

  const bool is_cdp = std::holds_alternative<CDPPolicy>(fed_cfg.policy);
  const CDPPolicy* cdp = is_cdp ? &std::get<CDPPolicy>(fed_cfg.policy) : nullptr;
  PrivacyAccountant accountant(cdp ? cdp->noise_scale : 1.0,
                               cdp ? cdp->sample_rate : 1.0, cdp ? cdp->delta : 1e-5);

  // FLTrust keeps its own clean corpus: a seeded sample of the server test set.
  EventCorpus server_corpus;
  if (const auto* flt = std::get_if<FLTrustPolicy>(&fed_cfg.policy)) {
    if (fed.test.empty()) throw std::invalid_argument("fltrust: needs a server test corpus");
    Rng rng(mix_seed(fed_cfg.root_seed, kServerTag));
    const std::size_t want = std::min<std::size_t>(flt->server_samples, fed.test.size());
    server_corpus = fed.test.subset(rng.sample_without_replacement(fed.test.size(), want));
  }

  std::vector<std::uint32_t> org_ids;
  for (const auto& p : fed.participants) org_ids.push_back(p.org_id);

  TrainingTrace trace;
  trace.model = model_cfg;
  ParamVector global = init_params(model_cfg);

  const EventCorpus* backdoor_corpus = hooks ? hooks->backdoor_eval_corpus() : nullptr;

  for (std::uint32_t round = 1; round <= fed_cfg.rounds; ++round) {
    RoundInfo info;
    info.round = round;
    info.total_rounds = fed_cfg.rounds;
    info.model = &model_cfg;
    info.fed = &fed_cfg;

    if (cdp) {
      // Budget check happens before any work this round (the accountant halt
      // returns the current model).
      if (accountant.spent_epsilon() > cdp->budget_epsilon) {
        trace.halted_early = true;
        break;
      }
    }

    const auto selected = select_participants(
        org_ids, fed_cfg.participation_rate, mix_seed(fed_cfg.root_seed, kSelectTag, round));

    RoundRecord rec;
    rec.round = round;
    rec.selected = selected;

    if (!selected.empty()) {
      std::uint64_t total_samples = 0;
      std::vector<const ParticipantDataset*> cohort;
      for (std::uint32_t org : selected) {
        const ParticipantDataset* p = fed.find(org);
        cohort.push_back(p);
        total_samples += p->train.size();
      }
      info.total_samples_selected = total_samples;

      TrainOptions train_opts;
      if (cdp) train_opts.delta_clip = cdp->clip;

      std::vector<RoundUpdate> updates(cohort.size());
      parallel_for(cohort.size(), fed_cfg.jobs, [&](std::size_t i) {
        const ParticipantDataset& org = *cohort[i];
        if (hooks) {
          if (auto crafted = hooks->craft_update(info, org, global)) {
            updates[i] = std::move(*crafted);
            return;
          }
        }
        ParamVector theta =
            local_train(model_cfg, global, org.train, fed_cfg.local_epochs,
                        model_cfg.learning_rate, fed_cfg.batch_size,
                        info.participant_seed(org.org_id), train_opts);
        RoundUpdate u;
        u.org_id = org.org_id;
        u.n_samples = org.train.size();
        u.delta.resize(theta.size());
        for (std::size_t j = 0; j < theta.size(); ++j) u.delta[j] = theta[j] - global[j];
        updates[i] = std::move(u);
      });

      const ParamVector before = global;
      const std::uint64_t round_seed = mix_seed(fed_cfg.root_seed, kNoiseTag, round);
      if (cdp) {
        auto res = cdp_round(global, updates, *cdp, accountant, round_seed);
        rec.epsilon = res.epsilon;
        global = std::move(res.new_global);
      } else {
        ParamVector delta = std::visit(
            [&](const auto& p) -> ParamVector {
              using T = std::decay_t<decltype(p)>;
              if constexpr (std::is_same_v<T, FedAvgPolicy>) {
                ParamVector next = fedavg_aggregate(global, updates);
                for (std::size_t j = 0; j < next.size(); ++j) next[j] -= global[j];
                return next;
              } else if constexpr (std::is_same_v<T, TrimmedMeanPolicy>) {
                return trimmed_mean(updates, p.beta);
              } else if constexpr (std::is_same_v<T, KrumPolicy>) {
                return krum(updates, p.assumed_attackers);
              } else if constexpr (std::is_same_v<T, FLTrustPolicy>) {
                ParamVector server_theta = local_train(
                    model_cfg, global, server_corpus, fed_cfg.local_epochs,
                    model_cfg.learning_rate, fed_cfg.batch_size,
                    mix_seed(fed_cfg.root_seed, kServerTag, round));
                ParamVector server_update(server_theta.size());
                for (std::size_t j = 0; j < server_theta.size(); ++j) {
                  server_update[j] = server_theta[j] - global[j];
                }
                return fltrust(updates, server_update);
              } else if constexpr (std::is_same_v<T, DnCPolicy>) {
                return dnc(updates, p.remove_frac, round_seed).delta;
              } else if constexpr (std::is_same_v<T, NormBoundPolicy>) {
                return norm_bound(updates, p.threshold);
              } else if constexpr (std::is_same_v<T, WeakDPPolicy>) {
                return weak_dp(updates, p.threshold, p.noise_std, round_seed);
              } else {
                throw std::logic_error("unhandled aggregation policy");
              }
            },
            fed_cfg.policy);
        for (std::size_t j = 0; j < global.size(); ++j) global[j] += delta[j];
      }
      if (hooks) hooks->after_aggregate(info, before, global);
    }

    if (!fed.test.empty() && fed_cfg.eval_stride > 0 &&
        (round % fed_cfg.eval_stride == 0 || round == fed_cfg.rounds)) {
      rec.evaluated = true;
      rec.metrics = evaluate_model(model_cfg, global, fed.test);
      if (backdoor_corpus && !backdoor_corpus->empty()) {
        rec.backdoor_accuracy = backdoor_hit_rate(model_cfg, global, *backdoor_corpus);
      }
    }
    if (fed_cfg.snapshot_stride > 0 && round % fed_cfg.snapshot_stride == 0) {
      rec.snapshot = global;
    }
    trace.rounds.push_back(std::move(rec));
  }

  trace.final_params = std::move(global);
  return trace;
}

TrainingTrace run_centralized(const EventCorpus& train, const EventCorpus& test,
                              const ModelConfig& model_cfg, const FederationConfig& fed_cfg) {
  validate(model_cfg);
  validate(fed_cfg);
  if (train.empty()) throw std::invalid_argument("run_centralized: empty training corpus");

  TrainingTrace trace;
  trace.model = model_cfg;
  ParamVector global = init_params(model_cfg);
  for (std::uint32_t round = 1; round <= fed_cfg.rounds; ++round) {
    global = local_train(model_cfg, global, train, fed_cfg.local_epochs,
                         model_cfg.learning_rate, fed_cfg.batch_size,
                         mix_seed(fed_cfg.root_seed, kLocalTag, round, 0));
    RoundRecord rec;
    rec.round = round;
    if (!test.empty() && fed_cfg.eval_stride > 0 &&
        (round % fed_cfg.eval_stride == 0 || round == fed_cfg.rounds)) {
      rec.evaluated = true;
      rec.metrics = evaluate_model(model_cfg, global, test);
    }
    if (fed_cfg.snapshot_stride > 0 && round % fed_cfg.snapshot_stride == 0) {
      rec.snapshot = global;
    }
    trace.rounds.push_back(std::move(rec));
  }
  trace.final_params = std::move(global);
  return trace;
}

std::string trace_to_csv(const TrainingTrace& trace) {
  bool any_backdoor = false, any_epsilon = false;
  for (const auto& r : trace.rounds) {
    any_backdoor = any_backdoor || r.backdoor_accuracy.has_value();
    any_epsilon = any_epsilon || r.epsilon.has_value();
  }

  std::string out = "round,selected,precision,recall,f1,accuracy,top1_accuracy,fpr";
  if (any_backdoor) out += ",backdoor_accuracy";
  if (any_epsilon) out += ",epsilon";
  out += '\n';

  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.10g", v);
    out += buf;
  };
  for (const auto& r : trace.rounds) {
    std::snprintf(buf, sizeof(buf), "%u,%zu", r.round, r.selected.size());
    out += buf;
    const MetricsReport& m = r.metrics;
    put(m.precision);
    put(m.recall);
    put(m.f1);
    put(m.accuracy);
    put(m.top1_accuracy);
    put(m.fpr);
    if (any_backdoor) put(r.backdoor_accuracy.value_or(0.0));
    if (any_epsilon) put(r.epsilon.value_or(0.0));
    out += '\n';
  }
  return out;
}

void write_trace_csv(const TrainingTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace: " + path);
  out << trace_to_csv(trace);
}

}  // namespace fedseq
