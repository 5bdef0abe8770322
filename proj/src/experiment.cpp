#include "fedseq/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "fedseq/rng.hpp"

namespace fedseq {

namespace fs = std::filesystem;

EventCorpus build_corpus(const ExperimentConfig& cfg) {
  switch (cfg.source) {
    case DataSource::kSynthetic:
      return generate_synthetic_corpus(cfg.synth);
    case DataSource::kLog: {
      ParseOptions opts;
      opts.idle_gap_seconds = cfg.idle_gap_seconds;
      return parse_event_log_file(cfg.log_path, opts);
    }
    case DataSource::kCorpus:
      return load_corpus_file(cfg.corpus_path);
  }
  throw std::logic_error("unhandled data source");
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  const EventCorpus corpus = build_corpus(cfg);
  data.split = split_dataset(corpus, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio,
                             mix_seed(cfg.root_seed, 0x5d17));

  const std::uint64_t part_seed = mix_seed(cfg.root_seed, 0x9a47);
  if (cfg.uniform_distribution) {
    data.federation = partition_uniform(data.split.train, cfg.participants, part_seed);
  } else {
    switch (cfg.distribution) {
      case DistributionTag::kPrimary:
        data.federation = partition_primary(data.split.train, cfg.participants, part_seed);
        break;
      case DistributionTag::kKnowledgeable:
        data.federation = partition_knowledgeable(data.split.train, cfg.participants,
                                                  cfg.knowledgeable_frac, part_seed);
        break;
      case DistributionTag::kExtreme:
        data.federation = partition_extreme(data.split.train);
        break;
      case DistributionTag::kCustom:
        data.federation = partition_uniform(data.split.train, cfg.participants, part_seed);
        break;
    }
  }
  data.federation.test = data.split.test;
  return data;
}

std::string make_run_dir(const ExperimentConfig& cfg, const std::string& out_override,
                         bool force) {
  const std::string base = out_override.empty() ? cfg.output_dir : out_override;
  const fs::path dir = fs::path(base) / ("run-" + config_hash_hex(cfg));
  if (fs::exists(dir) && !force) {
    throw std::runtime_error("run directory already exists (use --force to overwrite): " +
                             dir.string());
  }
  fs::create_directories(dir);
  return dir.string();
}

namespace {

ModelConfig resolve_model(const ExperimentConfig& cfg, const EventCorpus& corpus) {
  ModelConfig model = cfg.model;
  model.vocab_size = corpus.vocab_size;
  return model;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string summarize(const ExperimentConfig& cfg, const TrainingTrace& trace,
                      const FederationDataset* fed, const char* mode) {
  std::string s;
  s += "mode: ";
  s += mode;
  s += "\npolicy: " + policy_name(cfg.federation.policy);
  s += "\nrounds: " + std::to_string(trace.rounds.size());
  if (trace.halted_early) s += " (halted: privacy budget exhausted)";
  if (fed) {
    s += "\nparticipants: " + std::to_string(fed->participants.size());
    s += "\ndistribution: " + std::string(to_string(fed->distribution_tag));
    if (fed->participants.size() >= 2) {
      s += "\nnon_iidness_score: " + fmt(non_iidness_score(*fed));
    }
  }
  const RoundRecord* last_eval = nullptr;
  for (const auto& r : trace.rounds) {
    if (r.evaluated) last_eval = &r;
  }
  if (last_eval) {
    const MetricsReport& m = last_eval->metrics;
    s += "\nfinal: precision=" + fmt(m.precision) + " recall=" + fmt(m.recall) +
         " f1=" + fmt(m.f1) + " accuracy=" + fmt(m.accuracy) +
         " top1=" + fmt(m.top1_accuracy) + " fpr=" + fmt(m.fpr);
    if (last_eval->backdoor_accuracy) {
      s += "\nbackdoor_accuracy: " + fmt(*last_eval->backdoor_accuracy);
    }
    if (last_eval->epsilon) s += "\nepsilon_spent: " + fmt(*last_eval->epsilon);
  }
  s += "\n";
  return s;
}

void write_common_outputs(const std::string& run_dir, const ExperimentConfig& cfg,
                          const ModelConfig& model, const TrainingTrace& trace,
                          const FederationDataset* fed, const char* mode) {
  write_trace_csv(trace, (fs::path(run_dir) / "trace.csv").string());
  save_checkpoint(model, trace.final_params, (fs::path(run_dir) / "final.ckpt").string());
  for (const auto& r : trace.rounds) {
    if (r.snapshot.empty()) continue;
    char name[48];
    std::snprintf(name, sizeof(name), "round_%05u.ckpt", r.round);
    save_checkpoint(model, r.snapshot, (fs::path(run_dir) / name).string());
  }
  write_text(fs::path(run_dir) / "config.echo", cfg.raw_text);
  write_text(fs::path(run_dir) / "summary.txt", summarize(cfg, trace, fed, mode));
}

void run_analyses(const std::string& run_dir, const ExperimentConfig& cfg,
                  const ExperimentData& data, const ModelConfig& model,
                  const TrainingTrace& trace) {
  const FederationDataset& fed = data.federation;

  std::vector<InfluenceRecord> influence;
  if (cfg.analyze_influence || cfg.analyze_contribution) {
    InfluenceOptions opts;
    opts.seed = mix_seed(cfg.root_seed, 0x1f1);
    influence = influence_scores(fed, model, trace.final_params, opts);
  }
  if (cfg.analyze_influence) {
    std::string csv = "org_id,raw_influence,normalized\n";
    for (const auto& r : influence) {
      csv += std::to_string(r.org_id) + "," + fmt(r.raw) + "," + fmt(r.normalized) + "\n";
    }
    write_text(fs::path(run_dir) / "influence.csv", csv);
  }

  if (cfg.analyze_contribution) {
    // Leave-one-out retraining for the whole cohort, or just the top-k by
    // influence when configured (LOO is the expensive part).
    std::vector<const InfluenceRecord*> chosen;
    for (const auto& r : influence) chosen.push_back(&r);
    std::sort(chosen.begin(), chosen.end(),
              [](const InfluenceRecord* a, const InfluenceRecord* b) {
                return a->normalized > b->normalized;
              });
    if (cfg.contribution_top > 0 && chosen.size() > cfg.contribution_top) {
      chosen.resize(cfg.contribution_top);
    }
    std::string csv = "org_id,influence,impact,baseline_precision,loo_precision\n";
    for (const InfluenceRecord* r : chosen) {
      const ContributionRecord c =
          contribution_impact(fed, model, cfg.federation, r->org_id, &trace);
      csv += std::to_string(c.org_id) + "," + fmt(r->normalized) + "," + fmt(c.impact) + "," +
             fmt(c.baseline_precision) + "," + fmt(c.loo_precision) + "\n";
    }
    write_text(fs::path(run_dir) / "contribution.csv", csv);
  }

  if (cfg.analyze_benefit) {
    // Examination test: a seeded all-class sample from the held-out split.
    EventCorpus exam = data.split.test;
    if (exam.size() > cfg.examination_test_size) {
      Rng rng(mix_seed(cfg.root_seed, 0xe8a));
      auto keep = rng.sample_without_replacement(exam.size(), cfg.examination_test_size);
      std::sort(keep.begin(), keep.end());
      exam = exam.subset(keep);
    }
    const auto records = benefit_comparison(fed, model, cfg.federation, trace.final_params, exam);
    std::string csv = "org_id,local_precision,aggregated_precision,benefit\n";
    for (const auto& r : records) {
      csv += std::to_string(r.org_id) + "," + fmt(r.local_precision) + "," +
             fmt(r.aggregated_precision) + "," + fmt(r.benefit()) + "\n";
    }
    write_text(fs::path(run_dir) / "benefit.csv", csv);
  }
}

}  // namespace

RunResult run_federated_experiment(const ExperimentConfig& cfg, const std::string& out_override,
                                   bool force) {
  ExperimentData data = prepare_data(cfg);
  const ModelConfig model = resolve_model(cfg, data.split.train);
  const std::string run_dir = make_run_dir(cfg, out_override, force);

  std::unique_ptr<AttackHooks> hooks;
  std::unique_ptr<ActiveMIA> mia;
  if (cfg.attack == AttackKind::kBackdoor) {
    BackdoorSpec spec;
    spec.target = cfg.target;
    spec.trigger = cfg.trigger ? *cfg.trigger
                               : most_frequent_pre_label_event(data.split.train, cfg.target);
    spec.attacker_frac = cfg.attacker_frac;
    spec.boost = cfg.boost;
    spec.schedule = cfg.schedule;
    hooks = std::make_unique<BackdoorAttack>(data.federation, model, spec,
                                             mix_seed(cfg.root_seed, 0xa77));
  } else if (cfg.attack == AttackKind::kMia) {
    const auto& parts = data.federation.participants;
    if (parts.size() < 2) throw std::invalid_argument("mia: needs at least 2 participants");
    const std::uint32_t adversary = parts.back().org_id;
    std::vector<std::uint32_t> victims;
    for (const auto& p : parts) {
      if (p.org_id != adversary) victims.push_back(p.org_id);
    }
    const MIATargetSet targets =
        make_mia_targets(data.federation, victims, data.split.test, cfg.mia_targets_per_side,
                         mix_seed(cfg.root_seed, 0x317));
    const std::uint32_t window_end =
        cfg.mia_window_end == 0 ? cfg.federation.rounds : cfg.mia_window_end;
    mia = std::make_unique<ActiveMIA>(adversary, targets, cfg.ascent_rate,
                                      cfg.mia_window_begin, window_end, model);
  }

  AttackHooks* active = hooks ? hooks.get() : static_cast<AttackHooks*>(mia.get());
  TrainingTrace trace = run_training(data.federation, model, cfg.federation, active);

  write_common_outputs(run_dir, cfg, model, trace, &data.federation, "federated");

  if (mia) {
    const auto scores = mia->scores();
    const auto labels = mia->labels();
    const MIAResult result = mia_evaluate(scores, labels);
    std::string csv = "target,member,score\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(labels[i]) + "," + fmt(scores[i]) + "\n";
    }
    write_text(fs::path(run_dir) / "mia_scores.csv", csv);
    write_text(fs::path(run_dir) / "mia_summary.txt",
               "auc: " + fmt(result.auc) + "\naccuracy: " + fmt(result.accuracy) +
                   "\nthreshold: " + fmt(result.threshold) + "\n");
  }

  run_analyses(run_dir, cfg, data, model, trace);
  return {run_dir, std::move(trace)};
}

RunResult run_centralized_experiment(const ExperimentConfig& cfg,
                                     const std::string& out_override, bool force) {
  ExperimentData data = prepare_data(cfg);
  const ModelConfig model = resolve_model(cfg, data.split.train);
  const std::string run_dir = make_run_dir(cfg, out_override, force);
  TrainingTrace trace =
      run_centralized(data.split.train, data.split.test, model, cfg.federation);
  write_common_outputs(run_dir, cfg, model, trace, nullptr, "centralized");
  return {run_dir, std::move(trace)};
}

}  // namespace fedseq
