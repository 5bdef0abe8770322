#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedseq/aggregation.hpp"
#include "fedseq/attacks.hpp"
#include "fedseq/federation.hpp"
#include "fedseq/neural.hpp"

namespace fedseq {

// Flat-key experiment configuration, INI-shaped:
//   [section]
//   key = value            # comments with '#' or ';'
// Section headers only prefix the key ("section.key"). Unknown keys and
// malformed values are rejected at load time with the offending field named.

enum class DataSource { kSynthetic, kLog, kCorpus };
enum class AttackKind { kNone, kBackdoor, kMia };

struct ExperimentConfig {
  std::uint64_t root_seed = 1;
  std::string output_dir = "out";

  // data
  DataSource source = DataSource::kSynthetic;
  std::string log_path;
  std::string corpus_path;
  std::optional<std::int64_t> idle_gap_seconds;
  SynthConfig synth;
  double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;

  // distribution
  DistributionTag distribution = DistributionTag::kPrimary;
  bool uniform_distribution = false;  // pooled random redistribution (custom tag)
  std::uint32_t participants = 20;
  double knowledgeable_frac = 0.6;

  // model + federation
  ModelConfig model;
  FederationConfig federation;

  // attack
  AttackKind attack = AttackKind::kNone;
  double attacker_frac = 0.01;
  BoostMode boost;
  AttackSchedule schedule = AttackSchedule::all();
  std::optional<EventId> trigger;  // unset = most frequent pre-label event
  EventId target = 0;
  double ascent_rate = 1.0;
  std::uint32_t mia_targets_per_side = 50;
  std::uint32_t mia_window_begin = 1;
  std::uint32_t mia_window_end = 0;  // 0 = last round

  // analysis toggles
  bool analyze_contribution = false;
  std::uint32_t contribution_top = 0;  // 0 = all orgs
  bool analyze_influence = false;
  bool analyze_benefit = false;
  std::uint32_t examination_test_size = 1000;

  std::string raw_text;  // exact file content, for hashing and provenance
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// FNV-1a over the config text; names the run directory.
std::string config_hash_hex(const ExperimentConfig& cfg);

}  // namespace fedseq
