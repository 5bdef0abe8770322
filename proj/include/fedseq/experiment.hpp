#pragma once

#include <string>

#include "fedseq/analysis.hpp"
#include "fedseq/config.hpp"

namespace fedseq {

// Data prepared from a config: the three-way split plus the federation built
// from the training part (server test attached).
struct ExperimentData {
  SplitCorpus split;
  FederationDataset federation;
};

EventCorpus build_corpus(const ExperimentConfig& cfg);
ExperimentData prepare_data(const ExperimentConfig& cfg);

struct RunResult {
  std::string run_dir;
  TrainingTrace trace;
};

// The run directory is <output_dir>/run-<confighash>; refuses to reuse an
// existing directory unless force is set.
std::string make_run_dir(const ExperimentConfig& cfg, const std::string& out_override,
                         bool force);

// Federated pipeline: partition, train (with the configured attack, if any),
// write trace.csv / final.ckpt / summary.txt plus any analysis toggles.
RunResult run_federated_experiment(const ExperimentConfig& cfg,
                                   const std::string& out_override = "", bool force = false);

// Centralized baseline over the pooled training split; same outputs.
RunResult run_centralized_experiment(const ExperimentConfig& cfg,
                                     const std::string& out_override = "", bool force = false);

}  // namespace fedseq
