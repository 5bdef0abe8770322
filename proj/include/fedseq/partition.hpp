#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedseq/events.hpp"

namespace fedseq {

struct ParticipantDataset {
  std::uint32_t org_id = 0;
  EventCorpus train;               // non-empty
  std::vector<double> histogram;   // class_histogram(train)
};

enum class DistributionTag { kPrimary, kKnowledgeable, kExtreme, kCustom };

const char* to_string(DistributionTag tag);
DistributionTag distribution_tag_from_string(const std::string& s);

struct FederationDataset {
  std::vector<ParticipantDataset> participants;
  EventCorpus test;  // held out server-side; filled in by the experiment pipeline
  DistributionTag distribution_tag = DistributionTag::kCustom;
  double knowledgeable_fraction = 0.0;  // m, meaningful for the knowledgeable tag
  std::uint64_t seed = 0;

  std::uint64_t total_samples() const;
  const ParticipantDataset* find(std::uint32_t org_id) const;
};

// Mildly label-skewed assignment of sequences to K organizations: each org is
// handed a random subset of the classes with random proportions, emulating
// natural per-org groupings. Every org ends up with at least one sequence.
FederationDataset partition_primary(const EventCorpus& corpus, std::uint32_t orgs,
                                    std::uint64_t skew_seed);

// ceil(m*K) "knowledgeable" participants are dealt sequences round-robin from
// per-class pools (all-positive class histograms while supply lasts); the rest
// receive narrow slices covering fewer than half the classes.
FederationDataset partition_knowledgeable(const EventCorpus& corpus, std::uint32_t participants,
                                          double knowledgeable_fraction, std::uint64_t seed = 17);

// One participant per class; participant c holds exactly the sequences
// labeled c. Classes with no sequences are skipped.
FederationDataset partition_extreme(const EventCorpus& corpus);

// Pooled random redistribution into K near-equal shards (tagged custom); the
// closest thing to IID this library produces.
FederationDataset partition_uniform(const EventCorpus& corpus, std::uint32_t orgs,
                                    std::uint64_t seed);

// Mean smoothed KL divergence between participant class histograms over all
// ordered pairs. Zero iff all smoothed histograms coincide.
double non_iidness_score(const FederationDataset& fed, double smoothing = 1e-6);

// Directed KL between two histograms after additive smoothing; always finite.
double smoothed_kl(const std::vector<double>& p, const std::vector<double>& q,
                   double smoothing = 1e-6);

// Directory layout: manifest.json + one corpus file per participant + the
// server test corpus.
void save_federation(const FederationDataset& fed, const std::string& dir);
FederationDataset load_federation(const std::string& dir);

}  // namespace fedseq
