#include "fedseq/partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fedseq/rng.hpp"

namespace fedseq {

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const EventCorpus& corpus) {
  std::vector<std::vector<std::size_t>> by_class(corpus.class_count);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_class[corpus.sequences[i].label()].push_back(i);
  }
  return by_class;
}

ParticipantDataset make_participant(const EventCorpus& corpus, std::uint32_t org_id,
                                    const std::vector<std::size_t>& indices) {
  ParticipantDataset p;
  p.org_id = org_id;
  p.train = corpus.subset(indices);
  p.histogram = class_histogram(p.train);
  return p;
}

}  // namespace

const char* to_string(DistributionTag tag) {
  switch (tag) {
    case DistributionTag::kPrimary: return "primary";
    case DistributionTag::kKnowledgeable: return "knowledgeable";
    case DistributionTag::kExtreme: return "extreme";
    case DistributionTag::kCustom: return "custom";
  }
  return "custom";
}

DistributionTag distribution_tag_from_string(const std::string& s) {
  if (s == "primary") return DistributionTag::kPrimary;
  if (s == "knowledgeable") return DistributionTag::kKnowledgeable;
  if (s == "extreme") return DistributionTag::kExtreme;
  if (s == "custom") return DistributionTag::kCustom;
  throw std::invalid_argument("unknown distribution tag: " + s);
}

std::uint64_t FederationDataset::total_samples() const {
  std::uint64_t n = 0;
  for (const auto& p : participants) n += p.train.size();
  return n;
}

const ParticipantDataset* FederationDataset::find(std::uint32_t org_id) const {
  for (const auto& p : participants) {
    if (p.org_id == org_id) return &p;
  }
  return nullptr;
}

FederationDataset partition_primary(const EventCorpus& corpus, std::uint32_t orgs,
                                    std::uint64_t skew_seed) {
  if (orgs < 2) throw std::invalid_argument("partition_primary: need at least 2 organizations");
  if (corpus.size() < orgs) {
    throw std::invalid_argument("partition_primary: more organizations than sequences");
  }

  Rng rng(mix_seed(skew_seed, 0x9a1));
  const std::uint32_t C = corpus.class_count;

  // Each org draws a subset of classes it is willing to host, then each class
  // spreads its sequences over the hosting orgs with random proportions.
  std::vector<std::vector<std::uint32_t>> hosts_of_class(C);
  for (std::uint32_t org = 0; org < orgs; ++org) {
    bool any = false;
    for (std::uint32_t c = 0; c < C; ++c) {
      if (rng.uniform() < 0.7) {
        hosts_of_class[c].push_back(org);
        any = true;
      }
    }
    if (!any) hosts_of_class[rng.below(C)].push_back(org);
  }

  auto by_class = indices_by_class(corpus);
  std::vector<std::vector<std::size_t>> assigned(orgs);
  for (std::uint32_t c = 0; c < C; ++c) {
    if (by_class[c].empty()) continue;
    const auto& hosts = hosts_of_class[c].empty()
                            ? std::vector<std::uint32_t>{static_cast<std::uint32_t>(rng.below(orgs))}
                            : hosts_of_class[c];
    // Random proportions, squared uniforms for a mild skew.
    std::vector<double> cut(hosts.size());
    double total = 0.0;
    for (double& w : cut) {
      const double u = rng.uniform();
      w = 0.05 + u * u;
      total += w;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < cut.size(); ++i) {
      acc += cut[i] / total;
      cut[i] = acc;
    }
    for (std::size_t idx : by_class[c]) {
      const double u = rng.uniform();
      std::size_t pick = cut.size() - 1;
      for (std::size_t i = 0; i < cut.size(); ++i) {
        if (u < cut[i]) {
          pick = i;
          break;
        }
      }
      assigned[hosts[pick]].push_back(idx);
    }
  }

  // No org may come out empty; move single sequences from the largest orgs.
  for (std::uint32_t org = 0; org < orgs; ++org) {
    if (!assigned[org].empty()) continue;
    std::uint32_t donor = 0;
    for (std::uint32_t other = 1; other < orgs; ++other) {
      if (assigned[other].size() > assigned[donor].size()) donor = other;
    }
    if (assigned[donor].size() < 2) {
      throw std::runtime_error("partition_primary: cannot give every org a sequence");
    }
    assigned[org].push_back(assigned[donor].back());
    assigned[donor].pop_back();
  }

  FederationDataset fed;
  fed.distribution_tag = DistributionTag::kPrimary;
  fed.seed = skew_seed;
  for (std::uint32_t org = 0; org < orgs; ++org) {
    std::sort(assigned[org].begin(), assigned[org].end());
    fed.participants.push_back(make_participant(corpus, org, assigned[org]));
  }
  return fed;
}

FederationDataset partition_knowledgeable(const EventCorpus& corpus, std::uint32_t participants,
                                          double knowledgeable_fraction, std::uint64_t seed) {
  if (participants < 1) throw std::invalid_argument("partition_knowledgeable: need participants");
  if (!(knowledgeable_fraction > 0.0) || knowledgeable_fraction > 1.0) {
    throw std::invalid_argument("partition_knowledgeable: m must be in (0, 1]");
  }
  const std::uint32_t C = corpus.class_count;
  auto by_class = indices_by_class(corpus);
  for (std::uint32_t c = 0; c < C; ++c) {
    if (by_class[c].empty()) {
      throw std::invalid_argument("partition_knowledgeable: class " + std::to_string(c) +
                                  " has no sequences");
    }
  }

  Rng rng(mix_seed(seed, 0x5e3d));
  for (auto& pool : by_class) rng.shuffle(pool);

  const auto n_known = static_cast<std::uint32_t>(
      std::ceil(knowledgeable_fraction * double(participants)));
  const std::uint32_t n_narrow = participants - n_known;
  std::vector<std::vector<std::size_t>> assigned(participants);

  // Narrow participants first: a few classes each (always fewer than half),
  // leaving at least n_known sequences per class for the round-robin below.
  const std::size_t total = corpus.size();
  const std::size_t narrow_budget = std::max<std::size_t>(1, total / (2 * participants));
  const std::uint32_t max_narrow_classes = std::max<std::uint32_t>(1, (C - 1) / 2);
  for (std::uint32_t p = 0; p < n_narrow; ++p) {
    const std::uint32_t org = n_known + p;
    const std::uint32_t n_cls =
        1 + static_cast<std::uint32_t>(rng.below(max_narrow_classes));
    const auto classes = rng.sample_without_replacement(C, n_cls);
    const std::size_t per_class = std::max<std::size_t>(1, narrow_budget / classes.size());
    for (std::size_t c : classes) {
      auto& pool = by_class[c];
      for (std::size_t i = 0; i < per_class && pool.size() > n_known; ++i) {
        assigned[org].push_back(pool.back());
        pool.pop_back();
      }
    }
    if (assigned[org].empty()) {
      // All sampled pools were protected; take one from the deepest pool.
      std::size_t deepest = 0;
      for (std::size_t c = 1; c < by_class.size(); ++c) {
        if (by_class[c].size() > by_class[deepest].size()) deepest = c;
      }
      if (by_class[deepest].size() <= 1) {
        throw std::runtime_error("partition_knowledgeable: not enough sequences");
      }
      assigned[org].push_back(by_class[deepest].back());
      by_class[deepest].pop_back();
    }
  }

  // Round-robin deal of everything that remains: one sequence per class per
  // knowledgeable participant per pass, until the pools are exhausted.
  std::size_t left = 0;
  for (const auto& pool : by_class) left += pool.size();
  while (left > 0) {
    for (std::uint32_t p = 0; p < n_known && left > 0; ++p) {
      for (std::uint32_t c = 0; c < C; ++c) {
        auto& pool = by_class[c];
        if (pool.empty()) continue;
        assigned[p].push_back(pool.back());
        pool.pop_back();
        --left;
      }
    }
  }

  FederationDataset fed;
  fed.distribution_tag = DistributionTag::kKnowledgeable;
  fed.knowledgeable_fraction = knowledgeable_fraction;
  fed.seed = seed;
  for (std::uint32_t org = 0; org < participants; ++org) {
    if (assigned[org].empty()) {
      throw std::runtime_error("partition_knowledgeable: participant " + std::to_string(org) +
                               " received no data; corpus too small for K");
    }
    std::sort(assigned[org].begin(), assigned[org].end());
    fed.participants.push_back(make_participant(corpus, org, assigned[org]));
  }
  return fed;
}

FederationDataset partition_extreme(const EventCorpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("partition_extreme: empty corpus");
  auto by_class = indices_by_class(corpus);
  FederationDataset fed;
  fed.distribution_tag = DistributionTag::kExtreme;
  for (std::uint32_t c = 0; c < corpus.class_count; ++c) {
    if (by_class[c].empty()) continue;
    fed.participants.push_back(make_participant(corpus, c, by_class[c]));
  }
  return fed;
}

FederationDataset partition_uniform(const EventCorpus& corpus, std::uint32_t orgs,
                                    std::uint64_t seed) {
  if (orgs < 1) throw std::invalid_argument("partition_uniform: need at least 1 organization");
  if (corpus.size() < orgs) {
    throw std::invalid_argument("partition_uniform: more organizations than sequences");
  }
  Rng rng(mix_seed(seed, 0x3333));
  const auto perm = rng.permutation(corpus.size());
  std::vector<std::vector<std::size_t>> assigned(orgs);
  for (std::size_t i = 0; i < perm.size(); ++i) assigned[i % orgs].push_back(perm[i]);

  FederationDataset fed;
  fed.distribution_tag = DistributionTag::kCustom;
  fed.seed = seed;
  for (std::uint32_t org = 0; org < orgs; ++org) {
    std::sort(assigned[org].begin(), assigned[org].end());
    fed.participants.push_back(make_participant(corpus, org, assigned[org]));
  }
  return fed;
}

double smoothed_kl(const std::vector<double>& p, const std::vector<double>& q,
                   double smoothing) {
  if (p.size() != q.size()) throw std::invalid_argument("smoothed_kl: length mismatch");
  if (p.empty()) throw std::invalid_argument("smoothed_kl: empty histograms");
  const double denom_p = 1.0 + smoothing * double(p.size());
  const double denom_q = 1.0 + smoothing * double(q.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + smoothing) / denom_p;
    const double qi = (q[i] + smoothing) / denom_q;
    kl += pi * std::log(pi / qi);
  }
  return std::max(0.0, kl);
}

double non_iidness_score(const FederationDataset& fed, double smoothing) {
  const std::size_t n = fed.participants.size();
  if (n < 2) throw std::invalid_argument("non_iidness_score: need at least 2 participants");
  const std::size_t len = fed.participants.front().histogram.size();
  for (const auto& p : fed.participants) {
    if (p.histogram.size() != len) {
      throw std::invalid_argument("non_iidness_score: histograms must share class indexing");
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum += smoothed_kl(fed.participants[i].histogram, fed.participants[j].histogram,
                         smoothing);
    }
  }
  return sum / double(n * (n - 1));
}

void save_federation(const FederationDataset& fed, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["distribution_tag"] = to_string(fed.distribution_tag);
  manifest["participants"] = fed.participants.size();
  manifest["knowledgeable_fraction"] = fed.knowledgeable_fraction;
  manifest["seed"] = fed.seed;
  if (fed.participants.size() >= 2) {
    manifest["non_iidness_score"] = non_iidness_score(fed);
  }
  const EventCorpus& meta = fed.participants.empty() ? fed.test : fed.participants[0].train;
  manifest["vocab_size"] = meta.vocab_size;
  manifest["class_count"] = meta.class_count;
  manifest["vocabulary"] = meta.vocabulary;

  std::vector<std::uint32_t> org_ids;
  for (const auto& p : fed.participants) org_ids.push_back(p.org_id);
  manifest["org_ids"] = org_ids;
  manifest["has_test"] = !fed.test.empty();

  std::ofstream mout(fs::path(dir) / "manifest.json");
  if (!mout) throw std::runtime_error("cannot write manifest in " + dir);
  mout << manifest.dump(2) << '\n';

  char name[32];
  for (const auto& p : fed.participants) {
    std::snprintf(name, sizeof(name), "org_%05u.corpus", p.org_id);
    write_corpus_file(p.train, (fs::path(dir) / name).string());
  }
  if (!fed.test.empty()) {
    write_corpus_file(fed.test, (fs::path(dir) / "test.corpus").string());
  }
}

FederationDataset load_federation(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream min(fs::path(dir) / "manifest.json");
  if (!min) throw std::runtime_error("cannot open manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(min);

  FederationDataset fed;
  fed.distribution_tag =
      distribution_tag_from_string(manifest.at("distribution_tag").get<std::string>());
  fed.knowledgeable_fraction = manifest.value("knowledgeable_fraction", 0.0);
  fed.seed = manifest.value("seed", std::uint64_t{0});
  const auto vocabulary = manifest.at("vocabulary").get<std::vector<std::int64_t>>();
  const auto class_count = manifest.at("class_count").get<std::uint32_t>();
  const auto vocab_size = manifest.at("vocab_size").get<std::uint32_t>();

  char name[32];
  for (std::uint32_t org : manifest.at("org_ids").get<std::vector<std::uint32_t>>()) {
    std::snprintf(name, sizeof(name), "org_%05u.corpus", org);
    ParticipantDataset p;
    p.org_id = org;
    p.train = load_corpus_file((fs::path(dir) / name).string(), &vocabulary, class_count);
    p.train.vocab_size = vocab_size;
    p.histogram = class_histogram(p.train);
    fed.participants.push_back(std::move(p));
  }
  if (manifest.value("has_test", false)) {
    fed.test = load_corpus_file((fs::path(dir) / "test.corpus").string(), &vocabulary,
                                class_count);
    fed.test.vocab_size = vocab_size;
  }
  return fed;
}

}  // namespace fedseq
