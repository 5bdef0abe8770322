#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedseq/events.hpp"
#include "fedseq/partition.hpp"

namespace fedseq::testing {

// Corpus from explicit full sequences (last id = label), identity vocabulary.
inline EventCorpus make_corpus(const std::vector<std::vector<EventId>>& seqs,
                               std::uint32_t vocab_size) {
  EventCorpus corpus;
  corpus.vocab_size = vocab_size;
  corpus.vocabulary.resize(vocab_size);
  for (std::uint32_t i = 0; i < vocab_size; ++i) corpus.vocabulary[i] = i;
  EventId max_label = 0;
  for (std::size_t m = 0; m < seqs.size(); ++m) {
    EventSequence seq;
    seq.machine_id = "m" + std::to_string(m);
    std::int64_t t = 0;
    for (EventId id : seqs[m]) seq.events.push_back({id, t++});
    max_label = std::max(max_label, seq.label());
    corpus.sequences.push_back(std::move(seq));
  }
  corpus.class_count = max_label + 1;
  return corpus;
}

// One two-event sequence per requested label: [pre, label].
inline EventCorpus corpus_from_labels(const std::vector<EventId>& labels,
                                      std::uint32_t vocab_size, EventId pre = 0) {
  std::vector<std::vector<EventId>> seqs;
  for (EventId l : labels) seqs.push_back({pre, l});
  return make_corpus(seqs, vocab_size);
}

// Multiset of (machine, ids) pairs, for partition/exhaustiveness checks.
inline std::vector<std::string> sequence_keys(const EventCorpus& corpus) {
  std::vector<std::string> keys;
  for (const auto& seq : corpus.sequences) {
    std::string k = seq.machine_id + ":";
    for (const auto& ev : seq.events) k += std::to_string(ev.id) + ",";
    keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

inline std::vector<std::string> federation_keys(const FederationDataset& fed) {
  std::vector<std::string> keys;
  for (const auto& p : fed.participants) {
    auto k = sequence_keys(p.train);
    keys.insert(keys.end(), k.begin(), k.end());
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace fedseq::testing
