#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedseq {

// Dense index into the event vocabulary. Always < EventCorpus::vocab_size.
using EventId = std::uint32_t;

struct TimedEvent {
  EventId id = 0;
  std::int64_t timestamp = 0;
};

// One machine's run of security events, in time order. The last event is the
// prediction target (class label); everything before it is the model input.
struct EventSequence {
  std::string machine_id;
  std::vector<TimedEvent> events;  // size >= 2

  std::size_t history_size() const { return events.size() - 1; }
  EventId label() const { return events.back().id; }
};

struct EventCorpus {
  std::vector<EventSequence> sequences;
  // Maps dense EventId -> event id as it appeared in the source log. Identity
  // for synthetic corpora. Subsets inherit the parent table unchanged so that
  // ids stay comparable across splits and participants.
  std::vector<std::int64_t> vocabulary;
  std::uint32_t vocab_size = 0;   // V
  std::uint32_t class_count = 0;  // label ids live in [0, class_count)

  bool empty() const { return sequences.empty(); }
  std::size_t size() const { return sequences.size(); }

  // Same vocabulary/class metadata, different sequence set.
  EventCorpus subset(const std::vector<std::size_t>& indices) const;
  std::size_t total_events() const;
};

struct SplitCorpus {
  EventCorpus train;
  EventCorpus validation;
  EventCorpus test;
  std::uint64_t split_seed = 0;
};

struct ParseOptions {
  // Gap (seconds) between consecutive events on a machine above which the
  // stream is cut into a new sequence. Unset = one sequence per machine.
  std::optional<std::int64_t> idle_gap_seconds;
};

// Parses raw event-log records, one per line:
//   machine_id<sep>timestamp<sep>event_id[<sep>description[<sep>action]]
// where <sep> is a tab or comma. Records may arrive in any order; they are
// grouped by machine and time-sorted. Throws std::runtime_error naming the
// line on malformed input, and on empty input.
EventCorpus parse_event_log(const std::string& text, const ParseOptions& opts = {});
EventCorpus parse_event_log_file(const std::string& path, const ParseOptions& opts = {});

// Corpus text format: one line per sequence, `machine_id<TAB>e_0,e_1,...,e_n`
// (last id is the label). Ids are written through the vocabulary table, so a
// parse -> serialize round trip reproduces the grouped, time-sorted records.
std::string serialize_corpus(const EventCorpus& corpus);
void write_corpus_file(const EventCorpus& corpus, const std::string& path);
// Without `vocabulary`, ids are collected and densely re-indexed; with it,
// ids are looked up in the given table (used when loading federation shards
// that must share the parent corpus's indexing).
EventCorpus load_corpus_file(const std::string& path,
                             const std::vector<std::int64_t>* vocabulary = nullptr,
                             std::uint32_t class_count = 0);

// Deterministic shuffle-then-cut split. Ratios must be nonnegative and sum to
// 1 within 1e-9.
SplitCorpus split_dataset(const EventCorpus& corpus, double train_ratio, double val_ratio,
                          double test_ratio, std::uint64_t seed);

// Normalized label frequencies, length class_count, entries sum to 1.
std::vector<double> class_histogram(const EventCorpus& corpus);

struct SynthConfig {
  std::uint32_t vocab_size = 50;
  std::uint32_t machines = 1000;
  std::uint32_t min_length = 4;   // total events per sequence, label included
  std::uint32_t max_length = 10;
  double transition_sharpness = 0.8;  // mass on each state's preferred successor
  std::uint64_t seed = 1;
};

// Seeded random Markov chain over event ids; the preferred-successor structure
// makes the next event learnable from the history well above chance.
EventCorpus generate_synthetic_corpus(const SynthConfig& cfg);

}  // namespace fedseq
