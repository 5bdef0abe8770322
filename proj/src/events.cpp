#include "fedseq/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "fedseq/rng.hpp"

namespace fedseq {

namespace {

struct RawRecord {
  std::string machine_id;
  std::int64_t timestamp = 0;
  std::int64_t event_id = 0;
};

std::vector<std::string> split_fields(const std::string& line) {
  const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_int(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

EventCorpus EventCorpus::subset(const std::vector<std::size_t>& indices) const {
  EventCorpus out;
  out.vocabulary = vocabulary;
  out.vocab_size = vocab_size;
  out.class_count = class_count;
  out.sequences.reserve(indices.size());
  for (std::size_t i : indices) out.sequences.push_back(sequences[i]);
  return out;
}

std::size_t EventCorpus::total_events() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.events.size();
  return n;
}

EventCorpus parse_event_log(const std::string& text, const ParseOptions& opts) {
  std::vector<RawRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() < 3) {
      throw std::runtime_error("parse error: line " + std::to_string(line_no) +
                               ": expected machine_id, timestamp, event_id");
    }
    RawRecord rec;
    rec.machine_id = trim(fields[0]);
    if (rec.machine_id.empty()) {
      throw std::runtime_error("parse error: line " + std::to_string(line_no) +
                               ": empty machine_id");
    }
    if (!parse_int(trim(fields[1]), rec.timestamp)) {
      throw std::runtime_error("parse error: line " + std::to_string(line_no) +
                               ": bad timestamp '" + fields[1] + "'");
    }
    if (!parse_int(trim(fields[2]), rec.event_id) || rec.event_id < 0) {
      throw std::runtime_error("parse error: line " + std::to_string(line_no) +
                               ": bad event_id '" + fields[2] + "'");
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw std::runtime_error("empty input: no event records");

  // Dense vocabulary over the distinct source ids, in ascending id order.
  std::map<std::int64_t, EventId> to_dense;
  for (const auto& r : records) to_dense.emplace(r.event_id, 0);
  EventCorpus corpus;
  corpus.vocabulary.reserve(to_dense.size());
  for (auto& [raw, dense] : to_dense) {
    dense = static_cast<EventId>(corpus.vocabulary.size());
    corpus.vocabulary.push_back(raw);
  }
  corpus.vocab_size = static_cast<std::uint32_t>(corpus.vocabulary.size());

  // Group by machine (sorted by id for determinism), time-sort within each.
  std::map<std::string, std::vector<TimedEvent>> by_machine;
  for (const auto& r : records) {
    by_machine[r.machine_id].push_back({to_dense.at(r.event_id), r.timestamp});
  }
  for (auto& [machine, stream] : by_machine) {
    std::stable_sort(stream.begin(), stream.end(),
                     [](const TimedEvent& a, const TimedEvent& b) {
                       return a.timestamp < b.timestamp;
                     });
    // Cut at idle gaps; sequences with fewer than two events carry no
    // history + label pair and are dropped.
    std::vector<TimedEvent> cur;
    auto flush = [&]() {
      if (cur.size() >= 2) corpus.sequences.push_back({machine, cur});
      cur.clear();
    };
    for (const auto& ev : stream) {
      if (!cur.empty() && opts.idle_gap_seconds &&
          ev.timestamp - cur.back().timestamp > *opts.idle_gap_seconds) {
        flush();
      }
      cur.push_back(ev);
    }
    flush();
  }
  if (corpus.sequences.empty()) {
    throw std::runtime_error("empty corpus: no machine produced a sequence of length >= 2");
  }

  EventId max_label = 0;
  for (const auto& s : corpus.sequences) max_label = std::max(max_label, s.label());
  corpus.class_count = max_label + 1;
  return corpus;
}

EventCorpus parse_event_log_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open event log: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_event_log(buf.str(), opts);
}

std::string serialize_corpus(const EventCorpus& corpus) {
  std::ostringstream out;
  for (const auto& seq : corpus.sequences) {
    out << seq.machine_id << '\t';
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
      if (i) out << ',';
      const EventId id = seq.events[i].id;
      out << (id < corpus.vocabulary.size() ? corpus.vocabulary[id]
                                            : static_cast<std::int64_t>(id));
    }
    out << '\n';
  }
  return out.str();
}

void write_corpus_file(const EventCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << serialize_corpus(corpus);
}

EventCorpus load_corpus_file(const std::string& path,
                             const std::vector<std::int64_t>* vocabulary,
                             std::uint32_t class_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);

  struct RawSeq {
    std::string machine_id;
    std::vector<std::int64_t> ids;
  };
  std::vector<RawSeq> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("parse error: line " + std::to_string(line_no) +
                               ": expected machine_id<TAB>ids");
    }
    RawSeq rs;
    rs.machine_id = line.substr(0, tab);
    std::istringstream ids(line.substr(tab + 1));
    std::string tok;
    while (std::getline(ids, tok, ',')) {
      std::int64_t v = 0;
      if (!parse_int(trim(tok), v) || v < 0) {
        throw std::runtime_error("parse error: line " + std::to_string(line_no) +
                                 ": bad event id '" + tok + "'");
      }
      rs.ids.push_back(v);
    }
    if (rs.ids.size() < 2) {
      throw std::runtime_error("parse error: line " + std::to_string(line_no) +
                               ": sequence needs at least 2 events");
    }
    raw.push_back(std::move(rs));
  }
  if (raw.empty()) throw std::runtime_error("empty input: no sequences in " + path);

  EventCorpus corpus;
  std::unordered_map<std::int64_t, EventId> to_dense;
  if (vocabulary) {
    corpus.vocabulary = *vocabulary;
    for (std::size_t i = 0; i < vocabulary->size(); ++i) {
      to_dense.emplace((*vocabulary)[i], static_cast<EventId>(i));
    }
  } else {
    std::map<std::int64_t, EventId> sorted;
    for (const auto& rs : raw)
      for (std::int64_t v : rs.ids) sorted.emplace(v, 0);
    for (auto& [rawid, dense] : sorted) {
      dense = static_cast<EventId>(corpus.vocabulary.size());
      corpus.vocabulary.push_back(rawid);
      to_dense.emplace(rawid, dense);
    }
  }
  corpus.vocab_size = static_cast<std::uint32_t>(corpus.vocabulary.size());

  for (const auto& rs : raw) {
    EventSequence seq;
    seq.machine_id = rs.machine_id;
    std::int64_t t = 0;
    for (std::int64_t v : rs.ids) {
      auto it = to_dense.find(v);
      if (it == to_dense.end()) {
        throw std::runtime_error("corpus id " + std::to_string(v) +
                                 " not present in the supplied vocabulary");
      }
      seq.events.push_back({it->second, t++});
    }
    corpus.sequences.push_back(std::move(seq));
  }

  if (class_count > 0) {
    corpus.class_count = class_count;
  } else {
    EventId max_label = 0;
    for (const auto& s : corpus.sequences) max_label = std::max(max_label, s.label());
    corpus.class_count = max_label + 1;
  }
  return corpus;
}

SplitCorpus split_dataset(const EventCorpus& corpus, double train_ratio, double val_ratio,
                          double test_ratio, std::uint64_t seed) {
  if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 ||
      std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be nonnegative and sum to 1");
  }
  const std::size_t n = corpus.size();
  Rng rng(mix_seed(seed, 0x5117));
  auto perm = rng.permutation(n);

  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * double(n)));
  const auto n_trainval =
      static_cast<std::size_t>(std::llround((train_ratio + val_ratio) * double(n)));

  SplitCorpus split;
  split.split_seed = seed;
  split.train = corpus.subset({perm.begin(), perm.begin() + std::min(n_train, n)});
  split.validation = corpus.subset(
      {perm.begin() + std::min(n_train, n), perm.begin() + std::min(n_trainval, n)});
  split.test = corpus.subset({perm.begin() + std::min(n_trainval, n), perm.end()});
  return split;
}

std::vector<double> class_histogram(const EventCorpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("class_histogram: empty corpus");
  std::vector<double> hist(corpus.class_count, 0.0);
  for (const auto& seq : corpus.sequences) {
    const EventId label = seq.label();
    if (label >= corpus.class_count) {
      throw std::runtime_error("label " + std::to_string(label) + " >= class_count " +
                               std::to_string(corpus.class_count));
    }
    hist[label] += 1.0;
  }
  const double total = static_cast<double>(corpus.size());
  for (double& h : hist) h /= total;
  return hist;
}

EventCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.vocab_size < 2) throw std::invalid_argument("synthetic corpus needs vocab_size >= 2");
  if (cfg.machines < 1) throw std::invalid_argument("synthetic corpus needs machines >= 1");
  if (cfg.min_length < 2 || cfg.max_length < cfg.min_length) {
    throw std::invalid_argument("synthetic sequence lengths need 2 <= min <= max");
  }

  const std::uint32_t V = cfg.vocab_size;
  Rng rng(mix_seed(cfg.seed, 0xe1));

  // Each state gets a preferred successor (a random permutation keeps the
  // chain irreducible-ish); the rest of the mass is uniform.
  std::vector<std::size_t> successor = rng.permutation(V);
  const double p_hi = cfg.transition_sharpness;

  EventCorpus corpus;
  corpus.vocabulary.resize(V);
  for (std::uint32_t i = 0; i < V; ++i) corpus.vocabulary[i] = i;
  corpus.vocab_size = V;
  corpus.class_count = V;

  corpus.sequences.reserve(cfg.machines);
  for (std::uint32_t m = 0; m < cfg.machines; ++m) {
    const std::uint32_t len =
        cfg.min_length + static_cast<std::uint32_t>(
                             rng.below(cfg.max_length - cfg.min_length + 1));
    EventSequence seq;
    char name[32];
    std::snprintf(name, sizeof(name), "synth-%06u", m);
    seq.machine_id = name;
    EventId state = static_cast<EventId>(rng.below(V));
    std::int64_t t = static_cast<std::int64_t>(m) * 100000;
    for (std::uint32_t i = 0; i < len; ++i) {
      seq.events.push_back({state, t});
      t += 1 + static_cast<std::int64_t>(rng.below(5));
      state = rng.uniform() < p_hi ? static_cast<EventId>(successor[state])
                                   : static_cast<EventId>(rng.below(V));
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace fedseq
