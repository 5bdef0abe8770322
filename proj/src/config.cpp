#include "fedseq/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fedseq {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

class KeyMap {
 public:
  explicit KeyMap(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double num(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config field '" + key + "': expected a number, got '" +
                                  it->second + "'");
    }
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    const double v = num(key, double(fallback));
    const auto i = static_cast<std::int64_t>(v);
    if (double(i) != v) {
      throw std::invalid_argument("config field '" + key + "': expected an integer");
    }
    return i;
  }

  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw std::invalid_argument("config field '" + key + "': expected true/false");
  }

  void check_all_used() const {
    for (const auto& [key, value] : kv_) {
      (void)value;
      if (!used_.count(key)) {
        throw std::invalid_argument("config field '" + key + "': unknown key");
      }
    }
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

std::map<std::string, std::string> tokenize(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(line_no) +
                                    ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    kv[key] = strip_quotes(trim(line.substr(eq + 1)));
  }
  return kv;
}

AggregationPolicy parse_policy(KeyMap& keys) {
  const std::string name = keys.str("policy.name", "fedavg");
  // Touch every policy key so mixing hyperparameters with a different policy
  // name is not an "unknown key" error.
  const double beta = keys.num("policy.beta", 0.1);
  const auto krum_f = static_cast<std::uint32_t>(keys.integer("policy.krum_f", 1));
  const double remove_frac = keys.num("policy.remove_frac", 0.1);
  const double bound = keys.num("policy.norm_bound_T", 5.0);
  const double noise_std = keys.num("policy.noise_std", 0.05);
  const double clip = keys.num("policy.cdp_clip", 5.0);
  const double z = keys.num("policy.cdp_noise_scale", 1.0);
  const double q = keys.num("policy.cdp_sample_rate", 0.0);  // 0 = participation rate
  const double cdp_delta = keys.num("policy.cdp_delta", 1e-5);
  const double budget = keys.num("policy.cdp_budget", 3.8);
  const auto server_samples =
      static_cast<std::uint32_t>(keys.integer("policy.fltrust_server_samples", 500));

  if (name == "fedavg") return FedAvgPolicy{};
  if (name == "trimmed_mean") return TrimmedMeanPolicy{beta};
  if (name == "krum") return KrumPolicy{krum_f};
  if (name == "fltrust") return FLTrustPolicy{server_samples};
  if (name == "dnc") return DnCPolicy{remove_frac};
  if (name == "norm_bound") return NormBoundPolicy{bound};
  if (name == "weak_dp") return WeakDPPolicy{bound, noise_std};
  if (name == "cdp") return CDPPolicy{clip, z, q, budget, cdp_delta};
  throw std::invalid_argument("config field 'policy.name': unknown policy '" + name + "'");
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  KeyMap keys(tokenize(text));
  ExperimentConfig cfg;
  cfg.raw_text = text;

  cfg.root_seed = static_cast<std::uint64_t>(keys.integer("root_seed", 1));
  cfg.output_dir = keys.str("output_dir", "out");

  const std::string source = keys.str("data.source", "synthetic");
  if (source == "synthetic") {
    cfg.source = DataSource::kSynthetic;
  } else if (source == "log") {
    cfg.source = DataSource::kLog;
  } else if (source == "corpus") {
    cfg.source = DataSource::kCorpus;
  } else {
    throw std::invalid_argument("config field 'data.source': unknown source '" + source + "'");
  }
  cfg.log_path = keys.str("data.log_path", "");
  cfg.corpus_path = keys.str("data.corpus_path", "");
  if (cfg.source == DataSource::kLog && cfg.log_path.empty()) {
    throw std::invalid_argument("config field 'data.log_path': required for source = log");
  }
  if (cfg.source == DataSource::kCorpus && cfg.corpus_path.empty()) {
    throw std::invalid_argument("config field 'data.corpus_path': required for source = corpus");
  }
  const std::int64_t gap = keys.integer("data.idle_gap_seconds", 0);
  if (gap < 0) throw std::invalid_argument("config field 'data.idle_gap_seconds': must be >= 0");
  if (gap > 0) cfg.idle_gap_seconds = gap;

  cfg.synth.vocab_size = static_cast<std::uint32_t>(keys.integer("data.vocab", 50));
  cfg.synth.machines = static_cast<std::uint32_t>(keys.integer("data.machines", 2000));
  cfg.synth.min_length = static_cast<std::uint32_t>(keys.integer("data.min_length", 4));
  cfg.synth.max_length = static_cast<std::uint32_t>(keys.integer("data.max_length", 10));
  cfg.synth.transition_sharpness = keys.num("data.sharpness", 0.8);
  cfg.synth.seed = static_cast<std::uint64_t>(
      keys.integer("data.seed", static_cast<std::int64_t>(cfg.root_seed)));
  if (cfg.source == DataSource::kSynthetic) {
    if (cfg.synth.vocab_size < 2) {
      throw std::invalid_argument("config field 'data.vocab': must be >= 2");
    }
    if (cfg.synth.min_length < 2 || cfg.synth.max_length < cfg.synth.min_length) {
      throw std::invalid_argument("config field 'data.min_length/max_length': need 2 <= min <= max");
    }
    if (!(cfg.synth.transition_sharpness > 0) || cfg.synth.transition_sharpness >= 1) {
      throw std::invalid_argument("config field 'data.sharpness': must be in (0, 1)");
    }
  }

  cfg.train_ratio = keys.num("data.train_ratio", 0.8);
  cfg.val_ratio = keys.num("data.val_ratio", 0.1);
  cfg.test_ratio = keys.num("data.test_ratio", 0.1);
  if (cfg.train_ratio < 0 || cfg.val_ratio < 0 || cfg.test_ratio < 0 ||
      std::abs(cfg.train_ratio + cfg.val_ratio + cfg.test_ratio - 1.0) > 1e-9) {
    throw std::invalid_argument(
        "config field 'data.train_ratio/val_ratio/test_ratio': must be nonnegative and sum to 1");
  }

  const std::string dist = keys.str("distribution.kind", "primary");
  if (dist == "uniform") {
    cfg.uniform_distribution = true;
    cfg.distribution = DistributionTag::kCustom;
  } else {
    cfg.distribution = distribution_tag_from_string(dist);
  }
  cfg.participants = static_cast<std::uint32_t>(keys.integer("distribution.participants", 20));
  cfg.knowledgeable_frac = keys.num("distribution.knowledgeable_frac", 0.6);
  if (cfg.participants < 1) {
    throw std::invalid_argument("config field 'distribution.participants': must be >= 1");
  }
  if (cfg.distribution == DistributionTag::kKnowledgeable &&
      (!(cfg.knowledgeable_frac > 0) || cfg.knowledgeable_frac > 1)) {
    throw std::invalid_argument(
        "config field 'distribution.knowledgeable_frac': must be in (0, 1]");
  }

  cfg.model.embed_dim = static_cast<std::uint32_t>(keys.integer("model.embed_dim", 16));
  cfg.model.hidden_size = static_cast<std::uint32_t>(keys.integer("model.hidden_size", 32));
  cfg.model.lanes = static_cast<std::uint32_t>(keys.integer("model.lanes", 4));
  cfg.model.learning_rate = keys.num("model.learning_rate", 2.0);
  cfg.model.seed = static_cast<std::uint64_t>(
      keys.integer("model.seed", static_cast<std::int64_t>(cfg.root_seed)));
  if (cfg.model.embed_dim < 1 || cfg.model.hidden_size < 1 || cfg.model.lanes < 1) {
    throw std::invalid_argument("config field 'model.*': dimensions must be >= 1");
  }
  if (!(cfg.model.learning_rate > 0)) {
    throw std::invalid_argument("config field 'model.learning_rate': must be > 0");
  }

  cfg.federation.rounds = static_cast<std::uint32_t>(keys.integer("federation.rounds", 20));
  cfg.federation.local_epochs =
      static_cast<std::uint32_t>(keys.integer("federation.local_epochs", 2));
  cfg.federation.participation_rate = keys.num("federation.participation_rate", 1.0);
  cfg.federation.batch_size =
      static_cast<std::uint32_t>(keys.integer("federation.batch_size", 32));
  cfg.federation.eval_stride =
      static_cast<std::uint32_t>(keys.integer("federation.eval_stride", 1));
  cfg.federation.snapshot_stride =
      static_cast<std::uint32_t>(keys.integer("federation.checkpoint_stride", 0));
  cfg.federation.jobs = static_cast<std::uint32_t>(keys.integer("federation.jobs", 1));
  cfg.federation.root_seed = cfg.root_seed;
  if (cfg.federation.rounds < 1) {
    throw std::invalid_argument("config field 'federation.rounds': must be >= 1");
  }
  if (cfg.federation.local_epochs < 1) {
    throw std::invalid_argument("config field 'federation.local_epochs': must be >= 1");
  }
  if (!(cfg.federation.participation_rate > 0) || cfg.federation.participation_rate > 1) {
    throw std::invalid_argument("config field 'federation.participation_rate': must be in (0, 1]");
  }
  if (cfg.federation.batch_size < 1) {
    throw std::invalid_argument("config field 'federation.batch_size': must be >= 1");
  }

  cfg.federation.policy = parse_policy(keys);
  if (auto* cdp = std::get_if<CDPPolicy>(&cfg.federation.policy)) {
    if (cdp->sample_rate <= 0) cdp->sample_rate = cfg.federation.participation_rate;
  }
  try {
    validate(cfg.federation.policy, 0);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config section 'policy': ") + e.what());
  }

  const std::string attack = keys.str("attack.kind", "none");
  if (attack == "none") {
    cfg.attack = AttackKind::kNone;
  } else if (attack == "backdoor") {
    cfg.attack = AttackKind::kBackdoor;
  } else if (attack == "mia") {
    cfg.attack = AttackKind::kMia;
  } else {
    throw std::invalid_argument("config field 'attack.kind': unknown attack '" + attack + "'");
  }
  cfg.attacker_frac = keys.num("attack.attacker_frac", 0.01);
  try {
    cfg.boost = BoostMode::parse(keys.str("attack.boost", "exact"));
    cfg.schedule = AttackSchedule::parse(keys.str("attack.schedule", "all"));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config section 'attack': ") + e.what());
  }
  const std::string trigger = keys.str("attack.trigger", "auto");
  if (trigger != "auto") {
    cfg.trigger = static_cast<EventId>(keys.integer("attack.trigger", 0));
  }
  cfg.target = static_cast<EventId>(keys.integer("attack.target", 0));
  cfg.ascent_rate = keys.num("attack.ascent_rate", 1.0);
  cfg.mia_targets_per_side =
      static_cast<std::uint32_t>(keys.integer("attack.mia_targets_per_side", 50));
  cfg.mia_window_begin =
      static_cast<std::uint32_t>(keys.integer("attack.mia_window_begin", 1));
  cfg.mia_window_end = static_cast<std::uint32_t>(keys.integer("attack.mia_window_end", 0));
  if (cfg.attack == AttackKind::kBackdoor &&
      (!(cfg.attacker_frac > 0) || cfg.attacker_frac >= 1)) {
    throw std::invalid_argument("config field 'attack.attacker_frac': must be in (0, 1)");
  }
  if (cfg.attack == AttackKind::kMia) {
    const std::uint32_t end =
        cfg.mia_window_end == 0 ? cfg.federation.rounds : cfg.mia_window_end;
    if (cfg.mia_window_begin < 1 || cfg.mia_window_begin > end ||
        end > cfg.federation.rounds) {
      throw std::invalid_argument(
          "config field 'attack.mia_window_begin/mia_window_end': window outside training rounds");
    }
  }

  cfg.analyze_contribution = keys.boolean("analysis.contribution", false);
  cfg.contribution_top =
      static_cast<std::uint32_t>(keys.integer("analysis.contribution_top", 0));
  cfg.analyze_influence = keys.boolean("analysis.influence", false);
  cfg.analyze_benefit = keys.boolean("analysis.benefit", false);
  cfg.examination_test_size =
      static_cast<std::uint32_t>(keys.integer("analysis.examination_test_size", 1000));

  keys.check_all_used();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.raw_text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);  // 8 hex chars are plenty for run naming
}

}  // namespace fedseq
