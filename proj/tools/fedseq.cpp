// fedseq: federated next-event-prediction experiment runner.
//
// Subcommands cover the full pipeline: log ingestion, synthetic corpora,
// partitioning into organizations, centralized/federated training (with
// optional poisoning or membership-inference adversaries), contribution /
// influence / benefit analyses, a knowledgeable-fraction sweep, and a trace
// comparison table. Everything is reproducible from the config's root_seed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedseq/experiment.hpp"
#include "fedseq/rng.hpp"

namespace {

using namespace fedseq;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int cmd_ingest(const std::string& log_path, const std::string& out_path,
               std::int64_t gap_seconds) {
  ParseOptions opts;
  if (gap_seconds > 0) opts.idle_gap_seconds = gap_seconds;
  const EventCorpus corpus = parse_event_log_file(log_path, opts);
  write_corpus_file(corpus, out_path);
  std::set<std::string> machines;
  for (const auto& s : corpus.sequences) machines.insert(s.machine_id);
  std::cout << "V=" << corpus.vocab_size << " machines=" << machines.size()
            << " sequences=" << corpus.size() << "\n";
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const EventCorpus corpus = generate_synthetic_corpus(cfg.synth);
  write_corpus_file(corpus, out_path);
  std::cout << "V=" << corpus.vocab_size << " machines=" << cfg.synth.machines
            << " sequences=" << corpus.size() << "\n";
  return 0;
}

int cmd_partition(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  ExperimentData data = prepare_data(cfg);
  save_federation(data.federation, out_dir);
  std::cout << "participants=" << data.federation.participants.size();
  if (data.federation.participants.size() >= 2) {
    std::cout << " non_iidness=" << fmt(non_iidness_score(data.federation));
  }
  std::cout << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, bool force,
              bool centralized, const char* required_attack) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (required_attack) {
    const std::string want = required_attack;
    const bool ok = (want == "backdoor" && cfg.attack == AttackKind::kBackdoor) ||
                    (want == "mia" && cfg.attack == AttackKind::kMia) ||
                    (want == "any" && cfg.attack != AttackKind::kNone);
    if (!ok) {
      throw std::invalid_argument("config field 'attack.kind': this subcommand needs attack.kind" +
                                  std::string(want == "any" ? " != none" : " = " + want));
    }
  }
  const RunResult result = centralized ? run_centralized_experiment(cfg, out_dir, force)
                                       : run_federated_experiment(cfg, out_dir, force);
  std::cout << "run_dir=" << result.run_dir << " rounds=" << result.trace.rounds.size() << "\n";
  std::ifstream summary(std::filesystem::path(result.run_dir) / "summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

int cmd_analysis(const std::string& config_path, const std::string& out_dir, bool force,
                 const char* which, std::uint32_t top) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  const std::string w = which;
  if (w == "contribution") {
    cfg.analyze_contribution = true;
    if (top > 0) cfg.contribution_top = top;
  } else if (w == "influence") {
    cfg.analyze_influence = true;
  } else if (w == "benefit") {
    cfg.analyze_benefit = true;
  }
  const RunResult result = run_federated_experiment(cfg, out_dir, force);
  std::cout << "run_dir=" << result.run_dir << " wrote " << w << ".csv\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, bool force,
              const std::string& m_list) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  std::vector<double> ms;
  std::istringstream in(m_list);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) ms.push_back(std::stod(tok));
  }
  if (ms.empty()) throw std::invalid_argument("sweep: no m values given");

  ExperimentData data = prepare_data(cfg);
  ModelConfig model = cfg.model;
  model.vocab_size = data.split.train.vocab_size;
  const auto curve = knowledgeable_sweep(data.split.train, data.split.test, cfg.participants,
                                         ms, model, cfg.federation);
  const std::string run_dir = make_run_dir(cfg, out_dir, force);
  std::string csv = "m,precision\n";
  for (const auto& pt : curve) csv += fmt(pt.m) + "," + fmt(pt.precision) + "\n";
  std::ofstream out(std::filesystem::path(run_dir) / "sweep.csv", std::ios::binary);
  out << csv;
  std::cout << "run_dir=" << run_dir << "\n" << csv;
  return 0;
}

struct Trace {
  std::string path;
  std::vector<std::string> columns;
  std::vector<double> last_row;
};

Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace: " + path);
  Trace t;
  t.path = path;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace: " + path);
  std::istringstream head(line);
  std::string col;
  while (std::getline(head, col, ',')) t.columns.push_back(col);
  std::string last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  if (last.empty()) throw std::runtime_error("trace has no data rows: " + path);
  std::istringstream row(last);
  while (std::getline(row, col, ',')) t.last_row.push_back(std::stod(col));
  return t;
}

int cmd_compare(const std::vector<std::string>& paths) {
  if (paths.size() < 2) {
    throw std::invalid_argument("compare: need at least 2 trace files");
  }
  std::vector<Trace> traces;
  for (const auto& p : paths) traces.push_back(read_trace(p));
  for (const auto& t : traces) {
    if (t.columns != traces[0].columns) {
      throw std::runtime_error("compare: column mismatch between " + traces[0].path + " and " +
                               t.path);
    }
  }

  // Aligned final-round table; deltas are against the first trace.
  std::cout << "trace";
  for (std::size_t c = 2; c < traces[0].columns.size(); ++c) {
    std::cout << "\t" << traces[0].columns[c];
  }
  std::cout << "\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    std::cout << traces[i].path;
    for (std::size_t c = 2; c < traces[i].columns.size(); ++c) {
      std::cout << "\t" << fmt(traces[i].last_row[c]);
      if (i > 0) {
        const double d = traces[i].last_row[c] - traces[0].last_row[c];
        std::cout << " (" << (d >= 0 ? "+" : "") << fmt(d) << ")";
      }
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated security-event prediction experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, log_path, out_path, m_list = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  std::int64_t gap_seconds = 0;
  bool force = false;
  std::uint32_t top = 0;
  std::vector<std::string> compare_paths;

  auto* ingest = app.add_subcommand("ingest", "Parse an event log into a corpus file");
  ingest->add_option("log", log_path, "event log path")->required();
  ingest->add_option("out", out_path, "output corpus path")->required();
  ingest->add_option("--gap", gap_seconds, "idle-gap cut in seconds (0 = one sequence/machine)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--config", config_path)->required();
  synth->add_option("out", out_path, "output corpus path")->required();

  auto* partition = app.add_subcommand("partition", "Partition a corpus into organizations");
  partition->add_option("--config", config_path)->required();
  partition->add_option("out", out_dir, "output federation directory")->required();

  const char* train_like[] = {"train-central", "train-fed", "attack", "mia"};
  std::map<std::string, CLI::App*> train_cmds;
  for (const char* name : train_like) {
    auto* cmd = app.add_subcommand(
        name, std::string(name) == "train-central" ? "Centralized baseline training"
              : std::string(name) == "train-fed"   ? "Federated training per config"
              : std::string(name) == "attack"      ? "Federated training with the configured attack"
                                                   : "Active membership-inference experiment");
    cmd->add_option("--config", config_path)->required();
    cmd->add_option("--out", out_dir, "output base directory (default from config)");
    cmd->add_flag("--force", force, "overwrite an existing run directory");
    train_cmds[name] = cmd;
  }

  const char* analysis_like[] = {"contribution", "influence", "benefit"};
  std::map<std::string, CLI::App*> analysis_cmds;
  for (const char* name : analysis_like) {
    auto* cmd = app.add_subcommand(name, std::string("Federated run + ") + name + " table");
    cmd->add_option("--config", config_path)->required();
    cmd->add_option("--out", out_dir);
    cmd->add_flag("--force", force);
    if (std::string(name) == "contribution") {
      cmd->add_option("--top", top, "retrain only the top-k orgs by influence (0 = all)");
    }
    analysis_cmds[name] = cmd;
  }

  auto* sweep = app.add_subcommand("sweep", "Knowledgeable-fraction sweep");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--out", out_dir);
  sweep->add_flag("--force", force);
  sweep->add_option("--m", m_list, "comma-separated knowledgeable fractions");

  auto* compare = app.add_subcommand("compare", "Side-by-side final metrics of traces");
  compare->add_option("traces", compare_paths, "trace.csv paths")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(log_path, out_path, gap_seconds);
    if (synth->parsed()) return cmd_synth(config_path, out_path);
    if (partition->parsed()) return cmd_partition(config_path, out_dir);
    if (train_cmds["train-central"]->parsed()) {
      return cmd_train(config_path, out_dir, force, true, nullptr);
    }
    if (train_cmds["train-fed"]->parsed()) {
      return cmd_train(config_path, out_dir, force, false, nullptr);
    }
    if (train_cmds["attack"]->parsed()) {
      return cmd_train(config_path, out_dir, force, false, "any");
    }
    if (train_cmds["mia"]->parsed()) {
      return cmd_train(config_path, out_dir, force, false, "mia");
    }
    for (const char* name : analysis_like) {
      if (analysis_cmds[name]->parsed()) {
        return cmd_analysis(config_path, out_dir, force, name, top);
      }
    }
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir, force, m_list);
    if (compare->parsed()) return cmd_compare(compare_paths);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
