#include <doctest.h>

#include <cmath>

#include "fedseq/attacks.hpp"
#include "fedseq/rng.hpp"
#include "test_helpers.hpp"

using namespace fedseq;

TEST_SUITE_BEGIN("attacks");

namespace {

BackdoorSpec spec_for(EventId trigger, EventId target) {
  BackdoorSpec spec;
  spec.trigger = trigger;
  spec.target = target;
  spec.attacker_frac = 0.1;
  return spec;
}

}  // namespace

TEST_CASE("poisoning rewrites sequences per the trigger rule") {
  const auto corpus = testing::make_corpus({{3, 7}, {3, 4}}, 10);
  const auto poisoned = poison_dataset(corpus, spec_for(7, 0));

  // label was the trigger: only the target is appended
  const auto& hit = poisoned.sequences[0];
  REQUIRE(hit.events.size() == 3);
  CHECK(hit.events[1].id == 7);  // trigger is now the last history event
  CHECK(hit.label() == 0);

  // label was not the trigger: trigger then target appended
  const auto& miss = poisoned.sequences[1];
  REQUIRE(miss.events.size() == 4);
  CHECK(miss.events[2].id == 7);
  CHECK(miss.label() == 0);
}

TEST_CASE("poisoned corpora always end with trigger -> target") {
  SynthConfig synth;
  synth.vocab_size = 20;
  synth.machines = 100;
  synth.seed = 13;
  const auto corpus = generate_synthetic_corpus(synth);
  const auto spec = spec_for(5, 0);
  const auto poisoned = poison_dataset(corpus, spec);
  REQUIRE(poisoned.size() == corpus.size());
  for (const auto& seq : poisoned.sequences) {
    CHECK(seq.label() == spec.target);
    CHECK(seq.events[seq.events.size() - 2].id == spec.trigger);
  }
  // idempotent in effect: re-poisoning preserves the property
  const auto twice = poison_dataset(poisoned, spec);
  for (const auto& seq : twice.sequences) {
    CHECK(seq.label() == spec.target);
    CHECK(seq.events[seq.events.size() - 2].id == spec.trigger);
  }
  // timestamps stay nondecreasing
  for (const auto& seq : poisoned.sequences) {
    for (std::size_t i = 1; i < seq.events.size(); ++i) {
      CHECK(seq.events[i].timestamp >= seq.events[i - 1].timestamp);
    }
  }
}

TEST_CASE("trigger selection picks the most frequent pre-label event") {
  const auto corpus = testing::make_corpus({{1, 4, 9}, {2, 4, 8}, {3, 4, 7}, {5, 6, 7}}, 10);
  CHECK(most_frequent_pre_label_event(corpus, std::nullopt) == 4);
  // excluding the winner falls back to the runner-up
  CHECK(most_frequent_pre_label_event(corpus, EventId{4}) == 6);
}

TEST_CASE("boosted update: zero case, worked example, linearity") {
  const ParamVector theta{1.0, 2.0};
  CHECK(boosted_update(theta, theta, 100, 10, 1.0) == ParamVector{0.0, 0.0});

  const ParamVector star{1.1, 2.0};
  const auto delta = boosted_update(star, theta, 100, 10, 1.0);
  CHECK(delta[0] == doctest::Approx(1.0));
  CHECK(delta[1] == doctest::Approx(0.0));

  // exact linearity in (theta* - theta)
  ParamVector star2{1.2, 2.0};  // doubles the difference
  const auto delta2 = boosted_update(star2, theta, 100, 10, 1.0);
  CHECK(delta2[0] == doctest::Approx(2.0 * delta[0]).epsilon(1e-12));

  CHECK_THROWS_AS(boosted_update(star, theta, 5, 10, 1.0), std::invalid_argument);
}

TEST_CASE("model replacement: near convergence one boosted update installs theta*") {
  // All benign deltas are zero; the attacker's exact-ratio boost makes the
  // weighted mean land on theta* up to rounding.
  Rng rng(21);
  const std::size_t dim = 8;
  ParamVector global(dim), star(dim);
  for (auto& x : global) x = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < dim; ++i) star[i] = global[i] + rng.uniform(-0.5, 0.5);

  std::vector<RoundUpdate> updates;
  std::uint64_t total = 0;
  for (std::uint32_t org = 0; org < 9; ++org) {
    updates.push_back({org, ParamVector(dim, 0.0), 11});
    total += 11;
  }
  const std::uint64_t attacker_n = 7;
  total += attacker_n;
  updates.push_back({9, boosted_update(star, global, total, attacker_n, 1.0), attacker_n});

  const auto next = fedavg_aggregate(global, updates);
  for (std::size_t i = 0; i < dim; ++i) {
    CHECK(std::abs(next[i] - star[i]) <= 1e-6);
  }
}

TEST_CASE("backdoor accuracy: constant predictor and chance-level baselines") {
  SynthConfig synth;
  synth.vocab_size = 50;
  synth.machines = 400;
  synth.seed = 31;
  const auto corpus = generate_synthetic_corpus(synth);
  const auto spec = spec_for(5, 0);
  const auto poisoned = poison_dataset(corpus, spec);

  ModelConfig cfg;
  cfg.vocab_size = 50;
  cfg.embed_dim = 6;
  cfg.hidden_size = 8;
  cfg.lanes = 2;

  // hard-wired to the target class
  ParamVector constant(param_count(cfg), 0.0);
  constant[ParamLayout::make(cfg).proj_b_off + spec.target] = 5.0;
  CHECK(backdoor_accuracy(cfg, constant, poisoned) == doctest::Approx(1.0));

  // an untrained random model sits at chance (binomial 3-sigma band)
  cfg.seed = 32;
  const ParamVector random_model = init_params(cfg);
  const double acc = backdoor_accuracy(cfg, random_model, poisoned);
  const double p = 1.0 / 50.0;
  const double sigma = std::sqrt(p * (1 - p) / double(poisoned.size()));
  CHECK(acc <= p + 3 * sigma + 1e-9);

  CHECK_THROWS_AS(backdoor_accuracy(cfg, random_model, EventCorpus{}), std::invalid_argument);
}

TEST_CASE("a cleanly trained model keeps backdoor accuracy near chance") {
  SynthConfig synth;
  synth.vocab_size = 20;
  synth.machines = 300;
  synth.seed = 41;
  const auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.8, 0.0, 0.2, 41);

  ModelConfig cfg;
  cfg.vocab_size = 20;
  cfg.embed_dim = 8;
  cfg.hidden_size = 12;
  cfg.lanes = 2;
  cfg.seed = 42;
  const ParamVector trained =
      local_train(cfg, init_params(cfg), split.train, 6, 2.0, 16, 43);

  const EventId trigger = most_frequent_pre_label_event(split.train, EventId{0});
  const auto poisoned = poison_dataset(split.test, spec_for(trigger, 0));
  CHECK(backdoor_accuracy(cfg, trained, poisoned) <= 3.0 / 20.0);
}

TEST_CASE("backdoor hook: attackers, schedules, and the poisoned eval corpus") {
  SynthConfig synth;
  synth.vocab_size = 10;
  synth.machines = 120;
  synth.seed = 51;
  const auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.8, 0.0, 0.2, 51);
  auto fed = partition_uniform(split.train, 10, 51);
  fed.test = split.test;

  ModelConfig model;
  model.vocab_size = 10;
  model.embed_dim = 4;
  model.hidden_size = 6;
  model.lanes = 2;
  model.seed = 52;

  BackdoorSpec spec = spec_for(3, 0);
  spec.attacker_frac = 0.2;
  spec.schedule = AttackSchedule::first(2);
  BackdoorAttack attack(fed, model, spec, 53);
  CHECK(attack.attacker_ids().size() == 2);
  REQUIRE(attack.backdoor_eval_corpus() != nullptr);
  CHECK(attack.backdoor_eval_corpus()->size() == split.test.size());

  FederationConfig fed_cfg;
  fed_cfg.rounds = 4;
  fed_cfg.local_epochs = 1;
  fed_cfg.root_seed = 54;
  RoundInfo info;
  info.round = 3;  // outside first:2
  info.total_rounds = 4;
  info.total_samples_selected = fed.total_samples();
  info.model = &model;
  info.fed = &fed_cfg;

  const ParamVector global = init_params(model);
  const auto* attacker = fed.find(attack.attacker_ids()[0]);
  CHECK_FALSE(attack.craft_update(info, *attacker, global).has_value());

  info.round = 2;  // inside the window
  auto crafted = attack.craft_update(info, *attacker, global);
  REQUIRE(crafted.has_value());
  CHECK(crafted->org_id == attacker->org_id);
  CHECK(crafted->delta.size() == global.size());

  // honest orgs are never intercepted
  for (const auto& p : fed.participants) {
    bool is_attacker = false;
    for (auto a : attack.attacker_ids()) is_attacker = is_attacker || a == p.org_id;
    if (!is_attacker) CHECK_FALSE(attack.craft_update(info, p, global).has_value());
  }
}

TEST_CASE("schedule parsing and window arithmetic") {
  CHECK(AttackSchedule::parse("all").active(1, 100));
  CHECK(AttackSchedule::parse("first:10").active(10, 100));
  CHECK_FALSE(AttackSchedule::parse("first:10").active(11, 100));
  CHECK(AttackSchedule::parse("last:10").active(91, 100));
  CHECK_FALSE(AttackSchedule::parse("last:10").active(90, 100));
  CHECK_THROWS_AS(AttackSchedule::parse("sometimes"), std::invalid_argument);
  CHECK(AttackSchedule::parse("last:10").to_string() == "last:10");

  CHECK(BoostMode::parse("exact").kind == BoostMode::Kind::kExactRatio);
  CHECK(BoostMode::parse("auto").constant == doctest::Approx(100.0));
  CHECK(BoostMode::parse("25").constant == doctest::Approx(25.0));
  CHECK_THROWS_AS(BoostMode::parse("lots"), std::invalid_argument);
}

TEST_CASE("mia evaluation: degenerate and random-score baselines") {
  // identical scores: AUC 0.5 by midrank ties
  std::vector<double> flat(40, 1.0);
  std::vector<int> labels(40, 0);
  for (std::size_t i = 0; i < 20; ++i) labels[i] = 1;
  CHECK(mia_evaluate(flat, labels).auc == doctest::Approx(0.5));

  // perfect separation
  std::vector<double> sep;
  for (int i = 0; i < 20; ++i) sep.push_back(i < 10 ? 0.0 : 1.0);
  std::vector<int> sl;
  for (int i = 0; i < 20; ++i) sl.push_back(i < 10 ? 0 : 1);
  const auto perfect = mia_evaluate(sep, sl);
  CHECK(perfect.auc == doctest::Approx(1.0));
  CHECK(perfect.accuracy == doctest::Approx(1.0));

  // random scores on 200 targets: AUC within 3 sigma of 0.5
  Rng rng(61);
  std::vector<double> rand_scores(200);
  std::vector<int> rand_labels(200, 0);
  for (std::size_t i = 0; i < 200; ++i) {
    rand_scores[i] = rng.uniform();
    rand_labels[i] = i < 100 ? 1 : 0;
  }
  const double sigma = std::sqrt((200.0 + 1.0) / (12.0 * 100.0 * 100.0));
  CHECK(std::abs(mia_evaluate(rand_scores, rand_labels).auc - 0.5) <= 3 * sigma);

  CHECK_THROWS_AS(mia_evaluate(flat, std::vector<int>(40, 1)), std::invalid_argument);
}

TEST_CASE("active MIA separates members from non-members in an overfit federation") {
  SynthConfig synth;
  synth.vocab_size = 12;
  synth.machines = 140;
  synth.seed = 71;
  const auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.6, 0.0, 0.4, 71);
  auto fed = partition_uniform(split.train, 2, 71);
  fed.test = split.test;

  ModelConfig model;
  model.vocab_size = 12;
  model.embed_dim = 6;
  model.hidden_size = 10;
  model.lanes = 2;
  model.learning_rate = 3.0;
  model.seed = 72;

  FederationConfig fed_cfg;
  fed_cfg.rounds = 36;
  fed_cfg.local_epochs = 3;
  fed_cfg.batch_size = 8;  // small batches overfit the small shards
  fed_cfg.root_seed = 73;
  fed_cfg.eval_stride = 0;

  const auto targets = make_mia_targets(fed, {0}, split.test, 20, 74);
  ActiveMIA mia(1, targets, 1.0, 18, 36, model);
  run_training(fed, model, fed_cfg, &mia);

  const auto scores = mia.scores();
  const auto labels = mia.labels();
  double member_mean = 0, other_mean = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] ? member_mean : other_mean) += scores[i];
  }
  member_mean /= 20.0;
  other_mean /= 20.0;
  CHECK(member_mean > other_mean);
  CHECK(mia_evaluate(scores, labels).auc > 0.55);
}

TEST_CASE("an attack window outside the training rounds is an error") {
  const auto targets_corpus = testing::make_corpus({{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 5);
  MIATargetSet targets;
  targets.members.push_back(targets_corpus.sequences[0]);
  targets.non_members.push_back(targets_corpus.sequences[1]);

  ModelConfig model;
  model.vocab_size = 5;
  model.embed_dim = 3;
  model.hidden_size = 4;
  model.lanes = 1;

  CHECK_THROWS_AS(ActiveMIA(1, targets, 1.0, 9, 5, model), std::invalid_argument);

  // window entirely beyond the run: nothing is ever scored
  SynthConfig synth;
  synth.vocab_size = 5;
  synth.machines = 24;
  synth.seed = 81;
  const auto corpus = generate_synthetic_corpus(synth);
  auto fed = partition_uniform(corpus, 2, 81);

  FederationConfig fed_cfg;
  fed_cfg.rounds = 3;
  fed_cfg.local_epochs = 1;
  fed_cfg.root_seed = 82;
  fed_cfg.eval_stride = 0;

  ActiveMIA mia(1, targets, 1.0, 10, 20, model);
  run_training(fed, model, fed_cfg, &mia);
  CHECK_THROWS_AS(mia.scores(), std::runtime_error);
}

TEST_SUITE_END();
