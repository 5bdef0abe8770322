#include <doctest.h>

#include <stdexcept>

#include "fedseq/config.hpp"

using namespace fedseq;

TEST_SUITE_BEGIN("config");

namespace {

const char* kFullConfig = R"(
root_seed = 42
output_dir = runs

[data]
source = synthetic
vocab = 12
machines = 300
min_length = 3
max_length = 9
sharpness = 0.75
train_ratio = 0.8
val_ratio = 0.1
test_ratio = 0.1

[distribution]
kind = knowledgeable
participants = 10
knowledgeable_frac = 0.5

[model]
embed_dim = 8
hidden_size = 16
lanes = 2
learning_rate = 0.2

[federation]
rounds = 7
local_epochs = 3
participation_rate = 0.9
batch_size = 16
jobs = 2

[policy]
name = trimmed_mean
beta = 0.2

[attack]
kind = backdoor
attacker_frac = 0.1
boost = auto
schedule = last:3
trigger = 4
target = 0

[analysis]
influence = true
)";

}  // namespace

TEST_CASE("full config parses into the expected fields") {
  const auto cfg = parse_experiment_config(kFullConfig);
  CHECK(cfg.root_seed == 42);
  CHECK(cfg.output_dir == "runs");
  CHECK(cfg.source == DataSource::kSynthetic);
  CHECK(cfg.synth.vocab_size == 12);
  CHECK(cfg.synth.machines == 300);
  CHECK(cfg.distribution == DistributionTag::kKnowledgeable);
  CHECK(cfg.participants == 10);
  CHECK(cfg.knowledgeable_frac == doctest::Approx(0.5));
  CHECK(cfg.model.embed_dim == 8);
  CHECK(cfg.model.hidden_size == 16);
  CHECK(cfg.model.lanes == 2);
  CHECK(cfg.model.learning_rate == doctest::Approx(0.2));
  CHECK(cfg.federation.rounds == 7);
  CHECK(cfg.federation.local_epochs == 3);
  CHECK(cfg.federation.participation_rate == doctest::Approx(0.9));
  CHECK(cfg.federation.jobs == 2);
  CHECK(policy_name(cfg.federation.policy) == "trimmed_mean");
  CHECK(std::get<TrimmedMeanPolicy>(cfg.federation.policy).beta == doctest::Approx(0.2));
  CHECK(cfg.attack == AttackKind::kBackdoor);
  CHECK(cfg.boost.kind == BoostMode::Kind::kConstant);
  CHECK(cfg.schedule.to_string() == "last:3");
  REQUIRE(cfg.trigger.has_value());
  CHECK(*cfg.trigger == 4);
  CHECK(cfg.analyze_influence);
  CHECK_FALSE(cfg.analyze_contribution);
}

TEST_CASE("defaults hold for an empty config") {
  const auto cfg = parse_experiment_config("");
  CHECK(cfg.root_seed == 1);
  CHECK(cfg.source == DataSource::kSynthetic);
  CHECK(cfg.distribution == DistributionTag::kPrimary);
  CHECK(policy_name(cfg.federation.policy) == "fedavg");
  CHECK(cfg.attack == AttackKind::kNone);
  CHECK(cfg.model.hidden_size == 32);
  CHECK(cfg.model.lanes == 4);
}

TEST_CASE("invalid fields are rejected with the field named") {
  CHECK_THROWS_WITH_AS(parse_experiment_config("[policy]\nname = trimmed_mean\nbeta = 0.5\n"),
                       doctest::Contains("beta"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config("[data]\ntrain_ratio = 0.9\n"),
                       doctest::Contains("train_ratio"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config("[model]\nlearning_rate = -1\n"),
                       doctest::Contains("learning_rate"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config("[federation]\nrounds = 0\n"),
                       doctest::Contains("rounds"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config("nonsense = 1\n"),
                       doctest::Contains("nonsense"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config("[federation]\nrounds = seven\n"),
                       doctest::Contains("rounds"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config("[data]\nsource = log\n"),
                       doctest::Contains("log_path"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      parse_experiment_config("[attack]\nkind = mia\nmia_window_begin = 90\n"),
      doctest::Contains("mia_window"), std::invalid_argument);
}

TEST_CASE("policy hyperparameters reach the policy variants") {
  auto cfg = parse_experiment_config("[policy]\nname = cdp\ncdp_noise_scale = 0.8\n");
  const auto& cdp = std::get<CDPPolicy>(cfg.federation.policy);
  CHECK(cdp.noise_scale == doctest::Approx(0.8));
  CHECK(cdp.sample_rate == doctest::Approx(1.0));  // inherits participation rate

  cfg = parse_experiment_config("[policy]\nname = krum\nkrum_f = 2\n");
  CHECK(std::get<KrumPolicy>(cfg.federation.policy).assumed_attackers == 2);

  cfg = parse_experiment_config("[policy]\nname = weak_dp\nnorm_bound_T = 3\nnoise_std = 0.1\n");
  CHECK(std::get<WeakDPPolicy>(cfg.federation.policy).threshold == doctest::Approx(3.0));
  CHECK(std::get<WeakDPPolicy>(cfg.federation.policy).noise_std == doctest::Approx(0.1));
}

TEST_CASE("config hash tracks content") {
  const auto a = parse_experiment_config("root_seed = 1\n");
  const auto b = parse_experiment_config("root_seed = 1\n");
  const auto c = parse_experiment_config("root_seed = 2\n");
  CHECK(config_hash_hex(a) == config_hash_hex(b));
  CHECK(config_hash_hex(a) != config_hash_hex(c));
  CHECK(config_hash_hex(a).size() == 8);
}

TEST_SUITE_END();
