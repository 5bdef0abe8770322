#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "fedseq/analysis.hpp"
#include "fedseq/rng.hpp"
#include "test_helpers.hpp"

using namespace fedseq;

TEST_SUITE_BEGIN("analysis");

TEST_CASE("spearman: monotone, reversed, tied") {
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(std::abs(spearman_rank_correlation({1, 2, 3, 4, 5, 6},
                                           {2, 1, 4, 3, 6, 5})) < 1.0);
  CHECK_THROWS_AS(spearman_rank_correlation({1}, {1}), std::invalid_argument);
}

// Convex oracle for the stochastic estimator: L2-regularized logistic
// regression, where the exact Hessian is dense and solvable.
namespace {

struct Logistic {
  Eigen::MatrixXd x;   // n x d
  Eigen::VectorXd y;   // labels in {0,1}
  double l2 = 0.05;

  Eigen::VectorXd grad_at(const Eigen::VectorXd& w, int i) const {
    const double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(w)));
    return (p - y(i)) * x.row(i).transpose() + l2 * w;
  }
  Eigen::VectorXd mean_grad(const Eigen::VectorXd& w) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
    for (int i = 0; i < x.rows(); ++i) g += grad_at(w, i);
    return g / double(x.rows());
  }
  Eigen::MatrixXd hessian_at(const Eigen::VectorXd& w, int i) const {
    const double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(w)));
    return p * (1 - p) * x.row(i).transpose() * x.row(i) +
           l2 * Eigen::MatrixXd::Identity(w.size(), w.size());
  }
  Eigen::MatrixXd mean_hessian(const Eigen::VectorXd& w) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(w.size(), w.size());
    for (int i = 0; i < x.rows(); ++i) h += hessian_at(w, i);
    return h / double(x.rows());
  }
};

}  // namespace

TEST_CASE("stochastic inverse-HVP tracks the exact solve on a convex model") {
  const int n = 20, d = 4;
  Rng rng(1001);
  Logistic model;
  model.x.resize(n, d);
  model.y.resize(n);
  Eigen::VectorXd truth(d);
  for (int j = 0; j < d; ++j) truth(j) = rng.uniform(-1, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) model.x(i, j) = rng.uniform(-1, 1);
    model.y(i) = model.x.row(i).dot(truth) > 0 ? 1.0 : 0.0;
  }

  // A roughly fitted weight vector (a few gradient steps).
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  for (int it = 0; it < 200; ++it) w -= 0.5 * model.mean_grad(w);

  // Influence of the "org" owning points [0,10) on the "test" points [10,20).
  Eigen::VectorXd g_org = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < 10; ++i) g_org += model.grad_at(w, i);
  g_org /= 10.0;
  Eigen::VectorXd g_test = Eigen::VectorXd::Zero(d);
  for (int i = 10; i < 20; ++i) g_test += model.grad_at(w, i);
  g_test /= 10.0;

  const double damping = 0.01;
  const Eigen::MatrixXd h =
      model.mean_hessian(w) + damping * Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd exact = h.ldlt().solve(g_org);
  const double exact_influence = g_test.dot(exact);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.mean_hessian(w));
  const double scale = 10.0 * eig.eigenvalues().maxCoeff();

  std::vector<double> v(d);
  for (int j = 0; j < d; ++j) v[j] = g_org(j);
  auto hvp = [&](std::size_t i, const std::vector<double>& u) {
    Eigen::VectorXd ue(d);
    for (int j = 0; j < d; ++j) ue(j) = u[j];
    const Eigen::VectorXd r = model.hessian_at(w, int(i)) * ue;
    std::vector<double> out(d);
    for (int j = 0; j < d; ++j) out[j] = r(j);
    return out;
  };
  const auto est = lissa_inverse_hvp(v, hvp, n, damping, scale, 4000, 8, 77);
  double est_influence = 0;
  for (int j = 0; j < d; ++j) est_influence += g_test(j) * est[j];

  CHECK(std::abs(est_influence - exact_influence) / std::abs(exact_influence) < 0.10);
}

TEST_CASE("lissa: zero gradient gives zero influence; bad scale diverges loudly") {
  auto hvp_big = [](std::size_t, const std::vector<double>& u) {
    std::vector<double> out(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) out[j] = 1000.0 * u[j];
    return out;
  };
  const std::vector<double> zero(3, 0.0);
  const auto est = lissa_inverse_hvp(zero, hvp_big, 5, 0.01, 1e4, 50, 1, 3);
  for (double x : est) CHECK(x == 0.0);

  const std::vector<double> v{1.0, 0.0, 0.0};
  CHECK_THROWS_WITH_AS(lissa_inverse_hvp(v, hvp_big, 5, 0.01, 10.0, 200, 1, 3),
                       doctest::Contains("scale"), std::runtime_error);
}

namespace {

// Small federation with two strong orgs (lots of clean data) and two weak
// orgs (a handful of label-shuffled sequences), so contribution and influence
// rankings have real structure.
struct SmallFed {
  FederationDataset fed;
  ModelConfig model;
  FederationConfig cfg;
};

SmallFed make_structured_fed(std::uint64_t seed) {
  SynthConfig synth;
  synth.vocab_size = 8;
  synth.machines = 260;
  synth.min_length = 4;
  synth.max_length = 7;
  synth.seed = seed;
  auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.8, 0.0, 0.2, seed);

  SmallFed out;
  out.fed.distribution_tag = DistributionTag::kCustom;
  Rng rng(seed);
  const auto perm = rng.permutation(split.train.size());
  // orgs 0,1: 80 clean sequences each; orgs 2,3: 14 shuffled-label sequences
  std::size_t cursor = 0;
  for (std::uint32_t org = 0; org < 4; ++org) {
    const std::size_t take = org < 2 ? 80 : 14;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < take && cursor < perm.size(); ++i) idx.push_back(perm[cursor++]);
    ParticipantDataset p;
    p.org_id = org;
    p.train = split.train.subset(idx);
    if (org >= 2) {
      for (auto& seq : p.train.sequences) {
        seq.events.back().id = static_cast<EventId>(rng.below(8));
      }
    }
    p.histogram = class_histogram(p.train);
    out.fed.participants.push_back(std::move(p));
  }
  out.fed.test = split.test;

  out.model.vocab_size = 8;
  out.model.embed_dim = 5;
  out.model.hidden_size = 8;
  out.model.lanes = 2;
  out.model.learning_rate = 2.0;
  out.model.seed = seed + 1;

  out.cfg.rounds = 8;
  out.cfg.local_epochs = 1;
  out.cfg.root_seed = seed + 2;
  out.cfg.eval_stride = 0;
  return out;
}

}  // namespace

TEST_CASE("influence scores: normalization and ranking structure") {
  auto s = make_structured_fed(2025);
  const auto trace = run_training(s.fed, s.model, s.cfg);

  InfluenceOptions opts;
  opts.depth = 300;
  opts.samples = 2;
  opts.seed = 5;
  const auto records = influence_scores(s.fed, s.model, trace.final_params, opts);
  REQUIRE(records.size() == 4);

  double lo = 1e300, hi = -1e300;
  for (const auto& r : records) {
    lo = std::min(lo, r.normalized);
    hi = std::max(hi, r.normalized);
  }
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(1.0));

  // order-preserving with the raw scores
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (records[i].raw < records[j].raw) {
        CHECK(records[i].normalized <= records[j].normalized);
      }
    }
  }

  // the clean heavyweight orgs outrank the noisy lightweights on average
  const double strong = records[0].normalized + records[1].normalized;
  const double weak = records[2].normalized + records[3].normalized;
  CHECK(strong > weak);
}

TEST_CASE("contribution impact: duplicates wash out, sole class holders matter") {
  // Two orgs with identical data + many others: removing one duplicate
  // barely moves precision.
  SynthConfig synth;
  synth.vocab_size = 6;
  synth.machines = 240;
  synth.seed = 303;
  auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.8, 0.0, 0.2, 303);
  auto fed = partition_uniform(split.train, 6, 303);
  fed.test = split.test;
  // make org 5 an exact copy of org 4's data
  fed.participants[5].train = fed.participants[4].train;
  fed.participants[5].histogram = fed.participants[4].histogram;

  ModelConfig model;
  model.vocab_size = 6;
  model.embed_dim = 4;
  model.hidden_size = 6;
  model.lanes = 2;
  model.seed = 304;

  FederationConfig cfg;
  cfg.rounds = 6;
  cfg.local_epochs = 1;
  cfg.root_seed = 305;
  cfg.eval_stride = 0;

  const auto baseline = run_training(fed, model, cfg);
  const auto rec = contribution_impact(fed, model, cfg, 5, &baseline);
  CHECK(std::abs(rec.impact) < 0.12);
  CHECK(rec.baseline_precision ==
        doctest::Approx(evaluate_model(model, baseline.final_params, fed.test).precision));

  CHECK_THROWS_AS(contribution_impact(fed, model, cfg, 99, &baseline), std::invalid_argument);
}

TEST_CASE("removing the sole holder of a class zeroes that class's recall") {
  SynthConfig synth;
  synth.vocab_size = 5;
  synth.machines = 300;
  synth.seed = 404;
  auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.7, 0.0, 0.3, 404);
  auto fed = partition_extreme(split.train);
  fed.test = split.test;
  REQUIRE(fed.participants.size() == 5);

  ModelConfig model;
  model.vocab_size = 5;
  model.embed_dim = 4;
  model.hidden_size = 6;
  model.lanes = 2;
  model.learning_rate = 2.0;
  model.seed = 405;

  FederationConfig cfg;
  cfg.rounds = 10;
  cfg.local_epochs = 1;
  cfg.root_seed = 406;
  cfg.eval_stride = 0;

  // drop the only participant holding class 2
  FederationDataset loo;
  loo.test = fed.test;
  for (const auto& p : fed.participants) {
    if (p.org_id != 2) loo.participants.push_back(p);
  }
  const auto trace = run_training(loo, model, cfg);
  const auto report = evaluate_model(model, trace.final_params, fed.test);
  for (const auto& cc : report.per_class) {
    if (cc.cls == 2) {
      CHECK(cc.tp == 0);  // recall for the orphaned class collapses to zero
    }
  }
}

TEST_CASE("benefit: a one-org federation gains nothing from itself") {
  SynthConfig synth;
  synth.vocab_size = 5;
  synth.machines = 80;
  synth.seed = 111;
  auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.75, 0.0, 0.25, 111);

  FederationDataset fed;
  ParticipantDataset sole;
  sole.org_id = 0;
  sole.train = split.train;
  sole.histogram = class_histogram(split.train);
  fed.participants.push_back(sole);
  fed.test = split.test;

  ModelConfig model;
  model.vocab_size = 5;
  model.embed_dim = 4;
  model.hidden_size = 6;
  model.lanes = 2;
  model.seed = 112;

  FederationConfig cfg;
  cfg.rounds = 4;
  cfg.local_epochs = 1;
  cfg.root_seed = 113;
  cfg.eval_stride = 0;

  const auto trace = run_training(fed, model, cfg);
  const auto records = benefit_comparison(fed, model, cfg, trace.final_params, split.test);
  REQUIRE(records.size() == 1);
  CHECK(records[0].local_precision == doctest::Approx(records[0].aggregated_precision));
  CHECK(records[0].benefit() == doctest::Approx(0.0));
}

TEST_CASE("benefit: extreme-partition orgs all gain from the federation") {
  SynthConfig synth;
  synth.vocab_size = 6;
  synth.machines = 360;
  synth.seed = 211;
  auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.8, 0.0, 0.2, 211);
  auto fed = partition_extreme(split.train);
  fed.test = split.test;

  ModelConfig model;
  model.vocab_size = 6;
  model.embed_dim = 4;
  model.hidden_size = 8;
  model.lanes = 2;
  model.learning_rate = 2.0;
  model.seed = 212;

  FederationConfig cfg;
  cfg.rounds = 10;
  cfg.local_epochs = 1;
  cfg.root_seed = 213;
  cfg.eval_stride = 0;

  const auto trace = run_training(fed, model, cfg);
  const auto records = benefit_comparison(fed, model, cfg, trace.final_params, split.test);
  double positive = 0;
  for (const auto& r : records) positive += r.benefit() > 0 ? 1 : 0;
  // single-class local models predict one label; the aggregate must beat them
  CHECK(positive == doctest::Approx(double(records.size())));
}

TEST_CASE("benefit rejects an examination test with a missing class") {
  const auto exam = testing::corpus_from_labels({0, 1}, 4);  // classes 0,1 of class_count 2
  EventCorpus bad = exam;
  bad.class_count = 3;  // class 2 missing
  FederationDataset fed;
  ParticipantDataset p;
  p.org_id = 0;
  p.train = exam;
  p.histogram = class_histogram(exam);
  fed.participants.push_back(p);

  ModelConfig model;
  model.vocab_size = 4;
  model.embed_dim = 2;
  model.hidden_size = 3;
  model.lanes = 1;
  FederationConfig cfg;
  cfg.rounds = 1;
  cfg.local_epochs = 1;

  CHECK_THROWS_WITH_AS(
      benefit_comparison(fed, model, cfg, init_params(model), bad),
      doctest::Contains("missing class"), std::invalid_argument);
}

TEST_CASE("knowledgeable sweep emits one point per fraction") {
  SynthConfig synth;
  synth.vocab_size = 5;
  synth.machines = 150;
  synth.seed = 321;
  auto corpus = generate_synthetic_corpus(synth);
  const auto split = split_dataset(corpus, 0.8, 0.0, 0.2, 321);

  ModelConfig model;
  model.vocab_size = 5;
  model.embed_dim = 4;
  model.hidden_size = 5;
  model.lanes = 1;
  model.seed = 322;

  FederationConfig cfg;
  cfg.rounds = 2;
  cfg.local_epochs = 1;
  cfg.root_seed = 323;
  cfg.eval_stride = 0;

  const std::vector<double> ms{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto curve = knowledgeable_sweep(split.train, split.test, 6, ms, model, cfg);
  REQUIRE(curve.size() == 9);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(curve[i].m == doctest::Approx(ms[i]));
    CHECK(curve[i].precision >= 0.0);
    CHECK(curve[i].precision <= 1.0);
  }
  CHECK_THROWS_AS(knowledgeable_sweep(split.train, split.test, 6, {1.5}, model, cfg),
                  std::invalid_argument);
}

TEST_SUITE_END();
