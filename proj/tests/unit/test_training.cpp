#include <cmath>
#include <random>

#include "defembed/checkpoint.hpp"
#include "defembed/error.hpp"
#include "defembed/toy_world.hpp"
#include "defembed/training.hpp"
#include "doctest.h"

using namespace defembed;

namespace {

Vector<double> vec(std::initializer_list<double> xs) {
  Vector<double> v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

struct ToyTraining {
  toy::World world;
  Encoder encoder;
};

ToyTraining toy_training(Architecture arch, InputMode mode = InputMode::learned, std::uint64_t seed = 1) {
  auto world = toy::make_world({});
  EncoderConfig c;
  c.architecture = arch;
  c.input_mode = mode;
  c.input_dim = 64;
  c.hidden_dim = 32;
  c.target_dim = 64;
  c.seed = seed;
  auto vocab = build_vocabulary(world.dictionary);
  std::shared_ptr<const EmbeddingStore> input;
  if (mode == InputMode::pretrained_fixed) input = std::make_shared<EmbeddingStore>(world.english);
  auto enc = init_parameters(c, vocab, input);
  return {std::move(world), std::move(enc)};
}

}  // namespace

TEST_CASE("cosine_loss") {
  const auto t = vec({0.3, -1.2, 2.0});
  CHECK(cosine_loss<double>(t, t).loss == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_loss<double>(-t, t).loss == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(cosine_loss<double>(vec({1, 0}), vec({1, 1})).loss == doctest::Approx(0.29289321881345254).epsilon(1e-14));
  const std::vector<float> p = {1, 0}, q = {1, 1}, z = {0, 0};
  CHECK(cosine_loss(p, q) == doctest::Approx(0.292893).epsilon(1e-6));
  CHECK_THROWS_AS(cosine_loss(z, q), Error);
  CHECK_THROWS_AS(cosine_loss<double>(vec({0, 0}), vec({1, 1})), Error);
}

TEST_CASE("rank_loss") {
  // pred along e1; target and negative placed at chosen cosines.
  const auto pred = vec({1, 0});
  const auto at = [](double c) { return vec({c, std::sqrt(1 - c * c)}); };
  CHECK(rank_loss<double>(pred, at(1.0), at(0.0), 0.1).loss == 0.0);
  CHECK(rank_loss<double>(pred, at(0.6), at(0.6), 0.1).loss == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(rank_loss<double>(pred, at(0.3), at(0.5), 0.1).loss == doctest::Approx(0.3).epsilon(1e-12));
  const std::vector<float> p = {1, 0}, t = {1, 0}, n = {0, 1};
  CHECK(rank_loss(p, t, n, 0.1) == 0.0);
  CHECK(rank_loss(p, n, t, 0.1) == doctest::Approx(1.1).epsilon(1e-12));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 500; ++trial) {
    Vector<double> a(3), b(3), c(3);
    for (auto* v : {&a, &b, &c})
      for (auto& x : *v) x = normal(rng);
    const auto r = rank_loss<double>(a, b, c, 0.1);
    CHECK(r.loss >= 0.0);
    const double gap = a.dot(b) / (a.norm() * b.norm()) - a.dot(c) / (a.norm() * c.norm());
    CHECK((r.loss == 0.0) == (gap >= 0.1 - 1e-12));
    if (r.loss == 0.0) CHECK(r.d_pred.isZero(0));
  }
}

TEST_CASE("inactive hinge yields exactly zero gradients") {
  const auto f = toy::make_gradcheck_fixture(Architecture::lstm, 2);
  const auto view = f.encoder.view();
  const auto ids = f.encoder.lookup(f.pair.tokens).ids;
  const auto pred = forward<float>(view, ids);
  // Target = the prediction itself, negative = its opposite: slack = 0.1 - 1 - 1 < 0.
  const Vector<float> target = pred;
  const Vector<float> negative = -pred;
  LossConfig lc;
  lc.kind = LossKind::rank;
  const auto g = backward<float>(view, ids, lc, target, &negative);
  CHECK(g.loss == 0.0f);
  for (const auto& [name, value] : g.gradients) CHECK(value.isZero(0));
}

TEST_CASE("analytic gradients match finite differences") {
  for (auto arch : {Architecture::bow, Architecture::lstm}) {
    for (auto kind : {LossKind::cosine, LossKind::rank}) {
      for (auto mode : {InputMode::learned, InputMode::pretrained_fixed}) {
        for (std::uint64_t seed : {1, 2, 3}) {
          const auto f = toy::make_gradcheck_fixture(arch, seed, mode);
          LossConfig lc;
          lc.kind = kind;
          lc.negative_sampling_seed = seed;
          std::optional<std::string> negative;
          if (kind == LossKind::rank) negative = toy::hardest_negative(f);
          const auto r = gradient_check(f.encoder, f.pair, lc, f.target, negative);
          CAPTURE(to_string(arch));
          CAPTURE(to_string(kind));
          CAPTURE(to_string(mode));
          CAPTURE(seed);
          CAPTURE(r.worst_parameter);
          CHECK(r.checked == f.encoder.parameters().element_count());
          CHECK(r.max_relative_error < kGradCheckThreshold);
          if (kind == LossKind::rank) CHECK(r.loss > 0.0);
        }
      }
    }
  }
}

TEST_CASE("gradient check on an inactive hinge") {
  const auto f = toy::make_gradcheck_fixture(Architecture::bow, 1);
  LossConfig lc;
  lc.kind = LossKind::rank;
  lc.margin = 1e-9;
  // Choose the negative farthest from the prediction so the hinge is flat.
  const auto pred = f.encoder.encode(f.pair.tokens);
  std::string farthest;
  double lowest = 2.0;
  for (std::size_t i = 0; i < f.target.size(); ++i) {
    if (f.target.token(i) == f.pair.headword) continue;
    const double c = cosine(std::span<const float>(pred.data(), pred.size()), f.target.vector(i));
    if (c < lowest) {
      lowest = c;
      farthest = f.target.token(i);
    }
  }
  const double correct =
      cosine(std::span<const float>(pred.data(), pred.size()), f.target.vector(f.pair.headword));
  if (correct - lowest > 1e-3) {
    const auto r = gradient_check(f.encoder, f.pair, lc, f.target, farthest);
    CHECK(r.loss == 0.0);
    CHECK(r.max_relative_error == 0.0);
  }
}

TEST_CASE("adadelta") {
  SUBCASE("zero gradient leaves parameters and decays accumulators") {
    ParameterSet<double> p, g;
    p.add("x", 2, 1) << 1.0, -2.0;
    g.add("x", 2, 1);
    auto state = make_optimizer_state(g);
    state.mean_sq_grad.at("x").setConstant(4.0);
    state.mean_sq_step.at("x").setConstant(2.0);
    const auto before = p;
    adadelta_update(p, g, state);
    CHECK(p == before);
    CHECK(state.mean_sq_grad.at("x")(0, 0) == doctest::Approx(0.95 * 4.0));
    CHECK(state.mean_sq_step.at("x")(1, 0) == doctest::Approx(0.95 * 2.0));
  }
  SUBCASE("first scalar step") {
    ParameterSet<double> p, g;
    p.add("x", 1, 1);
    g.add("x", 1, 1)(0, 0) = 1.0;
    auto state = make_optimizer_state(g);
    adadelta_update(p, g, state);
    CHECK(p.at("x")(0, 0) == doctest::Approx(-0.004472091234310838).epsilon(1e-12));
    CHECK(std::abs(p.at("x")(0, 0) - -0.0044721) < 1e-6);
    const double first = p.at("x")(0, 0);
    adadelta_update(p, g, state);
    const double second = p.at("x")(0, 0) - first;
    CHECK(std::abs(second) > std::abs(first));
  }
  SUBCASE("non-finite gradient is rejected") {
    ParameterSet<float> p, g;
    p.add("x", 1, 1);
    g.add("x", 1, 1)(0, 0) = INFINITY;
    auto state = make_optimizer_state(g);
    CHECK_THROWS_AS(adadelta_update(p, g, state), Error);
  }
}

TEST_CASE("train on an empty list does nothing") {
  auto t = toy_training(Architecture::bow);
  const auto before = t.encoder.parameters();
  const auto log = train(t.encoder, {}, {}, {}, t.world.english);
  CHECK(log.epochs.empty());
  CHECK(t.encoder.parameters() == before);
}

TEST_CASE("BOW cosine training decreases the loss") {
  auto t = toy_training(Architecture::bow);
  TrainConfig tc;
  tc.max_epochs = 5;
  const auto log = train(t.encoder, t.world.dictionary, tc, {}, t.world.english);
  REQUIRE(log.epochs.size() == 5);
  for (std::size_t e = 1; e < log.epochs.size(); ++e) {
    CAPTURE(e);
    CHECK(log.epochs[e].mean_loss < log.epochs[e - 1].mean_loss);
  }
  CHECK(log.skipped_pairs == 0);
}

TEST_CASE("training is deterministic") {
  for (auto arch : {Architecture::bow, Architecture::lstm}) {
    for (auto kind : {LossKind::cosine, LossKind::rank}) {
      TrainConfig tc;
      tc.max_epochs = 2;
      LossConfig lc;
      lc.kind = kind;
      auto a = toy_training(arch);
      auto b = toy_training(arch);
      const auto la = train(a.encoder, a.world.dictionary, tc, lc, a.world.english);
      const auto lb = train(b.encoder, b.world.dictionary, tc, lc, b.world.english);
      CHECK(checkpoint_bytes(a.encoder) == checkpoint_bytes(b.encoder));
      CHECK(la.epochs.back().mean_loss == lb.epochs.back().mean_loss);

      auto c = toy_training(arch);
      tc.shuffle_seed = 2;
      train(c.encoder, c.world.dictionary, tc, lc, c.world.english);
      CHECK(checkpoint_bytes(a.encoder) != checkpoint_bytes(c.encoder));
    }
  }
}

TEST_CASE("pretrained inputs are never modified") {
  auto t = toy_training(Architecture::lstm, InputMode::pretrained_fixed);
  const auto store = t.encoder.input_store();
  const auto bytes_before = [&] {
    std::string s;
    for (std::size_t i = 0; i < store->size(); ++i) {
      const auto v = store->vector(i);
      s.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
    }
    return s;
  };
  const auto before = bytes_before();
  const auto params_before = t.encoder.parameters();
  TrainConfig tc;
  tc.max_epochs = 2;
  LossConfig lc;
  lc.kind = LossKind::rank;
  train(t.encoder, t.world.dictionary, tc, lc, t.world.english);
  CHECK(bytes_before() == before);
  CHECK_FALSE(t.encoder.parameters().contains("input_embeddings"));
  CHECK_FALSE(t.encoder.parameters() == params_before);
}

TEST_CASE("unusable pairs are skipped and counted") {
  auto t = toy_training(Architecture::bow);
  std::vector<DefinitionRecord> pairs(t.world.dictionary.begin(), t.world.dictionary.begin() + 20);
  pairs.push_back({"nosuchword", {"red"}, Source::dictionary});
  pairs.push_back({pairs[0].headword, {"qqqq", "zzzz"}, Source::dictionary});
  TrainConfig tc;
  tc.max_epochs = 3;
  std::vector<std::size_t> seen;
  const auto log = train(t.encoder, pairs, tc, {}, t.world.english,
                         [&](const EpochLog& e) { seen.push_back(e.epoch); });
  CHECK(log.skipped_pairs == 2);
  CHECK(log.warnings.size() >= 2);
  CHECK(seen == std::vector<std::size_t>{1, 2, 3});

  tc.eval_every = 2;
  tc.max_epochs = 4;
  seen.clear();
  train(t.encoder, pairs, tc, {}, t.world.english, [&](const EpochLog& e) { seen.push_back(e.epoch); });
  CHECK(seen == std::vector<std::size_t>{2, 4});
}

TEST_CASE("epoch log line") {
  const auto line = to_json_line(EpochLog{3, 0.5, 1, 0.25});
  CHECK(line == R"({"epoch":3,"mean_loss":0.5,"skipped_pairs":1,"wall_time":0.25})");
}
