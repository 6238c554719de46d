#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "defembed/checkpoint.hpp"
#include "defembed/encoders.hpp"
#include "defembed/error.hpp"
#include "doctest.h"

using namespace defembed;

namespace {

Vocabulary small_vocab() {
  return Vocabulary({"a", "b", "c", "d", "e"}, {1, 1, 1, 1, 1});
}

EncoderConfig small_config(Architecture arch, std::uint64_t seed = 1) {
  EncoderConfig c;
  c.architecture = arch;
  c.input_dim = 6;
  c.hidden_dim = 5;
  c.target_dim = 4;
  c.seed = seed;
  return c;
}

std::vector<Vector<double>> random_inputs(std::size_t n, Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<Vector<double>> out(n, Vector<double>(dim));
  for (auto& v : out)
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
  return out;
}

ParameterSet<double> scalar_lstm() {
  EncoderConfig c;
  c.architecture = Architecture::lstm;
  c.input_dim = c.hidden_dim = c.target_dim = 1;
  auto p = parameter_layout(c, 1).cast<double>();
  return p;
}

}  // namespace

TEST_CASE("init_parameters is seeded and bounded") {
  for (auto arch : {Architecture::bow, Architecture::lstm}) {
    const auto a = init_parameters(small_config(arch, 1), small_vocab());
    const auto b = init_parameters(small_config(arch, 1), small_vocab());
    const auto c = init_parameters(small_config(arch, 2), small_vocab());
    CHECK(a.parameters() == b.parameters());
    CHECK_FALSE(a.parameters() == c.parameters());
    for (const auto& [name, value] : a.parameters()) {
      if (name.starts_with("b_") || name == "p") {
        CHECK(value.isZero(0));
        continue;
      }
      const float bound = 1.0f / std::sqrt(static_cast<float>(value.cols()));
      CHECK(value.cwiseAbs().maxCoeff() <= bound);
      CHECK(value.cwiseAbs().maxCoeff() > 0.0f);
    }
  }
  CHECK_THROWS_AS(init_parameters(small_config(Architecture::bow), Vocabulary{}), Error);
  auto pre = small_config(Architecture::bow);
  pre.input_mode = InputMode::pretrained_fixed;
  CHECK_THROWS_AS(init_parameters(pre, small_vocab()), Error);
}

TEST_CASE("parameter layout") {
  auto c = small_config(Architecture::lstm);
  const auto p = parameter_layout(c, 5);
  CHECK(p.size() == 1 + 12 + 2);
  CHECK(p.at("input_embeddings").rows() == 5);
  CHECK(p.at("W_f").rows() == 5);
  CHECK(p.at("W_f").cols() == 6);
  CHECK(p.at("U_o").cols() == 5);
  CHECK(p.at("P").rows() == 4);
  c.input_mode = InputMode::pretrained_fixed;
  CHECK_FALSE(parameter_layout(c, 5).contains("input_embeddings"));
  c.hidden_dim = 0;
  CHECK_THROWS_AS(parameter_layout(c, 5), Error);
}

TEST_CASE("bow_forward") {
  SUBCASE("identity projection sums inputs") {
    ParameterSet<double> p;
    p.add("W", 3, 3) = Matrix<double>::Identity(3, 3);
    std::vector<Vector<double>> in = {Vector<double>::LinSpaced(3, 1, 3), Vector<double>::Constant(3, 0.5)};
    CHECK(bow_forward<double>(p, in) == in[0] + in[1]);
  }
  SUBCASE("one-dimensional fixture") {
    ParameterSet<float> p;
    p.add("W", 1, 1)(0, 0) = 0.5f;
    std::vector<Vector<float>> in = {Vector<float>::Constant(1, 2.0f), Vector<float>::Constant(1, 3.0f)};
    CHECK(bow_forward<float>(p, in)[0] == 2.5f);
  }
  SUBCASE("empty input") {
    ParameterSet<float> p;
    p.add("W", 1, 1);
    CHECK_THROWS_AS(bow_forward<float>(p, {}), NoKnownTokens);
  }
}

TEST_CASE("bow is order-free and additive") {
  std::mt19937_64 rng(11);
  const auto enc = init_parameters(small_config(Architecture::bow), small_vocab());
  const auto p = enc.parameters().cast<double>();
  for (int trial = 0; trial < 50; ++trial) {
    auto in = random_inputs(7, 6, rng);
    const auto out = bow_forward<double>(p, in);
    std::reverse(in.begin(), in.end());
    CHECK((bow_forward<double>(p, in) - out).cwiseAbs().maxCoeff() < 1e-6);
    std::shuffle(in.begin(), in.end(), rng);
    const std::span<const Vector<double>> all(in);
    const auto left = bow_forward<double>(p, all.first(3));
    const auto right = bow_forward<double>(p, all.subspan(3));
    CHECK((left + right - out).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("bow is the degenerate recurrence") {
  std::mt19937_64 rng(3);
  const auto enc = init_parameters(small_config(Architecture::bow), small_vocab());
  const auto& w = enc.parameters().at("W");
  std::normal_distribution<float> normal;
  std::vector<Vector<float>> in(9, Vector<float>(6));
  for (auto& v : in)
    for (auto& x : v) x = normal(rng);
  Vector<float> a = Vector<float>::Zero(w.rows());
  for (const auto& v : in) a.noalias() += w * v;
  CHECK(bow_forward<float>(enc.parameters(), in) == a);
}

TEST_CASE("lstm_step") {
  SUBCASE("zero parameters") {
    EncoderConfig c = small_config(Architecture::lstm);
    const auto p = parameter_layout(c, 1).cast<double>();
    LstmStepTrace<double> trace;
    const auto next = lstm_step<double>(p, LstmState<double>::zero(5), Vector<double>::Ones(6), &trace);
    CHECK(trace.gate_in.isConstant(0.5));
    CHECK(trace.gate_forget.isConstant(0.5));
    CHECK(trace.gate_out.isConstant(0.5));
    CHECK(trace.input_signal.isZero(0));
    CHECK(next.m.isZero(0));
    CHECK(next.h.isZero(0));
  }
  SUBCASE("scalar fixture") {
    auto p = scalar_lstm();
    p.at("W_w")(0, 0) = 1.0;
    LstmStepTrace<double> trace;
    const auto next = lstm_step<double>(p, LstmState<double>::zero(1), Vector<double>::Ones(1), &trace);
    CHECK(trace.input_signal[0] == 1.0);
    CHECK(trace.gate_in[0] == 0.5);
    CHECK(next.m[0] == 0.5);
    CHECK(next.h[0] == doctest::Approx(0.23105857863000487).epsilon(1e-14));
    CHECK(next.h[0] == doctest::Approx(0.231059).epsilon(1e-6));
  }
  SUBCASE("saturated gates retain memory") {
    auto p = scalar_lstm();
    p.at("W_w")(0, 0) = 1.0;
    const auto m1 = lstm_step<double>(p, LstmState<double>::zero(1), Vector<double>::Ones(1));
    p.at("b_f")(0, 0) = 20.0;
    p.at("b_i")(0, 0) = -20.0;
    const auto m2 = lstm_step<double>(p, m1, Vector<double>::Constant(1, 3.0));
    CHECK(std::abs(m2.m[0] - m1.m[0]) < 1e-3);
  }
  SUBCASE("non-finite input") {
    const auto p = scalar_lstm();
    CHECK_THROWS_AS(lstm_step<double>(p, LstmState<double>::zero(1), Vector<double>::Constant(1, NAN)), Error);
  }
}

TEST_CASE("lstm stays finite and gated over long runs") {
  const auto enc = init_parameters(small_config(Architecture::lstm, 5), small_vocab());
  auto p = enc.parameters().cast<double>();
  for (auto& [name, value] : p) value *= 4.0;  // push gates towards saturation
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 3.0);
  auto state = LstmState<double>::zero(5);
  LstmStepTrace<double> trace;
  bool ok = true;
  for (int t = 0; t < 10000; ++t) {
    Vector<double> v(6);
    for (auto& x : v) x = normal(rng);
    state = lstm_step<double>(p, state, v, &trace);
    ok = ok && state.m.allFinite() && state.h.allFinite();
    ok = ok && (trace.gate_in.array() >= 0).all() && (trace.gate_in.array() <= 1).all();
    ok = ok && (trace.gate_forget.array() >= 0).all() && (trace.gate_forget.array() <= 1).all();
  }
  CHECK(ok);
}

TEST_CASE("lstm_forward") {
  const auto enc = init_parameters(small_config(Architecture::lstm, 4), small_vocab());
  const auto p = enc.parameters().cast<double>();
  std::mt19937_64 rng(2);
  const auto in = random_inputs(2, 6, rng);

  SUBCASE("single token unfolds to one step plus projection") {
    const auto state = lstm_step<double>(p, LstmState<double>::zero(5), in[0]);
    const std::span<const Vector<double>> first(in.data(), 1);
    CHECK(lstm_forward<double>(p, OutputNonlinearity::tanh, first) ==
          lstm_project<double>(p, OutputNonlinearity::tanh, state.m));
    const auto z = (p.at("P") * state.m + p.at("p")).eval();
    CHECK(lstm_project<double>(p, OutputNonlinearity::identity, state.m) == z);
  }
  SUBCASE("order matters") {
    const auto ab = lstm_forward<double>(p, OutputNonlinearity::tanh, in);
    const std::vector<Vector<double>> ba = {in[1], in[0]};
    CHECK((ab - lstm_forward<double>(p, OutputNonlinearity::tanh, ba)).cwiseAbs().maxCoeff() > 1e-6);
  }
  SUBCASE("zero model maps to zero") {
    const auto zero = parameter_layout(small_config(Architecture::lstm), 5).cast<double>();
    CHECK(lstm_forward<double>(zero, OutputNonlinearity::tanh, in).isZero(0));
  }
}

TEST_CASE("Encoder lookup and encode") {
  const auto enc = init_parameters(small_config(Architecture::bow), small_vocab());
  const std::vector<std::string> tokens = {"a", "zzz", "c"};
  const auto found = enc.lookup(tokens);
  CHECK(found.ids.size() == 2);
  CHECK(found.skipped == std::vector<std::string>{"zzz"});
  const std::vector<std::string> known = {"a", "c"}, reversed = {"c", "a"}, unknown = {"zzz"};
  CHECK(enc.encode(tokens) == enc.encode(known));
  CHECK((enc.encode(known) - enc.encode(reversed)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(enc.encode(unknown), NoKnownTokens);
  CHECK(enc.is_trainable("input_embeddings"));
}

TEST_CASE("pretrained inputs come from the input store") {
  auto store = std::make_shared<EmbeddingStore>(6);
  for (int i = 0; i < 4; ++i) {
    std::vector<float> v(6, 0.1f);
    v[i] = 1.0f;
    store->add("w" + std::to_string(i), v);
  }
  auto c = small_config(Architecture::bow);
  c.input_mode = InputMode::pretrained_fixed;
  const auto enc = init_parameters(c, Vocabulary({"w0", "w1"}, {1, 1}), store);
  CHECK_FALSE(enc.is_trainable("input_embeddings"));
  const std::vector<std::string> tokens = {"w3"};
  Vector<float> v(6);
  std::copy_n(store->vector("w3").data(), 6, v.data());
  CHECK(enc.encode(tokens) == (enc.parameters().at("W") * v).eval());

  auto wrong = std::make_shared<EmbeddingStore>(3);
  CHECK_THROWS_AS(Encoder(c, enc.vocabulary(), wrong, enc.parameters()), Error);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  auto store = std::make_shared<EmbeddingStore>(6);
  store->add("a", std::vector<float>{1, 2, 3, 4, 5, 6});
  for (auto arch : {Architecture::bow, Architecture::lstm}) {
    for (auto mode : {InputMode::learned, InputMode::pretrained_fixed}) {
      auto c = small_config(arch, 9);
      c.input_mode = mode;
      c.output = OutputNonlinearity::identity;
      const auto input = mode == InputMode::pretrained_fixed ? store : nullptr;
      const auto enc = init_parameters(c, small_vocab(), input);
      const auto bytes = checkpoint_bytes(enc);
      std::istringstream in(bytes);
      const auto loaded = load_checkpoint(in, input);
      CHECK(loaded.config() == enc.config());
      CHECK(loaded.vocabulary() == enc.vocabulary());
      CHECK(loaded.parameters() == enc.parameters());
      CHECK(checkpoint_bytes(loaded) == bytes);
      CHECK(checkpoint_hash(loaded) == checkpoint_hash(enc));
    }
  }
}

TEST_CASE("checkpoint load errors") {
  auto store = std::make_shared<EmbeddingStore>(6);
  store->add("a", std::vector<float>{1, 2, 3, 4, 5, 6});
  auto c = small_config(Architecture::bow);
  c.input_mode = InputMode::pretrained_fixed;
  const auto bytes = checkpoint_bytes(init_parameters(c, small_vocab(), store));

  std::istringstream missing(bytes);
  CHECK_THROWS_AS(load_checkpoint(missing), Error);

  auto other = std::make_shared<EmbeddingStore>(6);
  other->add("b", std::vector<float>{1, 2, 3, 4, 5, 6});
  std::istringstream mismatched(bytes);
  CHECK_THROWS_AS(load_checkpoint(mismatched, other), Error);

  std::istringstream truncated(bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_AS(load_checkpoint(truncated, store), Error);

  std::istringstream garbage("not a checkpoint\n");
  CHECK_THROWS_AS(load_checkpoint(garbage), Error);
}
