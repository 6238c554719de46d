#include "defembed/encoders.hpp"

#include <cmath>
#include <random>

#include "defembed/error.hpp"

namespace defembed {

std::string_view to_string(Architecture a) { return a == Architecture::bow ? "bow" : "lstm"; }
std::string_view to_string(InputMode m) { return m == InputMode::learned ? "learned" : "pretrained_fixed"; }
std::string_view to_string(OutputNonlinearity n) { return n == OutputNonlinearity::tanh ? "tanh" : "identity"; }

Architecture parse_architecture(std::string_view text) {
  if (text == "bow") return Architecture::bow;
  if (text == "lstm") return Architecture::lstm;
  throw Error("unknown architecture '" + std::string(text) + "' (expected bow|lstm)");
}

InputMode parse_input_mode(std::string_view text) {
  if (text == "learned") return InputMode::learned;
  if (text == "pretrained_fixed" || text == "pretrained") return InputMode::pretrained_fixed;
  throw Error("unknown input mode '" + std::string(text) + "' (expected learned|pretrained_fixed)");
}

OutputNonlinearity parse_output_nonlinearity(std::string_view text) {
  if (text == "tanh") return OutputNonlinearity::tanh;
  if (text == "identity") return OutputNonlinearity::identity;
  throw Error("unknown output nonlinearity '" + std::string(text) + "' (expected tanh|identity)");
}

namespace {

std::string layer(std::string_view kind, std::string_view suffix) {
  return std::string(kind) + "_" + std::string(suffix);
}

bool is_bias(std::string_view name) { return name == params::kOutputBias || name.starts_with("b_"); }

template <typename T>
Vector<T> sigmoid(const Vector<T>& z) {
  return z.unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
}

}  // namespace

template <typename T>
std::vector<Vector<T>> gather_inputs(const ModelView<T>& model, std::span<const std::size_t> ids) {
  std::vector<Vector<T>> inputs;
  inputs.reserve(ids.size());
  if (model.config->input_mode == InputMode::learned) {
    const auto& table = model.params->at(params::kInputEmbeddings);
    for (std::size_t id : ids) inputs.push_back(table.row(static_cast<Eigen::Index>(id)).transpose());
  } else {
    if (!model.input_store) throw Error("pretrained_fixed mode requires an input embedding store");
    for (std::size_t id : ids) {
      const auto v = model.input_store->vector(id);
      Vector<T> x(static_cast<Eigen::Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Eigen::Index>(i)) = static_cast<T>(v[i]);
      inputs.push_back(std::move(x));
    }
  }
  return inputs;
}

template <typename T>
Vector<T> bow_forward(const ParameterSet<T>& p, std::span<const Vector<T>> inputs) {
  if (inputs.empty()) throw NoKnownTokens();
  const auto& w = p.at(params::kProjection);
  Vector<T> acc = Vector<T>::Zero(w.rows());
  for (const auto& v : inputs) acc.noalias() += w * v;
  return acc;
}

template <typename T>
LstmState<T> lstm_step(const ParameterSet<T>& p, const LstmState<T>& state, const Vector<T>& input,
                       LstmStepTrace<T>* trace) {
  if (!input.allFinite()) throw Error("lstm_step: non-finite input");
  const auto affine = [&](std::string_view s) -> Vector<T> {
    return p.at(layer("W", s)) * input + p.at(layer("U", s)) * state.h + p.at(layer("b", s));
  };
  Vector<T> input_signal = affine("w");
  Vector<T> gate_in = sigmoid<T>(affine("i"));
  Vector<T> gate_forget = sigmoid<T>(affine("f"));
  Vector<T> gate_out = sigmoid<T>(affine("o"));

  LstmState<T> next;
  next.m = input_signal.cwiseProduct(gate_in) + state.m.cwiseProduct(gate_forget);
  next.h = gate_out.cwiseProduct(next.m.array().tanh().matrix());

  if (trace) {
    trace->input = input;
    trace->h_prev = state.h;
    trace->m_prev = state.m;
    trace->input_signal = std::move(input_signal);
    trace->gate_in = std::move(gate_in);
    trace->gate_forget = std::move(gate_forget);
    trace->gate_out = std::move(gate_out);
    trace->m = next.m;
    trace->h = next.h;
  }
  return next;
}

template <typename T>
Vector<T> lstm_project(const ParameterSet<T>& p, OutputNonlinearity output, const Vector<T>& memory) {
  Vector<T> z = p.at(params::kOutputWeights) * memory + p.at(params::kOutputBias);
  if (output == OutputNonlinearity::tanh) z = z.array().tanh().matrix();
  return z;
}

template <typename T>
Vector<T> lstm_forward(const ParameterSet<T>& p, OutputNonlinearity output, std::span<const Vector<T>> inputs,
                       std::vector<LstmStepTrace<T>>* trace) {
  if (inputs.empty()) throw NoKnownTokens();
  auto state = LstmState<T>::zero(p.at(layer("U", "w")).rows());
  if (trace) trace->assign(inputs.size(), {});
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    state = lstm_step(p, state, inputs[t], trace ? &(*trace)[t] : nullptr);
  }
  return lstm_project(p, output, state.m);
}

template <typename T>
Vector<T> forward(const ModelView<T>& model, std::span<const std::size_t> ids, ForwardTrace<T>* trace) {
  if (ids.empty()) throw NoKnownTokens();
  auto inputs = gather_inputs(model, ids);
  Vector<T> out;
  if (model.config->architecture == Architecture::bow) {
    out = bow_forward<T>(*model.params, inputs);
  } else {
    out = lstm_forward<T>(*model.params, model.config->output, inputs, trace ? &trace->steps : nullptr);
  }
  if (trace) {
    trace->ids.assign(ids.begin(), ids.end());
    trace->inputs = std::move(inputs);
    trace->output = out;
  }
  return out;
}

#define DEFEMBED_INSTANTIATE(T)                                                                                  \
  template std::vector<Vector<T>> gather_inputs<T>(const ModelView<T>&, std::span<const std::size_t>);         \
  template Vector<T> bow_forward<T>(const ParameterSet<T>&, std::span<const Vector<T>>);                       \
  template LstmState<T> lstm_step<T>(const ParameterSet<T>&, const LstmState<T>&, const Vector<T>&,            \
                                     LstmStepTrace<T>*);                                                         \
  template Vector<T> lstm_project<T>(const ParameterSet<T>&, OutputNonlinearity, const Vector<T>&);            \
  template Vector<T> lstm_forward<T>(const ParameterSet<T>&, OutputNonlinearity, std::span<const Vector<T>>,   \
                                     std::vector<LstmStepTrace<T>>*);                                            \
  template Vector<T> forward<T>(const ModelView<T>&, std::span<const std::size_t>, ForwardTrace<T>*);

DEFEMBED_INSTANTIATE(float)
DEFEMBED_INSTANTIATE(double)
#undef DEFEMBED_INSTANTIATE

ParameterSet<float> parameter_layout(const EncoderConfig& c, std::size_t vocab_size) {
  if (c.input_dim == 0 || c.target_dim == 0 || (c.architecture == Architecture::lstm && c.hidden_dim == 0)) {
    throw Error("encoder dimensions must be positive");
  }
  const auto in = static_cast<Eigen::Index>(c.input_dim);
  const auto hidden = static_cast<Eigen::Index>(c.hidden_dim);
  const auto target = static_cast<Eigen::Index>(c.target_dim);
  ParameterSet<float> p;
  if (c.input_mode == InputMode::learned) {
    p.add(std::string(params::kInputEmbeddings), static_cast<Eigen::Index>(vocab_size), in);
  }
  if (c.architecture == Architecture::bow) {
    p.add(std::string(params::kProjection), target, in);
  } else {
    for (auto s : params::kLstmLayers) {
      p.add(layer("W", s), hidden, in);
      p.add(layer("U", s), hidden, hidden);
      p.add(layer("b", s), hidden, 1);
    }
    p.add(std::string(params::kOutputWeights), target, hidden);
    p.add(std::string(params::kOutputBias), target, 1);
  }
  return p;
}

Encoder::Encoder(EncoderConfig config, Vocabulary vocabulary, std::shared_ptr<const EmbeddingStore> input_store,
                 ParameterSet<float> parameters)
    : config_(config),
      vocabulary_(std::move(vocabulary)),
      input_store_(std::move(input_store)),
      parameters_(std::move(parameters)) {
  if (config_.input_mode == InputMode::pretrained_fixed) {
    if (!input_store_) throw Error("pretrained_fixed mode requires an input embedding store");
    if (input_store_->dim() != config_.input_dim) {
      throw Error("input store dimension " + std::to_string(input_store_->dim()) + " does not match input_dim " +
                  std::to_string(config_.input_dim));
    }
  } else if (vocabulary_.empty()) {
    throw Error("learned input mode requires a nonempty vocabulary");
  }
  const auto layout = parameter_layout(config_, vocabulary_.size());
  if (layout.size() != parameters_.size()) throw Error("parameter set does not match encoder layout");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& want = layout[i];
    const auto& have = parameters_[i];
    if (want.name != have.name || want.value.rows() != have.value.rows() || want.value.cols() != have.value.cols()) {
      throw Error("parameter '" + have.name + "' does not match encoder layout (expected '" + want.name + "' " +
                  std::to_string(want.value.rows()) + "x" + std::to_string(want.value.cols()) + ")");
    }
    if (!have.value.allFinite()) throw Error("parameter '" + have.name + "' has non-finite entries");
  }
}

TokenLookup Encoder::lookup(std::span<const std::string> tokens) const {
  TokenLookup out;
  for (const auto& token : tokens) {
    const auto id = config_.input_mode == InputMode::learned ? vocabulary_.id(token) : input_store_->find(token);
    if (id) {
      out.ids.push_back(*id);
    } else {
      out.skipped.push_back(token);
    }
  }
  return out;
}

Vector<float> Encoder::encode(std::span<const std::string> tokens) const {
  const auto found = lookup(tokens);
  if (found.ids.empty()) throw NoKnownTokens();
  return forward<float>(view(), found.ids);
}

bool Encoder::is_trainable(std::string_view name) const {
  return !(config_.input_mode == InputMode::pretrained_fixed && name == params::kInputEmbeddings);
}

Encoder init_parameters(const EncoderConfig& config, const Vocabulary& vocabulary,
                        std::shared_ptr<const EmbeddingStore> input_store) {
  if (vocabulary.empty()) throw Error("init_parameters: empty vocabulary");
  if (config.input_mode == InputMode::pretrained_fixed && !input_store) {
    throw Error("init_parameters: pretrained_fixed mode requires an input embedding store");
  }
  auto p = parameter_layout(config, vocabulary.size());
  std::mt19937_64 rng(config.seed);
  for (auto& [name, value] : p) {
    if (is_bias(name)) continue;
    const float bound = 1.0f / std::sqrt(static_cast<float>(value.cols()));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = dist(rng);
  }
  return Encoder(config, vocabulary, std::move(input_store), std::move(p));
}

}  // namespace defembed
