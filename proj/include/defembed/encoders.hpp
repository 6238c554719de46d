#pragma once

// Definition encoders: a linear bag-of-words model and a single-layer LSTM.
// Both map a token sequence to a vector in the target embedding space.
//
// The math is templated on the scalar type: models train in float, and the
// gradient checker re-runs the same code in double.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "defembed/corpus.hpp"
#include "defembed/embedding_store.hpp"
#include "defembed/tensor.hpp"

namespace defembed {

enum class Architecture { bow, lstm };
enum class InputMode { learned, pretrained_fixed };
enum class OutputNonlinearity { tanh, identity };

std::string_view to_string(Architecture a);
std::string_view to_string(InputMode m);
std::string_view to_string(OutputNonlinearity n);
Architecture parse_architecture(std::string_view text);
InputMode parse_input_mode(std::string_view text);
OutputNonlinearity parse_output_nonlinearity(std::string_view text);

struct EncoderConfig {
  Architecture architecture = Architecture::bow;
  InputMode input_mode = InputMode::learned;
  std::size_t input_dim = 256;
  std::size_t hidden_dim = 512;  // LSTM only
  std::size_t target_dim = 500;
  OutputNonlinearity output = OutputNonlinearity::tanh;  // LSTM only; BOW is a plain sum
  std::uint64_t seed = 1;

  bool operator==(const EncoderConfig&) const = default;
};

namespace params {
inline constexpr std::string_view kInputEmbeddings = "input_embeddings";
inline constexpr std::string_view kProjection = "W";  // BOW projection
inline constexpr std::string_view kOutputWeights = "P";
inline constexpr std::string_view kOutputBias = "p";
/// LSTM layer suffixes: input signal (w), input gate (i), forget gate (f), output gate (o).
inline constexpr std::string_view kLstmLayers[] = {"w", "i", "f", "o"};
}  // namespace params

/// What forward/backward need at scalar type T. `input_store` is only used
/// (and required) in pretrained_fixed mode.
template <typename T>
struct ModelView {
  const EncoderConfig* config = nullptr;
  const ParameterSet<T>* params = nullptr;
  const EmbeddingStore* input_store = nullptr;
};

template <typename T>
struct LstmState {
  Vector<T> h;  // output state
  Vector<T> m;  // internal memory

  static LstmState zero(Eigen::Index n) { return {Vector<T>::Zero(n), Vector<T>::Zero(n)}; }
};

/// Everything one LSTM step produced, kept for backpropagation through time.
template <typename T>
struct LstmStepTrace {
  Vector<T> input;
  Vector<T> h_prev, m_prev;
  Vector<T> input_signal;  // i^w, linear
  Vector<T> gate_in, gate_forget, gate_out;
  Vector<T> m, h;
};

template <typename T>
struct ForwardTrace {
  std::vector<std::size_t> ids;
  std::vector<Vector<T>> inputs;
  std::vector<LstmStepTrace<T>> steps;  // LSTM only
  Vector<T> output;
};

/// Input vectors for token ids (rows of input_embeddings, or input store rows).
template <typename T>
std::vector<Vector<T>> gather_inputs(const ModelView<T>& model, std::span<const std::size_t> ids);

/// A_t = A_{t-1} + W v_t, folded in input order from A_0 = 0.
template <typename T>
Vector<T> bow_forward(const ParameterSet<T>& params, std::span<const Vector<T>> inputs);

template <typename T>
LstmState<T> lstm_step(const ParameterSet<T>& params, const LstmState<T>& state, const Vector<T>& input,
                       LstmStepTrace<T>* trace = nullptr);

/// Folds lstm_step from the zero state and projects the final memory m_N.
template <typename T>
Vector<T> lstm_forward(const ParameterSet<T>& params, OutputNonlinearity output, std::span<const Vector<T>> inputs,
                       std::vector<LstmStepTrace<T>>* trace = nullptr);

template <typename T>
Vector<T> lstm_project(const ParameterSet<T>& params, OutputNonlinearity output, const Vector<T>& memory);

/// Dispatches on architecture. `ids` must be nonempty.
template <typename T>
Vector<T> forward(const ModelView<T>& model, std::span<const std::size_t> ids, ForwardTrace<T>* trace = nullptr);

struct TokenLookup {
  std::vector<std::size_t> ids;
  std::vector<std::string> skipped;
};

class Encoder {
 public:
  /// Validates parameter names/shapes against the config. `input_store` is
  /// required in pretrained_fixed mode and must have dim == input_dim.
  Encoder(EncoderConfig config, Vocabulary vocabulary, std::shared_ptr<const EmbeddingStore> input_store,
          ParameterSet<float> parameters);

  const EncoderConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
  const ParameterSet<float>& parameters() const noexcept { return parameters_; }
  ParameterSet<float>& parameters() noexcept { return parameters_; }
  const std::shared_ptr<const EmbeddingStore>& input_store() const noexcept { return input_store_; }

  ModelView<float> view() const { return {&config_, &parameters_, input_store_.get()}; }

  /// Unknown tokens go to `skipped`; they are not an error.
  TokenLookup lookup(std::span<const std::string> tokens) const;

  /// Throws NoKnownTokens if no token is known.
  Vector<float> encode(std::span<const std::string> tokens) const;

  /// Input embeddings are frozen in pretrained_fixed mode.
  bool is_trainable(std::string_view name) const;

 private:
  EncoderConfig config_;
  Vocabulary vocabulary_;
  std::shared_ptr<const EmbeddingStore> input_store_;
  ParameterSet<float> parameters_;
};

/// Parameter layout for a config: names and shapes, all zero.
ParameterSet<float> parameter_layout(const EncoderConfig& config, std::size_t vocab_size);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a seeded generator; biases 0.
Encoder init_parameters(const EncoderConfig& config, const Vocabulary& vocabulary,
                        std::shared_ptr<const EmbeddingStore> input_store = nullptr);

}  // namespace defembed
