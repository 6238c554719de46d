#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defembed/corpus.hpp"
#include "defembed/embedding_store.hpp"
#include "defembed/encoders.hpp"

namespace defembed {

enum class LossKind { cosine, rank };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

struct LossConfig {
  LossKind kind = LossKind::cosine;
  double margin = 0.1;
  std::uint64_t negative_sampling_seed = 1;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 10;
  std::uint64_t shuffle_seed = 1;
  std::size_t eval_every = 0;  // 0 disables the per-epoch evaluation hook
};

// ---- losses ---------------------------------------------------------------

template <typename T>
struct LossGradient {
  T loss = 0;
  Vector<T> d_pred;  // dLoss/dpred; exactly zero on an inactive hinge
};

/// 1 - cos(pred, target).
template <typename T>
LossGradient<T> cosine_loss(const Vector<T>& pred, const Vector<T>& target);

/// max(0, margin - cos(pred, target) + cos(pred, negative)). A slack of
/// exactly zero counts as inactive.
template <typename T>
LossGradient<T> rank_loss(const Vector<T>& pred, const Vector<T>& target, const Vector<T>& negative, T margin);

double cosine_loss(std::span<const float> pred, std::span<const float> target);
double rank_loss(std::span<const float> pred, std::span<const float> target, std::span<const float> negative,
                 double margin);

// ---- gradients ------------------------------------------------------------

template <typename T>
struct ExampleGradient {
  T loss = 0;
  ParameterSet<T> gradients;  // one entry per trainable tensor
};

/// Trainable-tensor subset of the model's parameters, zeroed.
template <typename T>
ParameterSet<T> zero_gradients(const ModelView<T>& model);

/// Backpropagates d_output through an encoder forward trace and adds the
/// result into `grads` (which must come from zero_gradients).
template <typename T>
void backpropagate(const ModelView<T>& model, const ForwardTrace<T>& trace, const Vector<T>& d_output,
                   ParameterSet<T>& grads);

/// Loss and analytic gradient for one definition. `negative` is required for
/// the rank loss.
template <typename T>
ExampleGradient<T> backward(const ModelView<T>& model, std::span<const std::size_t> ids, const LossConfig& loss,
                            const Vector<T>& target, const Vector<T>* negative = nullptr);

// ---- optimizer ------------------------------------------------------------

template <typename T>
struct OptimizerState {
  ParameterSet<T> mean_sq_grad;  // E[g^2]
  ParameterSet<T> mean_sq_step;  // E[dx^2]
  double rho = 0.95;
  double epsilon = 1e-6;
};

template <typename T>
OptimizerState<T> make_optimizer_state(const ParameterSet<T>& trainable, double rho = 0.95, double epsilon = 1e-6);

/// One adadelta step over every tensor named in `grads`. Throws on a
/// non-finite gradient.
template <typename T>
void adadelta_update(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state);

// ---- training loop --------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::size_t skipped_pairs = 0;
  double wall_time = 0.0;  // seconds since training started
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::size_t skipped_pairs = 0;
  std::vector<std::string> warnings;
};

/// JSON object per line: {"epoch":..,"mean_loss":..,"skipped_pairs":..,"wall_time":..}
std::string to_json_line(const EpochLog& log);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minibatch adadelta training. Pairs whose headword is missing from `target`
/// or whose definition has no known token are skipped and counted. The
/// callback runs after every epoch, or every `eval_every` epochs if set.
TrainingLog train(Encoder& encoder, std::span<const DefinitionRecord> pairs, const TrainConfig& train_config,
                  const LossConfig& loss_config, const EmbeddingStore& target, const EpochCallback& on_epoch = {});

// ---- gradient check -------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double loss = 0.0;
  std::string negative;  // negative word used (rank loss)
  bool perturbed = false;  // hinge was at its kink; the negative was re-drawn
};

/// Central differences in double precision against the analytic gradient:
/// |a - n| / max(|a|, |n|, 1e-8), maximized over all trainable entries.
GradCheckResult gradient_check(const Encoder& encoder, const DefinitionRecord& pair, const LossConfig& loss,
                               const EmbeddingStore& target, std::optional<std::string> negative = std::nullopt,
                               double epsilon = 1e-4);

inline constexpr double kGradCheckThreshold = 1e-4;

}  // namespace defembed
