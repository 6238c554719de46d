#include "defembed/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "json.hpp"

#include "defembed/error.hpp"

namespace defembed {

std::string_view to_string(LossKind kind) { return kind == LossKind::cosine ? "cosine" : "rank"; }

LossKind parse_loss_kind(std::string_view text) {
  if (text == "cosine") return LossKind::cosine;
  if (text == "rank") return LossKind::rank;
  throw Error("unknown loss '" + std::string(text) + "' (expected cosine|rank)");
}

namespace {

template <typename T>
struct CosineParts {
  T value;
  Vector<T> d_pred;  // d cos / d pred
};

template <typename T>
CosineParts<T> cosine_with_grad(const Vector<T>& pred, const Vector<T>& other) {
  if (pred.size() != other.size()) throw Error("loss: dimension mismatch");
  const T pn = pred.norm();
  const T on = other.norm();
  if (pn == T(0) || on == T(0)) throw Error("loss: zero-norm vector");
  const T c = pred.dot(other) / (pn * on);
  return {c, other / (pn * on) - pred * (c / (pn * pn))};
}

template <typename T>
Vector<T> to_vector(std::span<const float> v) {
  Vector<T> out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = static_cast<T>(v[i]);
  return out;
}

template <typename T>
T rank_slack(const Vector<T>& pred, const Vector<T>& target, const Vector<T>& negative, T margin) {
  return margin - cosine_with_grad(pred, target).value + cosine_with_grad(pred, negative).value;
}

}  // namespace

template <typename T>
LossGradient<T> cosine_loss(const Vector<T>& pred, const Vector<T>& target) {
  auto c = cosine_with_grad(pred, target);
  return {T(1) - c.value, -c.d_pred};
}

template <typename T>
LossGradient<T> rank_loss(const Vector<T>& pred, const Vector<T>& target, const Vector<T>& negative, T margin) {
  const auto pos = cosine_with_grad(pred, target);
  const auto neg = cosine_with_grad(pred, negative);
  const T slack = margin - pos.value + neg.value;
  if (!(slack > T(0))) return {T(0), Vector<T>::Zero(pred.size())};
  return {slack, neg.d_pred - pos.d_pred};
}

double cosine_loss(std::span<const float> pred, std::span<const float> target) {
  return cosine_loss<double>(to_vector<double>(pred), to_vector<double>(target)).loss;
}

double rank_loss(std::span<const float> pred, std::span<const float> target, std::span<const float> negative,
                 double margin) {
  return rank_loss<double>(to_vector<double>(pred), to_vector<double>(target), to_vector<double>(negative), margin)
      .loss;
}

template <typename T>
ParameterSet<T> zero_gradients(const ModelView<T>& model) {
  ParameterSet<T> grads;
  for (const auto& [name, value] : *model.params) {
    if (model.config->input_mode == InputMode::pretrained_fixed && name == params::kInputEmbeddings) continue;
    grads.add(name, value.rows(), value.cols());
  }
  return grads;
}

namespace {

template <typename T>
void backprop_bow(const ModelView<T>& model, const ForwardTrace<T>& trace, const Vector<T>& dy,
                  ParameterSet<T>& grads) {
  const auto& w = model.params->at(params::kProjection);
  auto& dw = grads.at(params::kProjection);
  for (const auto& x : trace.inputs) dw.noalias() += dy * x.transpose();
  if (model.config->input_mode == InputMode::learned) {
    auto& de = grads.at(params::kInputEmbeddings);
    const Vector<T> dx = w.transpose() * dy;
    for (std::size_t id : trace.ids) de.row(static_cast<Eigen::Index>(id)) += dx.transpose();
  }
}

template <typename T>
void backprop_lstm(const ModelView<T>& model, const ForwardTrace<T>& trace, const Vector<T>& dy,
                   ParameterSet<T>& grads) {
  const auto& p = *model.params;
  const bool learned = model.config->input_mode == InputMode::learned;

  Vector<T> dz = dy;
  if (model.config->output == OutputNonlinearity::tanh) {
    dz = dy.cwiseProduct((Vector<T>::Ones(dy.size()) - trace.output.cwiseAbs2()));
  }
  const auto& last = trace.steps.back();
  grads.at(params::kOutputWeights).noalias() += dz * last.m.transpose();
  grads.at(params::kOutputBias) += dz;

  Vector<T> dm = p.at(params::kOutputWeights).transpose() * dz;
  Vector<T> dh = Vector<T>::Zero(dm.size());

  struct Layer {
    const Matrix<T>* w;
    const Matrix<T>* u;
    Matrix<T>* dw;
    Matrix<T>* du;
    Matrix<T>* db;
  };
  Layer layers[4];
  for (int s = 0; s < 4; ++s) {
    const std::string suffix(params::kLstmLayers[s]);
    layers[s] = {&p.at("W_" + suffix), &p.at("U_" + suffix), &grads.at("W_" + suffix), &grads.at("U_" + suffix),
                 &grads.at("b_" + suffix)};
  }
  Matrix<T>* de = learned ? &grads.at(params::kInputEmbeddings) : nullptr;

  for (std::size_t t = trace.steps.size(); t-- > 0;) {
    const auto& st = trace.steps[t];
    const Vector<T> tanh_m = st.m.array().tanh().matrix();
    const Vector<T> ones = Vector<T>::Ones(tanh_m.size());

    const Vector<T> dm_total = dm + dh.cwiseProduct(st.gate_out).cwiseProduct(ones - tanh_m.cwiseAbs2());
    const auto gate_grad = [&](const Vector<T>& g, const Vector<T>& dg) -> Vector<T> {
      return dg.cwiseProduct(g).cwiseProduct(ones - g);
    };
    Vector<T> dpre[4];
    dpre[0] = dm_total.cwiseProduct(st.gate_in);                                        // input signal (linear)
    dpre[1] = gate_grad(st.gate_in, dm_total.cwiseProduct(st.input_signal));            // input gate
    dpre[2] = gate_grad(st.gate_forget, dm_total.cwiseProduct(st.m_prev));              // forget gate
    dpre[3] = gate_grad(st.gate_out, dh.cwiseProduct(tanh_m));                          // output gate

    Vector<T> dx = Vector<T>::Zero(st.input.size());
    Vector<T> dh_prev = Vector<T>::Zero(dh.size());
    for (int s = 0; s < 4; ++s) {
      layers[s].dw->noalias() += dpre[s] * st.input.transpose();
      layers[s].du->noalias() += dpre[s] * st.h_prev.transpose();
      *layers[s].db += dpre[s];
      dx.noalias() += layers[s].w->transpose() * dpre[s];
      dh_prev.noalias() += layers[s].u->transpose() * dpre[s];
    }
    if (de) de->row(static_cast<Eigen::Index>(trace.ids[t])) += dx.transpose();
    dm = dm_total.cwiseProduct(st.gate_forget);
    dh = std::move(dh_prev);
  }
}

template <typename T>
LossGradient<T> example_loss(const LossConfig& loss, const Vector<T>& pred, const Vector<T>& target,
                             const Vector<T>* negative) {
  if (loss.kind == LossKind::cosine) return cosine_loss<T>(pred, target);
  if (!negative) throw Error("rank loss requires a negative example");
  if (!(loss.margin > 0)) throw Error("rank loss margin must be positive");
  return rank_loss<T>(pred, target, *negative, static_cast<T>(loss.margin));
}

}  // namespace

template <typename T>
void backpropagate(const ModelView<T>& model, const ForwardTrace<T>& trace, const Vector<T>& d_output,
                   ParameterSet<T>& grads) {
  if (model.config->architecture == Architecture::bow) {
    backprop_bow(model, trace, d_output, grads);
  } else {
    backprop_lstm(model, trace, d_output, grads);
  }
}

template <typename T>
ExampleGradient<T> backward(const ModelView<T>& model, std::span<const std::size_t> ids, const LossConfig& loss,
                            const Vector<T>& target, const Vector<T>* negative) {
  ForwardTrace<T> trace;
  const Vector<T> pred = forward<T>(model, ids, &trace);
  const auto lg = example_loss<T>(loss, pred, target, negative);
  ExampleGradient<T> out{lg.loss, zero_gradients(model)};
  backpropagate(model, trace, lg.d_pred, out.gradients);
  return out;
}

template <typename T>
OptimizerState<T> make_optimizer_state(const ParameterSet<T>& trainable, double rho, double epsilon) {
  if (!(rho > 0 && rho < 1) || !(epsilon > 0)) throw Error("adadelta: need 0 < rho < 1 and epsilon > 0");
  return {trainable.zeros_like(), trainable.zeros_like(), rho, epsilon};
}

template <typename T>
void adadelta_update(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state) {
  for (const auto& [name, g] : grads) {
    if (!g.allFinite()) throw Error("adadelta: non-finite gradient in '" + name + "'");
    const auto& p = params.at(name);
    if (p.rows() != g.rows() || p.cols() != g.cols()) throw Error("adadelta: shape mismatch for '" + name + "'");
  }
  const T rho = static_cast<T>(state.rho);
  const T eps = static_cast<T>(state.epsilon);
  for (const auto& [name, g] : grads) {
    auto& x = params.at(name);
    auto& eg = state.mean_sq_grad.at(name);
    auto& edx = state.mean_sq_step.at(name);
    const Eigen::Index n = g.size();
    T* xd = x.data();
    T* egd = eg.data();
    T* edxd = edx.data();
    const T* gd = g.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      egd[i] = rho * egd[i] + (T(1) - rho) * gd[i] * gd[i];
      const T dx = -(std::sqrt(edxd[i] + eps) / std::sqrt(egd[i] + eps)) * gd[i];
      edxd[i] = rho * edxd[i] + (T(1) - rho) * dx * dx;
      xd[i] += dx;
    }
  }
}

#define DEFEMBED_INSTANTIATE(T)                                                                                      \
  template LossGradient<T> cosine_loss<T>(const Vector<T>&, const Vector<T>&);                                      \
  template LossGradient<T> rank_loss<T>(const Vector<T>&, const Vector<T>&, const Vector<T>&, T);                   \
  template ParameterSet<T> zero_gradients<T>(const ModelView<T>&);                                                  \
  template void backpropagate<T>(const ModelView<T>&, const ForwardTrace<T>&, const Vector<T>&, ParameterSet<T>&);  \
  template ExampleGradient<T> backward<T>(const ModelView<T>&, std::span<const std::size_t>, const LossConfig&,      \
                                          const Vector<T>&, const Vector<T>*);                                       \
  template OptimizerState<T> make_optimizer_state<T>(const ParameterSet<T>&, double, double);                       \
  template void adadelta_update<T>(ParameterSet<T>&, const ParameterSet<T>&, OptimizerState<T>&);

DEFEMBED_INSTANTIATE(float)
DEFEMBED_INSTANTIATE(double)
#undef DEFEMBED_INSTANTIATE

std::string to_json_line(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["mean_loss"] = log.mean_loss;
  j["skipped_pairs"] = log.skipped_pairs;
  j["wall_time"] = log.wall_time;
  return j.dump();
}

namespace {

// Uniform over [0, n) excluding `exclude`.
std::size_t draw_negative(std::mt19937_64& rng, std::size_t n, std::size_t exclude) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 2);
  const std::size_t r = dist(rng);
  return r >= exclude ? r + 1 : r;
}

struct Example {
  std::size_t target_index;
  std::vector<std::size_t> ids;
};

}  // namespace

TrainingLog train(Encoder& encoder, std::span<const DefinitionRecord> pairs, const TrainConfig& train_config,
                  const LossConfig& loss_config, const EmbeddingStore& target, const EpochCallback& on_epoch) {
  if (train_config.batch_size < 1) throw Error("train: batch_size must be at least 1");
  if (target.dim() != encoder.config().target_dim) {
    throw Error("train: target store dimension " + std::to_string(target.dim()) + " does not match encoder target_dim " +
                std::to_string(encoder.config().target_dim));
  }
  if (loss_config.kind == LossKind::rank && !(loss_config.margin > 0)) throw Error("train: margin must be positive");

  TrainingLog log;
  std::vector<Example> examples;
  for (const auto& pair : pairs) {
    const auto index = target.find(pair.headword);
    if (!index) {
      ++log.skipped_pairs;
      log.warnings.push_back("headword '" + pair.headword + "' not in target store, pair skipped");
      continue;
    }
    auto found = encoder.lookup(pair.tokens);
    if (found.ids.empty()) {
      ++log.skipped_pairs;
      log.warnings.push_back("definition of '" + pair.headword + "' has no known tokens, pair skipped");
      continue;
    }
    examples.push_back({*index, std::move(found.ids)});
  }
  if (examples.empty()) return log;
  if (loss_config.kind == LossKind::rank && target.size() < 2) throw Error("train: rank loss needs >= 2 target words");

  const auto view = encoder.view();
  auto grads = zero_gradients(view);
  auto state = make_optimizer_state(grads);
  std::mt19937_64 shuffle_rng(train_config.shuffle_seed);
  std::mt19937_64 negative_rng(loss_config.negative_sampling_seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += train_config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + train_config.batch_size);
      grads.set_zero();
      for (std::size_t b = begin; b < end; ++b) {
        const auto& ex = examples[order[b]];
        const Vector<float> target_vec = to_vector<float>(target.vector(ex.target_index));
        Vector<float> negative_vec;
        if (loss_config.kind == LossKind::rank) {
          negative_vec = to_vector<float>(target.vector(draw_negative(negative_rng, target.size(), ex.target_index)));
        }
        ForwardTrace<float> trace;
        const Vector<float> pred = forward<float>(view, ex.ids, &trace);
        const auto lg = example_loss<float>(loss_config, pred, target_vec,
                                            loss_config.kind == LossKind::rank ? &negative_vec : nullptr);
        loss_sum += lg.loss;
        backpropagate(view, trace, lg.d_pred, grads);
      }
      const float scale = 1.0f / static_cast<float>(end - begin);
      for (auto& t : grads) t.value *= scale;
      adadelta_update(encoder.parameters(), grads, state);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(examples.size());
    entry.skipped_pairs = log.skipped_pairs;
    entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(entry);
    if (on_epoch && (train_config.eval_every == 0 || epoch % train_config.eval_every == 0)) on_epoch(entry);
  }
  return log;
}

GradCheckResult gradient_check(const Encoder& encoder, const DefinitionRecord& pair, const LossConfig& loss,
                               const EmbeddingStore& target, std::optional<std::string> negative, double epsilon) {
  if (!(epsilon > 0)) throw Error("gradient_check: epsilon must be positive");
  const auto found = encoder.lookup(pair.tokens);
  if (found.ids.empty()) throw NoKnownTokens();
  const auto target_index = target.find(pair.headword);
  if (!target_index) throw Error("gradient_check: headword '" + pair.headword + "' not in target store");

  ParameterSet<double> wide = encoder.parameters().cast<double>();
  const ModelView<double> view{&encoder.config(), &wide, encoder.input_store().get()};
  const Vector<double> target_vec = to_vector<double>(target.vector(*target_index));

  GradCheckResult result;
  Vector<double> negative_vec;
  if (loss.kind == LossKind::rank) {
    if (target.size() < 2) throw Error("gradient_check: rank loss needs >= 2 target words");
    std::mt19937_64 rng(loss.negative_sampling_seed);
    std::size_t neg_index = 0;
    if (negative) {
      const auto idx = target.find(*negative);
      if (!idx) throw Error("gradient_check: negative '" + *negative + "' not in target store");
      if (*idx == *target_index) throw Error("gradient_check: negative equals the target word");
      neg_index = *idx;
    } else {
      neg_index = draw_negative(rng, target.size(), *target_index);
    }
    const Vector<double> pred = forward<double>(view, found.ids);
    // Central differences straddling the hinge kink are meaningless; re-draw
    // the negative until the slack is clear of it.
    const double kink_tolerance = 10.0 * epsilon;
    for (int attempt = 0;; ++attempt) {
      negative_vec = to_vector<double>(target.vector(neg_index));
      const double slack = rank_slack<double>(pred, target_vec, negative_vec, loss.margin);
      if (std::abs(slack) > kink_tolerance) break;
      if (attempt == 100) throw Error("gradient_check: could not move the hinge away from its kink");
      result.perturbed = true;
      neg_index = draw_negative(rng, target.size(), *target_index);
    }
    result.negative = target.token(neg_index);
  }
  const Vector<double>* neg_ptr = loss.kind == LossKind::rank ? &negative_vec : nullptr;

  const auto analytic = backward<double>(view, found.ids, loss, target_vec, neg_ptr);
  result.loss = analytic.loss;
  const auto loss_at = [&] {
    const Vector<double> pred = forward<double>(view, found.ids);
    return example_loss<double>(loss, pred, target_vec, neg_ptr).loss;
  };

  for (const auto& [name, grad] : analytic.gradients) {
    auto& param = wide.at(name);
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + epsilon;
      const double plus = loss_at();
      param.data()[i] = saved - epsilon;
      const double minus = loss_at();
      param.data()[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = grad.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        if (rel >= result.max_relative_error) {
          result.max_relative_error = rel;
          result.worst_parameter = name;
          result.worst_index = static_cast<std::size_t>(i);
        }
      }
    }
  }
  return result;
}

}  // namespace defembed
