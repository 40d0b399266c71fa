#include "clens/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clens/error.hpp"
#include "clens/parallel.hpp"
#include "clens/rng.hpp"

namespace clens {

std::uint64_t ToyArch::param_count() const {
  std::uint64_t total = 0;
  std::uint64_t in = input_dim;
  for (auto h : hidden) {
    total += in * h + h;
    in = h;
  }
  return total + in * n_classes + n_classes;
}

std::string ToyArch::name() const {
  if (hidden.empty()) return "linear";
  std::string out = "mlp";
  for (std::size_t k = 0; k < hidden.size(); ++k) {
    if (k > 0) out += 'x';
    out += std::to_string(hidden[k]);
  }
  return out;
}

void ToyArch::validate() const {
  if (input_dim < 1 || n_classes < 2) throw Error(ErrorCode::ConfigInvalid, "architecture needs input_dim >= 1, C >= 2");
  for (auto h : hidden) {
    if (h < 1) throw Error(ErrorCode::ConfigInvalid, "hidden widths must be >= 1");
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::ConfigInvalid, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::ConfigInvalid, "momentum must lie in [0, 1)");
}

std::size_t ToyModel::param_size() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

std::vector<double> ToyModel::flat() const {
  std::vector<double> out;
  out.reserve(param_size());
  for (const auto& l : layers) {
    out.insert(out.end(), l.w.begin(), l.w.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

void ToyModel::set_flat(std::span<const double> params) {
  if (params.size() != param_size()) throw Error(ErrorCode::ShapeMismatch, "parameter vector size mismatch");
  std::size_t k = 0;
  for (auto& l : layers) {
    std::copy_n(params.begin() + k, l.w.size(), l.w.begin());
    k += l.w.size();
    std::copy_n(params.begin() + k, l.b.size(), l.b.begin());
    k += l.b.size();
  }
}

ToyModel init_model(const ToyArch& arch, std::uint64_t seed) {
  arch.validate();
  Xoshiro256pp rng(derive_seed(seed, "init/" + arch.name()));
  ToyModel m;
  m.arch = arch;
  std::uint32_t in = arch.input_dim;
  std::vector<std::uint32_t> widths = arch.hidden;
  widths.push_back(arch.n_classes);
  for (auto out : widths) {
    DenseLayer l;
    l.in = in;
    l.out = out;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    l.w.resize(static_cast<std::size_t>(in) * out);
    for (auto& w : l.w) w = rng.uniform(-bound, bound);
    l.b.assign(out, 0.0);
    m.layers.push_back(std::move(l));
    in = out;
  }
  return m;
}

namespace {

void softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// Activations of every layer for one input; acts[0] is the input.
void forward_cache(const ToyModel& model, std::span<const float> x, std::vector<std::vector<double>>& acts) {
  acts.resize(model.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const DenseLayer& l = model.layers[li];
    auto& out = acts[li + 1];
    out.assign(l.b.begin(), l.b.end());
    const auto& in = acts[li];
    for (std::uint32_t i = 0; i < l.in; ++i) {
      const double xi = in[i];
      if (xi == 0.0) continue;
      const double* wrow = &l.w[static_cast<std::size_t>(i) * l.out];
      for (std::uint32_t j = 0; j < l.out; ++j) out[j] += xi * wrow[j];
    }
    if (li + 1 < model.layers.size()) {
      for (auto& v : out) v = std::max(v, 0.0);
    }
  }
  softmax_inplace(acts.back());
}

void check_input(const ToyModel& model, std::size_t n) {
  if (n != model.arch.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(n) + " features, model expects " +
                                              std::to_string(model.arch.input_dim));
  }
}

std::uint32_t argmax(const std::vector<double>& p) {
  return static_cast<std::uint32_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

// Cross-entropy with the probability floored so a saturated softmax stays finite.
double cross_entropy(const std::vector<double>& p, std::uint32_t label) {
  return -std::log(std::max(p[label], 1e-300));
}

}  // namespace

std::vector<double> forward(const ToyModel& model, std::span<const float> x) {
  check_input(model, x.size());
  std::vector<std::vector<double>> acts;
  forward_cache(model, x, acts);
  return acts.back();
}

namespace {

double batch_gradient(const ToyModel& model, const SynthDataset& data, std::span<const std::size_t> rows,
                      std::vector<double>& gradient, std::size_t* correct) {
  check_input(model, data.n_features);
  gradient.assign(model.param_size(), 0.0);
  if (rows.empty()) return 0.0;
  // Offsets of each layer's weights and biases inside the flat vector.
  std::vector<std::size_t> w_off, b_off;
  std::size_t k = 0;
  for (const auto& l : model.layers) {
    w_off.push_back(k);
    k += l.w.size();
    b_off.push_back(k);
    k += l.b.size();
  }
  const double scale = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev;
  for (std::size_t r : rows) {
    forward_cache(model, data.row(r), acts);
    const std::uint32_t label = data.labels[r];
    loss += cross_entropy(acts.back(), label);
    if (correct != nullptr && argmax(acts.back()) == label) ++*correct;
    delta = acts.back();
    delta[label] -= 1.0;
    for (std::size_t li = model.layers.size(); li-- > 0;) {
      const DenseLayer& l = model.layers[li];
      const auto& in = acts[li];
      double* gw = &gradient[w_off[li]];
      double* gb = &gradient[b_off[li]];
      for (std::uint32_t j = 0; j < l.out; ++j) gb[j] += scale * delta[j];
      for (std::uint32_t i = 0; i < l.in; ++i) {
        const double xi = in[i] * scale;
        if (xi == 0.0) continue;
        double* row = gw + static_cast<std::size_t>(i) * l.out;
        for (std::uint32_t j = 0; j < l.out; ++j) row[j] += xi * delta[j];
      }
      if (li == 0) break;
      prev.assign(l.in, 0.0);
      for (std::uint32_t i = 0; i < l.in; ++i) {
        if (in[i] <= 0.0) continue;  // ReLU gate
        const double* wrow = &l.w[static_cast<std::size_t>(i) * l.out];
        double s = 0.0;
        for (std::uint32_t j = 0; j < l.out; ++j) s += wrow[j] * delta[j];
        prev[i] = s;
      }
      delta.swap(prev);
    }
  }
  return loss * scale;
}

}  // namespace

double loss_and_gradient(const ToyModel& model, const SynthDataset& data, std::span<const std::size_t> rows,
                         std::vector<double>& gradient) {
  return batch_gradient(model, data, rows, gradient, nullptr);
}

EpochStats train_epoch(ToyModel& model, OptimizerState& state, const SynthDataset& train, const TrainConfig& config,
                       std::uint32_t epoch_index) {
  config.validate();
  if (train.size() == 0) throw Error(ErrorCode::DimensionZero, "empty training set");
  check_input(model, train.n_features);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Xoshiro256pp rng(derive_seed(config.seed, "shuffle/" + std::to_string(epoch_index)));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  if (state.velocity.size() != model.param_size()) state.velocity.assign(model.param_size(), 0.0);
  auto params = model.flat();
  std::vector<double> grad;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const std::span<const std::size_t> batch(order.data() + start, end - start);
    const double loss = batch_gradient(model, train, batch, grad, &correct);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::NonFiniteLoss, "loss diverged at epoch " + std::to_string(epoch_index));
    }
    loss_sum += loss * static_cast<double>(batch.size());
    if (config.learning_rate != 0.0) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        state.velocity[k] = config.momentum * state.velocity[k] + grad[k];
        params[k] -= config.learning_rate * state.velocity[k];
      }
      model.set_flat(params);
    }
  }
  const double n = static_cast<double>(train.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

EpochStats evaluate(const ToyModel& model, const SynthDataset& data) {
  check_input(model, data.n_features);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = forward(model, data.row(i));
    loss += cross_entropy(p, data.labels[i]);
    if (argmax(p) == data.labels[i]) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

GradientCheck gradient_check(const ToyModel& model, const SynthDataset& data, std::uint32_t probes, double h,
                             std::uint64_t seed) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> analytic, scratch;
  loss_and_gradient(model, data, rows, analytic);

  Xoshiro256pp rng(derive_seed(seed, "gradient-check"));
  const auto base = model.flat();
  ToyModel probe = model;
  GradientCheck out;
  for (std::uint32_t k = 0; k < probes; ++k) {
    const std::size_t idx = rng.below(base.size());
    auto params = base;
    params[idx] = base[idx] + h;
    probe.set_flat(params);
    const double up = loss_and_gradient(probe, data, rows, scratch);
    params[idx] = base[idx] - h;
    probe.set_flat(params);
    const double down = loss_and_gradient(probe, data, rows, scratch);
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::fabs(analytic[idx]), std::fabs(numeric), 1e-8});
    const double err = std::fabs(analytic[idx] - numeric) / denom;
    out.relative_errors.push_back(err);
    out.max_relative_error = std::max(out.max_relative_error, err);
  }
  return out;
}

std::string model_id_for(const ToyArch& arch, std::uint64_t replica) {
  return arch.name() + "-s" + std::to_string(replica);
}

namespace {

// Appends one epoch of probability rows and returns that epoch's metrics.
EpochStats snapshot(const ToyModel& model, const SynthDataset& data, ProbLog& log) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = forward(model, data.row(i));
    for (double v : p) log.probs.push_back(static_cast<float>(v));
    loss += cross_entropy(p, data.labels[i]);
    if (argmax(p) == data.labels[i]) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace

RunOutput train_run(const ToyArch& arch, std::uint64_t replica, const TrainConfig& config,
                    const DatasetBundle& data) {
  config.validate();
  RunOutput out;
  out.model_id = model_id_for(arch, replica);
  out.family = "mlp-d" + std::to_string(arch.hidden.size());
  out.seed = replica;
  out.param_count = arch.param_count();

  std::vector<const SynthDataset*> evals{&data.train, &data.id};
  for (const auto& o : data.ood) evals.push_back(&o);
  for (const auto* d : evals) {
    ProbLog& log = out.logs[d->name];
    log.model_id = out.model_id;
    log.n_epochs = config.epochs;
    log.n_samples = static_cast<std::uint32_t>(d->size());
    log.n_classes = arch.n_classes;
    log.probs.reserve(log.value_count());
  }

  ToyModel model = init_model(arch, derive_seed(config.seed, out.model_id + "/init"));
  OptimizerState state;
  TrainConfig run_config = config;
  run_config.seed = derive_seed(config.seed, out.model_id + "/shuffle");
  for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    train_epoch(model, state, data.train, run_config, epoch);
    for (const auto* d : evals) {
      const auto stats = snapshot(model, *d, out.logs[d->name]);
      out.metrics.rows.push_back({epoch, d->name, stats.loss, stats.accuracy});
    }
  }
  return out;
}

std::vector<RunOutput> train_ensemble(const DatasetBundle& data, const std::vector<ToyArch>& archs,
                                      std::uint32_t replicas, const TrainConfig& config) {
  std::vector<std::pair<const ToyArch*, std::uint64_t>> jobs;
  for (const auto& a : archs) {
    for (std::uint64_t r = 0; r < replicas; ++r) jobs.emplace_back(&a, r);
  }
  std::vector<RunOutput> out(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) { out[k] = train_run(*jobs[k].first, jobs[k].second, config, data); });
  return out;
}

}  // namespace clens
