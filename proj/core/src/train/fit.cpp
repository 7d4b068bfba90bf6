#include "histaid/train/fit.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>

#include "histaid/data/io.hpp"
#include "histaid/error.hpp"
#include "histaid/tensor/ops.hpp"
#include "histaid/train/optim.hpp"

namespace histaid::train {

namespace ops = histaid::tensor;

double TrainConfig::peak_lr_encoder() const {
  return lr_encoder.value_or(1e-5 * static_cast<double>(batch_size) / 64.0);
}

double TrainConfig::peak_lr_tst() const { return lr_tst.value_or(1e-4 * static_cast<double>(batch_size) / 64.0); }

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) throw ConfigError("warmup_frac must lie in (0, 1)");
  if (min_lr_ratio < 0.0 || min_lr_ratio > 1.0) throw ConfigError("min_lr_ratio must lie in [0, 1]");
  if (peak_lr_encoder() < 0.0 || peak_lr_tst() < 0.0) throw ConfigError("learning rates must be non-negative");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(pos_weight > 0.0)) throw ConfigError("pos_weight must be positive");
}

Checkpoint snapshot(const ParamSet& params) {
  Checkpoint c;
  for (const auto& [name, t] : params.items()) c.params.push_back({name, t.shape(), t.to_vector()});
  return c;
}

void restore(ParamSet& params, const Checkpoint& ckpt) {
  if (ckpt.params.size() != params.items().size()) {
    throw ContractError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                        std::to_string(params.items().size()));
  }
  for (const auto& p : ckpt.params) {
    const auto* t = params.find(p.name);
    if (t == nullptr) throw ContractError("checkpoint parameter '" + p.name + "' does not exist in the model");
    if (t->shape() != p.shape) {
      throw ContractError("checkpoint parameter '" + p.name + "' has shape " + tensor::shape_string(p.shape) +
                          ", model expects " + tensor::shape_string(t->shape()));
    }
    auto dst = Tensor(*t).mutable_values();
    std::copy(p.values.begin(), p.values.end(), dst.begin());
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
constexpr char kMagic[5] = {'T', 'M', 'C', 'K', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Cursor {
  const std::string& bytes;
  const std::string& source;
  std::size_t pos = 0;

  const char* take(std::size_t n) {
    if (bytes.size() - pos < n) {
      throw CorruptionError(source + ": truncated checkpoint at byte offset " + std::to_string(pos));
    }
    const char* p = bytes.data() + pos;
    pos += n;
    return p;
  }
  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
};

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt, const std::string& extra_json) {
  nlohmann::json meta;
  meta["epoch"] = ckpt.epoch;
  meta["val_macro_auroc"] = ckpt.val_macro_auroc ? nlohmann::json(*ckpt.val_macro_auroc) : nlohmann::json(nullptr);
  meta["extra"] = nlohmann::json::parse(extra_json);
  const auto meta_text = meta.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  put<std::uint64_t>(out, ckpt.params.size());
  for (const auto& p : ckpt.params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(p.values.data()), p.values.size() * sizeof(double));
  }
  data::write_file_atomic(path, out);
}

Checkpoint read_checkpoint(const std::string& path, std::string* extra_json) {
  const auto bytes = data::read_file(path);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path + ": not a checkpoint (bad magic)");
  }
  Cursor c{bytes, path, sizeof(kMagic)};
  const auto meta_len = c.get<std::uint32_t>();
  const std::string meta_text(c.take(meta_len), meta_len);
  Checkpoint ckpt;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    ckpt.epoch = meta.at("epoch").get<std::size_t>();
    if (!meta.at("val_macro_auroc").is_null()) ckpt.val_macro_auroc = meta.at("val_macro_auroc").get<double>();
    if (extra_json != nullptr) *extra_json = meta.at("extra").dump();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(path + ": bad checkpoint metadata: " + e.what());
  }
  const auto count = c.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray p;
    const auto len = c.get<std::uint32_t>();
    p.name.assign(c.take(len), len);
    const auto ndim = c.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < ndim; ++k) p.shape.push_back(c.get<std::uint64_t>());
    p.values.resize(tensor::shape_numel(p.shape));
    std::memcpy(p.values.data(), c.take(p.values.size() * sizeof(double)), p.values.size() * sizeof(double));
    ckpt.params.push_back(std::move(p));
  }
  if (c.pos != bytes.size()) throw CorruptionError(path + ": trailing bytes after checkpoint parameters");
  return ckpt;
}

metrics::ScoreMatrix predict(const HistAidModel& model, std::span<const PreparedSample> samples) {
  metrics::ScoreMatrix m;
  m.n = samples.size();
  m.c = model.config().n_labels;
  Context ctx;
  for (const auto& s : samples) {
    const auto out = model.forward(s, ctx);
    const auto logits = out.values();
    for (std::size_t j = 0; j < m.c; ++j) {
      const double z = logits[j];
      m.scores.push_back(z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
      m.labels.push_back(static_cast<std::uint8_t>(s.labels[j]));
    }
  }
  return m;
}

FitResult fit(HistAidModel& model, std::span<const PreparedSample> train, std::span<const PreparedSample> val,
              const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  const auto c = model.config().n_labels;

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Context ctx{true, &dropout_rng};

  auto& params = model.params();
  std::vector<AdamState> state(params.items().size());
  std::vector<bool> encoder_group(params.items().size());
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    encoder_group[i] = HistAidModel::is_encoder_param(params.items()[i].first);
  }

  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = steps_per_epoch * cfg.epochs;
  std::size_t step = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng() % (i + 1)]);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(train.size(), begin + cfg.batch_size);
      std::vector<Tensor> logits;
      std::vector<double> targets;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& s = train[order[k]];
        logits.push_back(model.forward(s, ctx));
        targets.insert(targets.end(), s.labels.begin(), s.labels.end());
      }
      const auto batch_logits = logits.size() == 1 ? logits.front() : ops::concat_rows(logits);
      const auto loss = bce_multilabel(batch_logits, Tensor::from({end - begin, c}, std::move(targets)),
                                       cfg.pos_weight);
      loss_sum += loss.item() * static_cast<double>(end - begin);
      params.zero_grad();
      tensor::backward(loss);

      ++step;
      const double enc_lr = cosine_warmup_lr(step, total, cfg.peak_lr_encoder(), cfg.warmup_frac, cfg.min_lr_ratio);
      const double tst_lr = cosine_warmup_lr(step, total, cfg.peak_lr_tst(), cfg.warmup_frac, cfg.min_lr_ratio);
      for (std::size_t i = 0; i < params.items().size(); ++i) {
        Tensor p = params.items()[i].second;
        const auto g = p.grad();
        AdamHyper h{encoder_group[i] ? enc_lr : tst_lr, cfg.weight_decay, cfg.beta1, cfg.beta2, 1e-8};
        adamw_step(p.mutable_values(), g, state[i], h);
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train.size());
    if (!val.empty()) {
      const auto scores = predict(model, val);
      std::vector<std::string> names(c);
      entry.val_macro_auroc = metrics::evaluate(scores, names).macro_auroc;
    }
    const double score = entry.val_macro_auroc.value_or(-std::numeric_limits<double>::infinity());
    if (epoch == 1 || score > best) {
      best = score;
      result.best = snapshot(params);
      result.best.epoch = epoch;
      result.best.val_macro_auroc = entry.val_macro_auroc;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

}  // namespace histaid::train
