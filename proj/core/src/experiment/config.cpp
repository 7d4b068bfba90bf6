#include "histaid/experiment/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "histaid/data/io.hpp"
#include "histaid/data/records.hpp"
#include "histaid/error.hpp"

namespace histaid::experiment {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                    std::string(expected) + ")");
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
  const auto v = trim(value);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, value, "a non-negative integer");
  return out;
}

std::size_t to_size(std::string_view key, std::string_view value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

double to_double(std::string_view key, std::string_view value) {
  const auto v = trim(value);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, value, "a finite number");
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

bool is_none(std::string_view v) {
  const auto t = trim(v);
  return t == "none" || t == "all" || t == "inf" || t.empty();
}

struct Setting {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define HISTAID_SIZE(sec, name, field)                                                                        \
  Setting {                                                                                                   \
    sec, name, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.field = to_size(k, v); }, \
        [](const ExperimentConfig& c) { return fmt(static_cast<std::uint64_t>(c.field)); }                    \
  }
#define HISTAID_DOUBLE(sec, name, field)                                                                        \
  Setting {                                                                                                     \
    sec, name, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.field = to_double(k, v); }, \
        [](const ExperimentConfig& c) { return fmt(static_cast<double>(c.field)); }                             \
  }

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = {
      {"experiment", "name", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.name = trim(v); },
       [](const ExperimentConfig& c) { return c.name; }},
      {"experiment", "seeds",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
       },
       [](const ExperimentConfig& c) {
         std::vector<std::string> s;
         for (auto x : c.seeds) s.push_back(fmt(x));
         return join(s);
       }},

      {"data", "source",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.source = parse_data_source(trim(v)); },
       [](const ExperimentConfig& c) { return to_string(c.data.source); }},
      {"data", "images", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.images = trim(v); },
       [](const ExperimentConfig& c) { return c.data.images; }},
      {"data", "reports", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.reports = trim(v); },
       [](const ExperimentConfig& c) { return c.data.reports; }},
      {"data", "store", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.store = trim(v); },
       [](const ExperimentConfig& c) { return c.data.store; }},
      {"data", "samples", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.samples = trim(v); },
       [](const ExperimentConfig& c) { return c.data.samples; }},
      {"data", "sections",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         c.data.sections = data::parse_section_mode(trim(v));
       },
       [](const ExperimentConfig& c) { return data::to_string(c.data.sections); }},
      HISTAID_SIZE("data", "min_history", data.min_history),
      {"data", "split",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const auto parts = split_list(v);
         if (parts.size() != 3) bad_value(k, v, "three comma-separated fractions");
         for (std::size_t i = 0; i < 3; ++i) c.data.split[i] = to_double(k, parts[i]);
       },
       [](const ExperimentConfig& c) {
         return fmt(c.data.split[0]) + "," + fmt(c.data.split[1]) + "," + fmt(c.data.split[2]);
       }},
      HISTAID_SIZE("data", "split_seed", data.split_seed),
      HISTAID_SIZE("data", "synth_seed", data.synth_seed),
      {"data", "labels",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.labels = split_list(v); },
       [](const ExperimentConfig& c) { return join(c.data.labels); }},

      HISTAID_SIZE("synth", "n_subjects", data.synth.n_subjects),
      HISTAID_SIZE("synth", "min_visits", data.synth.min_visits),
      HISTAID_SIZE("synth", "max_visits", data.synth.max_visits),
      {"synth", "dim",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         const auto d = to_u64(k, v);
         if (d > std::numeric_limits<std::uint32_t>::max()) bad_value(k, v, "a 32-bit width");
         c.data.synth.dim = static_cast<std::uint32_t>(d);
       },
       [](const ExperimentConfig& c) { return fmt(static_cast<std::uint64_t>(c.data.synth.dim)); }},
      HISTAID_SIZE("synth", "n_labels", data.synth.n_labels),
      {"synth", "signal",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.data.synth.signal = data::parse_signal(trim(v)); },
       [](const ExperimentConfig& c) { return data::to_string(c.data.synth.signal); }},
      HISTAID_DOUBLE("synth", "halflife_days", data.synth.recency_halflife_days),
      HISTAID_DOUBLE("synth", "gap_min_days", data.synth.gap_min_days),
      HISTAID_DOUBLE("synth", "gap_max_days", data.synth.gap_max_days),
      HISTAID_DOUBLE("synth", "text_signal", data.synth.text_signal),
      HISTAID_DOUBLE("synth", "text_noise", data.synth.text_noise),
      HISTAID_DOUBLE("synth", "image_signal", data.synth.image_signal),
      HISTAID_DOUBLE("synth", "image_noise", data.synth.image_noise),
      HISTAID_DOUBLE("synth", "max_threshold", data.synth.max_threshold),
      HISTAID_DOUBLE("synth", "contradiction", data.synth.contradiction),
      HISTAID_DOUBLE("synth", "stale_gap_min_days", data.synth.stale_gap_min_days),
      HISTAID_DOUBLE("synth", "stale_gap_max_days", data.synth.stale_gap_max_days),

      {"history", "num_reports",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (is_none(v)) c.history.num_reports.reset();
         else c.history.num_reports = to_size(k, v);
       },
       [](const ExperimentConfig& c) {
         return c.history.num_reports ? fmt(static_cast<std::uint64_t>(*c.history.num_reports)) : std::string("all");
       }},
      {"history", "time_window_days",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (is_none(v)) {
           c.history.time_window_days.reset();
           return;
         }
         const double d = to_double(k, v);
         if (d <= 0.0) bad_value(k, v, "a positive number of days or 'inf'");
         c.history.time_window_days = d;
       },
       [](const ExperimentConfig& c) {
         return c.history.time_window_days ? fmt(*c.history.time_window_days) : std::string("inf");
       }},
      {"history", "modality",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         c.history.modality = parse_modality_combo(trim(v));
       },
       [](const ExperimentConfig& c) { return to_string(c.history.modality); }},

      HISTAID_SIZE("model", "dim", model.encoder.model_dim),
      HISTAID_SIZE("model", "heads", model.encoder.heads),
      HISTAID_SIZE("model", "layers", model.encoder.layers),
      HISTAID_SIZE("model", "ff_dim", model.encoder.ff_dim),
      HISTAID_DOUBLE("model", "dropout", model.encoder.dropout),
      {"model", "positional",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         c.model.encoder.positional.kind = temporal::parse_positional(trim(v));
       },
       [](const ExperimentConfig& c) { return temporal::to_string(c.model.encoder.positional.kind); }},
      HISTAID_DOUBLE("model", "position_scale", model.encoder.positional.position_scale),
      HISTAID_DOUBLE("model", "rope_base", model.encoder.positional.rope_base),
      HISTAID_SIZE("model", "max_positions", model.encoder.max_positions),
      {"model", "pooling",
       [](ExperimentConfig& c, std::string_view, std::string_view v) {
         c.model.encoder.pooling = encoder::parse_pooling(trim(v));
       },
       [](const ExperimentConfig& c) { return encoder::to_string(c.model.encoder.pooling); }},
      {"model", "fusion",
       [](ExperimentConfig& c, std::string_view, std::string_view v) { c.model.method = fusion::parse_fusion(trim(v)); },
       [](const ExperimentConfig& c) { return fusion::to_string(c.model.method); }},
      HISTAID_SIZE("model", "k_img", model.k_img),
      HISTAID_SIZE("model", "k_text", model.k_text),
      HISTAID_SIZE("model", "vilt_layers", model.fusion.vilt_layers),
      HISTAID_SIZE("model", "mbt_layers", model.fusion.mbt_layers),
      HISTAID_SIZE("model", "mbt_fusion_layers", model.fusion.mbt_fusion_layers),
      HISTAID_SIZE("model", "bottleneck", model.fusion.bottleneck),
      HISTAID_SIZE("model", "meter_layers", model.fusion.meter_layers),
      HISTAID_SIZE("model", "concat_hidden", model.fusion.concat_hidden),
      HISTAID_SIZE("model", "block_l", model.fusion.block_l),
      HISTAID_SIZE("model", "block_m", model.fusion.block_m),
      HISTAID_SIZE("model", "block_n", model.fusion.block_n),

      HISTAID_SIZE("train", "batch_size", train.batch_size),
      {"train", "lr_encoder",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (is_none(v)) c.train.lr_encoder.reset();
         else c.train.lr_encoder = to_double(k, v);
       },
       [](const ExperimentConfig& c) { return fmt(c.train.peak_lr_encoder()); }},
      {"train", "lr_tst",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (is_none(v)) c.train.lr_tst.reset();
         else c.train.lr_tst = to_double(k, v);
       },
       [](const ExperimentConfig& c) { return fmt(c.train.peak_lr_tst()); }},
      HISTAID_SIZE("train", "epochs", train.epochs),
      HISTAID_DOUBLE("train", "weight_decay", train.weight_decay),
      HISTAID_DOUBLE("train", "beta1", train.beta1),
      HISTAID_DOUBLE("train", "beta2", train.beta2),
      HISTAID_DOUBLE("train", "warmup_frac", train.warmup_frac),
      HISTAID_DOUBLE("train", "min_lr_ratio", train.min_lr_ratio),
      HISTAID_DOUBLE("train", "pos_weight", train.pos_weight),
  };
  return table;
}

#undef HISTAID_SIZE
#undef HISTAID_DOUBLE

}  // namespace

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::synthetic: return "synthetic";
    case DataSource::tables: return "tables";
    case DataSource::manifest: return "manifest";
  }
  return "?";
}

DataSource parse_data_source(std::string_view name) {
  if (name == "synthetic") return DataSource::synthetic;
  if (name == "tables") return DataSource::tables;
  if (name == "manifest") return DataSource::manifest;
  throw ConfigError("unknown data source '" + std::string(name) + "' (synthetic|tables|manifest)");
}

std::string to_string(ModalityCombo m) {
  switch (m) {
    case ModalityCombo::image_text: return "image_text";
    case ModalityCombo::image: return "image";
    case ModalityCombo::text: return "text";
  }
  return "?";
}

ModalityCombo parse_modality_combo(std::string_view name) {
  if (name == "image_text") return ModalityCombo::image_text;
  if (name == "image") return ModalityCombo::image;
  if (name == "text") return ModalityCombo::text;
  throw ConfigError("unknown modality combination '" + std::string(name) + "' (image_text|image|text)");
}

void apply_setting(ExperimentConfig& cfg, std::string_view section, std::string_view key, std::string_view value) {
  for (const auto& s : settings()) {
    if (section == s.section && key == s.key) {
      s.set(cfg, std::string(section) + "." + std::string(key), value);
      return;
    }
  }
  throw ConfigError("unknown setting '" + std::string(section) + "." + std::string(key) + "'");
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto path = trim(assignment.substr(0, eq));
  const auto dot = path.find('.');
  if (eq == std::string_view::npos || dot == std::string::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form section.key=value");
  }
  apply_setting(cfg, path.substr(0, dot), path.substr(dot + 1), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides,
                              const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  cfg.text = std::string(text);
  cfg.base_dir = base_dir;
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(cfg.text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, node] : body) apply_setting(cfg, section, key, node.get_value<std::string>());
  }
  for (const auto& o : overrides) {
    apply_override(cfg, o);
    cfg.overrides.push_back(o);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  return parse_config(data::read_file(path.string()), overrides, path.parent_path());
}

void ExperimentConfig::validate() const {
  if (name.empty() || name.find_first_of("/\\") != std::string::npos || name == "." || name == "..") {
    throw ConfigError("experiment name must be a plain directory name");
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (seeds[i] == seeds[j]) throw ConfigError("experiment.seeds repeats seed " + std::to_string(seeds[i]));
    }
  }
  switch (data.source) {
    case DataSource::synthetic:
      data.synth.validate();
      break;
    case DataSource::tables:
      if (data.images.empty() || data.reports.empty() || data.store.empty()) {
        throw ConfigError("data.source=tables needs data.images, data.reports and data.store");
      }
      break;
    case DataSource::manifest:
      if (data.samples.empty() || data.store.empty()) {
        throw ConfigError("data.source=manifest needs data.samples and data.store");
      }
      break;
  }
  for (double f : data.split) {
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError("data.split fractions must lie in [0, 1)");
  }
  if (data.split[1] + data.split[2] >= 1.0) throw ConfigError("data.split leaves no training subjects");
  train.validate();
  auto model_cfg = model;
  if (data.source == DataSource::synthetic) {
    model_cfg.store_dim = data.synth.dim;
    model_cfg.n_labels = data.synth.n_labels;
  }
  model_cfg.validate();
}

std::string resolved_ini(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& s : settings()) {
    if (section != s.section) {
      section = s.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(s.key) + " = " + s.get(cfg) + "\n";
  }
  out += "\n; transformer layers: pre-norm, GELU feed-forward\n";
  return out;
}

}  // namespace histaid::experiment
