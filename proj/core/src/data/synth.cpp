#include "histaid/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "histaid/data/pipeline.hpp"
#include "histaid/data/records.hpp"
#include "histaid/error.hpp"

namespace histaid::data {

namespace {

constexpr std::int64_t kEpoch = 1420070400;  // 2015-01-01T00:00:00Z
constexpr double kDay = 86400.0;

using Matrix = std::vector<std::vector<double>>;

// n orthonormal directions in R^d by Gram-Schmidt on Gaussian draws.
Matrix orthonormal(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix out;
  while (out.size() < n) {
    std::vector<double> v(d);
    for (double& x : v) x = g(rng);
    for (const auto& u : out) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<float> embed(const std::vector<double>& coeffs, const Matrix& dirs, double noise, std::size_t d,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d, 0.0);
  for (std::size_t c = 0; c < coeffs.size(); ++c) {
    for (std::size_t i = 0; i < d; ++i) v[i] += coeffs[c] * dirs[c][i];
  }
  std::vector<float> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(v[i] + noise * g(rng));
  return out;
}

std::vector<double> scaled(const std::vector<double>& v, double a) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = a * v[i];
  return out;
}

struct Visit {
  double day = 0.0;
  std::vector<double> image_coeff;  // signal coefficients per label direction
  std::vector<double> text_coeff;
  std::vector<std::uint8_t> labels;
};

}  // namespace

std::string to_string(SignalPlacement s) {
  switch (s) {
    case SignalPlacement::current_image_only: return "current_image_only";
    case SignalPlacement::history_text_recent: return "history_text_recent";
    case SignalPlacement::history_text_stale: return "history_text_stale";
    case SignalPlacement::cross_modal_xor: return "cross_modal_xor";
    case SignalPlacement::history_trend: return "history_trend";
  }
  return "?";
}

SignalPlacement parse_signal(std::string_view name) {
  if (name == "current_image_only") return SignalPlacement::current_image_only;
  if (name == "history_text_recent") return SignalPlacement::history_text_recent;
  if (name == "history_text_stale") return SignalPlacement::history_text_stale;
  if (name == "cross_modal_xor") return SignalPlacement::cross_modal_xor;
  if (name == "history_trend") return SignalPlacement::history_trend;
  throw ConfigError("unknown signal placement '" + std::string(name) +
                    "' (current_image_only|history_text_recent|history_text_stale|cross_modal_xor|history_trend)");
}

void SyntheticSpec::validate() const {
  if (n_subjects < 3) throw ConfigError("synthetic cohort needs at least 3 subjects");
  if (min_visits < 1 || max_visits < min_visits) throw ConfigError("visit range must satisfy 1 <= min <= max");
  if (signal == SignalPlacement::history_text_stale && min_visits < 2) {
    throw ConfigError("stale placement needs at least 2 visits per subject");
  }
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (n_labels == 0 || n_labels > dim) throw ConfigError("label count must lie in [1, dim]");
  if (!(recency_halflife_days > 0.0)) throw ConfigError("recency half-life must be positive");
  if (!(gap_min_days > 0.0) || gap_max_days < gap_min_days) throw ConfigError("visit gaps must satisfy 0 < min <= max");
  if (text_noise < 0.0 || image_noise < 0.0) throw ConfigError("noise levels must be non-negative");
  if (contradiction < 0.0 || contradiction > 1.0) throw ConfigError("contradiction must lie in [0, 1]");
  if (!(stale_gap_min_days > 30.0) || stale_gap_max_days < stale_gap_min_days) {
    throw ConfigError("stale gap must exceed 30 days and satisfy min <= max");
  }
}

std::vector<std::string> synthetic_label_names(std::size_t n) {
  auto names = default_label_names();
  for (std::size_t i = names.size(); i < n; ++i) names.push_back("Label " + std::to_string(i + 1));
  names.resize(n);
  return names;
}

SyntheticCohort synth_cohort(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t d = spec.dim;
  const std::size_t c_n = spec.n_labels;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;

  const Matrix text_dirs = orthonormal(c_n, d, rng);
  const Matrix image_dirs = orthonormal(c_n, d, rng);
  std::vector<double> threshold(c_n);
  for (std::size_t c = 0; c < c_n; ++c) {
    threshold[c] = c_n == 1 ? 0.0 : spec.max_threshold * static_cast<double>(c) / static_cast<double>(c_n - 1);
  }

  SyntheticCohort out;
  out.label_names = synthetic_label_names(c_n);
  out.images.header = image_columns(out.label_names);
  out.images.source = "synthetic images";
  out.reports.header = report_columns();
  out.reports.source = "synthetic reports";
  out.store = EmbeddingStore(spec.dim);

  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unif(rng); };
  auto latent_step = [&](const std::vector<double>& prev, double rho) {
    std::vector<double> z(c_n);
    const double s = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t c = 0; c < c_n; ++c) z[c] = rho * prev[c] + s * gauss(rng);
    return z;
  };
  auto fresh_latent = [&] {
    std::vector<double> z(c_n);
    for (double& x : z) x = gauss(rng);
    return z;
  };
  auto threshold_labels = [&](const std::vector<double>& z) {
    std::vector<std::uint8_t> y(c_n);
    for (std::size_t c = 0; c < c_n; ++c) y[c] = z[c] > threshold[c] ? 1 : 0;
    return y;
  };
  auto halflife_rho = [&](double gap_days) { return std::pow(0.5, gap_days / spec.recency_halflife_days); };

  const std::size_t digits = std::to_string(spec.n_subjects).size() + 1;
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    std::string subject = std::to_string(s + 1);
    subject = "p" + std::string(digits - subject.size(), '0') + subject;
    const std::size_t n = spec.min_visits + static_cast<std::size_t>(rng() % (spec.max_visits - spec.min_visits + 1));

    static const char* kRaces[] = {"White", "Black", "Asian", "Other"};
    const double race_u = unif(rng);
    Demographics demo;
    demo.sex = unif(rng) < 0.5 ? "F" : "M";
    demo.age_years = 20 + static_cast<int>(rng() % 71);
    demo.race = kRaces[race_u < 0.6 ? 0 : race_u < 0.8 ? 1 : race_u < 0.9 ? 2 : 3];

    std::vector<Visit> visits(n);
    double day = uniform(0.0, 3.0 * 365.0);
    switch (spec.signal) {
      case SignalPlacement::history_text_stale: {
        const std::size_t n_old = std::max<std::size_t>(1, n / 2);
        auto burst_gap = [&](std::size_t burst_len) {
          return burst_len <= 1 ? 0.0 : uniform(spec.gap_min_days, std::min(spec.gap_max_days, 29.0 / (burst_len - 1)));
        };
        std::vector<double> z;
        for (std::size_t v = 0; v < n; ++v) {
          if (v == 0) {
            z = fresh_latent();
          } else if (v == n_old) {
            const double gap = uniform(spec.stale_gap_min_days, spec.stale_gap_max_days);
            day += gap;
            z = latent_step(scaled(z, -1.0), spec.contradiction);
          } else {
            const double gap = burst_gap(v < n_old ? n_old : n - n_old);
            day += gap;
            z = latent_step(z, halflife_rho(gap));
          }
          visits[v].day = day;
          visits[v].labels = threshold_labels(z);
          visits[v].text_coeff = scaled(z, spec.text_signal);
          visits[v].image_coeff = scaled(z, spec.image_signal);
        }
        break;
      }
      case SignalPlacement::cross_modal_xor: {
        std::vector<std::uint8_t> prev_report(c_n, 0);
        for (std::size_t v = 0; v < n; ++v) {
          if (v > 0) day += uniform(spec.gap_min_days, spec.gap_max_days);
          visits[v].day = day;
          std::vector<double> img(c_n), txt(c_n);
          visits[v].labels.resize(c_n);
          for (std::size_t c = 0; c < c_n; ++c) {
            const std::uint8_t a = unif(rng) < 0.5 ? 1 : 0;
            const std::uint8_t b = unif(rng) < 0.5 ? 1 : 0;
            img[c] = spec.image_signal * (a ? 1.0 : -1.0);
            txt[c] = spec.text_signal * (b ? 1.0 : -1.0);
            visits[v].labels[c] = a ^ prev_report[c];
            prev_report[c] = b;
          }
          visits[v].image_coeff = std::move(img);
          visits[v].text_coeff = std::move(txt);
        }
        break;
      }
      case SignalPlacement::history_trend: {
        std::vector<std::vector<double>> scores;
        for (std::size_t v = 0; v < n; ++v) {
          if (v > 0) day += uniform(spec.gap_min_days, spec.gap_max_days);
          visits[v].day = day;
          auto z = fresh_latent();
          visits[v].labels.resize(c_n);
          std::vector<double> img(c_n, 0.0);
          for (std::size_t c = 0; c < c_n; ++c) {
            double stat = 0.0;
            if (v == 0) {
              // Nothing to compare against: the anchor image carries the label.
              stat = gauss(rng);
              img[c] = spec.image_signal * stat;
            } else if (v == 1) {
              stat = scores[0][c];
            } else {
              double older = 0.0;
              for (std::size_t u = 0; u + 1 < v; ++u) older += scores[u][c];
              stat = scores[v - 1][c] - older / static_cast<double>(v - 1);
            }
            visits[v].labels[c] = stat > 0.0 ? 1 : 0;
          }
          visits[v].image_coeff = std::move(img);
          visits[v].text_coeff = scaled(z, spec.text_signal);
          scores.push_back(std::move(z));
        }
        break;
      }
      case SignalPlacement::current_image_only:
      case SignalPlacement::history_text_recent: {
        std::vector<double> z;
        for (std::size_t v = 0; v < n; ++v) {
          if (v == 0) {
            z = fresh_latent();
          } else {
            const double gap = uniform(spec.gap_min_days, spec.gap_max_days);
            day += gap;
            z = spec.signal == SignalPlacement::current_image_only ? fresh_latent() : latent_step(z, halflife_rho(gap));
          }
          visits[v].day = day;
          visits[v].labels = threshold_labels(z);
          if (spec.signal == SignalPlacement::current_image_only) {
            visits[v].image_coeff = scaled(z, spec.image_signal);
            visits[v].text_coeff.assign(c_n, 0.0);
          } else {
            visits[v].image_coeff = scaled(z, spec.image_signal);
            visits[v].text_coeff = scaled(z, spec.text_signal);
          }
        }
        break;
      }
    }

    for (std::size_t v = 0; v < n; ++v) {
      const auto& visit = visits[v];
      const std::string study = subject + "-s" + std::to_string(v + 1);
      const auto chart_time = kEpoch + static_cast<std::int64_t>(std::llround(visit.day * kDay));
      const auto report_time = chart_time + 600 + static_cast<std::int64_t>(rng() % (6 * 3600));

      std::vector<std::string> irow{subject,  study, std::to_string(chart_time), image_key_for(study),
                                    demo.sex, std::to_string(demo.age_years), demo.race};
      for (auto y : visit.labels) irow.push_back(y ? "1" : "0");
      out.images.rows.push_back(std::move(irow));
      out.images.row_lines.push_back(out.images.rows.size() + 1);

      std::string positives;
      for (std::size_t c = 0; c < c_n; ++c) {
        if (visit.labels[c]) positives += (positives.empty() ? "" : ", ") + out.label_names[c];
      }
      const std::string impression = positives.empty() ? "No acute findings." : "Consistent with " + positives + ".";
      out.reports.rows.push_back({subject, study, std::to_string(report_time), "Synthetic follow-up.",
                                  "Routine evaluation.", v == 0 ? "None." : "Prior study.",
                                  "Study " + study + " reviewed.", impression});
      out.reports.row_lines.push_back(out.reports.rows.size() + 1);

      out.store.add(image_key_for(study), StoreModality::image,
                    embed(visit.image_coeff, image_dirs, spec.image_noise, d, rng));
      auto imp = embed(visit.text_coeff, text_dirs, spec.text_noise, d, rng);
      auto fnd = embed(scaled(visit.text_coeff, 0.5), text_dirs, spec.text_noise, d, rng);
      std::vector<float> both(d);
      for (std::size_t i = 0; i < d; ++i) both[i] = 0.5f * (imp[i] + fnd[i]);
      out.store.add(text_key_for(study, SectionMode::impression), StoreModality::text, std::move(imp));
      out.store.add(text_key_for(study, SectionMode::finding), StoreModality::text, std::move(fnd));
      out.store.add(text_key_for(study, SectionMode::both), StoreModality::text, std::move(both));
    }
  }
  return out;
}

}  // namespace histaid::data
