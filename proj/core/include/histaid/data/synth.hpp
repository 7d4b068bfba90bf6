#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "histaid/data/store.hpp"
#include "histaid/data/table.hpp"

namespace histaid::data {

// Where the label-bearing signal lives in a synthetic cohort.
//   current_image_only   labels are visible in the anchor image; reports are noise
//   history_text_recent  a slowly drifting latent drives labels; reports show it
//                        clearly, the current image only faintly
//   history_text_stale   visits come in two bursts more than 30 days apart and
//                        the older burst reports a contradicting latent
//   cross_modal_xor      label = image bit XOR bit of the most recent report
//   history_trend        label = whether the newest report's score exceeds the
//                        mean of the older ones
enum class SignalPlacement { current_image_only, history_text_recent, history_text_stale, cross_modal_xor, history_trend };

std::string to_string(SignalPlacement s);
SignalPlacement parse_signal(std::string_view name);

struct SyntheticSpec {
  std::size_t n_subjects = 300;
  std::size_t min_visits = 2;
  std::size_t max_visits = 8;
  std::uint32_t dim = 32;
  std::size_t n_labels = 13;
  SignalPlacement signal = SignalPlacement::history_text_recent;
  double recency_halflife_days = 30.0;
  double gap_min_days = 1.0;
  double gap_max_days = 14.0;
  double text_signal = 1.0;
  double text_noise = 0.3;
  double image_signal = 0.3;
  double image_noise = 1.0;
  // Largest per-label threshold on the unit-variance latent; thresholds spread
  // linearly from 0, giving prevalences between 50% and about 20%.
  double max_threshold = 0.8;
  // Stale placement: correlation between the two bursts' latents is -contradiction.
  double contradiction = 0.9;
  double stale_gap_min_days = 40.0;
  double stale_gap_max_days = 120.0;

  void validate() const;
};

struct SyntheticCohort {
  std::vector<std::string> label_names;
  Table images;
  Table reports;
  EmbeddingStore store;
};

// Deterministic in (spec, seed). Every study gets "<study>/image" and
// "<study>/text/{impression,finding,both}" embeddings.
SyntheticCohort synth_cohort(const SyntheticSpec& spec, std::uint64_t seed);

std::vector<std::string> synthetic_label_names(std::size_t n);

}  // namespace histaid::data
