#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "histaid/data/records.hpp"

namespace histaid::data {

enum class SectionMode { impression, finding, both };
std::string to_string(SectionMode m);
SectionMode parse_section_mode(std::string_view name);

enum class Split : std::uint8_t { train, val, test, none };
std::string to_string(Split s);
Split parse_split(std::string_view name);

// impression -> impression text; finding -> findings text;
// both -> "Impression: <impression> Finding: <findings>". nullopt when a
// required section is absent.
std::optional<std::string> compose_report_text(const ReportSections& sections, SectionMode mode);

// Store keys: "<study_id>/image" and "<study_id>/text/<mode>".
std::string image_key_for(std::string_view study_id);
std::string text_key_for(std::string_view study_id, SectionMode mode);

struct HistoryItem {
  std::string key;
  double offset_hours = 0.0;  // anchor chart time minus item chart time
  std::string study_id;
  bool empty_impression = false;

  bool operator==(const HistoryItem&) const = default;
};

struct TemporalSample {
  std::string subject_id;
  std::string anchor_study_id;
  std::int64_t anchor_time = 0;
  std::string image_key;
  std::vector<HistoryItem> history_reports;  // oldest first
  std::vector<HistoryItem> history_images;   // oldest first
  std::vector<std::uint8_t> labels;
  Demographics demographics;
  Split split = Split::none;
  bool anchor_empty_impression = false;
};

struct BuildOptions {
  SectionMode mode = SectionMode::impression;
  std::size_t min_history = 0;
};

struct BuildStats {
  std::size_t subjects = 0;
  std::size_t studies = 0;
  std::size_t samples = 0;
  std::size_t time_ties = 0;        // same-subject studies sharing a chart time
  std::size_t missing_section = 0;  // reports lacking the section the mode needs
  std::size_t below_min_history = 0;
  std::vector<std::string> warnings;
};

// One sample per study: the study is the anchor, its labels are the targets
// and every earlier study of the same subject contributes history. Output is
// ordered by (subject_id, anchor chart time, study_id). Throws LeakageError
// when any history item is not strictly before the anchor.
std::vector<TemporalSample> build_samples(const std::vector<StudyRecord>& records, const BuildOptions& options,
                                          BuildStats* stats = nullptr);

// Throws LeakageError naming the first sample whose history has an offset <= 0.
void check_leakage(const std::vector<TemporalSample>& samples);

struct DedupStats {
  std::size_t duplicate_history = 0;
  std::size_t empty_history = 0;
  std::size_t empty_anchor = 0;
};

// Drops repeated (key, offset) history items and history items with an empty
// impression, then whole samples whose anchor impression is empty.
std::vector<TemporalSample> dedup_filter(std::vector<TemporalSample> samples, DedupStats* stats = nullptr);

struct CohortSplit {
  std::vector<std::string> train, val, test;
  Split of(std::string_view subject) const;
};

// Seeded subject-level split. Validation and test each receive
// max(1, round(fraction * n)) subjects; training keeps the rest.
CohortSplit split_patients(std::vector<std::string> subjects, std::array<double, 3> fractions, std::uint64_t seed);
void assign_splits(std::vector<TemporalSample>& samples, const CohortSplit& split);
std::vector<std::string> unique_subjects(const std::vector<TemporalSample>& samples);

// Report texts per store key for every record whose sections satisfy `mode`.
std::vector<std::pair<std::string, std::string>> report_texts(const std::vector<StudyRecord>& records,
                                                              SectionMode mode);

// History restrictions used by the ablation suites.
void keep_recent_reports(TemporalSample& s, std::size_t n);
void keep_reports_within(TemporalSample& s, double max_offset_hours);

}  // namespace histaid::data
