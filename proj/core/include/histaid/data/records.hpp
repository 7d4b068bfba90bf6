#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "histaid/data/table.hpp"

namespace histaid::data {

enum class LabelState : std::uint8_t { negative, positive, uncertain, missing };

// Accepts positive/negative/uncertain/missing (any case), 1/0/-1, or blank.
LabelState parse_label_state(std::string_view text);
std::string to_string(LabelState s);
// U-zeros: only positive maps to 1.
inline std::uint8_t binarize(LabelState s) { return s == LabelState::positive ? 1 : 0; }

// Twelve thoracic findings plus support devices.
std::vector<std::string> default_label_names();

struct Demographics {
  std::string sex;   // F or M
  int age_years = 0;
  std::string race;  // White, Black, Asian or Other
};

struct ReportSections {
  std::optional<std::string> history, indication, comparison, findings, impression;
};

// One imaging study joined with its radiology report.
struct StudyRecord {
  std::string subject_id;
  std::string study_id;
  std::int64_t chart_time = 0;   // image acquisition, epoch seconds
  std::int64_t report_time = 0;  // report chart time, epoch seconds
  std::optional<std::string> image_embedding_key;
  ReportSections sections;
  std::vector<LabelState> labels;
  Demographics demographics;
};

struct MergeStats {
  std::size_t image_rows = 0;
  std::size_t report_rows = 0;
  std::size_t merged = 0;
  std::size_t dropped_images = 0;   // image rows without a report
  std::size_t dropped_reports = 0;  // report rows without an image
};

// Column layout of the two input tables.
//   images:  subject_id, study_id, chart_time, image_embedding_key, sex, age_years, race, <one column per label>
//   reports: subject_id, study_id, chart_time, history, indication, comparison, findings, impression
std::vector<std::string> image_columns(const std::vector<std::string>& label_names);
std::vector<std::string> report_columns();

// Inner join on (subject_id, study_id). Rows without a partner are dropped and
// counted; duplicate keys on either side pair up in order of appearance.
std::vector<StudyRecord> merge_records(const Table& images, const Table& reports,
                                       const std::vector<std::string>& label_names, MergeStats* stats = nullptr);

}  // namespace histaid::data
