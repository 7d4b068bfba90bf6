#include "histaid/data/records.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <utility>

#include "histaid/error.hpp"

namespace histaid::data {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class Int>
Int parse_int(std::string_view text, const Table& t, std::size_t row, std::string_view column) {
  auto s = trim(text);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(t.source + ":" + std::to_string(t.row_lines[row]) + ": column '" + std::string(column) +
                     "' is not an integer: '" + std::string(text) + "'");
  }
  return v;
}

std::optional<std::string> optional_field(const std::string& v) {
  if (v.empty()) return std::nullopt;
  return v;
}

}  // namespace

LabelState parse_label_state(std::string_view text) {
  const auto s = lower(trim(text));
  if (s == "positive" || s == "1" || s == "1.0") return LabelState::positive;
  if (s == "negative" || s == "0" || s == "0.0") return LabelState::negative;
  if (s == "uncertain" || s == "-1" || s == "-1.0") return LabelState::uncertain;
  if (s.empty() || s == "missing") return LabelState::missing;
  throw ParseError("unrecognized label value '" + std::string(text) + "'");
}

std::string to_string(LabelState s) {
  switch (s) {
    case LabelState::positive: return "positive";
    case LabelState::negative: return "negative";
    case LabelState::uncertain: return "uncertain";
    case LabelState::missing: return "missing";
  }
  return "missing";
}

std::vector<std::string> default_label_names() {
  return {"Atelectasis",      "Cardiomegaly",     "Consolidation",  "Edema",
          "Enlarged Cardiomediastinum", "Fracture", "Lung Lesion",   "Lung Opacity",
          "Pleural Effusion", "Pleural Other",    "Pneumonia",      "Pneumothorax",
          "Support Devices"};
}

std::vector<std::string> image_columns(const std::vector<std::string>& label_names) {
  std::vector<std::string> cols{"subject_id", "study_id", "chart_time", "image_embedding_key",
                                "sex",        "age_years", "race"};
  cols.insert(cols.end(), label_names.begin(), label_names.end());
  return cols;
}

std::vector<std::string> report_columns() {
  return {"subject_id", "study_id", "chart_time", "history", "indication", "comparison", "findings", "impression"};
}

std::vector<StudyRecord> merge_records(const Table& images, const Table& reports,
                                       const std::vector<std::string>& label_names, MergeStats* stats) {
  const auto i_subject = images.require_column("subject_id");
  const auto i_study = images.require_column("study_id");
  const auto i_time = images.require_column("chart_time");
  const auto i_key = images.column("image_embedding_key");
  const auto i_sex = images.column("sex");
  const auto i_age = images.column("age_years");
  const auto i_race = images.column("race");
  std::vector<std::size_t> i_labels;
  for (const auto& name : label_names) i_labels.push_back(images.require_column(name));

  const auto r_subject = reports.require_column("subject_id");
  const auto r_study = reports.require_column("study_id");
  const auto r_time = reports.require_column("chart_time");
  const auto r_history = reports.column("history");
  const auto r_indication = reports.column("indication");
  const auto r_comparison = reports.column("comparison");
  const auto r_findings = reports.column("findings");
  const auto r_impression = reports.column("impression");

  auto section = [&](const std::vector<std::string>& row, const std::optional<std::size_t>& col) {
    return col ? optional_field(row[*col]) : std::nullopt;
  };

  // Report rows per key, in order of appearance, consumed as image rows pair up.
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_key;
  for (std::size_t r = 0; r < reports.rows.size(); ++r) {
    const auto& row = reports.rows[r];
    by_key[{row[r_subject], row[r_study]}].push_back(r);
  }
  std::map<std::pair<std::string, std::string>, std::size_t> used;

  MergeStats st;
  st.image_rows = images.rows.size();
  st.report_rows = reports.rows.size();
  std::vector<StudyRecord> out;
  for (std::size_t r = 0; r < images.rows.size(); ++r) {
    const auto& row = images.rows[r];
    std::pair<std::string, std::string> key{row[i_subject], row[i_study]};
    if (key.first.empty() || key.second.empty()) {
      throw ParseError(images.source + ":" + std::to_string(images.row_lines[r]) + ": empty subject_id or study_id");
    }
    StudyRecord rec;
    rec.subject_id = key.first;
    rec.study_id = key.second;
    rec.chart_time = parse_int<std::int64_t>(row[i_time], images, r, "chart_time");
    if (rec.chart_time <= 0) {
      throw ParseError(images.source + ":" + std::to_string(images.row_lines[r]) + ": chart_time must be positive");
    }
    if (i_key) rec.image_embedding_key = optional_field(row[*i_key]);
    if (i_sex) rec.demographics.sex = row[*i_sex];
    if (i_age && !trim(row[*i_age]).empty()) rec.demographics.age_years = parse_int<int>(row[*i_age], images, r, "age_years");
    if (i_race) rec.demographics.race = row[*i_race];
    for (std::size_t l = 0; l < i_labels.size(); ++l) {
      try {
        rec.labels.push_back(parse_label_state(row[i_labels[l]]));
      } catch (const ParseError& e) {
        throw ParseError(images.source + ":" + std::to_string(images.row_lines[r]) + ": " + e.what());
      }
    }

    auto it = by_key.find(key);
    auto& n_used = used[key];
    if (it == by_key.end() || n_used >= it->second.size()) {
      ++st.dropped_images;
      continue;
    }
    const auto rr = it->second[n_used++];
    const auto& rep = reports.rows[rr];
    rec.report_time = parse_int<std::int64_t>(rep[r_time], reports, rr, "chart_time");
    rec.sections.history = section(rep, r_history);
    rec.sections.indication = section(rep, r_indication);
    rec.sections.comparison = section(rep, r_comparison);
    rec.sections.findings = section(rep, r_findings);
    rec.sections.impression = section(rep, r_impression);
    out.push_back(std::move(rec));
  }
  for (const auto& [key, rows] : by_key) {
    const auto n = used.count(key) ? used[key] : 0;
    st.dropped_reports += rows.size() - n;
  }
  st.merged = out.size();
  if (stats != nullptr) *stats = st;
  return out;
}

}  // namespace histaid::data
