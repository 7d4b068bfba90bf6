#include "histaid/data/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "histaid/error.hpp"

namespace histaid::data {

namespace {

bool blank(const std::optional<std::string>& s) {
  return !s || std::all_of(s->begin(), s->end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string to_string(SectionMode m) {
  switch (m) {
    case SectionMode::impression: return "impression";
    case SectionMode::finding: return "finding";
    case SectionMode::both: return "both";
  }
  return "impression";
}

SectionMode parse_section_mode(std::string_view name) {
  if (name == "impression") return SectionMode::impression;
  if (name == "finding" || name == "findings") return SectionMode::finding;
  if (name == "both") return SectionMode::both;
  throw ConfigError("unknown section mode '" + std::string(name) + "' (impression|finding|both)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "none";
  }
  return "none";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  if (name == "none") return Split::none;
  throw ConfigError("unknown split '" + std::string(name) + "' (train|val|test)");
}

std::optional<std::string> compose_report_text(const ReportSections& sections, SectionMode mode) {
  switch (mode) {
    case SectionMode::impression:
      return sections.impression;
    case SectionMode::finding:
      return sections.findings;
    case SectionMode::both:
      if (!sections.impression || !sections.findings) return std::nullopt;
      return "Impression: " + *sections.impression + " Finding: " + *sections.findings;
  }
  return std::nullopt;
}

std::string image_key_for(std::string_view study_id) { return std::string(study_id) + "/image"; }

std::string text_key_for(std::string_view study_id, SectionMode mode) {
  return std::string(study_id) + "/text/" + to_string(mode);
}

std::vector<TemporalSample> build_samples(const std::vector<StudyRecord>& records, const BuildOptions& options,
                                          BuildStats* stats) {
  BuildStats st;
  std::map<std::string, std::vector<const StudyRecord*>> by_subject;
  for (const auto& r : records) by_subject[r.subject_id].push_back(&r);
  st.subjects = by_subject.size();
  st.studies = records.size();

  std::vector<TemporalSample> out;
  for (auto& [subject, recs] : by_subject) {
    std::sort(recs.begin(), recs.end(), [](const StudyRecord* a, const StudyRecord* b) {
      return std::tie(a->chart_time, a->study_id) < std::tie(b->chart_time, b->study_id);
    });
    for (std::size_t i = 1; i < recs.size(); ++i) {
      if (recs[i]->chart_time == recs[i - 1]->chart_time) {
        ++st.time_ties;
        st.warnings.push_back("subject " + subject + ": studies " + recs[i - 1]->study_id + " and " +
                              recs[i]->study_id + " share chart_time " + std::to_string(recs[i]->chart_time) +
                              "; ordered by study_id");
      }
    }
    std::vector<bool> usable(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      usable[i] = compose_report_text(recs[i]->sections, options.mode).has_value();
      if (!usable[i]) ++st.missing_section;
    }
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const auto& anchor = *recs[k];
      TemporalSample s;
      s.subject_id = subject;
      s.anchor_study_id = anchor.study_id;
      s.anchor_time = anchor.chart_time;
      s.image_key = anchor.image_embedding_key.value_or(image_key_for(anchor.study_id));
      s.demographics = anchor.demographics;
      s.anchor_empty_impression = blank(anchor.sections.impression);
      s.labels.reserve(anchor.labels.size());
      for (auto l : anchor.labels) s.labels.push_back(binarize(l));
      for (std::size_t j = 0; j < k; ++j) {
        const auto& prev = *recs[j];
        s.history_images.push_back({prev.image_embedding_key.value_or(image_key_for(prev.study_id)),
                                    static_cast<double>(anchor.chart_time - prev.chart_time) / 3600.0,
                                    prev.study_id, blank(prev.sections.impression)});
        if (!usable[j]) continue;
        s.history_reports.push_back({text_key_for(prev.study_id, options.mode),
                                     static_cast<double>(anchor.chart_time - prev.report_time) / 3600.0,
                                     prev.study_id, blank(prev.sections.impression)});
      }
      if (s.history_reports.size() < options.min_history) {
        ++st.below_min_history;
        continue;
      }
      out.push_back(std::move(s));
    }
  }
  st.samples = out.size();
  if (stats != nullptr) *stats = st;
  check_leakage(out);
  return out;
}

void check_leakage(const std::vector<TemporalSample>& samples) {
  for (const auto& s : samples) {
    for (const auto* items : {&s.history_reports, &s.history_images}) {
      for (const auto& h : *items) {
        if (!(h.offset_hours > 0.0)) {
          throw LeakageError("sample " + s.subject_id + "/" + s.anchor_study_id + " would see " + h.key +
                             " with offset " + std::to_string(h.offset_hours) +
                             " hours (must be > 0: recorded at or after the anchor)");
        }
      }
    }
  }
}

std::vector<TemporalSample> dedup_filter(std::vector<TemporalSample> samples, DedupStats* stats) {
  DedupStats st;
  std::vector<TemporalSample> out;
  out.reserve(samples.size());
  for (auto& s : samples) {
    if (s.anchor_empty_impression) {
      ++st.empty_anchor;
      continue;
    }
    std::vector<HistoryItem> kept;
    std::set<std::pair<std::string, double>> seen;
    for (auto& h : s.history_reports) {
      if (h.empty_impression) {
        ++st.empty_history;
        continue;
      }
      if (!seen.insert({h.key, h.offset_hours}).second) {
        ++st.duplicate_history;
        continue;
      }
      kept.push_back(std::move(h));
    }
    s.history_reports = std::move(kept);
    out.push_back(std::move(s));
  }
  if (stats != nullptr) *stats = st;
  return out;
}

Split CohortSplit::of(std::string_view subject) const {
  for (auto [list, split] : {std::pair{&train, Split::train}, std::pair{&val, Split::val}, std::pair{&test, Split::test}}) {
    if (std::find(list->begin(), list->end(), subject) != list->end()) return split;
  }
  return Split::none;
}

CohortSplit split_patients(std::vector<std::string> subjects, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const std::size_t n = subjects.size();
  if (n < 3) throw ConfigError("a train/val/test split needs at least 3 subjects, got " + std::to_string(n));

  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(subjects[i], subjects[rng() % (i + 1)]);
  }
  auto count = [n](double f) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
  };
  const std::size_t n_val = count(fractions[1]);
  const std::size_t n_test = count(fractions[2]);
  if (n_val + n_test >= n) throw ConfigError("split leaves no training subjects");
  const std::size_t n_train = n - n_val - n_test;

  CohortSplit split;
  split.train.assign(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train),
                   subjects.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), subjects.end());
  for (auto* v : {&split.train, &split.val, &split.test}) std::sort(v->begin(), v->end());
  return split;
}

void assign_splits(std::vector<TemporalSample>& samples, const CohortSplit& split) {
  std::map<std::string, Split, std::less<>> lookup;
  for (const auto& s : split.train) lookup[s] = Split::train;
  for (const auto& s : split.val) lookup[s] = Split::val;
  for (const auto& s : split.test) lookup[s] = Split::test;
  for (auto& s : samples) {
    auto it = lookup.find(s.subject_id);
    s.split = it == lookup.end() ? Split::none : it->second;
  }
}

std::vector<std::string> unique_subjects(const std::vector<TemporalSample>& samples) {
  std::vector<std::string> out;
  for (const auto& s : samples) out.push_back(s.subject_id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::pair<std::string, std::string>> report_texts(const std::vector<StudyRecord>& records,
                                                              SectionMode mode) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    auto text = compose_report_text(r.sections, mode);
    if (!text) continue;
    auto key = text_key_for(r.study_id, mode);
    if (seen.insert(key).second) out.emplace_back(std::move(key), std::move(*text));
  }
  return out;
}

void keep_recent_reports(TemporalSample& s, std::size_t n) {
  if (s.history_reports.size() > n) {
    s.history_reports.erase(s.history_reports.begin(),
                            s.history_reports.end() - static_cast<std::ptrdiff_t>(n));
  }
}

void keep_reports_within(TemporalSample& s, double max_offset_hours) {
  std::erase_if(s.history_reports, [&](const HistoryItem& h) { return h.offset_hours > max_offset_hours; });
}

}  // namespace histaid::data
