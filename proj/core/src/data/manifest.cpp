#include "histaid/data/manifest.hpp"

#include <nlohmann/json.hpp>
#include <sstream>

#include "histaid/data/io.hpp"
#include "histaid/error.hpp"

namespace histaid::data {

using nlohmann::json;

namespace {

json items_to_json(const std::vector<HistoryItem>& items) {
  json arr = json::array();
  for (const auto& h : items) arr.push_back({{"key", h.key}, {"offset_hours", h.offset_hours}, {"study_id", h.study_id}});
  return arr;
}

std::vector<HistoryItem> items_from_json(const json& arr) {
  std::vector<HistoryItem> out;
  for (const auto& j : arr) {
    out.push_back({j.at("key").get<std::string>(), j.at("offset_hours").get<double>(),
                   j.value("study_id", std::string{}), false});
  }
  return out;
}

}  // namespace

std::string samples_to_jsonl(const std::vector<TemporalSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    json j;
    j["subject_id"] = s.subject_id;
    j["anchor_study_id"] = s.anchor_study_id;
    j["anchor_time"] = s.anchor_time;
    j["split"] = to_string(s.split);
    j["image_key"] = s.image_key;
    j["labels"] = s.labels;
    j["demographics"] = {{"sex", s.demographics.sex},
                         {"age_years", s.demographics.age_years},
                         {"race", s.demographics.race}};
    j["history_reports"] = items_to_json(s.history_reports);
    j["history_images"] = items_to_json(s.history_images);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TemporalSample> samples_from_jsonl(const std::string& text, const std::string& source) {
  std::vector<TemporalSample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      TemporalSample s;
      s.subject_id = j.at("subject_id").get<std::string>();
      s.anchor_study_id = j.at("anchor_study_id").get<std::string>();
      s.anchor_time = j.at("anchor_time").get<std::int64_t>();
      s.split = parse_split(j.at("split").get<std::string>());
      s.image_key = j.at("image_key").get<std::string>();
      s.labels = j.at("labels").get<std::vector<std::uint8_t>>();
      const auto& d = j.at("demographics");
      s.demographics = {d.at("sex").get<std::string>(), d.at("age_years").get<int>(), d.at("race").get<std::string>()};
      s.history_reports = items_from_json(j.at("history_reports"));
      s.history_images = items_from_json(j.at("history_images"));
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_samples(const std::vector<TemporalSample>& samples, const std::string& path) {
  write_file_atomic(path, samples_to_jsonl(samples));
}

std::vector<TemporalSample> read_samples(const std::string& path) { return samples_from_jsonl(read_file(path), path); }

std::string bridge_manifest_jsonl(const std::vector<std::pair<std::string, std::string>>& texts) {
  std::string out;
  for (const auto& [key, text] : texts) {
    out += json{{"key", key}, {"modality", "text"}, {"text", text}}.dump();
    out += '\n';
  }
  return out;
}

std::string split_to_json(const CohortSplit& split, std::uint64_t seed) {
  json j{{"seed", seed}, {"train", split.train}, {"val", split.val}, {"test", split.test}};
  return j.dump(2) + "\n";
}

CohortSplit split_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    CohortSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("split file: ") + e.what());
  }
}

}  // namespace histaid::data
