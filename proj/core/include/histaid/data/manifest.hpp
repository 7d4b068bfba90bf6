#pragma once

#include <string>
#include <utility>
#include <vector>

#include "histaid/data/pipeline.hpp"

namespace histaid::data {

// One JSON object per line, in sample order.
std::string samples_to_jsonl(const std::vector<TemporalSample>& samples);
std::vector<TemporalSample> samples_from_jsonl(const std::string& text, const std::string& source = "<memory>");

void write_samples(const std::vector<TemporalSample>& samples, const std::string& path);
std::vector<TemporalSample> read_samples(const std::string& path);

// Input list for an external embedding extractor: {"key", "modality", "text"} per line.
std::string bridge_manifest_jsonl(const std::vector<std::pair<std::string, std::string>>& texts);

std::string split_to_json(const CohortSplit& split, std::uint64_t seed);
CohortSplit split_from_json(const std::string& text);

}  // namespace histaid::data
