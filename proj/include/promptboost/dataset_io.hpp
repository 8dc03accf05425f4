#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "promptboost/core.hpp"

namespace promptboost {

struct DatasetManifest {
  int num_classes = 0;
  std::vector<std::string> label_names;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// JSON Lines, one {"id", "text_a", "text_b", "label"} object per line.
std::vector<LabeledExample> parse_examples_jsonl(std::string_view text);
std::string serialize_examples_jsonl(const std::vector<LabeledExample>& examples);

Dataset load_dataset(const std::filesystem::path& jsonl, const DatasetManifest& manifest,
                     SplitTag split);
void save_dataset(const Dataset& dataset, const std::filesystem::path& jsonl);

// A dataset directory holds manifest.json plus <split>.jsonl files.
std::filesystem::path split_file(const std::filesystem::path& dataset_dir, SplitTag split);
Dataset load_dataset_split(const std::filesystem::path& dataset_dir, SplitTag split);

// Prompt file: JSON array of {"id", "prefix", "suffix", "placement"}.
std::vector<PromptTemplate> parse_prompts(std::string_view json_text);
std::string serialize_prompts(const std::vector<PromptTemplate>& prompts);
std::vector<PromptTemplate> load_prompts(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
// Writes via a temporary sibling and an atomic rename.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace promptboost
