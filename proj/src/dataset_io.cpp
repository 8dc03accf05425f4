#include "promptboost/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "promptboost/error.hpp"

namespace promptboost {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return buf.str();
}

void write_text_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

DatasetManifest load_manifest(const fs::path& path) {
  DatasetManifest manifest;
  try {
    const json j = json::parse(read_text_file(path));
    manifest.num_classes = j.at("num_classes").get<int>();
    if (j.contains("label_names")) {
      manifest.label_names = j.at("label_names").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw FormatError("bad dataset manifest " + path.string() + ": " + e.what());
  }
  if (manifest.num_classes < 1) {
    throw FormatError("dataset manifest " + path.string() + " has num_classes < 1");
  }
  if (!manifest.label_names.empty() &&
      static_cast<int>(manifest.label_names.size()) != manifest.num_classes) {
    throw FormatError("dataset manifest " + path.string() +
                      ": label_names length differs from num_classes");
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json j;
  j["num_classes"] = manifest.num_classes;
  j["label_names"] = manifest.label_names;
  write_text_file_atomic(path, j.dump(2) + "\n");
}

std::vector<LabeledExample> parse_examples_jsonl(std::string_view text) {
  std::vector<LabeledExample> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    try {
      const json j = json::parse(line);
      LabeledExample ex;
      ex.id = j.at("id").get<std::string>();
      ex.text_a = j.at("text_a").get<std::string>();
      if (j.contains("text_b") && !j.at("text_b").is_null()) {
        ex.text_b = j.at("text_b").get<std::string>();
      }
      ex.label = j.at("label").get<int>();
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  return out;
}

std::string serialize_examples_jsonl(const std::vector<LabeledExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    json j;
    j["id"] = ex.id;
    j["text_a"] = ex.text_a;
    j["text_b"] = ex.text_b ? json(*ex.text_b) : json(nullptr);
    j["label"] = ex.label;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset load_dataset(const fs::path& jsonl, const DatasetManifest& manifest, SplitTag split) {
  std::vector<LabeledExample> examples;
  try {
    examples = parse_examples_jsonl(read_text_file(jsonl));
  } catch (const FormatError& e) {
    throw FormatError(jsonl.string() + ": " + e.what());
  }
  try {
    return Dataset(std::move(examples), manifest.num_classes, split, manifest.label_names);
  } catch (const std::invalid_argument& e) {
    throw FormatError(jsonl.string() + ": " + e.what());
  }
}

void save_dataset(const Dataset& dataset, const fs::path& jsonl) {
  write_text_file_atomic(jsonl, serialize_examples_jsonl(dataset.examples()));
}

fs::path split_file(const fs::path& dataset_dir, SplitTag split) {
  return dataset_dir / (std::string(to_string(split)) + ".jsonl");
}

Dataset load_dataset_split(const fs::path& dataset_dir, SplitTag split) {
  const auto manifest = load_manifest(dataset_dir / "manifest.json");
  return load_dataset(split_file(dataset_dir, split), manifest, split);
}

std::vector<PromptTemplate> parse_prompts(std::string_view json_text) {
  std::vector<PromptTemplate> prompts;
  try {
    const json j = json::parse(json_text);
    if (!j.is_array()) throw FormatError("prompt file must hold a JSON array");
    for (const auto& item : j) {
      PromptTemplate p;
      p.id = item.at("id").get<std::string>();
      p.prefix = item.value("prefix", std::string{});
      p.suffix = item.value("suffix", std::string{});
      p.placement = placement_from_string(item.value("placement", std::string("after_a")));
      prompts.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad prompt file: ") + e.what());
  }
  return prompts;
}

std::string serialize_prompts(const std::vector<PromptTemplate>& prompts) {
  json j = json::array();
  for (const auto& p : prompts) {
    j.push_back({{"id", p.id},
                 {"prefix", p.prefix},
                 {"suffix", p.suffix},
                 {"placement", std::string(to_string(p.placement))}});
  }
  return j.dump(2) + "\n";
}

std::vector<PromptTemplate> load_prompts(const fs::path& path) {
  try {
    return parse_prompts(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace promptboost
