#include <doctest.h>

#include <filesystem>
#include <random>

#include "promptboost/dataset_io.hpp"
#include "promptboost/error.hpp"
#include "temp_dir.hpp"

using namespace promptboost;

TEST_CASE("dataset JSONL round-trips field for field") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pool{"a", "xyz", " ", "\"", "\\", "\n", "\t", "é", "€", "{}"};
  std::uniform_int_distribution<std::size_t> ch(0, pool.size() - 1);
  auto text = [&] {
    std::string s = "t";
    for (int i = 0; i < 12; ++i) s += pool[ch(rng)];
    return s;
  };
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LabeledExample> ex;
    for (int i = 0; i < 15; ++i) {
      LabeledExample e{"id-" + std::to_string(trial) + "-" + std::to_string(i), text(),
                       std::nullopt, static_cast<int>(rng() % 3)};
      if (rng() % 2) e.text_b = text();
      ex.push_back(e);
    }
    const Dataset d(ex, 3, SplitTag::validation);
    const auto back = parse_examples_jsonl(serialize_examples_jsonl(d.examples()));
    CHECK(Dataset(back, 3, SplitTag::validation) == d);
  }
}

TEST_CASE("dataset directory loading") {
  test_util::TempDir dir;
  save_manifest({2, {"negative", "positive"}}, dir.path() / "manifest.json");
  const Dataset d({{"a", "good", std::nullopt, 1}, {"b", "bad", std::nullopt, 0}}, 2,
                  SplitTag::train);
  save_dataset(d, split_file(dir.path(), SplitTag::train));

  const auto loaded = load_dataset_split(dir.path(), SplitTag::train);
  CHECK(loaded.examples() == d.examples());
  CHECK(loaded.label_names() == std::vector<std::string>{"negative", "positive"});
  CHECK_THROWS_AS(load_dataset_split(dir.path(), SplitTag::test), IoError);
}

TEST_CASE("malformed dataset lines are reported") {
  CHECK_THROWS_AS(parse_examples_jsonl("{\"id\": \"a\"}\n"), FormatError);
  CHECK_THROWS_AS(parse_examples_jsonl("not json\n"), FormatError);
  CHECK(parse_examples_jsonl("\n\n").empty());
}

TEST_CASE("label outside the manifest's classes is rejected") {
  test_util::TempDir dir;
  save_manifest({2, {}}, dir.path() / "manifest.json");
  write_text_file_atomic(split_file(dir.path(), SplitTag::test),
                         R"({"id":"a","text_a":"x","text_b":null,"label":5})"
                         "\n");
  CHECK_THROWS_AS(load_dataset_split(dir.path(), SplitTag::test), FormatError);
}

TEST_CASE("prompt file parsing") {
  const auto prompts = parse_prompts(R"([
    {"id": "p1", "prefix": " It's ", "suffix": ".", "placement": "after_a"},
    {"id": "p2", "prefix": ". ", "suffix": ", ", "placement": "between_a_b"}
  ])");
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[0].prefix == " It's ");
  CHECK(prompts[1].placement == Placement::between_a_b);
  CHECK(parse_prompts(serialize_prompts(prompts)) == prompts);
  CHECK_THROWS_AS(parse_prompts(R"({"id": "p"})"), FormatError);
  CHECK_THROWS_AS(parse_prompts(R"([{"id": "p", "placement": "middle"}])"), FormatError);
}

TEST_CASE("bundled prompt fixtures parse and render") {
  const std::filesystem::path root = PB_SOURCE_DIR;
  for (const auto& entry : std::filesystem::directory_iterator(root / "data" / "prompts")) {
    const auto prompts = load_prompts(entry.path());
    CHECK_MESSAGE(prompts.size() == 10, entry.path().string());
    for (const auto& p : prompts) {
      LabeledExample ex{"e", "Input one", std::nullopt, 0};
      if (p.placement == Placement::between_a_b) ex.text_b = "input two";
      CHECK(count_occurrences(render(p, ex), "[MASK]") == 1);
    }
  }
}
