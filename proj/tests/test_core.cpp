#include <doctest.h>

#include <random>

#include "promptboost/core.hpp"
#include "promptboost/error.hpp"

using namespace promptboost;

namespace {

LabeledExample single(std::string text) { return {"x1", std::move(text), std::nullopt, 0}; }

LabeledExample pair(std::string a, std::string b) { return {"x2", std::move(a), std::move(b), 1}; }

}  // namespace

TEST_CASE("render single-sentence template") {
  PromptTemplate p{"sst2-10", " A truly ", " movie", Placement::after_a};
  CHECK(render(p, single("I love it.")) == "I love it. A truly [MASK] movie");
}

TEST_CASE("render with empty affixes") {
  PromptTemplate p{"bare", "", "", Placement::after_a};
  CHECK(render(p, single("x")) == "x[MASK]");
}

TEST_CASE("render sentence pair puts the prompt between the inputs") {
  PromptTemplate p{"pair", " ", ",", Placement::between_a_b};
  CHECK(render(p, pair("P.", "H.")) == "P. [MASK],H.");
}

TEST_CASE("render uses the configured mask literal verbatim") {
  PromptTemplate p{"p", " It's ", ".", Placement::after_a};
  CHECK(render(p, single("Great"), "<mask>") == "Great It's <mask>.");
}

TEST_CASE("render rejects placement mismatches") {
  PromptTemplate single_prompt{"s", " ", ".", Placement::after_a};
  PromptTemplate pair_prompt{"p", " ", ",", Placement::between_a_b};
  CHECK_THROWS_AS(render(pair_prompt, single("only a")), PlacementMismatch);
  CHECK_THROWS_AS(render(single_prompt, pair("a", "b")), PlacementMismatch);
}

TEST_CASE("render rejects affixes that already hold the mask") {
  PromptTemplate p{"bad", " [MASK] ", ".", Placement::after_a};
  CHECK_THROWS_AS(render(p, single("x")), MultipleMasks);
  PromptTemplate q{"bad2", " ", "[MASK]", Placement::after_a};
  CHECK_THROWS_AS(render(q, single("x")), MultipleMasks);
  PromptTemplate ok{"ok", " ", ".", Placement::after_a};
  CHECK_THROWS_AS(render(ok, single("contains [MASK] already")), MultipleMasks);
}

TEST_CASE("render yields exactly one mask for random affixes") {
  std::mt19937_64 rng(7);
  const std::string alphabet = "ab .,!?'\t";
  auto random_text = [&](std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    std::string s;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) s += alphabet[ch(rng)];
    return s;
  };
  for (int trial = 0; trial < 500; ++trial) {
    PromptTemplate p{"p", random_text(6), random_text(6), Placement::after_a};
    auto ex = single("t" + random_text(10));
    const auto out = render(p, ex);
    CHECK(count_occurrences(out, "[MASK]") == 1);
    CHECK(out == ex.text_a + p.prefix + "[MASK]" + p.suffix);
    CHECK(render(p, ex) == out);
  }
}

TEST_CASE("dataset validates its invariants") {
  std::vector<LabeledExample> ok{{"a", "t", std::nullopt, 0}, {"b", "u", std::nullopt, 1}};
  CHECK_NOTHROW(Dataset(ok, 2, SplitTag::train));
  CHECK_THROWS_AS(Dataset(ok, 1, SplitTag::train), std::invalid_argument);

  auto dup = ok;
  dup[1].id = "a";
  CHECK_THROWS_AS(Dataset(dup, 2, SplitTag::train), std::invalid_argument);

  auto empty_text = ok;
  empty_text[0].text_a.clear();
  CHECK_THROWS_AS(Dataset(empty_text, 2, SplitTag::train), std::invalid_argument);

  const Dataset d(ok, 2, SplitTag::train, {"neg", "pos"});
  CHECK(d.labels() == std::vector<ClassIndex>{0, 1});
  CHECK(d.ids() == std::vector<std::string>{"a", "b"});
  CHECK(d.with_split(SplitTag::test).split() == SplitTag::test);
}

TEST_CASE("distribution validation tolerance") {
  std::vector<float> near{0.5f, 0.4999f};
  CHECK_NOTHROW(validate_distribution(near));
  std::vector<float> far{0.5f, 0.49f};
  CHECK_THROWS_AS(validate_distribution(far), ProtocolError);
  std::vector<float> negative{1.1f, -0.1f};
  CHECK_THROWS_AS(validate_distribution(negative), ProtocolError);
}

TEST_CASE("sample weights") {
  const auto u = SampleWeights::uniform(4);
  CHECK(u.size() == 4);
  CHECK(u[2] == doctest::Approx(0.25));
  CHECK_THROWS_AS(SampleWeights({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(SampleWeights({1.5, -0.5}), std::invalid_argument);
}

TEST_CASE("split and placement names") {
  for (auto s : {SplitTag::train, SplitTag::validation, SplitTag::test}) {
    CHECK(split_from_string(to_string(s)) == s);
  }
  CHECK(placement_from_string("between_a_b") == Placement::between_a_b);
  CHECK_THROWS_AS(placement_from_string("middle"), FormatError);
}
