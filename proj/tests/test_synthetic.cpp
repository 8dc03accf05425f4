#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "promptboost/synthetic.hpp"

using namespace promptboost;

namespace {

double mass(const std::vector<float>& p, std::size_t lo, std::size_t hi) {
  return std::accumulate(p.begin() + lo, p.begin() + hi, 0.0);
}

}  // namespace

TEST_CASE("synthetic oracle is deterministic and normalized") {
  SyntheticOracle a({7, 0.4, 3, 30});
  SyntheticOracle b({7, 0.4, 3, 30});
  const auto d = make_synthetic_corpus(3, 5, 1);
  a.bind(d);
  b.bind(d);
  for (const auto& ex : d.examples()) {
    const auto text = ex.text_a + " It was [MASK].";
    const auto pa = a.query(text);
    CHECK(pa.probs == b.query(text).probs);
    CHECK(pa.probs == a.query(text).probs);
    CHECK(pa.vocab_id == a.vocab_id());
    CHECK(mass(pa.probs, 0, 30) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::all_of(pa.probs.begin(), pa.probs.end(), [](float x) { return x >= 0.0f; }));
  }
  CHECK(a.queries_issued() == 30);
  SyntheticOracle other_seed({8, 0.4, 3, 30});
  CHECK(other_seed.vocab_id() != a.vocab_id());
}

TEST_CASE("full signal puts all mass on the class block") {
  SyntheticOracle o({3, 1.0, 4, 32});
  const auto d = make_synthetic_corpus(4, 3, 2);
  o.bind(d);
  for (const auto& ex : d.examples()) {
    const auto p = o.query(ex.text_a + " [MASK]").probs;
    const std::size_t lo = ex.label * o.block_size();
    CHECK(mass(p, lo, lo + o.block_size()) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("labels are recovered from rendered text") {
  SyntheticOracle o({1, 0.5, 2, 8});
  const auto d = make_synthetic_corpus(2, 4, 9);
  o.bind(d);
  for (const auto& ex : d.examples()) {
    CHECK(o.label_for(ex.text_a + " anything [MASK]") == ex.label);
  }
  CHECK_FALSE(o.label_for("unrelated [MASK]").has_value());
}

TEST_CASE("different prompts see different noise") {
  SyntheticOracle o({1, 0.3, 2, 16});
  const auto d = make_synthetic_corpus(2, 1, 4);
  o.bind(d);
  CHECK(o.query(d[0].text_a + " A [MASK]").probs != o.query(d[0].text_a + " B [MASK]").probs);
}

TEST_CASE("zero signal is at chance for a block-argmax predictor") {
  // With no signal the block holding the largest token is independent of the
  // label, so error should be close to 1 - 1/K.
  const int K = 4;
  SyntheticOracle o({5, 0.0, K, 40});
  const auto d = make_synthetic_corpus(K, 500, 77);
  o.bind(d);
  std::size_t wrong = 0;
  for (const auto& ex : d.examples()) {
    const auto p = o.query(ex.text_a + " [MASK]").probs;
    const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    if (static_cast<int>(top / o.block_size()) != ex.label) ++wrong;
  }
  const double err = static_cast<double>(wrong) / static_cast<double>(d.size());
  CHECK(err == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("synthetic corpus shape") {
  const auto d = make_synthetic_corpus(3, 4, 12, SplitTag::test, true, "pair");
  CHECK(d.size() == 12);
  CHECK(d.split() == SplitTag::test);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::count_if(d.examples().begin(), d.examples().end(),
                        [&](const LabeledExample& e) { return e.label == c; }) == 4);
  }
  CHECK(d[0].text_b.has_value());
  CHECK(d[0].id.rfind("pair-", 0) == 0);
  CHECK(make_synthetic_corpus(3, 4, 12).ids() == make_synthetic_corpus(3, 4, 12).ids());
}

TEST_CASE("invalid oracle configuration") {
  CHECK_THROWS_AS(SyntheticOracle({0, 1.5, 2, 8}), std::invalid_argument);
  CHECK_THROWS_AS(SyntheticOracle({0, 0.5, 4, 3}), std::invalid_argument);
}
