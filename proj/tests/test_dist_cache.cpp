#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "oracles.hpp"
#include "promptboost/dataset_io.hpp"
#include "promptboost/error.hpp"
#include "promptboost/synthetic.hpp"
#include "temp_dir.hpp"

using namespace promptboost;
namespace fs = std::filesystem;

namespace {

std::vector<PromptTemplate> prompts(int n) {
  std::vector<PromptTemplate> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"p" + std::to_string(i), " prompt " + std::to_string(i) + " ", ".",
                   Placement::after_a});
  }
  return out;
}

std::map<fs::path, std::string> snapshot(const fs::path& dir) {
  std::map<fs::path, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path()] = read_text_file(e.path());
  return files;
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

}  // namespace

TEST_CASE("PBM1 encoding is bit-exact") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    PbmPayload p;
    p.vocab_id = "vocab-" + std::to_string(trial);
    p.rows = 1 + static_cast<std::uint32_t>(rng() % 7);
    p.vocab_size = 1 + static_cast<std::uint32_t>(rng() % 9);
    for (std::uint32_t r = 0; r < p.rows; ++r) {
      auto row = oracle::random_distribution(rng, p.vocab_size);
      if (r == 0) {
        std::fill(row.begin(), row.end(), 0.0f);
        row[rng() % p.vocab_size] = 1.0f;
      }
      p.data.insert(p.data.end(), row.begin(), row.end());
    }
    const auto bytes = encode_pbm(p);
    CHECK(bytes.substr(0, 4) == "PBM1");
    CHECK(bytes.size() == 16 + p.vocab_id.size() + 4 * p.data.size());
    const auto back = decode_pbm(bytes, "mem");
    CHECK(back.vocab_id == p.vocab_id);
    CHECK(back.rows == p.rows);
    CHECK(back.vocab_size == p.vocab_size);
    CHECK(same_bits(back.data, p.data));
  }
}

TEST_CASE("PBM1 header is little-endian") {
  PbmPayload p{"ab", 1, 2, {0.25f, 0.75f}};
  const auto bytes = encode_pbm(p);
  const unsigned char expected[] = {'P', 'B', 'M', '1', 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 'a', 'b'};
  CHECK(std::memcmp(bytes.data(), expected, sizeof expected) == 0);
  const auto bits = std::bit_cast<std::uint32_t>(0.25f);
  CHECK(static_cast<unsigned char>(bytes[18]) == (bits & 0xff));
  CHECK(static_cast<unsigned char>(bytes[21]) == (bits >> 24));
}

TEST_CASE("PBM1 decoding rejects damage") {
  const auto bytes = encode_pbm({"v", 2, 2, {0.5f, 0.5f, 1.0f, 0.0f}});
  auto bad_magic = bytes;
  bad_magic[3] = '2';
  CHECK_THROWS_AS(decode_pbm(bad_magic, "x.pbm"), IoError);
  CHECK_THROWS_AS(decode_pbm(bytes.substr(0, bytes.size() - 1), "x.pbm"), IoError);
  CHECK_THROWS_AS(decode_pbm(bytes.substr(0, 10), "x.pbm"), IoError);
}

TEST_CASE("matrix files round-trip through disk") {
  test_util::TempDir dir;
  std::mt19937_64 rng(5);
  oracle::Rows rows;
  for (int i = 0; i < 6; ++i) rows.push_back(oracle::random_distribution(rng, 7));
  rows[2].assign(7, 0.0f);
  rows[2][4] = 1.0f;
  const auto m = oracle::to_matrix(rows, 7, "odd id/with:chars", "v");
  write_prompt_matrix(m, dir.path());
  const auto back = read_prompt_matrix(dir.path(), "odd id/with:chars", SplitTag::train);
  CHECK(back == m);
  CHECK(same_bits(back.data(), m.data()));
  CHECK(cache_files(dir.path(), "a/b", SplitTag::train).matrix !=
        cache_files(dir.path(), "a_b", SplitTag::train).matrix);
}

TEST_CASE("prompt matrix row selection") {
  const auto m = oracle::to_matrix({{1.0f, 0.0f}, {0.0f, 1.0f}, {0.5f, 0.5f}}, 2);
  const auto s = m.select({"e2", "e0"});
  CHECK(s.example_ids() == std::vector<std::string>{"e2", "e0"});
  CHECK(s.row(1)[0] == 1.0f);
  CHECK_THROWS_AS(m.select({"missing"}), MissingPromptRow);
}

TEST_CASE("cache fills only what is missing") {
  test_util::TempDir dir;
  SyntheticOracle lm({1, 0.5, 2, 16});
  const auto train = make_synthetic_corpus(2, 16, 1);
  lm.bind(train);
  const auto ps = prompts(10);

  FillReport cold;
  const auto first = ensure_cached(&lm, train, ps, dir.path(), {"[MASK]", 4}, &cold);
  CHECK(cold.total_queries() == 320);
  CHECK(lm.queries_issued() == 320);
  CHECK(cold.queries_per_prompt == std::vector<std::uint64_t>(10, 32));

  FillReport warm;
  const auto second = ensure_cached(&lm, train, ps, dir.path(), {"[MASK]", 4}, &warm);
  CHECK(warm.total_queries() == 0);
  CHECK(lm.queries_issued() == 320);
  CHECK(second == first);

  // Rows do not depend on the worker count.
  test_util::TempDir serial_dir;
  SyntheticOracle lm2({1, 0.5, 2, 16});
  lm2.bind(train);
  CHECK(ensure_cached(&lm2, train, ps, serial_dir.path(), {"[MASK]", 1}) == first);

  SUBCASE("extending the dataset queries only new rows") {
    auto examples = train.examples();
    const auto extra = make_synthetic_corpus(2, 2, 99, SplitTag::train, false, "extra");
    examples.insert(examples.end(), extra.examples().begin(), extra.examples().end());
    const Dataset grown(examples, 2, SplitTag::train);
    lm.bind(grown);
    FillReport rep;
    const auto out = ensure_cached(&lm, grown, ps, dir.path(), {}, &rep);
    CHECK(rep.total_queries() == 40);
    CHECK(out[0].rows() == 36);
    CHECK(out[0].example_ids() == grown.ids());
  }

  SUBCASE("cache-only reads succeed when complete") {
    CHECK(ensure_cached(nullptr, train, ps, dir.path()) == first);
  }

  SUBCASE("cache-only reads fail when rows are missing") {
    const auto extra = make_synthetic_corpus(2, 1, 50);
    CHECK_THROWS_AS(ensure_cached(nullptr, extra, ps, dir.path()), CacheIncomplete);
  }

  SUBCASE("a subset comes back in dataset order without queries") {
    std::vector<LabeledExample> sub{train[5], train[1]};
    FillReport rep;
    const auto out = ensure_cached(&lm, Dataset(sub, 2, SplitTag::train), ps, dir.path(), {}, &rep);
    CHECK(rep.total_queries() == 0);
    CHECK(same_bits(out[3].row(0), first[3].row(5)));
    CHECK(same_bits(out[3].row(1), first[3].row(1)));
  }
}

TEST_CASE("a corrupt file fails the whole call before anything is written") {
  test_util::TempDir dir;
  SyntheticOracle lm({1, 0.5, 2, 16});
  const auto train = make_synthetic_corpus(2, 4, 1);
  lm.bind(train);
  const auto ps = prompts(3);
  ensure_cached(&lm, train, std::vector<PromptTemplate>(ps.begin(), ps.begin() + 2), dir.path());

  const auto victim = cache_files(dir.path(), "p1", SplitTag::train).matrix;
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  const auto before = snapshot(dir.path());
  const auto queries_before = lm.queries_issued();
  try {
    ensure_cached(&lm, train, ps, dir.path());
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(victim.filename().string()) != std::string::npos);
  }
  CHECK(snapshot(dir.path()) == before);
  CHECK(lm.queries_issued() == queries_before);
}

TEST_CASE("cached vocabulary must match the client") {
  test_util::TempDir dir;
  const auto train = make_synthetic_corpus(2, 2, 1);
  SyntheticOracle a({1, 0.5, 2, 16});
  a.bind(train);
  ensure_cached(&a, train, prompts(1), dir.path());
  SyntheticOracle b({2, 0.5, 2, 16});
  b.bind(train);
  CHECK_THROWS_AS(ensure_cached(&b, train, prompts(1), dir.path()), VocabMismatch);
  CHECK(b.queries_issued() == 0);
}

TEST_CASE("splits are cached separately") {
  test_util::TempDir dir;
  SyntheticOracle lm({1, 0.5, 2, 16});
  const auto train = make_synthetic_corpus(2, 2, 1);
  const auto test = make_synthetic_corpus(2, 2, 1, SplitTag::test);
  lm.bind(train);
  FillReport a, b;
  ensure_cached(&lm, train, prompts(2), dir.path(), {}, &a);
  ensure_cached(&lm, test, prompts(2), dir.path(), {}, &b);
  CHECK(a.total_queries() == 8);
  CHECK(b.total_queries() == 8);
  CHECK(fs::exists(cache_files(dir.path(), "p0", SplitTag::test).manifest));
}
