#include "promptboost/dist_cache.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cctype>
#include <cstring>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "promptboost/dataset_io.hpp"
#include "promptboost/error.hpp"

namespace promptboost {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(sizeof(float) == 4, "PBM1 stores IEEE-754 binary32");

namespace {

constexpr char kMagic[4] = {'P', 'B', 'M', '1'};
constexpr std::size_t kHeaderSize = 4 + 3 * 4;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string escape_id(const std::string& id) {
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xF]);
    }
  }
  return out.empty() ? std::string("%") : out;
}

}  // namespace

PromptMatrix::PromptMatrix(std::string prompt_id, SplitTag split,
                           std::vector<std::string> example_ids, std::size_t vocab_size,
                           std::vector<float> data, std::string vocab_id)
    : prompt_id_(std::move(prompt_id)),
      split_(split),
      example_ids_(std::move(example_ids)),
      vocab_size_(vocab_size),
      data_(std::move(data)),
      vocab_id_(std::move(vocab_id)) {
  if (data_.size() != example_ids_.size() * vocab_size_) {
    throw DimensionMismatch("prompt matrix '" + prompt_id_ + "': " +
                            std::to_string(data_.size()) + " floats for " +
                            std::to_string(example_ids_.size()) + " rows of width " +
                            std::to_string(vocab_size_));
  }
}

PromptMatrix PromptMatrix::select(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(example_ids_.size());
  for (std::size_t i = 0; i < example_ids_.size(); ++i) index.emplace(example_ids_[i], i);

  std::vector<float> out;
  out.reserve(ids.size() * vocab_size_);
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw MissingPromptRow("prompt '" + prompt_id_ + "' has no row for example '" + id + "'");
    }
    auto r = row(it->second);
    out.insert(out.end(), r.begin(), r.end());
  }
  return PromptMatrix(prompt_id_, split_, ids, vocab_size_, std::move(out), vocab_id_);
}

PromptMatrix PromptMatrix::concat(const PromptMatrix& other, SplitTag split) const {
  if (other.vocab_size_ != vocab_size_ || other.vocab_id_ != vocab_id_) {
    throw VocabMismatch("cannot concatenate matrices over different vocabularies");
  }
  auto ids = example_ids_;
  ids.insert(ids.end(), other.example_ids_.begin(), other.example_ids_.end());
  auto data = data_;
  data.insert(data.end(), other.data_.begin(), other.data_.end());
  return PromptMatrix(prompt_id_, split, std::move(ids), vocab_size_, std::move(data), vocab_id_);
}

std::string encode_pbm(const PbmPayload& payload) {
  if (payload.data.size() != static_cast<std::size_t>(payload.rows) * payload.vocab_size) {
    throw DimensionMismatch("PBM payload size does not match its header");
  }
  std::string out;
  out.reserve(kHeaderSize + payload.vocab_id.size() + payload.data.size() * 4);
  out.append(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(payload.vocab_id.size()));
  put_u32(out, payload.rows);
  put_u32(out, payload.vocab_size);
  out += payload.vocab_id;
  for (float f : payload.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

PbmPayload decode_pbm(std::string_view bytes, const std::string& source_name) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError(source_name + ": not a PBM1 file (bad magic)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  PbmPayload payload;
  const std::uint32_t id_len = get_u32(p + 4);
  payload.rows = get_u32(p + 8);
  payload.vocab_size = get_u32(p + 12);
  const std::uint64_t floats = static_cast<std::uint64_t>(payload.rows) * payload.vocab_size;
  const std::uint64_t expected = kHeaderSize + static_cast<std::uint64_t>(id_len) + floats * 4;
  if (bytes.size() != expected) {
    throw IoError(source_name + ": PBM1 size " + std::to_string(bytes.size()) +
                  " does not match header (expected " + std::to_string(expected) + ")");
  }
  payload.vocab_id.assign(bytes.data() + kHeaderSize, id_len);
  payload.data.resize(floats);
  const unsigned char* body = p + kHeaderSize + id_len;
  for (std::uint64_t i = 0; i < floats; ++i) {
    payload.data[i] = std::bit_cast<float>(get_u32(body + 4 * i));
  }
  return payload;
}

CacheFiles cache_files(const fs::path& cache_dir, const std::string& prompt_id, SplitTag split) {
  const std::string stem = escape_id(prompt_id) + "." + std::string(to_string(split));
  return {cache_dir / (stem + ".pbm"), cache_dir / (stem + ".json")};
}

void write_prompt_matrix(const PromptMatrix& matrix, const fs::path& cache_dir) {
  std::error_code ec;
  fs::create_directories(cache_dir, ec);
  if (ec) throw IoError("cannot create " + cache_dir.string() + ": " + ec.message());

  const auto files = cache_files(cache_dir, matrix.prompt_id(), matrix.split());
  PbmPayload payload;
  payload.vocab_id = matrix.vocab_id();
  payload.rows = static_cast<std::uint32_t>(matrix.rows());
  payload.vocab_size = static_cast<std::uint32_t>(matrix.vocab_size());
  payload.data.assign(matrix.data().begin(), matrix.data().end());

  json manifest;
  manifest["prompt_id"] = matrix.prompt_id();
  manifest["split"] = std::string(to_string(matrix.split()));
  manifest["example_ids"] = matrix.example_ids();
  manifest["vocab_id"] = matrix.vocab_id();

  write_text_file_atomic(files.matrix, encode_pbm(payload));
  write_text_file_atomic(files.manifest, manifest.dump(2) + "\n");
}

PromptMatrix read_prompt_matrix(const fs::path& cache_dir, const std::string& prompt_id,
                                SplitTag split) {
  const auto files = cache_files(cache_dir, prompt_id, split);
  const auto payload = decode_pbm(read_text_file(files.matrix), files.matrix.string());

  std::vector<std::string> ids;
  std::string manifest_vocab;
  try {
    const json manifest = json::parse(read_text_file(files.manifest));
    ids = manifest.at("example_ids").get<std::vector<std::string>>();
    manifest_vocab = manifest.at("vocab_id").get<std::string>();
    if (manifest.at("prompt_id").get<std::string>() != prompt_id) {
      throw IoError(files.manifest.string() + ": manifest names a different prompt");
    }
  } catch (const json::exception& e) {
    throw IoError(files.manifest.string() + ": bad manifest: " + e.what());
  }
  if (ids.size() != payload.rows) {
    throw IoError(files.manifest.string() + ": lists " + std::to_string(ids.size()) +
                  " example ids but " + files.matrix.string() + " holds " +
                  std::to_string(payload.rows) + " rows");
  }
  if (manifest_vocab != payload.vocab_id) {
    throw IoError(files.manifest.string() + ": vocab_id disagrees with " +
                  files.matrix.string());
  }
  return PromptMatrix(prompt_id, split, std::move(ids), payload.vocab_size,
                      std::move(payload.data), payload.vocab_id);
}

std::uint64_t FillReport::total_queries() const {
  return std::accumulate(queries_per_prompt.begin(), queries_per_prompt.end(),
                         std::uint64_t{0});
}

std::vector<PromptMatrix> ensure_cached(MaskedLm* client, const Dataset& dataset,
                                        const std::vector<PromptTemplate>& prompts,
                                        const fs::path& cache_dir, const FillOptions& options,
                                        FillReport* report) {
  const SplitTag split = dataset.split();
  const auto ids = dataset.ids();

  // Phase 1: read and validate everything already on disk.
  std::vector<std::optional<PromptMatrix>> existing(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    const auto files = cache_files(cache_dir, prompts[p].id, split);
    if (fs::exists(files.matrix) || fs::exists(files.manifest)) {
      existing[p] = read_prompt_matrix(cache_dir, prompts[p].id, split);
    }
  }

  std::string vocab_id;
  std::size_t vocab_size = 0;
  if (client) {
    vocab_id = client->vocab_id();
    vocab_size = client->vocab_size();
  }
  for (const auto& m : existing) {
    if (!m) continue;
    if (vocab_id.empty()) {
      vocab_id = m->vocab_id();
      vocab_size = m->vocab_size();
    }
    if (m->vocab_id() != vocab_id) {
      throw VocabMismatch("cache file for prompt '" + m->prompt_id() + "' has vocab_id '" +
                          m->vocab_id() + "', expected '" + vocab_id + "'");
    }
    if (m->vocab_size() != vocab_size) {
      throw VocabMismatch("cache file for prompt '" + m->prompt_id() +
                          "' has a different vocabulary size");
    }
  }

  // Phase 2: work out which rows are missing and render their texts.
  struct Task {
    std::size_t prompt;
    std::size_t example;
    std::string text;
  };
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    std::unordered_set<std::string_view> have;
    if (existing[p]) have.insert(existing[p]->example_ids().begin(),
                                 existing[p]->example_ids().end());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!have.contains(ids[i])) {
        tasks.push_back({p, i, render(prompts[p], dataset[i], options.mask_literal)});
      }
    }
  }
  if (!tasks.empty() && !client) {
    const auto files = cache_files(cache_dir, prompts[tasks.front().prompt].id, split);
    throw CacheIncomplete("cache incomplete: " + std::to_string(tasks.size()) + " " +
                  std::string(to_string(split)) + " rows missing (first: " +
                  files.matrix.string() + ") and no LM endpoint is configured");
  }

  // Phase 3: query. Results land in task order so the file layout does not
  // depend on completion order.
  std::vector<std::vector<float>> results(tasks.size());
  if (!tasks.empty()) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      while (true) {
        const std::size_t t = next.fetch_add(1);
        if (t >= tasks.size()) return;
        {
          std::lock_guard lock(failure_mutex);
          if (failure) return;
        }
        try {
          auto dist = client->query(tasks[t].text);
          if (dist.vocab_id != vocab_id) {
            throw VocabMismatch("LM answered with vocab_id '" + dist.vocab_id +
                                "', expected '" + vocab_id + "'");
          }
          if (dist.probs.size() != vocab_size) {
            throw ProtocolError("LM returned " + std::to_string(dist.probs.size()) +
                                " probabilities, expected " + std::to_string(vocab_size));
          }
          validate_distribution(dist.probs);
          results[t] = std::move(dist.probs);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const unsigned n_workers =
        std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(tasks.size())));
    if (n_workers == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
  }

  // Phase 4: append new rows to each file and return dataset-ordered views.
  std::vector<PromptMatrix> out;
  out.reserve(prompts.size());
  std::size_t t = 0;
  std::vector<std::uint64_t> per_prompt(prompts.size(), 0);
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    std::vector<std::string> file_ids;
    std::vector<float> file_data;
    if (existing[p]) {
      file_ids = existing[p]->example_ids();
      file_data.assign(existing[p]->data().begin(), existing[p]->data().end());
    }
    for (; t < tasks.size() && tasks[t].prompt == p; ++t) {
      file_ids.push_back(ids[tasks[t].example]);
      file_data.insert(file_data.end(), results[t].begin(), results[t].end());
      ++per_prompt[p];
    }
    PromptMatrix full(prompts[p].id, split, std::move(file_ids), vocab_size,
                      std::move(file_data), vocab_id);
    if (per_prompt[p] > 0) write_prompt_matrix(full, cache_dir);
    out.push_back(full.select(ids));
  }
  if (report) report->queries_per_prompt = std::move(per_prompt);
  return out;
}

}  // namespace promptboost
