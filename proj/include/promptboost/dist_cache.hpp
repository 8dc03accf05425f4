#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "promptboost/core.hpp"
#include "promptboost/lm_client.hpp"

namespace promptboost {

// N x |V| float32 mask distributions for one (prompt, split), row-major.
// Row i belongs to example_ids[i].
class PromptMatrix {
 public:
  PromptMatrix() = default;
  PromptMatrix(std::string prompt_id, SplitTag split, std::vector<std::string> example_ids,
               std::size_t vocab_size, std::vector<float> data, std::string vocab_id);

  const std::string& prompt_id() const { return prompt_id_; }
  SplitTag split() const { return split_; }
  const std::vector<std::string>& example_ids() const { return example_ids_; }
  const std::string& vocab_id() const { return vocab_id_; }

  std::size_t rows() const { return example_ids_.size(); }
  std::size_t vocab_size() const { return vocab_size_; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * vocab_size_, vocab_size_};
  }
  std::span<const float> data() const { return data_; }

  // Rows of `ids`, in that order. Throws MissingPromptRow for unknown ids.
  PromptMatrix select(const std::vector<std::string>& ids) const;

  // Rows of this matrix followed by those of `other` (same prompt and vocab).
  PromptMatrix concat(const PromptMatrix& other, SplitTag split) const;

  bool operator==(const PromptMatrix&) const = default;

 private:
  std::string prompt_id_;
  SplitTag split_ = SplitTag::train;
  std::vector<std::string> example_ids_;
  std::size_t vocab_size_ = 0;
  std::vector<float> data_;
  std::string vocab_id_;
};

// The PBM1 payload: "PBM1", u32 LE {vocab_id_len, N, V}, vocab_id bytes,
// N*V float32 LE.
struct PbmPayload {
  std::string vocab_id;
  std::uint32_t rows = 0;
  std::uint32_t vocab_size = 0;
  std::vector<float> data;
};

std::string encode_pbm(const PbmPayload& payload);
PbmPayload decode_pbm(std::string_view bytes, const std::string& source_name);

struct CacheFiles {
  std::filesystem::path matrix;    // <stem>.pbm
  std::filesystem::path manifest;  // <stem>.json
};

// File names for a (prompt, split). Prompt ids are escaped so any id maps
// to a distinct portable file name.
CacheFiles cache_files(const std::filesystem::path& cache_dir, const std::string& prompt_id,
                       SplitTag split);

// Writes the .pbm then the manifest, each via temp-file + rename.
void write_prompt_matrix(const PromptMatrix& matrix, const std::filesystem::path& cache_dir);

// Throws IoError (naming the file) on a bad magic, truncation, or a
// manifest that disagrees with the matrix.
PromptMatrix read_prompt_matrix(const std::filesystem::path& cache_dir,
                                const std::string& prompt_id, SplitTag split);

struct FillOptions {
  std::string mask_literal{kDefaultMaskLiteral};
  unsigned workers = 1;
};

struct FillReport {
  // Queries issued per prompt, in prompt order.
  std::vector<std::uint64_t> queries_per_prompt;
  std::uint64_t total_queries() const;
};

// Returns one matrix per prompt with rows in dataset order, querying `client`
// only for (prompt, example) rows not already on disk. Existing files are all
// read and validated before anything is queried or written. `client` may be
// null when the cache is expected to be complete; a missing row then raises
// CacheIncomplete.
std::vector<PromptMatrix> ensure_cached(MaskedLm* client, const Dataset& dataset,
                                        const std::vector<PromptTemplate>& prompts,
                                        const std::filesystem::path& cache_dir,
                                        const FillOptions& options = {},
                                        FillReport* report = nullptr);

}  // namespace promptboost
