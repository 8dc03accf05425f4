#include "promptboost/verbalizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "promptboost/error.hpp"

namespace promptboost {

namespace {

void check_shapes(const PromptMatrix& matrix, std::span<const ClassIndex> labels,
                  std::span<const double> weights, int num_classes) {
  if (labels.size() != matrix.rows() || weights.size() != matrix.rows()) {
    throw DimensionMismatch("matrix has " + std::to_string(matrix.rows()) + " rows but " +
                            std::to_string(labels.size()) + " labels and " +
                            std::to_string(weights.size()) + " weights");
  }
  if (num_classes < 1) throw DimensionMismatch("need at least one class");
  for (auto y : labels) {
    if (y < 0 || y >= num_classes) {
      throw DimensionMismatch("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

ScoreMatrix score_matrix(const PromptMatrix& matrix, std::span<const ClassIndex> labels,
                         std::span<const double> weights, int num_classes) {
  check_shapes(matrix, labels, weights, num_classes);
  const std::size_t vocab = matrix.vocab_size();
  ScoreMatrix scores(num_classes, vocab);

  // Accumulate per-class weighted sums first, then S(c, .) = 2 * own(c) - total.
  std::vector<double> per_class(static_cast<std::size_t>(num_classes) * vocab, 0.0);
  std::vector<double> total(vocab, 0.0);
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const auto row = matrix.row(i);
    double* own = per_class.data() + labels[i] * vocab;
    for (std::size_t v = 0; v < vocab; ++v) {
      const double contrib = w * row[v];
      own[v] += contrib;
      total[v] += contrib;
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    const double* own = per_class.data() + c * vocab;
    for (std::size_t v = 0; v < vocab; ++v) scores(c, v) = 2.0 * own[v] - total[v];
  }
  return scores;
}

std::vector<ClassIndex> l1_assignment(const ScoreMatrix& scores) {
  std::vector<ClassIndex> out(scores.vocab_size(), 0);
  for (std::size_t v = 0; v < scores.vocab_size(); ++v) {
    ClassIndex best = 0;
    for (int c = 1; c < scores.num_classes(); ++c) {
      if (scores(c, v) > scores(best, v)) best = c;
    }
    out[v] = best;
  }
  return out;
}

ClassIndex predict_with(std::span<const std::size_t> chosen_tokens, std::span<const float> row) {
  ClassIndex best = 0;
  for (std::size_t c = 1; c < chosen_tokens.size(); ++c) {
    if (row[chosen_tokens[c]] > row[chosen_tokens[best]]) best = static_cast<ClassIndex>(c);
  }
  return best;
}

double weighted_accuracy(std::span<const std::size_t> chosen_tokens, const PromptMatrix& matrix,
                         std::span<const ClassIndex> labels, std::span<const double> weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    if (predict_with(chosen_tokens, matrix.row(i)) == labels[i]) acc += weights[i];
  }
  return acc;
}

std::size_t effective_screen_width(std::size_t m, int num_classes, std::uint64_t budget) {
  auto fits = [&](std::size_t width) {
    long double count = 1.0L;
    for (int c = 0; c < num_classes; ++c) count *= static_cast<long double>(width);
    return count <= static_cast<long double>(budget);
  };
  while (m > 1 && !fits(m)) --m;
  return std::max<std::size_t>(m, 1);
}

std::vector<std::size_t> top_m_tokens(std::span<const double> scores, std::size_t m,
                                      std::span<const std::size_t> exclude) {
  std::unordered_set<std::size_t> skip(exclude.begin(), exclude.end());
  std::vector<std::size_t> idx;
  idx.reserve(scores.size());
  for (std::size_t v = 0; v < scores.size(); ++v) {
    if (!skip.contains(v)) idx.push_back(v);
  }
  const std::size_t take = std::min(m, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(take);
  return idx;
}

ScreenResult screen(const ScoreMatrix& scores, const PromptMatrix& matrix,
                    std::span<const ClassIndex> labels, std::span<const double> weights,
                    const ScreenOptions& options) {
  const int num_classes = scores.num_classes();
  check_shapes(matrix, labels, weights, num_classes);
  if (scores.vocab_size() != matrix.vocab_size()) {
    throw DimensionMismatch("score matrix and prompt matrix disagree on vocabulary size");
  }
  if (options.m < 1) throw std::invalid_argument("screening width m must be >= 1");

  const std::size_t m =
      effective_screen_width(options.m, num_classes, options.combination_budget);
  if (m * static_cast<std::size_t>(num_classes) > matrix.vocab_size()) {
    throw DimensionMismatch("m * |Y| = " + std::to_string(m * num_classes) +
                            " exceeds the vocabulary size " +
                            std::to_string(matrix.vocab_size()));
  }

  const std::size_t n = matrix.rows();
  const auto K = static_cast<std::size_t>(num_classes);

  // candidates[c][j] and the matching probability column cols[c][j][i].
  std::vector<std::vector<std::size_t>> candidates(K);
  std::vector<std::vector<std::vector<float>>> cols(K);
  for (std::size_t c = 0; c < K; ++c) {
    candidates[c] = top_m_tokens(scores.row(static_cast<int>(c)), m, options.exclude_tokens);
    cols[c].resize(candidates[c].size());
    for (std::size_t j = 0; j < candidates[c].size(); ++j) {
      auto& col = cols[c][j];
      col.resize(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = matrix.row(i)[candidates[c][j]];
    }
    if (candidates[c].empty()) {
      throw NoValidCombination("class " + std::to_string(c) + " has no candidate tokens");
    }
  }

  ScreenResult best;
  best.effective_m = m;
  bool found = false;
  std::vector<std::size_t> digit(K, 0);
  std::vector<std::size_t> tokens(K);
  std::vector<const float*> active(K);

  while (true) {
    bool distinct = true;
    for (std::size_t c = 0; c < K && distinct; ++c) {
      tokens[c] = candidates[c][digit[c]];
      for (std::size_t d = 0; d < c; ++d) {
        if (tokens[d] == tokens[c]) {
          distinct = false;
          break;
        }
      }
    }

    if (distinct) {
      ++best.combinations_visited;
      for (std::size_t c = 0; c < K; ++c) active[c] = cols[c][digit[c]].data();
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        float top = active[0][i];
        for (std::size_t c = 1; c < K; ++c) {
          if (active[c][i] > top) {
            top = active[c][i];
            arg = c;
          }
        }
        if (static_cast<ClassIndex>(arg) == labels[i]) acc += weights[i];
      }
      double score_sum = 0.0;
      for (std::size_t c = 0; c < K; ++c) score_sum += scores(static_cast<int>(c), tokens[c]);

      bool better = !found;
      if (!better) {
        if (acc != best.weighted_accuracy) {
          better = acc > best.weighted_accuracy;
        } else if (score_sum != best.score_sum) {
          better = score_sum > best.score_sum;
        } else {
          better = tokens < best.verbalizer.chosen_tokens;
        }
      }
      if (better) {
        found = true;
        best.weighted_accuracy = acc;
        best.score_sum = score_sum;
        best.verbalizer.chosen_tokens = tokens;
      }
    }

    // Odometer step; the last class varies fastest.
    std::size_t pos = K;
    while (pos > 0) {
      --pos;
      if (++digit[pos] < candidates[pos].size()) break;
      digit[pos] = 0;
      if (pos == 0) {
        pos = K + 1;
        break;
      }
    }
    if (pos == K + 1) break;
  }

  if (!found) {
    throw NoValidCombination("every top-" + std::to_string(m) +
                             " candidate combination reuses a token across classes");
  }
  best.verbalizer.full_assignment = l1_assignment(scores);
  return best;
}

WeakLearner learn_weak_learner(const PromptMatrix& matrix, std::span<const ClassIndex> labels,
                               std::span<const double> weights, int num_classes,
                               const ScreenOptions& options, ScreenResult* details) {
  const auto scores = score_matrix(matrix, labels, weights, num_classes);
  auto result = screen(scores, matrix, labels, weights, options);
  WeakLearner learner;
  learner.prompt_id = matrix.prompt_id();
  learner.verbalizer = result.verbalizer;
  if (details) *details = std::move(result);
  return learner;
}

std::vector<ClassIndex> predict_rows(const WeakLearner& learner, const PromptMatrix& matrix) {
  std::vector<ClassIndex> out(matrix.rows());
  for (std::size_t i = 0; i < matrix.rows(); ++i) out[i] = learner.predict(matrix.row(i));
  return out;
}

}  // namespace promptboost
