#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vbmerge/corpus.hpp"
#include "vbmerge/vb_engine.hpp"

namespace vbmerge::oracle {

inline constexpr std::uint64_t kDefaultBudget = 1'000'000;

/// Exact posterior over assignments for instances small enough to enumerate.
///
/// Assignment index i encodes z in base K with record 0 as the least
/// significant digit. The noise distributions are integrated out in closed
/// form (Dirichlet-multinomial), so only the K^N assignments are enumerated.
struct ExactPosterior {
  double log_evidence = 0.0;
  std::size_t entity_count = 0;
  std::size_t record_count = 0;
  /// log p(z | x), one entry per assignment index.
  std::vector<double> assignment_log_probs;
  /// P(z_i = z_j | x), row-major N x N.
  std::vector<double> cocluster;

  double cocluster_at(std::size_t i, std::size_t j) const {
    return cocluster[i * record_count + j];
  }
  /// Decodes assignment index `index` into 0-based entity labels.
  std::vector<std::size_t> assignment(std::uint64_t index) const;
};

/// Number of assignments K^N, saturating at UINT64_MAX.
std::uint64_t assignment_count(std::size_t entity_count, std::size_t records);

/// Throws SizeError when K^N exceeds `budget`.
ExactPosterior exact_posterior(const Corpus& corpus, const HyperParams& hp,
                               std::uint64_t budget = kDefaultBudget);

double exact_log_evidence(const Corpus& corpus, const HyperParams& hp,
                          std::uint64_t budget = kDefaultBudget);

/// Row-major N x N co-cluster probabilities.
std::vector<double> exact_cocluster(const Corpus& corpus, const HyperParams& hp,
                                    std::uint64_t budget = kDefaultBudget);

}  // namespace vbmerge::oracle
