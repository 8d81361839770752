#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "vbmerge/corpus.hpp"

namespace vbmerge {

/// Generator truth. Entity labels and value codes are 1-based.
struct GroundTruth {
  std::size_t entity_count = 0;
  std::vector<std::size_t> records_per_db;
  /// z per flat record index, in {1..entity_count}.
  std::vector<std::uint32_t> assignments;
  /// v* per entity and field, row-major entity_count x F, 1-based codes.
  std::vector<std::uint32_t> latent_values;
  /// beta_{kfv} per entity, row-major entity_count x sum_f V_f. Not
  /// persisted by write_ground_truth; empty after read_ground_truth.
  std::vector<double> noise;

  std::size_t total_records() const { return assignments.size(); }
  std::uint32_t latent_value(std::size_t k, std::size_t f, std::size_t fields) const {
    return latent_values[k * fields + f];
  }
};

struct DirichletNoise {
  /// Concentration per field and value.
  std::vector<std::vector<double>> alpha;
};

/// beta puts 1 - epsilon on the latent value and spreads epsilon uniformly
/// over the remaining values.
struct PeakedNoise {
  double epsilon = 0.0;
};

struct GenConfig {
  std::size_t entity_count = 1;
  std::vector<std::size_t> db_sizes;
  std::vector<std::size_t> cardinalities;
  std::variant<DirichletNoise, PeakedNoise> noise = PeakedNoise{};
  /// When set, every entity receives between 1 and this many records and the
  /// entity count is derived from the allocation (entity_count is ignored).
  std::optional<std::size_t> small_cluster_max;
  std::uint64_t seed = 0;
};

/// Schema used by generated corpora: fields "field1".. and values "v1"..
Schema synthetic_schema(const std::vector<std::size_t>& cardinalities);

/// Samples a corpus and its generating truth. Deterministic given the seed.
std::pair<Corpus, GroundTruth> sample_dataset(const GenConfig& config);

/// Writes `db,record,entity` rows (1-based) to `path` and `entity,field,value`
/// rows with raw strings to latent_values_path(path).
void write_ground_truth(const GroundTruth& truth, const Schema& schema,
                        const std::filesystem::path& path);

/// Companion file of a truth CSV: "<stem>_latent.csv" next to it.
std::filesystem::path latent_values_path(const std::filesystem::path& truth_path);

}  // namespace vbmerge
