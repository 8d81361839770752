#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vbmerge/corpus.hpp"
#include "vbmerge/genmodel.hpp"
#include "vbmerge/vb_engine.hpp"

namespace vbmerge {

/// MAP entity per flat record index; labels are 1-based.
struct Linkage {
  std::vector<std::uint32_t> map_entity;
  std::vector<double> max_prob;
  std::size_t entity_count_estimate = 0;
};

struct LinkageScore {
  double pairwise_precision = 1.0;
  double pairwise_recall = 1.0;
  double pairwise_f1 = 1.0;
  std::size_t true_entity_count = 0;
  std::size_t estimated_entity_count = 0;
};

/// argmax_k phi per record, ties broken toward the smallest k.
Linkage map_linkage(const VariationalState& state);

/// Pairwise precision/recall/F1 over all record pairs, computed from the
/// label contingency table. Empty positive sets score 1.0.
LinkageScore pairwise_metrics(std::span<const std::uint32_t> predicted,
                              std::span<const std::uint32_t> truth);
LinkageScore pairwise_metrics(const Linkage& predicted, const GroundTruth& truth);

/// Mean-field co-cluster estimate sum_k phi_{ik} phi_{jk} for each pair of
/// flat record indices.
std::vector<double> posterior_cocluster_estimate(
    const VariationalState& state,
    std::span<const std::pair<std::size_t, std::size_t>> pairs);

/// Linkage CSV: `db,record,entity,max_prob`, 1-based indices.
void write_linkage(const Linkage& linkage,
                   const std::vector<std::size_t>& records_per_db,
                   const std::filesystem::path& path);

/// Keys are (db, record) pairs in file order, 1-based.
struct KeyedLabels {
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  std::vector<std::uint32_t> labels;
};

struct LinkageFile {
  KeyedLabels records;
  std::vector<double> max_prob;
};

LinkageFile read_linkage(const std::filesystem::path& path);

/// Reads a `db,record,entity` truth file and, when present, its
/// `entity,field,value` companion. Latent values are decoded through
/// `schema` when one is given; otherwise they are left empty.
GroundTruth read_ground_truth(const std::filesystem::path& path,
                              const std::optional<Schema>& schema = std::nullopt);

/// Aligns two keyed label sets on their (db, record) keys. Throws
/// ArgumentError when the key sets differ.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> align_records(
    const KeyedLabels& predicted, const KeyedLabels& truth);

/// Flat JSON object with the five score fields.
std::string score_json(const LinkageScore& score);

}  // namespace vbmerge
