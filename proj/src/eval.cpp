#include "vbmerge/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "vbmerge/errors.hpp"

namespace vbmerge {

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return csv::parse(buffer.str());
}

template <typename T>
T parse_number(const std::string& text, const std::filesystem::path& path,
               std::size_t row) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ArgumentError(path.string() + ": row " + std::to_string(row) +
                        ": cannot parse '" + text + "'");
  }
  return value;
}

void expect_header(const std::vector<std::vector<std::string>>& rows,
                   const std::vector<std::string>& header,
                   const std::filesystem::path& path) {
  if (rows.empty() || rows.front() != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw ArgumentError(path.string() + ": expected header '" + want + "'");
  }
}

KeyedLabels keyed_labels(const std::vector<std::vector<std::string>>& rows,
                         const std::filesystem::path& path) {
  KeyedLabels out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const auto db = parse_number<std::size_t>(row[0], path, i);
    const auto record = parse_number<std::size_t>(row[1], path, i);
    const auto entity = parse_number<std::uint32_t>(row[2], path, i);
    if (db == 0 || record == 0 || entity == 0) {
      throw ArgumentError(path.string() + ": row " + std::to_string(i) +
                          ": indices are 1-based");
    }
    out.keys.emplace_back(db, record);
    out.labels.push_back(entity);
  }
  return out;
}

void check_columns(const std::vector<std::vector<std::string>>& rows,
                   std::size_t columns, const std::filesystem::path& path) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != columns) {
      throw ArgumentError(path.string() + ": row " + std::to_string(i) + " has " +
                          std::to_string(rows[i].size()) + " columns");
    }
  }
}

std::uint64_t pairs_of(std::uint64_t n) { return n * (n - (n > 0)) / 2; }

std::size_t distinct(std::span<const std::uint32_t> labels) {
  return std::unordered_set<std::uint32_t>(labels.begin(), labels.end()).size();
}

}  // namespace

Linkage map_linkage(const VariationalState& state) {
  Linkage out;
  out.map_entity.reserve(state.record_count());
  out.max_prob.reserve(state.record_count());
  for (std::size_t n = 0; n < state.record_count(); ++n) {
    const auto row = state.phi_row(n);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out.map_entity.push_back(static_cast<std::uint32_t>(best + 1));
    out.max_prob.push_back(row[best]);
  }
  out.entity_count_estimate = distinct(out.map_entity);
  return out;
}

LinkageScore pairwise_metrics(std::span<const std::uint32_t> predicted,
                              std::span<const std::uint32_t> truth) {
  if (predicted.size() != truth.size()) {
    throw ArgumentError("predicted and true linkages cover different record sets");
  }
  std::unordered_map<std::uint32_t, std::uint64_t> predicted_sizes;
  std::unordered_map<std::uint32_t, std::uint64_t> true_sizes;
  std::unordered_map<std::uint64_t, std::uint64_t> joint;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++predicted_sizes[predicted[i]];
    ++true_sizes[truth[i]];
    ++joint[(std::uint64_t{predicted[i]} << 32) | truth[i]];
  }
  std::uint64_t both = 0;
  std::uint64_t predicted_pairs = 0;
  std::uint64_t true_pairs = 0;
  for (const auto& [key, n] : joint) both += pairs_of(n);
  for (const auto& [label, n] : predicted_sizes) predicted_pairs += pairs_of(n);
  for (const auto& [label, n] : true_sizes) true_pairs += pairs_of(n);

  LinkageScore score;
  score.pairwise_precision =
      predicted_pairs == 0 ? 1.0
                           : static_cast<double>(both) / static_cast<double>(predicted_pairs);
  score.pairwise_recall =
      true_pairs == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(true_pairs);
  const double sum = score.pairwise_precision + score.pairwise_recall;
  score.pairwise_f1 =
      sum > 0.0 ? 2.0 * score.pairwise_precision * score.pairwise_recall / sum : 0.0;
  score.true_entity_count = true_sizes.size();
  score.estimated_entity_count = predicted_sizes.size();
  return score;
}

LinkageScore pairwise_metrics(const Linkage& predicted, const GroundTruth& truth) {
  return pairwise_metrics(predicted.map_entity, truth.assignments);
}

std::vector<double> posterior_cocluster_estimate(
    const VariationalState& state,
    std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    if (i >= state.record_count() || j >= state.record_count()) {
      throw IndexError("record pair (" + std::to_string(i) + ", " +
                       std::to_string(j) + ") out of range");
    }
    const auto a = state.phi_row(i);
    const auto b = state.phi_row(j);
    double p = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) p += a[k] * b[k];
    out.push_back(p);
  }
  return out;
}

void write_linkage(const Linkage& linkage,
                   const std::vector<std::size_t>& records_per_db,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "db,record,entity,max_prob\n";
  std::size_t n = 0;
  char buffer[32];
  for (std::size_t d = 0; d < records_per_db.size(); ++d) {
    for (std::size_t r = 0; r < records_per_db[d]; ++r, ++n) {
      std::snprintf(buffer, sizeof buffer, "%.17g", linkage.max_prob.at(n));
      out << d + 1 << ',' << r + 1 << ',' << linkage.map_entity.at(n) << ','
          << buffer << '\n';
    }
  }
  if (n != linkage.map_entity.size()) {
    throw ArgumentError("linkage size does not match the database sizes");
  }
  if (!out) throw IoError("failed writing " + path.string());
}

LinkageFile read_linkage(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  expect_header(rows, {"db", "record", "entity", "max_prob"}, path);
  check_columns(rows, 4, path);
  LinkageFile out;
  out.records = keyed_labels(rows, path);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    out.max_prob.push_back(std::stod(rows[i][3]));
  }
  return out;
}

GroundTruth read_ground_truth(const std::filesystem::path& path,
                              const std::optional<Schema>& schema) {
  const auto rows = read_csv(path);
  expect_header(rows, {"db", "record", "entity"}, path);
  check_columns(rows, 3, path);
  const auto keyed = keyed_labels(rows, path);

  GroundTruth truth;
  for (std::size_t i = 0; i < keyed.keys.size(); ++i) {
    const auto [db, record] = keyed.keys[i];
    if (db < truth.records_per_db.size()) {
      throw ArgumentError(path.string() + ": rows are not in database order");
    }
    while (truth.records_per_db.size() < db) truth.records_per_db.push_back(0);
    if (record != truth.records_per_db.back() + 1) {
      throw ArgumentError(path.string() + ": records of database " +
                          std::to_string(db) + " are not consecutive from 1");
    }
    ++truth.records_per_db.back();
  }
  truth.assignments = keyed.labels;
  for (auto z : truth.assignments) {
    truth.entity_count = std::max<std::size_t>(truth.entity_count, z);
  }

  const auto latent_path = latent_values_path(path);
  if (!schema || !std::filesystem::exists(latent_path)) return truth;

  const auto latent_rows = read_csv(latent_path);
  expect_header(latent_rows, {"entity", "field", "value"}, latent_path);
  check_columns(latent_rows, 3, latent_path);
  std::map<std::string, std::size_t> field_index;
  for (std::size_t f = 0; f < schema->field_count(); ++f) {
    field_index[schema->field_name(f)] = f;
  }
  const std::size_t F = schema->field_count();
  std::vector<std::tuple<std::size_t, std::size_t, std::uint32_t>> entries;
  for (std::size_t i = 1; i < latent_rows.size(); ++i) {
    const auto& row = latent_rows[i];
    const auto k = parse_number<std::size_t>(row[0], latent_path, i);
    const auto it = field_index.find(row[1]);
    if (k == 0 || it == field_index.end()) {
      throw ArgumentError(latent_path.string() + ": bad row " + std::to_string(i));
    }
    truth.entity_count = std::max(truth.entity_count, k);
    entries.emplace_back(k - 1, it->second, schema->encode(it->second, row[2]));
  }
  truth.latent_values.assign(truth.entity_count * F, 0);
  for (const auto& [k, f, code] : entries) truth.latent_values[k * F + f] = code;
  return truth;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> align_records(
    const KeyedLabels& predicted, const KeyedLabels& truth) {
  if (predicted.keys.size() != truth.keys.size()) {
    throw ArgumentError("linkage has " + std::to_string(predicted.keys.size()) +
                        " records, truth has " + std::to_string(truth.keys.size()));
  }
  std::map<std::pair<std::size_t, std::size_t>, std::uint32_t> truth_by_key;
  for (std::size_t i = 0; i < truth.keys.size(); ++i) {
    if (!truth_by_key.emplace(truth.keys[i], truth.labels[i]).second) {
      throw ArgumentError("duplicate record in truth");
    }
  }
  std::vector<std::uint32_t> aligned_truth;
  aligned_truth.reserve(predicted.keys.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& key : predicted.keys) {
    const auto it = truth_by_key.find(key);
    if (it == truth_by_key.end() || !seen.insert(key).second) {
      throw ArgumentError("record (" + std::to_string(key.first) + ", " +
                          std::to_string(key.second) +
                          ") is missing from the truth or duplicated");
    }
    aligned_truth.push_back(it->second);
  }
  return {predicted.labels, std::move(aligned_truth)};
}

std::string score_json(const LinkageScore& score) {
  nlohmann::ordered_json json;
  json["pairwise_precision"] = score.pairwise_precision;
  json["pairwise_recall"] = score.pairwise_recall;
  json["pairwise_f1"] = score.pairwise_f1;
  json["true_entity_count"] = score.true_entity_count;
  json["estimated_entity_count"] = score.estimated_entity_count;
  return json.dump(2);
}

}  // namespace vbmerge
