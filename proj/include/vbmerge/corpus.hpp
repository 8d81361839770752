#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace vbmerge {

/// Per-field attribute dictionaries. Codes are 1-based on every public
/// interface: code c of field f names values(f)[c - 1].
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<std::string> field_names);

  std::size_t field_count() const { return field_names_.size(); }
  const std::vector<std::string>& field_names() const { return field_names_; }
  const std::string& field_name(std::size_t f) const;
  std::size_t cardinality(std::size_t f) const;
  std::vector<std::size_t> cardinalities() const;
  const std::vector<std::string>& values(std::size_t f) const;

  /// Code of `raw` in field f, or nullopt when absent.
  std::optional<std::uint32_t> find(std::size_t f, const std::string& raw) const;
  /// Code of `raw` in field f; throws UnknownAttributeError when absent.
  std::uint32_t encode(std::size_t f, const std::string& raw) const;
  const std::string& decode(std::size_t f, std::uint32_t code) const;

  /// Returns the code of `raw`, appending it as a new value if unseen.
  std::uint32_t intern(std::size_t f, const std::string& raw);

  /// Reads the tab-separated schema format:
  ///   field_name<TAB>value1,value2,...
  static Schema read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

  bool operator==(const Schema& other) const {
    return field_names_ == other.field_names_ && values_ == other.values_;
  }

 private:
  std::vector<std::string> field_names_;
  std::vector<std::vector<std::string>> values_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> index_;
};

/// Immutable, integer-encoded records from D databases.
///
/// Records are addressed either by (database, record) with both indices
/// 0-based, or by a flat record index n in [0, N) that enumerates databases
/// in order. Internally each cell stores the 0-based value index
/// (code - 1); `value()` converts back to the 1-based code.
class Corpus {
 public:
  Corpus() = default;
  /// `value_indices` is row-major N x F with 0-based value indices.
  Corpus(Schema schema, std::vector<std::size_t> records_per_db,
         std::vector<std::uint32_t> value_indices);

  const Schema& schema() const { return schema_; }
  std::size_t database_count() const { return records_per_db_.size(); }
  const std::vector<std::size_t>& records_per_db() const {
    return records_per_db_;
  }
  std::size_t records_in(std::size_t d) const;
  std::size_t total_records() const { return total_; }
  std::size_t field_count() const { return schema_.field_count(); }

  std::size_t flat_index(std::size_t d, std::size_t r) const;
  /// Inverse of flat_index.
  std::pair<std::size_t, std::size_t> locate(std::size_t n) const;

  /// 1-based code of field f for record (d, r).
  std::uint32_t value(std::size_t d, std::size_t r, std::size_t f) const;
  /// 0-based value indices of flat record n, one per field.
  std::span<const std::uint32_t> row(std::size_t n) const {
    return {cells_.data() + n * field_count(), field_count()};
  }
  std::span<const std::uint32_t> cells() const { return cells_; }

  /// Raw attribute strings of record (d, r). Throws IndexError when out of
  /// range.
  std::vector<std::string> decode(std::size_t d, std::size_t r) const;

  /// Writes database d as CSV with a header row.
  void write_database(std::size_t d, const std::filesystem::path& path) const;

  bool operator==(const Corpus& other) const {
    return schema_ == other.schema_ &&
           records_per_db_ == other.records_per_db_ && cells_ == other.cells_;
  }

 private:
  Schema schema_;
  std::vector<std::size_t> records_per_db_;
  std::vector<std::size_t> db_offsets_;
  std::vector<std::uint32_t> cells_;
  std::size_t total_ = 0;
};

/// Loads one database per CSV file. Without an explicit schema, value codes
/// are assigned in first-seen order scanning the files in argument order.
Corpus load_databases(const std::vector<std::filesystem::path>& paths,
                      const std::optional<Schema>& schema = std::nullopt);

namespace csv {

/// Parses RFC-4180 text into rows of fields. Blank lines are skipped.
std::vector<std::vector<std::string>> parse(const std::string& text);
/// Quotes `field` if it contains a delimiter, quote or line break.
std::string escape(const std::string& field);

}  // namespace csv

}  // namespace vbmerge
