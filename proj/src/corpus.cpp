#include "vbmerge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vbmerge/errors.hpp"

namespace vbmerge {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(std::move(current));
  return parts;
}

}  // namespace

// ---------------------------------------------------------------- Schema

Schema::Schema(std::vector<std::string> field_names)
    : field_names_(std::move(field_names)),
      values_(field_names_.size()),
      index_(field_names_.size()) {
  for (std::size_t i = 0; i < field_names_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (field_names_[i] == field_names_[j]) {
        throw SchemaError("duplicate field name '" + field_names_[i] + "'");
      }
    }
  }
}

const std::string& Schema::field_name(std::size_t f) const {
  if (f >= field_count()) throw IndexError("field index out of range");
  return field_names_[f];
}

std::size_t Schema::cardinality(std::size_t f) const {
  if (f >= field_count()) throw IndexError("field index out of range");
  return values_[f].size();
}

std::vector<std::size_t> Schema::cardinalities() const {
  std::vector<std::size_t> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(v.size());
  return out;
}

const std::vector<std::string>& Schema::values(std::size_t f) const {
  if (f >= field_count()) throw IndexError("field index out of range");
  return values_[f];
}

std::optional<std::uint32_t> Schema::find(std::size_t f,
                                          const std::string& raw) const {
  if (f >= field_count()) throw IndexError("field index out of range");
  auto it = index_[f].find(raw);
  if (it == index_[f].end()) return std::nullopt;
  return it->second;
}

std::uint32_t Schema::encode(std::size_t f, const std::string& raw) const {
  if (auto code = find(f, raw)) return *code;
  throw UnknownAttributeError("value '" + raw + "' is not in the schema for field '" +
                              field_names_[f] + "'");
}

const std::string& Schema::decode(std::size_t f, std::uint32_t code) const {
  if (f >= field_count() || code == 0 || code > values_[f].size()) {
    throw IndexError("code out of range");
  }
  return values_[f][code - 1];
}

std::uint32_t Schema::intern(std::size_t f, const std::string& raw) {
  if (auto code = find(f, raw)) return *code;
  values_[f].push_back(raw);
  const auto code = static_cast<std::uint32_t>(values_[f].size());
  index_[f].emplace(raw, code);
  return code;
}

Schema Schema::read(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> values;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw SchemaError(path.string() + ": schema line without a tab: " + line);
    }
    names.push_back(line.substr(0, tab));
    values.push_back(split(line.substr(tab + 1), ','));
  }
  Schema schema(std::move(names));
  for (std::size_t f = 0; f < values.size(); ++f) {
    for (const auto& raw : values[f]) {
      if (raw.empty()) {
        throw SchemaError(path.string() + ": empty value for field '" +
                          schema.field_names_[f] + "'");
      }
      if (schema.find(f, raw)) {
        throw SchemaError(path.string() + ": duplicate value '" + raw +
                          "' for field '" + schema.field_names_[f] + "'");
      }
      schema.intern(f, raw);
    }
  }
  return schema;
}

void Schema::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t f = 0; f < field_count(); ++f) {
    out << field_names_[f] << '\t';
    for (std::size_t v = 0; v < values_[f].size(); ++v) {
      const auto& raw = values_[f][v];
      if (raw.find_first_of(",\t\r\n") != std::string::npos) {
        throw SchemaError("value '" + raw +
                          "' cannot be stored in a schema file");
      }
      out << (v ? "," : "") << raw;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------- Corpus

Corpus::Corpus(Schema schema, std::vector<std::size_t> records_per_db,
               std::vector<std::uint32_t> value_indices)
    : schema_(std::move(schema)),
      records_per_db_(std::move(records_per_db)),
      cells_(std::move(value_indices)) {
  db_offsets_.reserve(records_per_db_.size());
  for (std::size_t count : records_per_db_) {
    db_offsets_.push_back(total_);
    total_ += count;
  }
  const std::size_t fields = schema_.field_count();
  if (cells_.size() != total_ * fields) {
    throw ArgumentError("cell count does not match records x fields");
  }
  for (std::size_t n = 0; n < total_; ++n) {
    for (std::size_t f = 0; f < fields; ++f) {
      if (cells_[n * fields + f] >= schema_.cardinality(f)) {
        throw ArgumentError("value index outside the field's dictionary");
      }
    }
  }
}

std::size_t Corpus::records_in(std::size_t d) const {
  if (d >= database_count()) throw IndexError("database index out of range");
  return records_per_db_[d];
}

std::size_t Corpus::flat_index(std::size_t d, std::size_t r) const {
  if (d >= database_count() || r >= records_per_db_[d]) {
    throw IndexError("record (" + std::to_string(d) + ", " + std::to_string(r) +
                     ") out of range");
  }
  return db_offsets_[d] + r;
}

std::pair<std::size_t, std::size_t> Corpus::locate(std::size_t n) const {
  if (n >= total_) throw IndexError("record index out of range");
  auto it = std::upper_bound(db_offsets_.begin(), db_offsets_.end(), n);
  // Empty databases share an offset with their successor; upper_bound lands
  // after the last of them, which is the database that holds n.
  const auto d = static_cast<std::size_t>(it - db_offsets_.begin()) - 1;
  return {d, n - db_offsets_[d]};
}

std::uint32_t Corpus::value(std::size_t d, std::size_t r, std::size_t f) const {
  if (f >= field_count()) throw IndexError("field index out of range");
  return row(flat_index(d, r))[f] + 1;
}

std::vector<std::string> Corpus::decode(std::size_t d, std::size_t r) const {
  const auto cells = row(flat_index(d, r));
  std::vector<std::string> raw;
  raw.reserve(cells.size());
  for (std::size_t f = 0; f < cells.size(); ++f) {
    raw.push_back(schema_.decode(f, cells[f] + 1));
  }
  return raw;
}

void Corpus::write_database(std::size_t d,
                            const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t f = 0; f < field_count(); ++f) {
    out << (f ? "," : "") << csv::escape(schema_.field_name(f));
  }
  out << '\n';
  for (std::size_t r = 0; r < records_in(d); ++r) {
    const auto raw = decode(d, r);
    for (std::size_t f = 0; f < raw.size(); ++f) {
      out << (f ? "," : "") << csv::escape(raw[f]);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------- loading

Corpus load_databases(const std::vector<std::filesystem::path>& paths,
                      const std::optional<Schema>& schema) {
  if (paths.empty()) throw ArgumentError("no database files given");

  std::vector<std::string> header;
  std::vector<std::vector<std::vector<std::string>>> tables;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto rows = csv::parse(read_file(paths[i]));
    if (rows.empty()) throw SchemaError(paths[i].string() + ": missing header row");
    if (i == 0) {
      header = rows.front();
    } else if (rows.front() != header) {
      const auto& other = rows.front();
      std::string detail;
      for (std::size_t f = 0; f < std::max(header.size(), other.size()); ++f) {
        const std::string want = f < header.size() ? header[f] : "<none>";
        const std::string got = f < other.size() ? other[f] : "<none>";
        if (want != got) {
          detail = "column " + std::to_string(f + 1) + " is '" + got +
                   "', expected '" + want + "'";
          break;
        }
      }
      throw SchemaError(paths[i].string() + ": header mismatch, " + detail);
    }
    tables.push_back(std::move(rows));
  }

  Schema dict = schema ? *schema : Schema(header);
  if (schema && schema->field_names() != header) {
    throw SchemaError("CSV header does not match the schema's field names");
  }

  const std::size_t fields = header.size();
  std::vector<std::size_t> records_per_db;
  std::vector<std::uint32_t> cells;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& rows = tables[i];
    records_per_db.push_back(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() != fields) {
        throw SchemaError(paths[i].string() + ": row " + std::to_string(r) +
                          " has " + std::to_string(row.size()) +
                          " columns, expected " + std::to_string(fields));
      }
      for (std::size_t f = 0; f < fields; ++f) {
        if (row[f].empty()) throw MissingValueError(paths[i].string(), r, f + 1);
        const std::uint32_t code =
            schema ? dict.encode(f, row[f]) : dict.intern(f, row[f]);
        cells.push_back(code - 1);
      }
    }
  }
  return Corpus(std::move(dict), std::move(records_per_db), std::move(cells));
}

// ---------------------------------------------------------------- csv

namespace csv {

std::vector<std::vector<std::string>> parse(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_started = false;

  std::size_t i = 0;
  // Skip a UTF-8 byte order mark.
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    rows.push_back(std::move(row));
    row.clear();
    row_started = false;
  };

  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        row_started = true;
    }
  }
  if (quoted) throw SchemaError("unterminated quoted CSV field");
  if (row_started) end_row();
  return rows;
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace csv

}  // namespace vbmerge
