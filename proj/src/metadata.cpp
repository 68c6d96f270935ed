#include "mmh/metadata.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "mmh/error.hpp"
#include "mmh/text.hpp"

namespace mmh {

namespace {

const std::vector<std::string>& metadata_columns() {
  static const std::vector<std::string> cols = {"signal",         "signal_start",   "signal_end",
                                                "encoder_prompt", "decoder_prompt", "output"};
  return cols;
}

int64_t parse_ms(const std::string& cell, size_t row, const char* column) {
  if (cell.empty()) return 0;
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || value < 0) {
    throw Error(ErrorCode::BadInteger,
                "row " + std::to_string(row) + ", column " + column + ": '" + cell + "'");
  }
  return value;
}

std::string sanitize(const std::string& field, size_t row, std::vector<std::string>& warnings) {
  if (field.find('\t') != std::string::npos) {
    throw Error(ErrorCode::MalformedRow, "row " + std::to_string(row) + ": field contains a tab");
  }
  if (field.find_first_of("\r\n") == std::string::npos) return field;
  std::string out;
  out.reserve(field.size());
  for (size_t i = 0; i < field.size(); ++i) {
    char c = field[i];
    if (c == '\r' && i + 1 < field.size() && field[i + 1] == '\n') continue;
    out.push_back(c == '\n' || c == '\r' ? ' ' : c);
  }
  warnings.push_back("row " + std::to_string(row) + ": newline replaced by space");
  return out;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

Split infer_split(const std::filesystem::path& path) {
  std::string stem = path.stem().string();
  std::transform(stem.begin(), stem.end(), stem.begin(), [](unsigned char c) { return std::tolower(c); });
  if (stem.find("test") != std::string::npos) return Split::Test;
  if (stem.find("val") != std::string::npos || stem.find("dev") != std::string::npos) return Split::Validation;
  return Split::Train;
}

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path,
                                               const std::vector<std::string>& columns) {
  std::string content = text::read_file(path);
  if (content.starts_with("\xEF\xBB\xBF")) content.erase(0, 3);
  if (content.empty()) throw Error(ErrorCode::EmptyFile, path.string() + " is empty");

  std::vector<std::string> lines = text::split(content, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
  }
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, path.string() + " is empty");

  const std::vector<std::string> header = text::split(lines[0], '\t');
  for (size_t i = 0; i < columns.size(); ++i) {
    if (i >= header.size() || header[i] != columns[i]) {
      bool present = std::find(header.begin(), header.end(), columns[i]) != header.end();
      throw Error(ErrorCode::MissingColumn,
                  columns[i] + (present ? " (out of order)" : "") + " in " + path.string());
    }
  }
  if (header.size() != columns.size()) {
    throw Error(ErrorCode::MissingColumn, "unexpected extra column '" + header[columns.size()] + "' in " +
                                              path.string());
  }
  if (lines.size() == 1) throw Error(ErrorCode::EmptyFile, path.string() + " has a header but no rows");

  std::vector<std::vector<std::string>> rows;
  rows.reserve(lines.size() - 1);
  for (size_t i = 1; i < lines.size(); ++i) {
    auto fields = text::split(lines[i], '\t');
    if (fields.size() != columns.size()) {
      throw Error(ErrorCode::MalformedRow, path.string() + " row " + std::to_string(i - 1) + ": expected " +
                                               std::to_string(columns.size()) + " fields, found " +
                                               std::to_string(fields.size()));
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::vector<std::string> write_tsv(const std::filesystem::path& path,
                                   const std::vector<std::string>& columns,
                                   const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::string> warnings;
  std::ostringstream out;
  out << text::join(columns, "\t") << '\n';
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      if (c) out << '\t';
      out << sanitize(rows[r][c], r, warnings);
    }
    out << '\n';
  }
  text::write_file(path, out.str());
  return warnings;
}

SplitTable parse_metadata_tsv(const std::filesystem::path& path) {
  return parse_metadata_tsv(path, infer_split(path));
}

SplitTable parse_metadata_tsv(const std::filesystem::path& path, Split split) {
  auto rows = read_tsv(path, metadata_columns());
  SplitTable table;
  table.split = split;
  table.source_path = path.string();
  table.records.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    auto& f = rows[i];
    SampleRecord rec;
    rec.signal = std::move(f[0]);
    rec.signal_start = parse_ms(f[1], i, "signal_start");
    rec.signal_end = parse_ms(f[2], i, "signal_end");
    rec.encoder_prompt = std::move(f[3]);
    rec.decoder_prompt = std::move(f[4]);
    rec.output = std::move(f[5]);
    table.records.push_back(std::move(rec));
  }
  return table;
}

std::vector<std::string> write_metadata_tsv(const SplitTable& table, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(table.records.size());
  for (const auto& r : table.records) {
    const bool unset = r.signal_start == 0 && r.signal_end == 0;
    rows.push_back({r.signal, unset ? "" : std::to_string(r.signal_start),
                    unset ? "" : std::to_string(r.signal_end), r.encoder_prompt, r.decoder_prompt, r.output});
  }
  return write_tsv(path, metadata_columns(), rows);
}

SplitTable concat_multitask(const std::vector<SplitTable>& tables) {
  if (tables.empty()) return {};
  SplitTable out;
  out.split = tables.front().split;
  out.source_path = tables.front().source_path;
  for (const auto& t : tables) {
    if (t.split != out.split) {
      throw Error(ErrorCode::MixedSplits, std::string(split_name(t.split)) + " table among " +
                                              std::string(split_name(out.split)) + " tables");
    }
    out.records.insert(out.records.end(), t.records.begin(), t.records.end());
  }
  return out;
}

std::filesystem::path resolve_signal_path(const SplitTable& table, std::string_view signal) {
  std::filesystem::path p{std::string(signal)};
  if (p.is_relative() && !table.source_path.empty()) {
    return std::filesystem::path(table.source_path).parent_path() / p;
  }
  return p;
}

std::vector<Violation> validate_records(const SplitTable& table, Modality modality,
                                        const ExtensionRegistry& registry) {
  std::vector<Violation> report;
  const auto wanted = signal_kind_of(modality);
  for (size_t i = 0; i < table.records.size(); ++i) {
    const auto& r = table.records[i];
    if (r.signal_end != 0 && r.signal_end <= r.signal_start) {
      report.push_back({i, "end before start"});
    }
    if (r.signal.empty() && r.encoder_prompt.empty()) {
      report.push_back({i, "no input: signal and encoder_prompt are both empty"});
    }
    if (r.output.empty() && table.split != Split::Test) {
      report.push_back({i, "empty output in " + std::string(split_name(table.split)) + " split"});
    }
    if (r.signal.find('\t') != std::string::npos) report.push_back({i, "tab inside signal"});
    if (!wanted || r.signal.empty()) continue;

    const auto kind = registry.lookup_path(r.signal);
    if (!kind || *kind != *wanted) {
      report.push_back({i, "signal '" + r.signal + "' is not a registered " +
                               std::string(signal_kind_name(*wanted)) + " file"});
      continue;
    }
    std::error_code ec;
    if (!std::filesystem::is_regular_file(resolve_signal_path(table, r.signal), ec)) {
      report.push_back({i, "missing signal file"});
    }
  }
  return report;
}

}  // namespace mmh
