#include "emoprobe/dataset.hpp"

#include "emoprobe/utf8.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace emoprobe {

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct RawRow {
  std::string id, split, label, text;
  std::size_t line = 0;
};

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (field_started || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        field_started = false;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw CorpusError("csv: unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::vector<std::string>> parse_tsv_rows(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      std::vector<std::string> row;
      std::size_t f = 0;
      while (true) {
        const std::size_t tab = line.find('\t', f);
        row.emplace_back(line.substr(f, tab == std::string_view::npos ? line.npos : tab - f));
        if (tab == std::string_view::npos) break;
        f = tab + 1;
      }
      rows.push_back(std::move(row));
    }
    start = end + 1;
  }
  return rows;
}

std::vector<RawRow> rows_from_table(const std::vector<std::vector<std::string>>& table,
                                    std::string_view fmt_name) {
  std::vector<RawRow> out;
  if (table.empty()) return out;
  const auto& header = table.front();
  int col_id = -1, col_split = -1, col_label = -1, col_text = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string key = lower_ascii(trim(header[c]));
    if (key == "id") col_id = static_cast<int>(c);
    if (key == "split") col_split = static_cast<int>(c);
    if (key == "label") col_label = static_cast<int>(c);
    if (key == "text") col_text = static_cast<int>(c);
  }
  if (col_id < 0 || col_split < 0 || col_label < 0 || col_text < 0) {
    throw CorpusError(fmt::format("{}: header must contain id, split, label, text", fmt_name));
  }
  const auto needed = static_cast<std::size_t>(
      std::max({col_id, col_split, col_label, col_text}) + 1);
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() < needed) {
      throw CorpusError(fmt::format("{}: record {} has {} fields, expected {}", fmt_name, r,
                                    row.size(), header.size()));
    }
    out.push_back(RawRow{row[col_id], row[col_split], row[col_label], row[col_text], r + 1});
  }
  return out;
}

std::vector<RawRow> rows_from_jsonl(std::string_view content) {
  std::vector<RawRow> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    ++line_no;
    const std::string_view line = trim(content.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(fmt::format("jsonl line {}: {}", line_no, e.what()));
    }
    RawRow row;
    row.line = line_no;
    for (auto [key, dest] : {std::pair{"id", &row.id}, std::pair{"split", &row.split},
                             std::pair{"label", &row.label}, std::pair{"text", &row.text}}) {
      if (!obj.contains(key)) {
        throw CorpusError(fmt::format("jsonl line {}: missing key '{}'", line_no, key));
      }
      const auto& v = obj.at(key);
      *dest = v.is_string() ? v.get<std::string>() : v.dump();
    }
    out.push_back(std::move(row));
  }
  return out;
}

SplitCorpus build_corpus(std::vector<RawRow> rows) {
  if (rows.empty()) throw CorpusError("empty corpus");
  SplitCorpus corpus;
  std::set<std::string, std::less<>> seen;
  std::set<std::string> labels;
  std::vector<std::string> bad_split;
  for (auto& row : rows) {
    Split s{};
    if (!parse_split(trim(row.split), s)) {
      bad_split.push_back(row.id);
      continue;
    }
    if (row.id.empty()) throw CorpusError(fmt::format("record at line {} has an empty id", row.line));
    if (!seen.insert(row.id).second) throw CorpusError(fmt::format("duplicate id '{}'", row.id));
    if (trim(row.text).empty()) {
      throw CorpusError(fmt::format("empty text for id '{}'", row.id));
    }
    std::string label = normalize_label(row.label);
    if (label.empty()) throw CorpusError(fmt::format("empty label for id '{}'", row.id));
    labels.insert(label);
    corpus.split(s).push_back(DocumentRecord{std::move(row.id), std::move(row.text), std::move(label)});
  }
  if (!bad_split.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < bad_split.size(); ++i) {
      if (i) ids += ", ";
      ids += bad_split[i];
    }
    throw CorpusError(fmt::format("unknown split tag for ids: {}", ids));
  }
  corpus.labels = LabelSpace::sorted({labels.begin(), labels.end()});
  return corpus;
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::trn: return "trn";
    case Split::dev: return "dev";
    case Split::tst: return "tst";
  }
  return "?";
}

bool parse_split(std::string_view tag, Split& out) {
  const std::string t = lower_ascii(tag);
  if (t == "trn" || t == "train") {
    out = Split::trn;
  } else if (t == "dev" || t == "valid" || t == "validation") {
    out = Split::dev;
  } else if (t == "tst" || t == "test") {
    out = Split::tst;
  } else {
    return false;
  }
  return true;
}

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw CorpusError("label space needs at least 2 labels");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      throw CorpusError(fmt::format("duplicate label '{}'", names_[i]));
    }
  }
}

LabelSpace LabelSpace::sorted(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  return LabelSpace(std::move(names));
}

LabelSpace LabelSpace::ordered(std::vector<std::string> names) { return LabelSpace(std::move(names)); }

bool LabelSpace::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t LabelSpace::index_of(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw CorpusError(fmt::format("unknown label '{}'", name));
  return it->second;
}

std::vector<DocumentRecord>& SplitCorpus::split(Split s) {
  switch (s) {
    case Split::trn: return trn;
    case Split::dev: return dev;
    case Split::tst: return tst;
  }
  return trn;
}

const std::vector<DocumentRecord>& SplitCorpus::split(Split s) const {
  return const_cast<SplitCorpus*>(this)->split(s);
}

const DocumentRecord* SplitCorpus::find(std::string_view id) const {
  for (const auto* part : {&trn, &dev, &tst}) {
    for (const auto& doc : *part) {
      if (doc.id == id) return &doc;
    }
  }
  return nullptr;
}

std::string_view format_name(CorpusFormat f) {
  switch (f) {
    case CorpusFormat::csv: return "csv";
    case CorpusFormat::tsv: return "tsv";
    case CorpusFormat::jsonl: return "jsonl";
  }
  return "?";
}

CorpusFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = lower_ascii(path.extension().string());
  if (ext == ".csv") return CorpusFormat::csv;
  if (ext == ".tsv" || ext == ".txt") return CorpusFormat::tsv;
  if (ext == ".jsonl" || ext == ".json") return CorpusFormat::jsonl;
  throw CorpusError(fmt::format("cannot infer corpus format from '{}'", path.string()));
}

std::string normalize_label(std::string_view raw) { return lower_ascii(trim(raw)); }

SplitCorpus parse_corpus(std::string_view content, CorpusFormat format) {
  // UTF-8 BOM
  if (content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);
  switch (format) {
    case CorpusFormat::csv: return build_corpus(rows_from_table(parse_csv_rows(content), "csv"));
    case CorpusFormat::tsv: return build_corpus(rows_from_table(parse_tsv_rows(content), "tsv"));
    case CorpusFormat::jsonl: return build_corpus(rows_from_jsonl(content));
  }
  throw CorpusError("unknown corpus format");
}

SplitCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError(fmt::format("cannot open corpus '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), format);
}

SplitCorpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, format_from_path(path));
}

std::string format_corpus(const SplitCorpus& corpus, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::tsv) out = "id\tsplit\tlabel\ttext\n";
  if (format == CorpusFormat::csv) out = "id,split,label,text\n";
  for (Split s : {Split::trn, Split::dev, Split::tst}) {
    for (const auto& doc : corpus.split(s)) {
      switch (format) {
        case CorpusFormat::tsv:
          for (const auto* field : {&doc.id, &doc.label, &doc.text}) {
            if (field->find_first_of("\t\n\r") != std::string::npos) {
              throw CorpusError(fmt::format("tsv: id '{}' contains a tab or newline", doc.id));
            }
          }
          out += fmt::format("{}\t{}\t{}\t{}\n", doc.id, split_name(s), doc.label, doc.text);
          break;
        case CorpusFormat::csv:
          out += fmt::format("{},{},{},{}\n", csv_escape(doc.id), split_name(s),
                             csv_escape(doc.label), csv_escape(doc.text));
          break;
        case CorpusFormat::jsonl: {
          const nlohmann::ordered_json obj = {
              {"id", doc.id}, {"split", split_name(s)}, {"label", doc.label}, {"text", doc.text}};
          out += obj.dump();
          out += '\n';
          break;
        }
      }
    }
  }
  return out;
}

void write_corpus(const SplitCorpus& corpus, const std::filesystem::path& path,
                  CorpusFormat format) {
  const std::string content = format_corpus(corpus, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError(fmt::format("cannot write corpus '{}'", path.string()));
  out << content;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t tokens = 0;
  bool in_token = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = utf8::decode(text, pos);
    if (utf8::is_space(cp)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++tokens;
    }
  }
  return tokens;
}

CorpusStats corpus_stats(std::span<const DocumentRecord> split) {
  if (split.empty()) throw CorpusError("corpus_stats: empty split");
  CorpusStats stats;
  stats.count = split.size();
  double sum = 0.0;
  for (const auto& doc : split) sum += static_cast<double>(count_tokens(doc.text));
  stats.mean_tokens = sum / static_cast<double>(split.size());
  double sq = 0.0;
  for (const auto& doc : split) {
    const double d = static_cast<double>(count_tokens(doc.text)) - stats.mean_tokens;
    sq += d * d;
  }
  stats.std_tokens = std::sqrt(sq / static_cast<double>(split.size()));
  return stats;
}

}  // namespace emoprobe
