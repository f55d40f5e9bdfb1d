#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emoprobe {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { trn, dev, tst };

std::string_view split_name(Split s);
/// Accepts trn/train, dev/valid/validation, tst/test (case-insensitive).
bool parse_split(std::string_view tag, Split& out);

struct DocumentRecord {
  std::string id;
  std::string text;
  std::string label;
};

/// Ordered set of emotion names. Lexicographic unless built with explicit order.
class LabelSpace {
 public:
  LabelSpace() = default;
  static LabelSpace sorted(std::vector<std::string> names);
  static LabelSpace ordered(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  bool operator==(const LabelSpace& other) const { return names_ == other.names_; }

 private:
  explicit LabelSpace(std::vector<std::string> names);
  std::vector<std::string> names_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct SplitCorpus {
  std::vector<DocumentRecord> trn, dev, tst;
  LabelSpace labels;

  std::vector<DocumentRecord>& split(Split s);
  const std::vector<DocumentRecord>& split(Split s) const;
  std::size_t total() const { return trn.size() + dev.size() + tst.size(); }
  /// Looks up a record by id across all splits; nullptr if absent.
  const DocumentRecord* find(std::string_view id) const;
};

enum class CorpusFormat { csv, tsv, jsonl };

std::string_view format_name(CorpusFormat f);
/// Infers the format from the file extension (.csv, .tsv, .jsonl/.json).
CorpusFormat format_from_path(const std::filesystem::path& path);

/// Lowercases ASCII letters and trims surrounding whitespace.
std::string normalize_label(std::string_view raw);

SplitCorpus parse_corpus(std::string_view content, CorpusFormat format);
SplitCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
SplitCorpus load_corpus(const std::filesystem::path& path);

std::string format_corpus(const SplitCorpus& corpus, CorpusFormat format);
void write_corpus(const SplitCorpus& corpus, const std::filesystem::path& path,
                  CorpusFormat format);

struct CorpusStats {
  std::size_t count = 0;
  double mean_tokens = 0.0;
  double std_tokens = 0.0;  // population
};

/// Number of tokens separated by Unicode whitespace in UTF-8 text.
std::size_t count_tokens(std::string_view text);
CorpusStats corpus_stats(std::span<const DocumentRecord> split);

}  // namespace emoprobe
