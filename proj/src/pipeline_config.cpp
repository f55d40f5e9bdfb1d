#include "emoprobe/pipeline_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace emoprobe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct Value {
  std::string text;
  bool quoted = false;
  std::size_t line = 0;
  std::string_view key;

  [[noreturn]] void fail(std::string_view expected) const {
    throw ConfigError(fmt::format("line {}: '{}' expects {}, got '{}'", line, key, expected, text));
  }

  std::string str() const { return text; }

  double real() const {
    if (quoted) fail("a number");
    double v = 0.0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) fail("a number");
    return v;
  }

  std::uint64_t u64() const {
    if (quoted) fail("an integer");
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || p != text.data() + text.size()) fail("a non-negative integer");
    return v;
  }

  bool boolean() const {
    if (!quoted && text == "true") return true;
    if (!quoted && text == "false") return false;
    fail("true or false");
  }

  std::vector<std::string> list() const {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find(',', start);
      if (end == std::string::npos) end = text.size();
      const auto item = trim(std::string_view(text).substr(start, end - start));
      if (!item.empty()) out.emplace_back(item);
      start = end + 1;
    }
    return out;
  }
};

Value parse_value(std::string_view raw, std::size_t line, std::string_view key) {
  Value v;
  v.line = line;
  v.key = key;
  raw = trim(raw);
  if (!raw.empty() && raw.front() == '"') {
    const std::size_t close = raw.find('"', 1);
    if (close == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: unterminated string", line));
    }
    const auto rest = trim(raw.substr(close + 1));
    if (!rest.empty() && rest.front() != '#') {
      throw ConfigError(fmt::format("line {}: trailing characters after string", line));
    }
    v.text = std::string(raw.substr(1, close - 1));
    v.quoted = true;
  } else {
    const std::size_t hash = raw.find('#');
    v.text = std::string(trim(raw.substr(0, hash)));
  }
  return v;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

std::string quote(std::string_view s) {
  if (s.find('"') != std::string_view::npos) {
    throw ConfigError(fmt::format("value '{}' cannot contain a double quote", s));
  }
  return fmt::format("\"{}\"", s);
}

}  // namespace

void PipelineConfig::validate() const {
  if (runs == 0) throw ConfigError("runs must be at least 1");
  if (encode_dim < 8) throw ConfigError("encode_dim must be at least 8");
  if (probing.layer_dims.empty()) throw ConfigError("preset must list at least one layer");
  if (probing.heads == 0 || probing.batch_size == 0) throw ConfigError("heads and batch_size must be positive");
  if (!(probing.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(pad.dropout >= 0.0 && pad.dropout < 1.0)) throw ConfigError("pad_dropout must be in [0, 1)");
}

std::string PipelineConfig::to_text() const {
  std::string out;
  const auto put = [&out](std::string_view key, const std::string& value) {
    out += fmt::format("{} = {}\n", key, value);
  };
  put("corpus", quote(corpus.string()));
  put("trn_embeddings", quote(trn_embeddings.string()));
  put("dev_embeddings", quote(dev_embeddings.string()));
  put("tst_embeddings", quote(tst_embeddings.string()));
  put("pad_known", quote(pad_known.string()));
  put("encode_dim", std::to_string(encode_dim));
  put("preset", quote(preset_name(probing.layer_dims)));
  put("heads", std::to_string(probing.heads));
  put("learning_rate", fmt::format("{}", probing.learning_rate));
  put("batch_size", std::to_string(probing.batch_size));
  put("epochs", std::to_string(probing.epochs));
  put("max_doc_length", std::to_string(probing.max_doc_length));
  put("runs", std::to_string(runs));
  put("seed", std::to_string(seed));
  put("threshold", fmt::format("{}", threshold));
  put("probe_reg", fmt::format("{}", probe_reg));
  put("probe_max_iterations", std::to_string(probe_max_iterations));
  put("min_cos", fmt::format("{}", min_cos));
  put("weight_step", fmt::format("{}", weight_step));
  put("canonical_wheel", canonical_wheel ? "true" : "false");
  put("basics", quote(join(basics)));
  put("wheel_order", quote(join(wheel_order)));
  put("pad_hidden", std::to_string(pad.hidden));
  put("pad_dropout", fmt::format("{}", pad.dropout));
  put("pad_learning_rate", fmt::format("{}", pad.learning_rate));
  put("pad_max_epochs", std::to_string(pad.max_epochs));
  put("pad_early_stopping", pad.early_stopping ? "true" : "false");
  put("pad_patience", std::to_string(pad.patience));
  put("pad_min_delta", fmt::format("{}", pad.min_delta));
  return out;
}

PipelineConfig default_report_config() {
  PipelineConfig cfg;
  cfg.probing.layer_dims = {128, 64, 32};
  cfg.probing.heads = 8;
  return cfg;
}

PipelineConfig parse_pipeline_config(std::string_view text, PipelineConfig cfg) {
  using Setter = std::function<void(PipelineConfig&, const Value&)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"corpus", [](auto& c, const Value& v) { c.corpus = v.str(); }},
      {"trn_embeddings", [](auto& c, const Value& v) { c.trn_embeddings = v.str(); }},
      {"dev_embeddings", [](auto& c, const Value& v) { c.dev_embeddings = v.str(); }},
      {"tst_embeddings", [](auto& c, const Value& v) { c.tst_embeddings = v.str(); }},
      {"output_dir", [](auto& c, const Value& v) { c.output_dir = v.str(); }},
      {"pad_known", [](auto& c, const Value& v) { c.pad_known = v.str(); }},
      {"encode_dim", [](auto& c, const Value& v) { c.encode_dim = v.u64(); }},
      {"preset", [](auto& c, const Value& v) {
         try {
           c.probing.layer_dims = parse_preset(v.str());
         } catch (const ModelError& e) {
           throw ConfigError(fmt::format("line {}: {}", v.line, e.what()));
         }
       }},
      {"heads", [](auto& c, const Value& v) { c.probing.heads = v.u64(); }},
      {"learning_rate", [](auto& c, const Value& v) { c.probing.learning_rate = v.real(); }},
      {"batch_size", [](auto& c, const Value& v) { c.probing.batch_size = v.u64(); }},
      {"epochs", [](auto& c, const Value& v) { c.probing.epochs = v.u64(); }},
      {"max_doc_length", [](auto& c, const Value& v) { c.probing.max_doc_length = v.u64(); }},
      {"runs", [](auto& c, const Value& v) { c.runs = v.u64(); }},
      {"seed", [](auto& c, const Value& v) { c.seed = v.u64(); }},
      {"threshold", [](auto& c, const Value& v) { c.threshold = v.real(); }},
      {"probe_reg", [](auto& c, const Value& v) { c.probe_reg = v.real(); }},
      {"probe_max_iterations", [](auto& c, const Value& v) { c.probe_max_iterations = v.u64(); }},
      {"min_cos", [](auto& c, const Value& v) { c.min_cos = v.real(); }},
      {"weight_step", [](auto& c, const Value& v) { c.weight_step = v.real(); }},
      {"canonical_wheel", [](auto& c, const Value& v) { c.canonical_wheel = v.boolean(); }},
      {"basics", [](auto& c, const Value& v) { c.basics = v.list(); }},
      {"wheel_order", [](auto& c, const Value& v) { c.wheel_order = v.list(); }},
      {"pad_hidden", [](auto& c, const Value& v) { c.pad.hidden = v.u64(); }},
      {"pad_dropout", [](auto& c, const Value& v) { c.pad.dropout = v.real(); }},
      {"pad_learning_rate", [](auto& c, const Value& v) { c.pad.learning_rate = v.real(); }},
      {"pad_max_epochs", [](auto& c, const Value& v) { c.pad.max_epochs = v.u64(); }},
      {"pad_early_stopping", [](auto& c, const Value& v) { c.pad.early_stopping = v.boolean(); }},
      {"pad_patience", [](auto& c, const Value& v) { c.pad.patience = v.u64(); }},
      {"pad_min_delta", [](auto& c, const Value& v) { c.pad.min_delta = v.real(); }},
  };

  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    }
    const std::string_view key = trim(line.substr(0, eq));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
    it->second(cfg, parse_value(line.substr(eq + 1), line_no, key));
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  PipelineConfig cfg = parse_pipeline_config(buf.str());
  const auto base = path.parent_path();
  for (auto* p : {&cfg.corpus, &cfg.trn_embeddings, &cfg.dev_embeddings, &cfg.tst_embeddings,
                  &cfg.output_dir, &cfg.pad_known}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return cfg;
}

}  // namespace emoprobe
