#include "emoprobe/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include <fmt/format.h>

#ifndef EMOPROBE_DATA_DIR
#define EMOPROBE_DATA_DIR "data"
#endif

namespace emoprobe {

std::vector<std::size_t> aligned_labels(const EmbeddingMatrix& embeddings,
                                        const SplitCorpus& corpus, const LabelSpace& labels) {
  std::map<std::string_view, const DocumentRecord*> by_id;
  for (const auto* part : {&corpus.trn, &corpus.dev, &corpus.tst}) {
    for (const auto& doc : *part) by_id.emplace(doc.id, &doc);
  }
  std::vector<std::size_t> out;
  out.reserve(embeddings.rows());
  for (const auto& id : embeddings.doc_ids()) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw CorpusError(fmt::format("embedding id '{}' is not in the corpus", id));
    if (!labels.contains(it->second->label)) {
      throw CorpusError(fmt::format("label '{}' of '{}' is unknown to the model", it->second->label, id));
    }
    out.push_back(labels.index_of(it->second->label));
  }
  return out;
}

std::string stats_report(const SplitCorpus& corpus) {
  std::string out = fmt::format("{:<5} {:>8} {:>18}\n", "split", "C", "L");
  for (Split s : {Split::trn, Split::dev, Split::tst}) {
    const auto& docs = corpus.split(s);
    if (docs.empty()) {
      out += fmt::format("{:<5} {:>8} {:>18}\n", split_name(s), 0, "-");
      continue;
    }
    const auto st = corpus_stats(docs);
    out += fmt::format("{:<5} {:>8} {:>18}\n", split_name(s), st.count,
                       fmt::format("{:.1f} (±{:.1f})", st.mean_tokens, st.std_tokens));
  }
  std::vector<DocumentRecord> all;
  for (Split s : {Split::trn, Split::dev, Split::tst}) {
    all.insert(all.end(), corpus.split(s).begin(), corpus.split(s).end());
  }
  const auto st = corpus_stats(all);
  out += fmt::format("{:<5} {:>8} {:>18}\n", "all", st.count,
                     fmt::format("{:.1f} (±{:.1f})", st.mean_tokens, st.std_tokens));
  return out;
}

std::string format_accuracy(double mean, double std) {
  return fmt::format("{:.1f} (±{:.1f})", 100.0 * mean, 100.0 * std);
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::string TrainingSummary::metrics_tsv() const {
  std::string out = "run\tseed\tepoch\ttrain_loss\tdev_accuracy\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const auto& m : runs[r].training.history) {
      out += fmt::format("{}\t{}\t{}\t{:.6f}\t{}\n", r, runs[r].seed, m.epoch, m.train_loss,
                         m.dev_accuracy ? fmt::format("{:.4f}", *m.dev_accuracy) : "-");
    }
  }
  return out;
}

std::string TrainingSummary::summary() const {
  std::string out = fmt::format("runs: {}\ndev accuracy: {}\n", runs.size(), format_accuracy(dev_mean, dev_std));
  if (test_mean) out += fmt::format("test accuracy: {}\n", format_accuracy(*test_mean, *test_std));
  out += fmt::format("best run: {} (seed {}, epoch {})\n", best_run, runs[best_run].seed,
                     runs[best_run].training.best_epoch);
  return out;
}

TrainingSummary train_runs(const ProbingConfig& base, std::size_t runs, std::uint64_t seed,
                           const LabeledSet& train_set, const LabeledSet& dev_set,
                           const std::optional<LabeledSet>& test_set) {
  if (runs == 0) throw ModelError("runs must be at least 1");
  TrainingSummary summary;
  std::vector<double> dev_acc, test_acc;
  for (std::size_t r = 0; r < runs; ++r) {
    ProbingConfig cfg = base;
    cfg.seed = seed + r;
    RunResult run{cfg.seed, train(init_network(cfg), train_set, dev_set), 0.0, std::nullopt};
    run.dev_accuracy = evaluate(run.training.network, dev_set.embeddings, dev_set.labels).accuracy;
    if (test_set && test_set->embeddings.rows() > 0) {
      run.test_accuracy =
          evaluate(run.training.network, test_set->embeddings, test_set->labels).accuracy;
      test_acc.push_back(*run.test_accuracy);
    }
    dev_acc.push_back(run.dev_accuracy);
    if (r == 0 || run.dev_accuracy > summary.runs[summary.best_run].dev_accuracy) summary.best_run = r;
    summary.runs.push_back(std::move(run));
  }
  std::tie(summary.dev_mean, summary.dev_std) = mean_std(dev_acc);
  if (!test_acc.empty()) {
    const auto [m, s] = mean_std(test_acc);
    summary.test_mean = m;
    summary.test_std = s;
  }
  return summary;
}

EmbeddingMatrix resolve_embeddings(const std::filesystem::path& path, const SplitCorpus& corpus,
                                   Split split, std::size_t dim, std::uint64_t seed) {
  if (!path.empty()) return read_embeddings(path);
  return hash_encode(corpus.split(split), dim, seed);
}

std::filesystem::path default_pad_path() {
  return std::filesystem::path(EMOPROBE_DATA_DIR) / "pad_known.tsv";
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw FormatError(FormatErrc::io, fmt::format("write failed for '{}'", path.string()));
}

std::vector<ReportFile> full_report(const PipelineConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is not set");
  const auto note = [log](const std::string& msg) {
    if (log) *log << msg << '\n';
  };
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<std::string> written;
  const auto emit_text = [&](const std::string& name, std::string_view content) {
    write_text_file(cfg.output_dir / name, content);
    written.push_back(name);
  };

  const SplitCorpus corpus = load_corpus(cfg.corpus);
  const LabelSpace& labels = corpus.labels;
  note(fmt::format("corpus: {} documents, {} labels", corpus.total(), labels.size()));

  const auto trn = resolve_embeddings(cfg.trn_embeddings, corpus, Split::trn, cfg.encode_dim, cfg.seed);
  const auto dev = resolve_embeddings(cfg.dev_embeddings, corpus, Split::dev, cfg.encode_dim, cfg.seed);
  const auto tst = resolve_embeddings(cfg.tst_embeddings, corpus, Split::tst, cfg.encode_dim, cfg.seed);
  const auto trn_labels = aligned_labels(trn, corpus, labels);
  const auto dev_labels = aligned_labels(dev, corpus, labels);
  const auto tst_labels = aligned_labels(tst, corpus, labels);

  ProbingConfig pc = cfg.probing;
  pc.input_dim = trn.dim();
  pc.classes = labels.size();
  std::optional<LabeledSet> test_set;
  if (tst.rows() > 0) test_set.emplace(LabeledSet{tst, tst_labels});
  const TrainingSummary summary =
      train_runs(pc, cfg.runs, cfg.seed, {trn, trn_labels}, {dev, dev_labels}, test_set);
  note(summary.summary());

  // Downstream analysis uses the network exactly as stored on disk.
  const auto model_bytes =
      encode_prb1(ProbingModel{summary.runs[summary.best_run].training.network, labels});
  write_file_bytes(cfg.output_dir / "model.prb1", model_bytes);
  written.push_back("model.prb1");
  const ProbingModel model = decode_prb1(model_bytes);
  const ProbingNetwork& net = model.network;
  emit_text("train_metrics.tsv", summary.metrics_tsv());
  emit_text("train_summary.txt", summary.summary());

  LayerAnalysisOptions la;
  la.threshold = cfg.threshold;
  la.probe.reg = cfg.probe_reg;
  la.probe.max_iterations = cfg.probe_max_iterations;
  const LayerAnalysis analysis = analyze_layers(net, labels, {trn, trn_labels}, {dev, dev_labels}, la);
  std::string probes = "layer\tdev_accuracy\titerations\tgradient_inf_norm\tconverged\n";
  for (std::size_t i = 0; i < analysis.tables.size(); ++i) {
    const auto& rep = analysis.probe_reports[i];
    probes += fmt::format("{}\t{:.4f}\t{}\t{:.3e}\t{}\n", i + 1, analysis.probe_accuracy[i],
                          rep.iterations, rep.final_gradient_norm, rep.converged);
    emit_text(fmt::format("layer_confusion_l{}.tsv", i + 1), matrix_tsv(analysis.tables[i].percent, labels));
  }
  for (std::size_t i = 0; i < analysis.drift_H.size(); ++i) {
    emit_text(fmt::format("layer_drift_L_{}{}.tsv", i + 1, i + 2), matrix_tsv(analysis.drift_L[i], labels));
    emit_text(fmt::format("layer_drift_H_{}{}.tsv", i + 1, i + 2), matrix_tsv(analysis.drift_H[i], labels));
  }
  emit_text("layer_probes.tsv", probes);
  emit_text("emotion_graph.dot", analysis.graph.to_dot());
  note(fmt::format("emotion graph: {} edges", analysis.graph.edges.size()));

  const auto embeddings = emotion_embeddings(net, dev, dev_labels, labels);
  WheelOptions wo;
  wo.min_cos = cfg.min_cos;
  wo.grid.step = cfg.weight_step;
  wo.canonical = cfg.canonical_wheel;
  const auto basics = cfg.basics.empty() ? default_basic_emotions() : cfg.basics;
  const auto order = cfg.wheel_order.empty() ? default_wheel_order() : cfg.wheel_order;
  const Wheel wheel = build_wheel(embeddings, labels, basics, wo);
  for (const auto& e : wheel.omitted) {
    note(fmt::format("wheel: omitted {} (cos {:.4f} < {})", e.complex, e.cos, cfg.min_cos));
  }
  for (const auto& w : wheel.warnings) note("wheel: " + w);
  emit_text("wheel.tsv", wheel_tsv(wheel));
  emit_text("wheel.svg", wheel_svg(wheel, order));

  const auto pad_path = cfg.pad_known.empty() ? default_pad_path() : cfg.pad_known;
  const KnownPadTable known = load_known_pad(pad_path, labels.names());
  PadTrainingOptions po = cfg.pad;
  po.seed = cfg.seed;
  const PadAugmentation pad = augment_pad(embeddings, known, po);
  std::string pad_fit = "dimension\tepochs\tmse\n";
  if (pad.table.predicted_count() > 0) {
    for (std::size_t d = 0; d < 3; ++d) {
      pad_fit += fmt::format("{}\t{}\t{:.6f}\n", kPadDimensions[d], pad.report.dimensions[d].epochs,
                             pad.report.dimensions[d].mse);
    }
  }
  emit_text("pad.tsv", pad.table.to_tsv());
  emit_text("pad_3d.tsv", pad.table.to_3d_tsv());
  emit_text("pad_pa.svg", pad.table.scatter_svg());
  emit_text("pad_training.tsv", pad_fit);
  note(fmt::format("pad: {} known, {} predicted", pad.table.rows.size() - pad.table.predicted_count(),
                   pad.table.predicted_count()));

  emit_text("config.toml", cfg.to_text());

  std::vector<ReportFile> files;
  std::string manifest = "file\tbytes\tcrc32\n";
  for (const auto& name : written) {
    const auto bytes = read_file_bytes(cfg.output_dir / name);
    ReportFile f{name, bytes.size(), crc32(bytes)};
    manifest += fmt::format("{}\t{}\t{:08x}\n", f.name, f.bytes, f.crc);
    files.push_back(std::move(f));
  }
  write_text_file(cfg.output_dir / "MANIFEST.tsv", manifest);
  return files;
}

SplitCorpus synthetic_corpus(std::size_t trn_per_class, std::size_t dev_per_class,
                             std::size_t tst_per_class, std::uint64_t seed) {
  const auto emotions = empathetic_dialogue_emotions();
  std::mt19937_64 rng(seed);
  static constexpr std::array<std::string_view, 16> kSyllables{
      "ka", "lo", "mi", "ra", "tu", "ve", "so", "ni", "pe", "da", "gu", "xo", "be", "fi", "ha", "zu"};
  static constexpr std::array<std::string_view, 12> kFiller{
      "i", "was", "the", "when", "my", "at", "and", "it", "day", "a", "so", "that"};
  std::uniform_int_distribution<std::size_t> syl(0, kSyllables.size() - 1);
  std::vector<std::vector<std::string>> vocab(emotions.size());
  for (std::size_t e = 0; e < emotions.size(); ++e) {
    vocab[e].push_back(emotions[e]);
    for (int w = 0; w < 5; ++w) {
      std::string word;
      for (int s = 0; s < 3; ++s) word += kSyllables[syl(rng)];
      vocab[e].push_back(std::move(word));
    }
  }
  SplitCorpus corpus;
  std::size_t next_id = 0;
  const auto make_doc = [&](std::size_t e) {
    std::uniform_int_distribution<int> len(6, 14);
    std::uniform_int_distribution<std::size_t> pick_own(0, vocab[e].size() - 1);
    std::uniform_int_distribution<std::size_t> pick_filler(0, kFiller.size() - 1);
    std::bernoulli_distribution own(0.5);
    std::string text;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      if (i) text += ' ';
      text += own(rng) ? vocab[e][pick_own(rng)] : std::string(kFiller[pick_filler(rng)]);
    }
    return DocumentRecord{fmt::format("syn{:05d}", next_id++), std::move(text), emotions[e]};
  };
  for (auto [split, per_class] : {std::pair{Split::trn, trn_per_class}, std::pair{Split::dev, dev_per_class},
                                  std::pair{Split::tst, tst_per_class}}) {
    for (std::size_t e = 0; e < emotions.size(); ++e) {
      for (std::size_t i = 0; i < per_class; ++i) corpus.split(split).push_back(make_doc(e));
    }
  }
  corpus.labels = LabelSpace::sorted(emotions);
  return corpus;
}

}  // namespace emoprobe
