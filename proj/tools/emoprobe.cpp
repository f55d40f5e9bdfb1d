// emoprobe: multi-head probing of document embeddings for fine-grained emotions.

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "emoprobe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace emoprobe;

namespace {

struct Common {
  std::string corpus;
  std::string model;
  std::string out_dir = ".";
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

void write_out(const fs::path& dir, const std::string& name, std::string_view content) {
  fs::create_directories(dir);
  write_text_file(dir / name, content);
  std::cerr << "wrote " << (dir / name).string() << '\n';
}

struct ModelInputs {
  ProbingModel model;
  SplitCorpus corpus;
  EmbeddingMatrix embeddings;
  std::vector<std::size_t> labels;
};

ModelInputs load_inputs(const std::string& model_path, const std::string& corpus_path,
                        const std::string& embeddings_path) {
  ModelInputs in{load_model(model_path), load_corpus(corpus_path), read_embeddings(embeddings_path), {}};
  in.labels = aligned_labels(in.embeddings, in.corpus, in.model.labels);
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-head probing of emotion representations"};
  app.require_subcommand(1);

  // stats
  std::string stats_corpus;
  auto* stats = app.add_subcommand("stats", "Per-split document counts and token lengths");
  stats->add_option("--corpus", stats_corpus, "Corpus file (.tsv, .csv, .jsonl)")->required();

  // encode
  std::string enc_corpus, enc_out, enc_split = "all";
  std::size_t enc_dim = 768;
  std::uint64_t enc_seed = 0;
  auto* encode = app.add_subcommand("encode", "Hashed character 3-gram embeddings as EMB1");
  encode->add_option("--corpus", enc_corpus)->required();
  encode->add_option("--out", enc_out, "Output EMB1 file")->required();
  encode->add_option("--dim", enc_dim, "Embedding dimension")->capture_default_str();
  encode->add_option("--seed", enc_seed)->capture_default_str();
  encode->add_option("--split", enc_split, "all, trn, dev or tst")->capture_default_str();

  // train
  std::string tr_corpus, tr_train, tr_dev, tr_test, tr_out = "model.prb1", tr_metrics;
  std::string tr_preset = "64:32";
  ProbingConfig tr_cfg;
  std::size_t tr_runs = 1;
  std::uint64_t tr_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the probing network");
  train_cmd->add_option("--corpus", tr_corpus)->required();
  train_cmd->add_option("--train", tr_train, "Training EMB1")->required();
  train_cmd->add_option("--dev", tr_dev, "Development EMB1")->required();
  train_cmd->add_option("--test", tr_test, "Test EMB1");
  train_cmd->add_option("--preset", tr_preset, "Layer dims, e.g. 128:64:32")->capture_default_str();
  train_cmd->add_option("--heads", tr_cfg.heads)->capture_default_str();
  train_cmd->add_option("--lr", tr_cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch-size", tr_cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
  train_cmd->add_option("--runs", tr_runs)->capture_default_str();
  train_cmd->add_option("--seed", tr_seed)->capture_default_str();
  train_cmd->add_option("--out", tr_out)->capture_default_str();
  train_cmd->add_option("--metrics", tr_metrics, "Per-epoch metrics TSV");

  // eval
  std::string ev_model, ev_corpus, ev_emb, ev_confusion;
  auto* eval = app.add_subcommand("eval", "Accuracy and confusion counts of a trained model");
  eval->add_option("--model", ev_model)->required();
  eval->add_option("--corpus", ev_corpus)->required();
  eval->add_option("--embeddings", ev_emb)->required();
  eval->add_option("--confusion", ev_confusion, "Write the gold x predicted count matrix as TSV");

  // analyze-layers
  std::string la_model, la_corpus, la_dev, la_train, la_out = ".";
  double la_threshold = 2.0, la_reg = 1e-3;
  std::size_t la_iters = 5000;
  auto* analyze = app.add_subcommand("analyze-layers", "Layer probes, confusion drift and the emotion graph");
  analyze->add_option("--model", la_model)->required();
  analyze->add_option("--corpus", la_corpus)->required();
  analyze->add_option("--embeddings", la_dev, "Dev EMB1 the probes are tested on")->required();
  analyze->add_option("--train-embeddings", la_train, "EMB1 the probes are trained on (default: --embeddings)");
  analyze->add_option("--threshold", la_threshold)->capture_default_str();
  analyze->add_option("--reg", la_reg, "L2 penalty of the layer probes")->capture_default_str();
  analyze->add_option("--max-iterations", la_iters)->capture_default_str();
  analyze->add_option("--out-dir", la_out)->capture_default_str();

  // wheel
  std::string wh_model, wh_corpus, wh_dev, wh_basics, wh_order, wh_out = ".";
  WheelOptions wh_opts;
  auto* wheel_cmd = app.add_subcommand("wheel", "Combinatory basic-emotion pairs and the emotion wheel");
  wheel_cmd->add_option("--model", wh_model)->required();
  wheel_cmd->add_option("--corpus", wh_corpus)->required();
  wheel_cmd->add_option("--dev", wh_dev)->required();
  wheel_cmd->add_option("--min-cos", wh_opts.min_cos)->capture_default_str();
  wheel_cmd->add_option("--weight-step", wh_opts.grid.step)->capture_default_str();
  wheel_cmd->add_flag("--canonical", wh_opts.canonical, "Report the dominant basic first (w >= 0.5)");
  wheel_cmd->add_option("--basics", wh_basics, "Comma-separated list of 8 basic emotions");
  wheel_cmd->add_option("--order", wh_order, "Comma-separated placement order around the wheel");
  wheel_cmd->add_option("--out-dir", wh_out)->capture_default_str();

  // pad
  std::string pad_model, pad_corpus, pad_dev, pad_known, pad_out = ".";
  PadTrainingOptions pad_opts;
  auto* pad_cmd = app.add_subcommand("pad", "Predict PAD values for emotions missing from the known table");
  pad_cmd->add_option("--model", pad_model)->required();
  pad_cmd->add_option("--corpus", pad_corpus)->required();
  pad_cmd->add_option("--dev", pad_dev)->required();
  pad_cmd->add_option("--known", pad_known, "Known PAD TSV (default: bundled 22-emotion table)");
  pad_cmd->add_option("--dropout", pad_opts.dropout)->capture_default_str();
  pad_cmd->add_option("--lr", pad_opts.learning_rate)->capture_default_str();
  pad_cmd->add_option("--max-epochs", pad_opts.max_epochs)->capture_default_str();
  pad_cmd->add_option("--patience", pad_opts.patience)->capture_default_str();
  pad_cmd->add_option("--seed", pad_opts.seed)->capture_default_str();
  pad_cmd->add_option("--out-dir", pad_out)->capture_default_str();

  // full-report
  std::string fr_config, fr_out;
  auto* report = app.add_subcommand("full-report", "End-to-end run writing every artifact and a manifest");
  report->add_option("--config", fr_config, "Pipeline config (key = value)")->required();
  report->add_option("--out-dir", fr_out, "Overrides output_dir from the config");

  // synth
  std::string syn_out;
  std::size_t syn_trn = 40, syn_dev = 12, syn_tst = 12;
  std::uint64_t syn_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic 32-emotion corpus for smoke tests");
  synth->add_option("--out", syn_out)->required();
  synth->add_option("--trn-per-class", syn_trn)->capture_default_str();
  synth->add_option("--dev-per-class", syn_dev)->capture_default_str();
  synth->add_option("--tst-per-class", syn_tst)->capture_default_str();
  synth->add_option("--seed", syn_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*stats) {
      std::cout << stats_report(load_corpus(stats_corpus));
    } else if (*encode) {
      const SplitCorpus corpus = load_corpus(enc_corpus);
      std::vector<DocumentRecord> docs;
      for (Split s : {Split::trn, Split::dev, Split::tst}) {
        if (enc_split == "all" || enc_split == split_name(s)) {
          docs.insert(docs.end(), corpus.split(s).begin(), corpus.split(s).end());
        }
      }
      if (enc_split != "all" && enc_split != "trn" && enc_split != "dev" && enc_split != "tst") {
        throw CorpusError(fmt::format("unknown split '{}'", enc_split));
      }
      const auto m = hash_encode(docs, enc_dim, enc_seed);
      const auto bytes = encode_emb1(m);
      write_file_bytes(enc_out, bytes);
      std::cout << fmt::format("{}\t{} rows\t{} bytes\tcrc32 {:08x}\n", enc_out, m.rows(), bytes.size(),
                               crc32(std::span(bytes).first(bytes.size() - 4)));
    } else if (*train_cmd) {
      const SplitCorpus corpus = load_corpus(tr_corpus);
      const auto trn = read_embeddings(tr_train);
      const auto dev = read_embeddings(tr_dev);
      const auto trn_labels = aligned_labels(trn, corpus, corpus.labels);
      const auto dev_labels = aligned_labels(dev, corpus, corpus.labels);
      std::optional<EmbeddingMatrix> tst;
      std::vector<std::size_t> tst_labels;
      std::optional<LabeledSet> test_set;
      if (!tr_test.empty()) {
        tst = read_embeddings(tr_test);
        tst_labels = aligned_labels(*tst, corpus, corpus.labels);
        test_set.emplace(LabeledSet{*tst, tst_labels});
      }
      tr_cfg.layer_dims = parse_preset(tr_preset);
      tr_cfg.input_dim = trn.dim();
      tr_cfg.classes = corpus.labels.size();
      const auto summary =
          train_runs(tr_cfg, tr_runs, tr_seed, {trn, trn_labels}, {dev, dev_labels}, test_set);
      save_model(ProbingModel{summary.runs[summary.best_run].training.network, corpus.labels}, tr_out);
      if (!tr_metrics.empty()) write_text_file(tr_metrics, summary.metrics_tsv());
      std::cout << fmt::format("preset {} k={}\n", tr_preset, tr_cfg.heads) << summary.summary();
    } else if (*eval) {
      const auto in = load_inputs(ev_model, ev_corpus, ev_emb);
      const auto ev = evaluate(in.model.network, in.embeddings, in.labels);
      std::cout << fmt::format("accuracy\t{:.4f}\t({} documents)\n", ev.accuracy, in.labels.size());
      if (!ev_confusion.empty()) {
        write_text_file(ev_confusion, matrix_tsv(ev.confusion.cast<double>(), in.model.labels));
      }
    } else if (*analyze) {
      const auto in = load_inputs(la_model, la_corpus, la_dev);
      std::optional<EmbeddingMatrix> trn;
      std::vector<std::size_t> trn_labels;
      if (la_train.empty()) {
        std::cerr << "note: --train-embeddings not given; probes are trained on the dev embeddings\n";
      } else {
        trn = read_embeddings(la_train);
        trn_labels = aligned_labels(*trn, in.corpus, in.model.labels);
      }
      LayerAnalysisOptions opts;
      opts.threshold = la_threshold;
      opts.probe.reg = la_reg;
      opts.probe.max_iterations = la_iters;
      const LabeledSet dev_set{in.embeddings, in.labels};
      const LabeledSet train_set = trn ? LabeledSet{*trn, trn_labels} : dev_set;
      const auto result = analyze_layers(in.model.network, in.model.labels, train_set, dev_set, opts);
      const fs::path dir = la_out;
      for (std::size_t i = 0; i < result.tables.size(); ++i) {
        std::cout << fmt::format("layer {}\tprobe dev accuracy {:.4f}\n", i + 1, result.probe_accuracy[i]);
        write_out(dir, fmt::format("layer_confusion_l{}.tsv", i + 1),
                  matrix_tsv(result.tables[i].percent, in.model.labels));
      }
      for (std::size_t i = 0; i < result.drift_H.size(); ++i) {
        write_out(dir, fmt::format("layer_drift_L_{}{}.tsv", i + 1, i + 2), matrix_tsv(result.drift_L[i], in.model.labels));
        write_out(dir, fmt::format("layer_drift_H_{}{}.tsv", i + 1, i + 2), matrix_tsv(result.drift_H[i], in.model.labels));
      }
      write_out(dir, "emotion_graph.dot", result.graph.to_dot());
      std::cout << fmt::format("edges\t{}\n", result.graph.edges.size());
    } else if (*wheel_cmd) {
      const auto in = load_inputs(wh_model, wh_corpus, wh_dev);
      const auto embeddings = emotion_embeddings(in.model.network, in.embeddings, in.labels, in.model.labels);
      const auto basics = wh_basics.empty() ? default_basic_emotions() : split_list(wh_basics);
      const auto order = wh_order.empty() ? default_wheel_order() : split_list(wh_order);
      const Wheel wheel = build_wheel(embeddings, in.model.labels, basics, wh_opts);
      for (const auto& e : wheel.omitted) {
        std::cerr << fmt::format("omitted {} (cos {:.4f} < {})\n", e.complex, e.cos, wh_opts.min_cos);
      }
      for (const auto& w : wheel.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << wheel_tsv(wheel);
      write_out(wh_out, "wheel.tsv", wheel_tsv(wheel));
      write_out(wh_out, "wheel.svg", wheel_svg(wheel, order));
    } else if (*pad_cmd) {
      const auto in = load_inputs(pad_model, pad_corpus, pad_dev);
      const auto embeddings = emotion_embeddings(in.model.network, in.embeddings, in.labels, in.model.labels);
      const KnownPadTable known =
          load_known_pad(pad_known.empty() ? default_pad_path() : fs::path(pad_known), in.model.labels.names());
      const auto result = augment_pad(embeddings, known, pad_opts);
      if (result.table.predicted_count() > 0) {
        for (std::size_t d = 0; d < 3; ++d) {
          std::cerr << fmt::format("{}: {} epochs, training MSE {:.4f}\n", kPadDimensions[d],
                                   result.report.dimensions[d].epochs, result.report.dimensions[d].mse);
        }
      }
      std::cout << result.table.to_tsv();
      write_out(pad_out, "pad.tsv", result.table.to_tsv());
      write_out(pad_out, "pad_3d.tsv", result.table.to_3d_tsv());
      write_out(pad_out, "pad_pa.svg", result.table.scatter_svg());
    } else if (*report) {
      PipelineConfig cfg = load_pipeline_config(fr_config);
      if (!fr_out.empty()) cfg.output_dir = fr_out;
      const auto files = full_report(cfg, &std::cerr);
      for (const auto& f : files) std::cout << fmt::format("{}\t{}\t{:08x}\n", f.name, f.bytes, f.crc);
    } else if (*synth) {
      const auto corpus = synthetic_corpus(syn_trn, syn_dev, syn_tst, syn_seed);
      write_corpus(corpus, syn_out, format_from_path(syn_out));
      std::cout << fmt::format("{}\t{} documents\n", syn_out, corpus.total());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
