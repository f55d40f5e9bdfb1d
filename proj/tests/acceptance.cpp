// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit status is
// the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "emoprobe/embedding_io.hpp"
#include "emoprobe/emotion_geometry.hpp"
#include "emoprobe/layer_analysis.hpp"
#include "emoprobe/model_io.hpp"
#include "emoprobe/pad_regression.hpp"
#include "emoprobe/pipeline.hpp"
#include "emoprobe/probing_model.hpp"

using namespace emoprobe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void run(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0 && secs >= budget_s) {
    out.ok = false;
    out.detail += fmt::format("; over the {:.0f} s budget", budget_s);
  }
  if (!out.ok) ++failures;
  fmt::print("[{}] {:<28} {:7.2f} s  {}\n", out.ok ? "PASS" : "FAIL", name, secs, out.detail);
  std::fflush(stdout);
}

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = N(rng);
  return v;
}

Eigen::VectorXd eigen_normal(std::mt19937_64& rng, std::size_t n) {
  const auto v = normal_vector(rng, n);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n));
}

// --- gradient check -------------------------------------------------------

Outcome gradient_correctness() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> depth(1, 3), width(2, 6), heads(1, 3), input(3, 8),
      classes(2, 5);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int c = 0; c < 20; ++c) {
    ProbingConfig cfg;
    cfg.layer_dims.clear();
    const std::size_t l = depth(rng);
    for (std::size_t i = 0; i < l; ++i) cfg.layer_dims.push_back(width(rng));
    cfg.heads = heads(rng);
    cfg.input_dim = input(rng);
    cfg.classes = classes(rng);
    cfg.seed = rng();
    const ProbingNetwork net = init_network(cfg);
    const auto e0 = normal_vector(rng, cfg.input_dim);
    const std::size_t label = rng() % cfg.classes;
    const auto report = grad_check(net, e0, label, 1e-5);
    worst = std::max(worst, report.max_relative_error);
    checked += report.parameters_checked;
  }
  return {worst <= 1e-4, fmt::format("max relative error {:.3e} over {} parameters in 20 configs",
                                     worst, checked)};
}

// --- synthetic classification ----------------------------------------------

struct ClusterData {
  EmbeddingMatrix trn, dev;
  std::vector<std::size_t> trn_labels, dev_labels;
  double min_center_distance = 0.0;
};

// 32 centers drawn N(0, 1) per coordinate in R^768 with unit-variance noise, so
// neighbouring centers sit about sqrt(2 * 768) ~ 39 sigma apart.
ClusterData gaussian_clusters(std::size_t per_class, std::uint64_t seed) {
  constexpr std::size_t kClasses = 32, kDim = 768;
  constexpr double kSigma = 1.0;
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> centers;
  for (std::size_t c = 0; c < kClasses; ++c) centers.push_back(eigen_normal(rng, kDim));
  ClusterData out;
  out.min_center_distance = INFINITY;
  for (std::size_t a = 0; a < kClasses; ++a) {
    for (std::size_t b = a + 1; b < kClasses; ++b) {
      out.min_center_distance = std::min(out.min_center_distance, (centers[a] - centers[b]).norm() / kSigma);
    }
  }
  std::normal_distribution<double> noise(0.0, kSigma);
  const auto draw = [&](const char* prefix, std::vector<std::size_t>& labels) {
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t c = 0; c < kClasses; ++c) {
        ids.push_back(fmt::format("{}{:02}_{:03}", prefix, c, i));
        labels.push_back(c);
        for (std::size_t d = 0; d < kDim; ++d) {
          data.push_back(static_cast<float>(centers[c][static_cast<Eigen::Index>(d)] + noise(rng)));
        }
      }
    }
    return EmbeddingMatrix(std::move(ids), kDim, std::move(data));
  };
  out.trn = draw("t", out.trn_labels);
  out.dev = draw("d", out.dev_labels);
  return out;
}

Outcome synthetic_classification() {
  const ClusterData data = gaussian_clusters(50, 7);
  if (data.min_center_distance < 6.0) {
    return {false, fmt::format("cluster separation {:.1f} sigma < 6", data.min_center_distance)};
  }
  ProbingConfig cfg;
  cfg.layer_dims = {64, 32};
  cfg.heads = 8;
  cfg.input_dim = 768;
  cfg.classes = 32;
  cfg.epochs = 50;
  cfg.seed = 1;
  const auto result = train(init_network(cfg), {data.trn, data.trn_labels},
                            LabeledSet{data.dev, data.dev_labels});
  const double acc = evaluate(result.network, data.dev, data.dev_labels).accuracy;
  std::size_t first = 0;
  for (const auto& m : result.history) {
    if (m.dev_accuracy && *m.dev_accuracy >= 0.95) {
      first = m.epoch;
      break;
    }
  }
  return {acc >= 0.95,
          fmt::format("dev accuracy {:.4f} (>= 0.95 first at epoch {}), separation {:.1f} sigma, lr {}",
                      acc, first, data.min_center_distance, cfg.learning_rate)};
}

// --- wheel search oracle -----------------------------------------------------

struct OracleHit {
  int i = -1, j = -1, k = 0;
  double cos = 0.0;
};

// Plain loops over std::vector; shares no code with the library.
OracleHit oracle_pair(const std::vector<std::vector<double>>& basics, const std::vector<double>& c) {
  const auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  OracleHit best;
  bool have = false;
  const double cn = norm(c);
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) {
      for (int k = 1; k <= 9; ++k) {
        const double w = k / 10.0;
        std::vector<double> mix(c.size());
        for (std::size_t d = 0; d < c.size(); ++d) mix[d] = w * basics[i][d] + (1.0 - w) * basics[j][d];
        const double mn = norm(mix);
        if (mn < 1e-12) continue;
        double dot = 0.0;
        for (std::size_t d = 0; d < c.size(); ++d) dot += mix[d] * c[d];
        const double cos = dot / (mn * cn);
        if (!have || cos > best.cos) {
          have = true;
          best = {i, j, k, cos};
        }
      }
    }
  }
  return best;
}

Outcome wheel_oracle() {
  std::mt19937_64 rng(99);
  int matched = 0, ties = 0, degenerate = 0;
  std::string mismatch;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t dim = 4 + rng() % 13;
    std::vector<std::vector<double>> b(8);
    for (auto& v : b) v = normal_vector(rng, dim);
    auto c = normal_vector(rng, dim);
    // Planted exact ties (duplicated basics, or a complex that is a member of the
    // search family) and exactly-zero blends.
    if (inst % 5 == 1) {
      b[5] = b[2];
      b[6] = b[2];
      ++ties;
    } else if (inst % 5 == 2) {
      for (std::size_t d = 0; d < dim; ++d) c[d] = 0.5 * b[1][d] + 0.5 * b[4][d];
      b[7] = b[4];
      ++ties;
    } else if (inst % 5 == 3) {
      // w = 0.5 blend of b0 and -b0 is the zero vector and must be skipped.
      for (std::size_t d = 0; d < dim; ++d) b[3][d] = -b[0][d];
      ++degenerate;
    }
    std::vector<EmotionEmbedding> members;
    for (int i = 0; i < 8; ++i) {
      members.push_back({fmt::format("b{}", i),
                         Eigen::Map<const Eigen::VectorXd>(b[i].data(), static_cast<Eigen::Index>(dim)), 1});
    }
    const EmotionEmbedding ce{"c", Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(dim)), 1};
    const WheelEntry got = find_basic_pair(ce, BasicSet(members));
    const OracleHit want = oracle_pair(b, c);
    const bool same = got.basic_i == fmt::format("b{}", want.i) && got.basic_j == fmt::format("b{}", want.j) &&
                      got.w == want.k / 10.0 && std::abs(got.cos - want.cos) <= 1e-12;
    if (same) {
      ++matched;
    } else if (mismatch.empty()) {
      mismatch = fmt::format("; instance {}: got ({},{},{}) want (b{},b{},{})", inst, got.basic_i,
                             got.basic_j, got.w, want.i, want.j, want.k / 10.0);
    }
  }
  return {matched == 50, fmt::format("{}/50 instances match ({} with ties, {} with zero blends){}", matched,
                                     ties, degenerate, mismatch)};
}

// --- metric algebra -----------------------------------------------------------

Outcome metric_algebra() {
  std::mt19937_64 rng(5);
  double worst_anti = 0.0, worst_diag = 0.0, worst_row = 0.0, worst_lsum = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng() % 31;
    const std::size_t n = m * (1 + rng() % 20);
    std::vector<std::size_t> gold(n), p1(n), p2(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = i % m;  // every class present
      p1[i] = rng() % 3 == 0 ? gold[i] : rng() % m;
      p2[i] = rng() % 2 == 0 ? gold[i] : rng() % m;
    }
    const auto lo = confusion_percent(p1, gold, m, 1);
    const auto hi = confusion_percent(p2, gold, m, 2);
    for (const auto* t : {&lo, &hi}) {
      for (Eigen::Index g = 0; g < t->percent.rows(); ++g) {
        worst_row = std::max(worst_row, std::abs(t->percent.row(g).sum() - 100.0));
      }
    }
    const Eigen::MatrixXd L = drift_L_matrix(lo, hi);
    const Eigen::MatrixXd H = drift_H_matrix(lo, hi);
    for (std::size_t s = 0; s < m; ++s) {
      double lsum = 0.0;
      for (std::size_t t = 0; t < m; ++t) {
        worst_anti = std::max(worst_anti, std::abs(drift_H(lo, hi, s, t) + drift_H(lo, hi, t, s)));
        worst_anti = std::max(worst_anti, std::abs(H(s, t) + H(t, s)));
        lsum += drift_L(lo, hi, s, t);
        if (L(s, t) != drift_L(lo, hi, s, t)) worst_lsum = INFINITY;
      }
      worst_diag = std::max(worst_diag, std::abs(drift_H(lo, hi, s, s)));
      worst_lsum = std::max(worst_lsum, std::abs(lsum));
    }
  }
  const bool ok = worst_anti <= 1e-9 && worst_diag == 0.0 && worst_row <= 1e-6 && worst_lsum <= 1e-6;
  return {ok, fmt::format("50 tables: |H+H^T| {:.1e}, |H(s,s)| {:.1e}, |row-100| {:.1e}, |sum L| {:.1e}",
                          worst_anti, worst_diag, worst_row, worst_lsum)};
}

// --- mean emotion embedding ------------------------------------------------------

Eigen::VectorXd kahan_mean(const Eigen::MatrixXd& rows) {
  Eigen::VectorXd out(rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    double sum = 0.0, comp = 0.0;
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      const double y = rows(r, c) - comp;
      const double t = sum + y;
      comp = (t - sum) - y;
      sum = t;
    }
    out[c] = sum / static_cast<double>(rows.rows());
  }
  return out;
}

Outcome mean_embedding_properties() {
  std::mt19937_64 rng(11);
  ProbingConfig cfg;
  cfg.layer_dims = {16, 8};
  cfg.heads = 4;
  cfg.input_dim = 32;
  cfg.classes = 4;
  cfg.seed = 3;
  const ProbingNetwork net = init_network(cfg);

  std::vector<std::string> ids;
  std::vector<float> data;
  const std::size_t n = 40;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(fmt::format("doc{}", i));
    for (double x : normal_vector(rng, cfg.input_dim)) data.push_back(static_cast<float>(x));
  }
  const EmbeddingMatrix docs(ids, cfg.input_dim, data);

  // One document: the mean is that document's g exactly.
  double single = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t row[] = {i};
    const auto e = mean_embedding("x", net, docs.select(row));
    const auto trace = forward(net, docs.row(i));
    single = std::max(single, (e.r - trace.pooled).cwiseAbs().maxCoeff());
  }

  // Shuffled document order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto base = mean_embedding("x", net, docs);
  double perm = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::shuffle(order.begin(), order.end(), rng);
    perm = std::max(perm, (mean_embedding("x", net, docs.select(order)).r - base.r).cwiseAbs().maxCoeff());
  }

  // Compensated-sum oracle over the pooled rows.
  const Eigen::MatrixXd g = pooled_features(net, docs);
  const double kahan = (kahan_mean(g) - base.r).cwiseAbs().maxCoeff();

  const bool ok = single == 0.0 && perm <= 1e-12 && kahan <= 1e-6;
  return {ok, fmt::format("single-doc diff {:.1e}, permutation diff {:.1e}, compensated-sum diff {:.1e}",
                          single, perm, kahan)};
}

// --- PAD regressors ----------------------------------------------------------------

Outcome pad_interpolation() {
  const KnownPadTable known = load_known_pad(default_pad_path());
  if (known.size() != 22) return {false, fmt::format("expected 22 known emotions, got {}", known.size())};
  std::mt19937_64 rng(17);
  std::vector<EmotionEmbedding> embeddings;
  for (const auto& [name, pad] : known) {
    Eigen::VectorXd r = eigen_normal(rng, 64);
    embeddings.push_back({name, r.normalized(), 1});
  }

  PadTrainingOptions overfit;
  overfit.dropout = 0.0;
  overfit.seed = 1;
  PadTrainingReport a;
  train_pad_regressors(embeddings, known, overfit, &a);

  PadTrainingOptions paper;  // dropout 0.3, early stopping, patience 50
  paper.seed = 1;
  PadTrainingReport b;
  train_pad_regressors(embeddings, known, paper, &b);

  bool ok = true;
  std::string detail = "no dropout:";
  for (const auto& r : a.dimensions) {
    ok = ok && r.mse <= 1e-3 && r.epochs <= 5000;
    detail += fmt::format(" {:.2e}/{}ep", r.mse, r.epochs);
  }
  detail += "; dropout 0.3 + early stop:";
  for (const auto& r : b.dimensions) {
    ok = ok && r.mse >= 1e-4 && r.mse <= 0.05;
    detail += fmt::format(" {:.2e}/{}ep", r.mse, r.epochs);
  }
  return {ok, detail};
}

// --- file formats -------------------------------------------------------------------

Outcome file_formats() {
  std::mt19937_64 rng(23);
  std::vector<std::string> ids;
  std::vector<float> data;
  std::uniform_int_distribution<std::uint32_t> bits;
  for (std::size_t i = 0; i < 100; ++i) {
    ids.push_back(fmt::format("id-{}-é", i));
    for (std::size_t d = 0; d < 64; ++d) {
      float f;
      do {
        const std::uint32_t u = bits(rng);
        std::memcpy(&f, &u, sizeof f);
      } while (!std::isfinite(f));  // random bit patterns, subnormals and -0 included
      data.push_back(f);
    }
  }
  const EmbeddingMatrix m(ids, 64, data);
  const auto emb = encode_emb1(m);
  const EmbeddingMatrix back = decode_emb1(emb);
  bool ok = std::memcmp(back.data().data(), m.data().data(), data.size() * sizeof(float)) == 0 &&
            back.doc_ids() == m.doc_ids() && encode_emb1(back) == emb;

  ProbingConfig cfg;
  cfg.layer_dims = {8, 4, 3};
  cfg.heads = 3;
  cfg.input_dim = 10;
  cfg.classes = 5;
  cfg.seed = 9;
  ProbingModel model{init_network(cfg), LabelSpace::sorted({"a", "b", "c", "d", "e"})};
  const auto prb = encode_prb1(model);
  const ProbingModel loaded = decode_prb1(prb);
  ok = ok && encode_prb1(loaded) == prb && loaded.labels == model.labels && loaded.network.config() == cfg;
  // The model stores f32, so a second decode must reproduce the first exactly.
  const ProbingModel again = decode_prb1(encode_prb1(loaded));
  const auto pa = loaded.network.params().blocks();
  const auto pb = again.network.params().blocks();
  for (std::size_t blk = 0; blk < pa.size(); ++blk) {
    ok = ok && std::equal(pa[blk].begin(), pa[blk].end(), pb[blk].begin());
  }

  // Every single-byte corruption outside the magic/version must be rejected.
  int rejected = 0, tried = 0;
  for (const auto* file : {&emb, &prb}) {
    for (std::size_t pos = 8; pos < file->size(); pos += 1 + file->size() / 97) {
      auto bad = *file;
      bad[pos] ^= 0x5A;
      ++tried;
      try {
        if (file == &emb) {
          decode_emb1(bad);
        } else {
          decode_prb1(bad);
        }
      } catch (const FormatError& e) {
        if (e.code() == FormatErrc::bad_crc || e.code() == FormatErrc::truncated ||
            e.code() == FormatErrc::bad_dimension || e.code() == FormatErrc::invalid) {
          ++rejected;
        }
      }
    }
  }
  // Flipping a bit in the trailer itself is reported as a CRC mismatch.
  for (const auto* file : {&emb, &prb}) {
    auto bad = *file;
    bad.back() ^= 1;
    ++tried;
    try {
      file == &emb ? (void)decode_emb1(bad) : (void)decode_prb1(bad);
    } catch (const FormatError& e) {
      if (e.code() == FormatErrc::bad_crc) ++rejected;
    }
  }
  ok = ok && rejected == tried;
  return {ok, fmt::format("EMB1 {} bytes and PRB1 {} bytes round-trip; {}/{} corrupted files rejected",
                          emb.size(), prb.size(), rejected, tried)};
}

// --- determinism --------------------------------------------------------------------

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    out[entry.path().filename().string()] = read_file_bytes(entry.path());
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / fmt::format("emoprobe_accept_{}", ::getpid());
  fs::remove_all(root);
  fs::create_directories(root);
  write_corpus(synthetic_corpus(12, 6, 3, 4), root / "corpus.tsv", CorpusFormat::tsv);

  PipelineConfig cfg = default_report_config();
  cfg.corpus = root / "corpus.tsv";
  cfg.encode_dim = 256;
  cfg.probing.epochs = 4;
  cfg.probing.learning_rate = 1e-3;
  cfg.runs = 2;
  cfg.probe_max_iterations = 300;
  cfg.pad.max_epochs = 400;
  cfg.output_dir = root / "a";
  full_report(cfg);
  cfg.output_dir = root / "b";
  const auto manifest = full_report(cfg);

  const auto a = snapshot(root / "a");
  const auto b = snapshot(root / "b");
  bool ok = a == b;
  for (const char* f : {"emotion_graph.dot", "wheel.tsv", "wheel.svg", "pad.tsv", "pad_pa.svg", "MANIFEST.tsv"}) {
    ok = ok && a.count(f) == 1;
  }
  std::size_t crc_ok = 0;
  for (const auto& f : manifest) {
    const auto it = b.find(f.name);
    if (it != b.end() && it->second.size() == f.bytes && crc32(it->second) == f.crc) ++crc_ok;
  }
  ok = ok && crc_ok == manifest.size() && manifest.size() + 1 == b.size();
  fs::remove_all(root);
  return {ok, fmt::format("{} files identical across runs: {}; manifest CRCs match {}/{}", a.size(),
                          a == b ? "yes" : "no", crc_ok, manifest.size())};
}

}  // namespace

int main() {
  run("gradient-correctness", 30, gradient_correctness);
  run("synthetic-classification", 120, synthetic_classification);
  run("wheel-oracle-equivalence", 0, wheel_oracle);
  run("metric-algebra", 0, metric_algebra);
  run("mean-embedding-properties", 0, mean_embedding_properties);
  run("pad-interpolation", 60, pad_interpolation);
  run("file-formats", 0, file_formats);
  run("full-report-determinism", 0, determinism);
  fmt::print("{} of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
