// hyperrna: preprocess, split, train, sample and eval from the shell.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hyperrna/hyperrna.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(hr_status s) {
  if (s == HR_OK) return kExitOk;
  if (s == HR_ERR_INVALID_ARGUMENT) return kExitUsage;
  if (s == HR_ERR_INTERNAL) return kExitInternal;
  return kExitData;
}

void check(hr_status s) {
  if (s != HR_OK) throw Failure{exit_code_for(s), hr_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using GraphPtr = std::unique_ptr<hr_graph, Deleter<hr_graph, hr_graph_free>>;
using SplitPtr = std::unique_ptr<hr_split, Deleter<hr_split, hr_split_free>>;
using ModelPtr = std::unique_ptr<hr_model, Deleter<hr_model, hr_model_free>>;
using EvalPtr = std::unique_ptr<hr_eval, Deleter<hr_eval, hr_eval_free>>;

std::string take_string(char* s) {
  std::string out(s);
  hr_string_free(s);
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitData, "cannot open " + path.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Failure{kExitData, "cannot write " + tmp.string()};
    out << content;
    if (!out) throw Failure{kExitData, "short write to " + tmp.string()};
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Failure{kExitData, "rename to " + path.string() + ": " + ec.message()};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{kExitData, "cannot create " + dir.string() + ": " + ec.message()};
}

json kv_to_json(const std::string& text) {
  json out = json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

struct Manifest {
  json doc;

  Manifest(const std::string& command, std::uint64_t seed) {
    doc["command"] = command;
    doc["version"] = hr_version();
    doc["seed"] = seed;
    doc["inputs"] = json::object();
    doc["config"] = json::object();
    doc["outputs"] = json::array();
    doc["started_at"] = utc_now();
  }

  void write(const fs::path& path) {
    doc["finished_at"] = utc_now();
    write_atomic(path, doc.dump(2) + "\n");
  }
};

fs::path manifest_beside(const fs::path& output) { return output.string() + ".manifest.json"; }

std::string fmt6(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// ---- preprocess ----------------------------------------------------------------

struct PreprocessArgs {
  std::string pdb_dir, out_dir;
  std::size_t knn = 16;
  std::size_t rbf_bins = 24;
};

int run_preprocess(const PreprocessArgs& a) {
  if (!fs::is_directory(a.pdb_dir)) throw Failure{kExitData, "not a directory: " + a.pdb_dir};
  ensure_dir(a.out_dir);
  Manifest manifest("preprocess", 0);
  manifest.doc["inputs"]["pdb_dir"] = a.pdb_dir;
  manifest.doc["config"] = {{"knn", a.knn}, {"rbf_bins", a.rbf_bins}};

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.pdb_dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pdb" || ext == ".ent")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::string fasta;
  json failures = json::array();
  std::size_t ok = 0;
  for (const fs::path& file : files) {
    const std::string id = file.stem().string();
    hr_graph* raw = nullptr;
    const hr_status s = hr_graph_from_pdb(file.c_str(), id.c_str(), a.knn, a.rbf_bins, &raw);
    if (s != HR_OK) {
      std::cerr << "skip " << file.string() << ": " << hr_last_error() << "\n";
      failures.push_back({{"file", file.filename().string()}, {"error", hr_last_error()}});
      continue;
    }
    GraphPtr graph(raw);
    for (std::size_t w = 0; w < hr_graph_warning_count(graph.get()); ++w) {
      std::cerr << id << ": " << hr_graph_warning(graph.get(), w) << "\n";
    }
    const fs::path out = fs::path(a.out_dir) / (id + ".graph");
    check(hr_graph_save(graph.get(), out.c_str()));
    manifest.doc["outputs"].push_back(out.filename().string());
    if (hr_graph_num_rna(graph.get()) > 0) {
      fasta += ">" + id + "\n" + hr_graph_rna_sequence(graph.get()) + "\n";
    }
    ++ok;
  }
  const fs::path fasta_path = fs::path(a.out_dir) / "sequences.fasta";
  write_atomic(fasta_path, fasta);
  manifest.doc["outputs"].push_back(fasta_path.filename().string());
  manifest.doc["failures"] = failures;
  manifest.write(fs::path(a.out_dir) / "manifest.json");
  std::cerr << ok << " of " << files.size() << " structures preprocessed\n";
  if (ok == 0) throw Failure{kExitData, "no structure could be preprocessed from " + a.pdb_dir};
  return kExitOk;
}

// ---- split ---------------------------------------------------------------------

struct SplitArgs {
  std::string fasta, out;
  double threshold = 0.8;
  std::string ratios = "8:1:1";
  std::uint64_t seed = 0;
};

int run_split(const SplitArgs& a) {
  double r[3];
  {
    std::istringstream in(a.ratios);
    char c1 = 0, c2 = 0;
    if (!(in >> r[0] >> c1 >> r[1] >> c2 >> r[2]) || c1 != ':' || c2 != ':' || !in.eof()) {
      throw Failure{kExitUsage, "--ratios must look like 8:1:1"};
    }
  }
  Manifest manifest("split", a.seed);
  manifest.doc["inputs"]["fasta"] = a.fasta;
  manifest.doc["config"] = {{"threshold", a.threshold}, {"ratios", a.ratios}};
  hr_split* raw = nullptr;
  check(hr_split_from_fasta(a.fasta.c_str(), a.threshold, r, a.seed, &raw));
  SplitPtr split(raw);
  check(hr_split_save(split.get(), a.out.c_str()));
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < hr_split_count(split.get()); ++i) ++counts[hr_split_part_of(split.get(), i)];
  std::cerr << hr_split_count(split.get()) << " sequences in " << hr_split_num_clusters(split.get())
            << " clusters: train " << counts[0] << ", val " << counts[1] << ", test " << counts[2] << "\n";
  manifest.doc["outputs"].push_back(fs::path(a.out).filename().string());
  manifest.write(manifest_beside(a.out));
  return kExitOk;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string graphs, split, config, out, pred_coords;
  std::optional<std::size_t> epochs;
  std::uint64_t seed = 0;
  bool mean_seq_loss = false;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  std::string config_text;
  if (!a.config.empty()) config_text = read_text(a.config) + "\n";
  if (a.epochs) config_text += "epochs=" + std::to_string(*a.epochs) + "\n";
  if (a.mean_seq_loss) config_text += "mean_seq_loss=true\n";

  hr_split* split_raw = nullptr;
  check(hr_split_load(a.split.c_str(), &split_raw));
  SplitPtr split(split_raw);

  std::vector<GraphPtr> train_graphs, val_graphs;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < hr_split_count(split.get()); ++i) {
    const hr_split_part part = hr_split_part_of(split.get(), i);
    if (part == HR_SPLIT_TEST) continue;
    const std::string id = hr_split_id(split.get(), i);
    const fs::path path = fs::path(a.graphs) / (id + ".graph");
    if (!fs::exists(path)) {
      missing.push_back(id);
      continue;
    }
    hr_graph* raw = nullptr;
    check(hr_graph_load(path.c_str(), &raw));
    GraphPtr g(raw);
    if (!a.pred_coords.empty()) {
      const fs::path pred = fs::path(a.pred_coords) / (id + ".pdb");
      if (fs::exists(pred)) check(hr_graph_set_predicted_pdb(g.get(), pred.c_str()));
    }
    (part == HR_SPLIT_TRAIN ? train_graphs : val_graphs).push_back(std::move(g));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Failure{kExitData, "IdMismatch: no graph in " + a.graphs + " for: " + list};
  }

  hr_model* model_raw = nullptr;
  check(hr_model_create(config_text.c_str(), a.seed, &model_raw));
  ModelPtr model(model_raw);
  for (const auto& g : train_graphs) check(hr_model_check_graph(model.get(), g.get()));
  for (const auto& g : val_graphs) check(hr_model_check_graph(model.get(), g.get()));

  ensure_dir(a.out);
  Manifest manifest("train", a.seed);
  manifest.doc["inputs"] = {{"graphs", a.graphs}, {"split", a.split}, {"config", a.config},
                            {"pred_coords", a.pred_coords}};
  manifest.doc["config"] = kv_to_json([&] {
    char* s = nullptr;
    check(hr_model_config_text(model.get(), &s));
    return take_string(s);
  }());
  manifest.doc["num_train"] = train_graphs.size();
  manifest.doc["num_val"] = val_graphs.size();

  struct Progress {
    std::string csv = "epoch,train_ce,val_ce,val_recovery,wall_seconds\n";
    bool quiet = false;
  } progress;
  progress.quiet = a.quiet;
  auto on_epoch = [](const hr_epoch_log* log, void* user) -> int {
    auto* p = static_cast<Progress*>(user);
    p->csv += std::to_string(log->epoch) + "," + fmt6(log->train_ce) + "," + fmt6(log->val_ce) + "," +
              fmt6(log->val_recovery) + "," + fmt6(log->wall_seconds) + "\n";
    if (!p->quiet) {
      std::cerr << "epoch " << log->epoch << " train_ce " << fmt6(log->train_ce) << " val_ce "
                << fmt6(log->val_ce) << " val_recovery " << fmt6(log->val_recovery) << "\n";
    }
    return 0;
  };

  std::vector<const hr_graph*> train_ptrs, val_ptrs;
  for (const auto& g : train_graphs) train_ptrs.push_back(g.get());
  for (const auto& g : val_graphs) val_ptrs.push_back(g.get());
  hr_train_summary summary{};
  check(hr_model_train(model.get(), train_ptrs.data(), train_ptrs.size(), val_ptrs.data(), val_ptrs.size(),
                       on_epoch, &progress, &summary));

  const fs::path out(a.out);
  write_atomic(out / "train_log.csv", progress.csv);
  check(hr_model_save(model.get(), (out / "last.ckpt").c_str()));
  check(hr_model_use_best(model.get()));
  check(hr_model_save(model.get(), (out / "model.ckpt").c_str()));
  manifest.doc["best_epoch"] = summary.best_epoch;
  manifest.doc["outputs"] = {"model.ckpt", "last.ckpt", "train_log.csv"};
  manifest.write(out / "manifest.json");
  return kExitOk;
}

// ---- sample --------------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint, graph, out;
  double temperature = 1.0;
  std::size_t num_seqs = 8;
  std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
  Manifest manifest("sample", a.seed);
  manifest.doc["inputs"] = {{"checkpoint", a.checkpoint}, {"graph", a.graph}};
  manifest.doc["config"] = {{"temperature", a.temperature}, {"num_seqs", a.num_seqs}};
  hr_model* m = nullptr;
  check(hr_model_load(a.checkpoint.c_str(), &m));
  ModelPtr model(m);
  hr_graph* g = nullptr;
  check(hr_graph_load(a.graph.c_str(), &g));
  GraphPtr graph(g);
  check(hr_model_check_graph(model.get(), graph.get()));
  char* fasta = nullptr;
  check(hr_model_sample_fasta(model.get(), graph.get(), a.temperature, a.num_seqs, a.seed, &fasta));
  write_atomic(a.out, take_string(fasta));
  manifest.doc["outputs"].push_back(fs::path(a.out).filename().string());
  manifest.write(manifest_beside(a.out));
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string pred_fasta, true_fasta, out;
  std::string pred_coords, true_coords;
  std::string checkpoint, graphs;
};

int run_eval(const EvalArgs& a) {
  if (a.pred_coords.empty() != a.true_coords.empty()) {
    throw Failure{kExitUsage, "--pred-coords and --true-coords must be given together"};
  }
  if (a.checkpoint.empty() != a.graphs.empty()) {
    throw Failure{kExitUsage, "--checkpoint and --graphs must be given together"};
  }
  Manifest manifest("eval", 0);
  manifest.doc["inputs"] = {{"pred_fasta", a.pred_fasta},   {"true_fasta", a.true_fasta},
                            {"pred_coords", a.pred_coords}, {"true_coords", a.true_coords},
                            {"checkpoint", a.checkpoint},   {"graphs", a.graphs}};
  hr_eval* e = nullptr;
  check(hr_eval_create(a.pred_fasta.c_str(), a.true_fasta.c_str(), &e));
  EvalPtr eval(e);
  const std::size_t rows = hr_eval_row_count(eval.get());

  if (!a.pred_coords.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      const fs::path ref = fs::path(a.true_coords) / (std::string(hr_eval_row_structure(eval.get(), r)) + ".pdb");
      const fs::path pred = fs::path(a.pred_coords) / (std::string(hr_eval_row_id(eval.get(), r)) + ".pdb");
      check(hr_eval_set_coords(eval.get(), r, ref.c_str(), pred.c_str()));
    }
  }
  if (!a.checkpoint.empty()) {
    hr_model* m = nullptr;
    check(hr_model_load(a.checkpoint.c_str(), &m));
    ModelPtr model(m);
    std::map<std::string, double> cache;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::string structure = hr_eval_row_structure(eval.get(), r);
      auto it = cache.find(structure);
      if (it == cache.end()) {
        hr_graph* g = nullptr;
        check(hr_graph_load((fs::path(a.graphs) / (structure + ".graph")).c_str(), &g));
        GraphPtr graph(g);
        double ppl = 0.0;
        check(hr_model_perplexity(model.get(), graph.get(), &ppl));
        it = cache.emplace(structure, ppl).first;
      }
      check(hr_eval_set_perplexity(eval.get(), r, it->second));
    }
  }
  char* csv = nullptr;
  check(hr_eval_csv(eval.get(), &csv));
  write_atomic(a.out, take_string(csv));
  manifest.doc["outputs"].push_back(fs::path(a.out).filename().string());
  manifest.write(manifest_beside(a.out));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HyperRNA: hypergraph-based RNA inverse folding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hr_version()));

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Featurize a directory of PDB files into graph caches");
  c_pre->add_option("--pdb-dir", pre.pdb_dir, "Directory of .pdb files")->required();
  c_pre->add_option("--out-dir", pre.out_dir, "Output directory")->required();
  c_pre->add_option("--knn", pre.knn, "Neighbours per node")->capture_default_str()->check(CLI::PositiveNumber);
  c_pre->add_option("--rbf-bins", pre.rbf_bins, "RBF centers per distance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  SplitArgs sp;
  auto* c_split = app.add_subcommand("split", "Cluster sequences by identity and split 8:1:1");
  c_split->add_option("--fasta", sp.fasta, "FASTA of all chains")->required();
  c_split->add_option("--out", sp.out, "Split file to write")->required();
  c_split->add_option("--threshold", sp.threshold, "Identity threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c_split->add_option("--ratios", sp.ratios, "train:val:test weights")->capture_default_str();
  c_split->add_option("--seed", sp.seed, "Random seed")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model with teacher forcing");
  c_train->add_option("--graphs", tr.graphs, "Directory of graph caches")->required();
  c_train->add_option("--split", tr.split, "Split file")->required();
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--config", tr.config, "key=value config file");
  c_train->add_option("--epochs", tr.epochs, "Override the configured epoch count");
  c_train->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  c_train->add_option("--pred-coords", tr.pred_coords, "Directory of predicted <id>.pdb for the structure loss");
  c_train->add_flag("--mean-seq-loss", tr.mean_seq_loss, "Average the sequence loss over positions");
  c_train->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  SampleArgs sa;
  auto* c_sample = app.add_subcommand("sample", "Sample sequences for one structure");
  c_sample->add_option("--checkpoint", sa.checkpoint, "Model checkpoint")->required();
  c_sample->add_option("--graph", sa.graph, "Graph cache")->required();
  c_sample->add_option("--out", sa.out, "FASTA to write")->required();
  c_sample->add_option("--temperature", sa.temperature, "Sampling temperature")->capture_default_str();
  c_sample->add_option("--num-seqs", sa.num_seqs, "Number of sequences")->capture_default_str();
  c_sample->add_option("--seed", sa.seed, "Random seed")->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predicted sequences against references");
  c_eval->add_option("--pred-fasta", ev.pred_fasta, "Predicted sequences")->required();
  c_eval->add_option("--true-fasta", ev.true_fasta, "Reference sequences")->required();
  c_eval->add_option("--out", ev.out, "Metrics CSV to write")->required();
  c_eval->add_option("--pred-coords", ev.pred_coords, "Directory of predicted <prediction id>.pdb");
  c_eval->add_option("--true-coords", ev.true_coords, "Directory of reference <structure id>.pdb");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint for perplexity");
  c_eval->add_option("--graphs", ev.graphs, "Graph caches for perplexity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_pre->parsed()) return run_preprocess(pre);
    if (c_split->parsed()) return run_split(sp);
    if (c_train->parsed()) return run_train(tr);
    if (c_sample->parsed()) return run_sample(sa);
    if (c_eval->parsed()) return run_eval(ev);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
