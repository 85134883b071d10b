#include "training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "checkpoint.hpp"
#include "error.hpp"
#include "gvp_decoder.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace hyperrna {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kInvalidArgument, key + ": cannot parse '" + value + "'");
  }
  return out;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_short(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

void clip_gradients(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& t : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double f = max_norm / norm;
  for (Tensor& t : params) {
    if (!t.has_grad()) continue;
    for (double& g : t.impl()->grad) g *= f;
  }
}

}  // namespace

// ---- config ------------------------------------------------------------------

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError,
                  "config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::kParseError, "config line " + std::to_string(line_no) + ": empty key");
    }
    out[std::move(key)] = std::move(value);
  }
  return out;
}

std::string write_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  auto kv = model.to_map();
  kv["epochs"] = std::to_string(epochs);
  kv["lr"] = fmt(lr);
  kv["knn"] = std::to_string(knn);
  kv["seed"] = std::to_string(seed);
  kv["batch_size"] = std::to_string(batch_size);
  kv["lambda_str"] = fmt(lambda_str);
  kv["mean_seq_loss"] = mean_seq_loss ? "true" : "false";
  kv["grad_clip"] = fmt(grad_clip);
  return kv;
}

void TrainConfig::update_from(const std::map<std::string, std::string>& kv) {
  static const std::set<std::string> kModelKeys = [] {
    std::set<std::string> keys;
    for (const auto& [k, v] : ModelConfig{}.to_map()) keys.insert(k);
    keys.insert("layers");
    return keys;
  }();
  std::map<std::string, std::string> model_kv;
  for (const auto& [key, value] : kv) {
    if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
    else if (key == "lr") lr = parse_number<double>(key, value);
    else if (key == "knn") knn = parse_number<std::size_t>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
    else if (key == "lambda_str") lambda_str = parse_number<double>(key, value);
    else if (key == "grad_clip") grad_clip = parse_number<double>(key, value);
    else if (key == "mean_seq_loss") {
      if (value == "true" || value == "1") mean_seq_loss = true;
      else if (value == "false" || value == "0") mean_seq_loss = false;
      else throw Error(ErrorCode::kInvalidArgument, "mean_seq_loss: expected true/false");
    } else if (key == "layers") {
      const auto n = parse_number<std::size_t>(key, value);
      model.encoder_layers = n;
      model.decoder_layers = n;
    } else if (kModelKeys.count(key)) {
      model_kv[key] = value;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
    }
  }
  model.update_from(model_kv);
}

void TrainConfig::validate() const {
  model.validate();
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw Error(ErrorCode::kInvalidArgument, "lr must be a finite non-negative number");
  }
  if (knn == 0) throw Error(ErrorCode::kInvalidArgument, "knn must be positive");
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be positive");
  if (!(lambda_str >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda_str must be >= 0");
  if (!(grad_clip >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "grad_clip must be >= 0");
}

// ---- losses --------------------------------------------------------------------

Tensor sequence_loss(std::span<const std::size_t> truth, const Tensor& logits, bool mean) {
  if (logits.rank() != 2 || logits.dim(1) != kNumBases) {
    throw Error(ErrorCode::kShapeMismatch,
                "sequence_loss expects L x 4 logits, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  if (truth.size() != n) {
    throw Error(ErrorCode::kLengthMismatch, "sequence of length " + std::to_string(truth.size()) +
                                                " vs " + std::to_string(n) + " logit rows");
  }
  std::vector<double> onehot(n * kNumBases, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (truth[i] >= kNumBases) throw Error(ErrorCode::kInvalidArgument, "base index out of range");
    onehot[i * kNumBases + truth[i]] = 1.0;
  }
  const Tensor picked = multiply(log_softmax(logits, 1), make_tensor({n, kNumBases}, std::move(onehot)));
  const double factor = mean && n > 0 ? -1.0 / static_cast<double>(n) : -1.0;
  return scale(sum(picked), factor);
}

double structure_loss(std::span<const Vec3> truth, std::span<const Vec3> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::kShapeMismatch, "structure_loss: " + std::to_string(truth.size()) +
                                               " vs " + std::to_string(predicted.size()) + " points");
  }
  if (truth.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double d = predicted[i][c] - truth[i][c];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(3 * truth.size());
}

TotalLoss total_loss(const Tensor& seq, std::optional<double> str, double lambda_str) {
  if (!str) return {seq, false};
  return {add_scalar(seq, lambda_str * *str), true};
}

// ---- splitting -----------------------------------------------------------------

const char* split_name(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kVal: return "val";
    case SplitName::kTest: return "test";
  }
  return "?";
}

std::vector<std::string> DatasetSplit::members(SplitName s) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (split[i] == s) out.push_back(ids[i]);
  }
  return out;
}

double alignment_identity(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[b.size()]) / static_cast<double>(std::min(a.size(), b.size()));
}

DatasetSplit cluster_split(std::span<const FastaRecord> sequences, double identity_threshold,
                           std::array<double, 3> ratios, std::uint64_t seed) {
  if (sequences.empty()) throw Error(ErrorCode::kEmptyInput, "no sequences to split");
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "split ratios must be non-negative");
  }
  const double ratio_sum = ratios[0] + ratios[1] + ratios[2];
  if (!(ratio_sum > 0.0)) throw Error(ErrorCode::kInvalidArgument, "split ratios sum to zero");
  for (double& r : ratios) r /= ratio_sum;

  std::unordered_set<std::string> seen;
  DatasetSplit out;
  for (const auto& rec : sequences) {
    if (!seen.insert(rec.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate sequence id '" + rec.id + "'");
    }
    out.ids.push_back(rec.id);
  }

  const std::size_t n = sequences.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return sequences[x].sequence.size() > sequences[y].sequence.size();
  });

  std::vector<std::size_t> rep_index;  // per cluster, index into `sequences`
  out.cluster.assign(n, 0);
  for (std::size_t idx : order) {
    std::size_t found = rep_index.size();
    for (std::size_t c = 0; c < rep_index.size(); ++c) {
      if (alignment_identity(sequences[rep_index[c]].sequence, sequences[idx].sequence) >=
          identity_threshold) {
        found = c;
        break;
      }
    }
    if (found == rep_index.size()) rep_index.push_back(idx);
    out.cluster[idx] = found;
  }
  for (std::size_t r : rep_index) out.representative.push_back(sequences[r].id);

  std::vector<std::size_t> cluster_size(rep_index.size(), 0);
  for (std::size_t c : out.cluster) ++cluster_size[c];
  std::vector<std::size_t> cluster_order(rep_index.size());
  std::iota(cluster_order.begin(), cluster_order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(cluster_order));

  // Each cluster goes to the split currently furthest below its target count.
  std::array<double, 3> filled{0.0, 0.0, 0.0};
  std::vector<SplitName> cluster_split_of(rep_index.size(), SplitName::kTrain);
  for (std::size_t c : cluster_order) {
    std::size_t best = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < 3; ++s) {
      if (ratios[s] == 0.0) continue;
      const double deficit = ratios[s] * static_cast<double>(n) - filled[s];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    filled[best] += static_cast<double>(cluster_size[c]);
    cluster_split_of[c] = static_cast<SplitName>(best);
  }
  out.split.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.split[i] = cluster_split_of[out.cluster[i]];
  return out;
}

std::string write_split(const DatasetSplit& split) {
  std::string out = "# id cluster split\n";
  for (std::size_t i = 0; i < split.ids.size(); ++i) {
    out += split.ids[i] + " " + std::to_string(split.cluster[i]) + " " + split_name(split.split[i]) + "\n";
  }
  return out;
}

DatasetSplit read_split(std::string_view text) {
  DatasetSplit out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::string> seen;
  std::size_t max_cluster = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, name;
    std::size_t cluster = 0;
    if (!(ls >> id >> cluster >> name)) {
      throw Error(ErrorCode::kParseError, "split line " + std::to_string(line_no) +
                                              ": expected '<id> <cluster> <split>'");
    }
    SplitName s;
    if (name == "train") s = SplitName::kTrain;
    else if (name == "val") s = SplitName::kVal;
    else if (name == "test") s = SplitName::kTest;
    else throw Error(ErrorCode::kParseError, "split line " + std::to_string(line_no) + ": unknown split '" + name + "'");
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::kParseError, "split line " + std::to_string(line_no) + ": duplicate id " + id);
    }
    out.ids.push_back(id);
    out.cluster.push_back(cluster);
    out.split.push_back(s);
    max_cluster = std::max(max_cluster, cluster + 1);
  }
  out.representative.assign(max_cluster, {});
  for (std::size_t i = out.ids.size(); i-- > 0;) out.representative[out.cluster[i]] = out.ids[i];
  return out;
}

// ---- training ------------------------------------------------------------------

Example make_example(GeometricGraph graph) {
  Example ex;
  ex.bases = encode_bases(graph.rna_sequence());
  ex.graph = std::move(graph);
  return ex;
}

std::string epoch_log_csv_header() { return "epoch,train_ce,val_ce,val_recovery,wall_seconds\n"; }

std::string epoch_log_csv_row(const EpochLog& log) {
  return std::to_string(log.epoch) + "," + fmt_short(log.train_ce) + "," + fmt_short(log.val_ce) +
         "," + fmt_short(log.val_recovery) + "," + fmt_short(log.wall_seconds) + "\n";
}

double evaluate_ce(const HyperRnaModel& model, std::span<const Example> examples) {
  std::vector<double> per;
  for (const Example& ex : examples) {
    const Encoded enc = model.encode(ex.graph);
    const Tensor logits = model.teacher_forced_logits(ex.graph, enc, ex.bases);
    per.push_back(sequence_loss(ex.bases, logits, true).item());
  }
  return mean_of(per);
}

double teacher_forced_recovery(const HyperRnaModel& model, std::span<const Example> examples) {
  std::vector<double> per;
  for (const Example& ex : examples) {
    const Encoded enc = model.encode(ex.graph);
    const Tensor logits = model.teacher_forced_logits(ex.graph, enc, ex.bases);
    const auto v = logits.values();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ex.bases.size(); ++i) {
      const auto row = v.subspan(i * kNumBases, kNumBases);
      const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      hits += arg == ex.bases[i];
    }
    per.push_back(static_cast<double>(hits) / static_cast<double>(ex.bases.size()));
  }
  return mean_of(per);
}

double greedy_recovery(const HyperRnaModel& model, std::span<const Example> examples) {
  std::vector<double> per;
  for (const Example& ex : examples) {
    const Encoded enc = model.encode(ex.graph);
    per.push_back(recovery(ex.graph.rna_sequence(), model.greedy(ex.graph, enc)));
  }
  return mean_of(per);
}

TrainResult train(HyperRnaModel& model, std::span<const Example> train_set,
                  std::span<const Example> val_set, const TrainConfig& config, AdamState& adam,
                  const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw Error(ErrorCode::kEmptyInput, "training split is empty");
  for (const Example& ex : train_set) model.check_compatible(ex.graph);
  for (const Example& ex : val_set) model.check_compatible(ex.graph);

  adam.lr = config.lr;
  Rng order_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Tensor>& params = model.parameters().tensors();

  TrainResult result;
  result.best_values = snapshot_parameter_values(model.parameters());
  double best_score = std::numeric_limits<double>::infinity();
  const bool use_val = hooks.evaluate_validation && !val_set.empty();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    std::vector<double> train_ce;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      model.parameters().zero_grad();
      const std::size_t b_end = std::min(order.size(), b + config.batch_size);
      for (std::size_t k = b; k < b_end; ++k) {
        const Example& ex = train_set[order[k]];
        Tape tape;
        TapeScope scope(tape);
        const Encoded enc = model.encode(ex.graph, true, &dropout_rng);
        const Tensor logits = model.teacher_forced_logits(ex.graph, enc, ex.bases);
        const Tensor seq = sequence_loss(ex.bases, logits, config.mean_seq_loss);
        std::optional<double> str;
        if (ex.predicted_coords) {
          std::vector<Vec3> truth;
          for (std::size_t i = 0; i < ex.bases.size(); ++i) {
            truth.insert(truth.end(), ex.graph.beads[i].begin(), ex.graph.beads[i].end());
          }
          str = structure_loss(truth, *ex.predicted_coords);
        }
        const TotalLoss loss = total_loss(seq, str, config.lambda_str);
        const double value = loss.value.item();
        if (!std::isfinite(value)) {
          throw Error(ErrorCode::kNonFiniteLoss, "non-finite loss on structure '" + ex.graph.id + "'");
        }
        tape.backward(loss.value);
        const double per_pos = config.mean_seq_loss
                                   ? seq.item()
                                   : seq.item() / static_cast<double>(ex.bases.size());
        train_ce.push_back(per_pos);
      }
      if (config.grad_clip > 0.0) clip_gradients(params, config.grad_clip);
      adam_step(std::span<Tensor>(params), adam);
    }
    model.parameters().zero_grad();

    EpochLog log;
    log.epoch = epoch;
    log.train_ce = mean_of(train_ce);
    log.val_ce = std::numeric_limits<double>::quiet_NaN();
    log.val_recovery = std::numeric_limits<double>::quiet_NaN();
    if (use_val) {
      log.val_ce = evaluate_ce(model, val_set);
      log.val_recovery = greedy_recovery(model, val_set);
    }
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double score = use_val ? log.val_ce : log.train_ce;
    if (score < best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.best_values = snapshot_parameter_values(model.parameters());
    }
    result.log.push_back(log);
    if (hooks.after_epoch && hooks.after_epoch(log, model)) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace hyperrna
