#include <cmath>
#include <set>

#include "checkpoint.hpp"
#include "doctest.h"
#include "error_code.hpp"
#include "gradcheck.hpp"
#include "synthetic.hpp"
#include "training.hpp"

using namespace hyperrna;
using namespace hyperrna::testing;

namespace {

// Longest common subsequence by exhaustive recursion; fine for short strings.
std::size_t lcs_brute(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) return 0;
  if (a[0] == b[0]) return 1 + lcs_brute(a.substr(1), b.substr(1));
  return std::max(lcs_brute(a.substr(1), b), lcs_brute(a, b.substr(1)));
}

ModelConfig small_model() {
  ModelConfig m;
  m.rbf_bins = 8;
  m.token_width = 8;
  m.d_h = 16;
  m.encoder_layers = 2;
  m.decoder_layers = 2;
  return m;
}

std::vector<Example> small_dataset(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  FeatureConfig fc;
  fc.knn = 8;
  fc.rbf_bins = 8;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(make_example(synthetic_graph("s" + std::to_string(i), 8 + rng.below(8), rng, 0, fc)));
  return out;
}

}  // namespace

TEST_CASE("sequence_loss equals the summed negative log-likelihood") {
  const std::vector<std::size_t> truth{0, 1, 2, 3, 0};
  const Tensor uniform = Tensor::zeros({5, 4});
  CHECK(sequence_loss(truth, uniform).item() == doctest::Approx(5 * std::log(4.0)).epsilon(1e-14));
  CHECK(sequence_loss(truth, uniform, true).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  Rng rng(51);
  const Tensor logits = random_tensor({5, 4}, rng, 2.0, false);
  double expect = 0;
  for (std::size_t t = 0; t < 5; ++t) {
    double z = 0;
    for (std::size_t b = 0; b < 4; ++b) z += std::exp(logits.at(t * 4 + b));
    expect -= logits.at(t * 4 + truth[t]) - std::log(z);
  }
  CHECK(sequence_loss(truth, logits).item() == doctest::Approx(expect).epsilon(1e-13));
  CHECK(code_of([&] { sequence_loss(std::vector<std::size_t>{0, 1}, logits); }) == ErrorCode::kLengthMismatch);
  CHECK(code_of([&] { sequence_loss(truth, Tensor::zeros({5, 3})); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("structure and total loss") {
  const std::vector<Vec3> a{{0, 0, 0}, {1, 1, 1}};
  const std::vector<Vec3> b{{1, 0, 0}, {1, 1, 3}};
  CHECK(structure_loss(a, b) == doctest::Approx(5.0 / 6.0));
  CHECK(code_of([&] { structure_loss(a, std::vector<Vec3>{{0, 0, 0}}); }) == ErrorCode::kShapeMismatch);
  const Tensor seq = Tensor::scalar(2.0);
  CHECK(total_loss(seq, std::nullopt, 1.0).value.item() == 2.0);
  CHECK_FALSE(total_loss(seq, std::nullopt, 1.0).has_structure_term);
  const TotalLoss t = total_loss(seq, 0.5, 3.0);
  CHECK(t.has_structure_term);
  CHECK(t.value.item() == 3.5);
}

TEST_CASE("alignment_identity is LCS over the shorter length") {
  CHECK(alignment_identity("ACGU", "ACGU") == 1.0);
  CHECK(alignment_identity("ACGU", "UGCA") == 0.25);
  CHECK(alignment_identity("ACG", "AACCGG") == 1.0);
  Rng rng(52);
  for (int i = 0; i < 50; ++i) {
    const std::string a = random_rna_sequence(1 + rng.below(9), rng);
    const std::string b = random_rna_sequence(1 + rng.below(9), rng);
    CHECK(alignment_identity(a, b) ==
          doctest::Approx(static_cast<double>(lcs_brute(a, b)) / std::min(a.size(), b.size())));
  }
}

TEST_CASE("cluster_split keeps clusters whole and separates dissimilar sequences") {
  Rng rng(53);
  std::vector<FastaRecord> recs;
  for (int fam = 0; fam < 12; ++fam) {
    const std::string root = random_rna_sequence(40, rng);
    for (int m = 0; m < 1 + fam % 3; ++m) {
      std::string s = root;
      s[rng.below(40)] = 'A';
      recs.push_back({"f" + std::to_string(fam) + "_" + std::to_string(m), s});
    }
  }
  const DatasetSplit split = cluster_split(recs, 0.8, {8, 1, 1}, 3);
  CHECK(split.ids.size() == recs.size());
  std::set<std::size_t> clusters(split.cluster.begin(), split.cluster.end());
  CHECK(clusters.size() == 12);
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (std::size_t j = 0; j < recs.size(); ++j) {
      const bool same_family = recs[i].id.substr(0, recs[i].id.find('_')) == recs[j].id.substr(0, recs[j].id.find('_'));
      CHECK((split.cluster[i] == split.cluster[j]) == same_family);
      if (split.cluster[i] == split.cluster[j]) CHECK(split.split[i] == split.split[j]);
    }
  const auto tr = split.members(SplitName::kTrain), va = split.members(SplitName::kVal),
             te = split.members(SplitName::kTest);
  CHECK(tr.size() + va.size() + te.size() == recs.size());
  CHECK_FALSE(va.empty());
  CHECK_FALSE(te.empty());
  // Deterministic for a fixed seed.
  const DatasetSplit again = cluster_split(recs, 0.8, {8, 1, 1}, 3);
  CHECK(again.split == split.split);
  CHECK(write_split(again) == write_split(split));
}

TEST_CASE("ten unrelated sequences split 8/1/1") {
  std::vector<FastaRecord> recs;
  const char* seqs[] = {"AAAAAAAA", "CCCCCCCC", "GGGGGGGG", "UUUUUUUU", "ACACACAC",
                        "GUGUGUGU", "AGAGAGAG", "CUCUCUCU", "AUAUAUAU", "CGCGCGCG"};
  for (int i = 0; i < 10; ++i) recs.push_back({"r" + std::to_string(i), seqs[i]});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DatasetSplit s = cluster_split(recs, 0.8, {8, 1, 1}, seed);
    CHECK(s.members(SplitName::kTrain).size() == 8);
    CHECK(s.members(SplitName::kVal).size() == 1);
    CHECK(s.members(SplitName::kTest).size() == 1);
  }
}

TEST_CASE("cluster_split input errors and split file round trip") {
  const std::vector<FastaRecord> dup{{"a", "ACGU"}, {"a", "GGGG"}};
  CHECK(code_of([&] { cluster_split(dup, 0.8, {8, 1, 1}, 0); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { cluster_split(std::vector<FastaRecord>{}, 0.8, {8, 1, 1}, 0); }) == ErrorCode::kEmptyInput);
  const std::vector<FastaRecord> ok{{"a", "ACGU"}, {"b", "GGGG"}, {"c", "UUUA"}};
  CHECK(code_of([&] { cluster_split(ok, 0.8, {0, 0, 0}, 0); }) == ErrorCode::kInvalidArgument);
  const DatasetSplit s = cluster_split(ok, 0.8, {1, 1, 1}, 4);
  const DatasetSplit back = read_split(write_split(s));
  CHECK(back.ids == s.ids);
  CHECK(back.split == s.split);
  CHECK(back.cluster == s.cluster);
  CHECK(code_of([] { read_split("a 0 nowhere\n"); }) == ErrorCode::kParseError);
}

TEST_CASE("config parsing accepts known keys and rejects unknown ones") {
  const auto kv = parse_key_values("# comment\n epochs = 7\nlr=0.001\nlayers=2\nconv=symmetric\n\n");
  TrainConfig c;
  c.update_from(kv);
  CHECK(c.epochs == 7);
  CHECK(c.lr == 0.001);
  CHECK(c.model.encoder_layers == 2);
  CHECK(c.model.decoder_layers == 2);
  CHECK(c.model.conv == ConvForm::kSymmetric);
  TrainConfig d;
  d.update_from(c.to_map());
  CHECK(d.to_map() == c.to_map());
  CHECK(parse_key_values(write_key_values(c.to_map())) == c.to_map());
  TrainConfig e;
  CHECK(code_of([&] { e.update_from({{"bogus", "1"}}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { e.update_from({{"epochs", "many"}}); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { parse_key_values("no equals sign\n"); }) == ErrorCode::kParseError);
}

TEST_CASE("full-model cross-entropy gradients pass finite differences") {
  Rng rng(54);
  FeatureConfig fc{4, 4};
  const GeometricGraph g = synthetic_graph("x", 6, rng, 2, fc);
  ModelConfig mc;
  mc.rbf_bins = 4;
  mc.token_width = 4;
  mc.d_h = 16;
  mc.encoder_layers = 2;
  mc.decoder_layers = 2;
  mc.dropout = 0.0;
  HyperRnaModel model(mc, 3);
  const Example ex = make_example(g);
  const GradCheckResult r = gradcheck(
      [&](const std::vector<Tensor>&) {
        const Encoded enc = model.encode(g);
        return sequence_loss(ex.bases, model.teacher_forced_logits(g, enc, ex.bases));
      },
      model.parameters().tensors());
  INFO("worst " << model.parameters().names()[r.worst_input] << "[" << r.worst_index << "] analytic "
                << r.analytic << " numeric " << r.numeric);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("training with zero learning rate leaves parameters bit-identical") {
  const auto data = small_dataset(3, 55);
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.epochs = 2;
  cfg.lr = 0.0;
  HyperRnaModel model(cfg.model, 1);
  const auto before = snapshot_parameter_values(model.parameters());
  AdamState adam;
  adam.lr = 0.0;
  const TrainResult r = train(model, data, {}, cfg, adam);
  CHECK(r.log.size() == 2);
  CHECK(snapshot_parameter_values(model.parameters()) == before);
}

TEST_CASE("training is deterministic for a fixed seed and lowers the loss") {
  const auto data = small_dataset(4, 56);
  const auto val = small_dataset(2, 57);
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.epochs = 15;
  cfg.lr = 3e-3;
  cfg.seed = 11;
  auto run = [&] {
    HyperRnaModel model(cfg.model, cfg.seed);
    AdamState adam;
    adam.lr = cfg.lr;
    TrainResult r = train(model, data, val, cfg, adam);
    return std::make_pair(std::move(r), snapshot_parameter_values(model.parameters()));
  };
  const auto [a, pa] = run();
  const auto [b, pb] = run();
  CHECK(pa == pb);
  REQUIRE(a.log.size() == 15);
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(a.log[i].train_ce == b.log[i].train_ce);
    CHECK(a.log[i].val_ce == b.log[i].val_ce);
    CHECK(std::isfinite(a.log[i].val_recovery));
  }
  CHECK(a.log.back().train_ce < a.log.front().train_ce);
  CHECK(a.best_epoch >= 1);
}

TEST_CASE("early-stop hook and empty training set") {
  const auto data = small_dataset(2, 58);
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.epochs = 10;
  HyperRnaModel model(cfg.model, 2);
  AdamState adam;
  TrainHooks hooks;
  hooks.after_epoch = [](const EpochLog& log, const HyperRnaModel&) { return log.epoch >= 3; };
  const TrainResult r = train(model, data, {}, cfg, adam, hooks);
  CHECK(r.stopped_early);
  CHECK(r.log.size() == 3);
  CHECK(std::isnan(r.log[0].val_ce));
  CHECK(code_of([&] { train(model, {}, {}, cfg, adam); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("a non-finite loss names the offending structure") {
  const auto data = small_dataset(1, 59);
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.epochs = 1;
  HyperRnaModel model(cfg.model, 3);
  model.parameters().tensors().front().impl()->value[0] = NAN;
  AdamState adam;
  try {
    train(model, data, {}, cfg, adam);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLoss);
    CHECK(std::string(e.what()).find("s0") != std::string::npos);
  }
}

TEST_CASE("checkpoints round trip parameters and optimizer state exactly") {
  const auto data = small_dataset(2, 60);
  TrainConfig cfg;
  cfg.model = small_model();
  cfg.epochs = 2;
  HyperRnaModel model(cfg.model, 4);
  AdamState adam;
  adam.lr = 1e-3;
  train(model, data, {}, cfg, adam);
  auto meta = cfg.to_map();
  const std::string text = write_checkpoint(meta, model.parameters(), adam);
  const CheckpointData ck = read_checkpoint(text);
  CHECK(ck.adam.step == adam.step);
  CHECK(ck.adam.m == adam.m);
  CHECK(ck.adam.v == adam.v);
  const HyperRnaModel back = model_from_checkpoint(ck);
  CHECK(snapshot_parameter_values(back.parameters()) == snapshot_parameter_values(model.parameters()));
  CHECK(write_checkpoint(meta, back.parameters(), ck.adam) == text);

  CheckpointData wrong = ck;
  wrong.shapes[0] = Shape{1};
  wrong.values[0] = {0.0};
  CHECK(code_of([&] { model_from_checkpoint(wrong); }) == ErrorCode::kDimensionMismatch);
  CHECK(code_of([&] { read_checkpoint("HYPERRNA-CKPT v1\n#param x 1 2\n1\n#end\n"); }) == ErrorCode::kParseError);
}

TEST_CASE("atomic_write_file replaces the target") {
  const std::string dir = make_temp_dir("hyperrna_io");
  const std::string path = dir + "/f.txt";
  atomic_write_file(path, "one");
  atomic_write_file(path, "two");
  CHECK(read_file(path) == "two");
  CHECK(code_of([&] { read_file(dir + "/missing"); }) == ErrorCode::kIoError);
}
