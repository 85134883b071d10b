#include <cmath>

#include "doctest.h"
#include "error_code.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "synthetic.hpp"

using namespace hyperrna;
using namespace hyperrna::testing;

TEST_CASE("graph_from_pdb featurizes every chain of a PDB file") {
  Rng rng(61);
  const std::vector<CoarseBackbone> chains{synthetic_rna("ACGUACGUAC", rng, "A"), synthetic_protein(5, rng, "B")};
  const PreprocessedStructure p = graph_from_pdb(to_pdb(chains), "cx", {});
  CHECK(p.graph.id == "cx");
  CHECK(p.graph.n == 15);
  CHECK(p.graph.rna_sequence() == "ACGUACGUAC");
  CHECK(p.warnings.empty());
  const auto beads = rna_beads_from_pdb(to_pdb(chains));
  CHECK(beads.size() == 30);
  const std::vector<CoarseBackbone> protein_only{synthetic_protein(5, rng)};
  CHECK(code_of([&] { rna_beads_from_pdb(to_pdb(protein_only)); }) == ErrorCode::kEmptyBackbone);
}

TEST_CASE("match_predictions pairs sample ids with their structure") {
  const std::vector<FastaRecord> ref{{"a", "ACGU"}, {"b_s", "GGGG"}};
  const std::vector<FastaRecord> pred{{"a_s0", "ACGA"}, {"a_s1", "ACGU"}, {"b_s", "GGGC"}};
  const auto rows = match_predictions(pred, ref);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].structure == "a");
  CHECK(rows[0].recovery == 0.75);
  CHECK(rows[1].recovery == 1.0);
  CHECK(rows[2].structure == "b_s");
  CHECK(code_of([&] { match_predictions(std::vector<FastaRecord>{{"zz", "ACGU"}}, ref); }) == ErrorCode::kIdMismatch);
  const std::vector<FastaRecord> only_a{{"a_s0", "ACGU"}};
  CHECK(code_of([&] { match_predictions(only_a, ref); }) == ErrorCode::kIdMismatch);
  const std::vector<FastaRecord> wrong_len{{"a", "ACG"}, {"b_s", "GGGG"}};
  CHECK(code_of([&] { match_predictions(wrong_len, ref); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("eval_csv prints rows, mean and sample standard error") {
  std::vector<EvalRow> rows(3);
  const double rec[] = {0.5, 0.75, 1.0};
  for (int i = 0; i < 3; ++i) {
    rows[i].id = "x" + std::to_string(i);
    rows[i].structure = "x";
    rows[i].recovery = rec[i];
  }
  rows[0].perplexity = 2.0;
  const std::string csv = eval_csv(rows);
  const std::string expect =
      "id,structure,recovery,perplexity,rmsd,lddt\n"
      "x0,x,0.500000000,2.000000000,,\n"
      "x1,x,0.750000000,,,\n"
      "x2,x,1.000000000,,,\n"
      "mean,,0.750000000,2.000000000,,\n"
      "sem,,0.144337567,0.000000000,,\n";
  CHECK(csv == expect);
}

TEST_CASE("add_structure_metrics superposes all beads and scores central beads") {
  Rng rng(62);
  const CoarseBackbone rna = synthetic_rna(random_rna_sequence(12, rng), rng);
  std::vector<Vec3> ref;
  for (const auto& r : rna.atoms) ref.insert(ref.end(), r.begin(), r.end());
  const Mat3 rot = random_rotation(rng);
  std::vector<Vec3> moved;
  for (const auto& x : ref) moved.push_back(rigid(rot, {3, -2, 9}, x));
  EvalRow row;
  add_structure_metrics(row, ref, moved);
  CHECK(*row.rmsd < 1e-9);
  CHECK(*row.lddt == 1.0);
  std::vector<Vec3> noisy = ref;
  for (auto& x : noisy)
    for (double& c : x) c += rng.normal() * 1.5;
  add_structure_metrics(row, ref, noisy);
  CHECK(*row.rmsd == doctest::Approx(kabsch_align(noisy, ref).rmsd).epsilon(1e-12));
  std::vector<Vec3> cref, cnoisy;
  for (std::size_t i = 1; i < ref.size(); i += 3) cref.push_back(ref[i]), cnoisy.push_back(noisy[i]);
  CHECK(*row.lddt == doctest::Approx(lddt(cref, cnoisy)).epsilon(1e-14));
  CHECK(code_of([&] { add_structure_metrics(row, ref, cref); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("sample_sequences names samples and is reproducible") {
  Rng rng(63);
  const GeometricGraph g = synthetic_graph("struct", 9, rng, 3);
  HyperRnaModel model(ModelConfig{}, 2);
  const auto a = sample_sequences(model, g, 1.0, 4, 17);
  const auto b = sample_sequences(model, g, 1.0, 4, 17);
  CHECK(a == b);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a[i].id == "struct_s" + std::to_string(i));
    CHECK(a[i].sequence.size() == 9);
  }
  const double ppl = native_perplexity(model, g);
  CHECK(ppl > 1.0);
  CHECK(std::isfinite(ppl));
}
