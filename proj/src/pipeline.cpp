#include "pipeline.hpp"

#include <cstdio>
#include <map>
#include <set>

#include "error.hpp"
#include "gvp_decoder.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace hyperrna {

namespace {

std::string cell(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9f", x);
  return buf;
}

std::string strip_sample_suffix(const std::string& id) {
  const auto pos = id.rfind("_s");
  if (pos == std::string::npos || pos + 2 == id.size()) return id;
  for (std::size_t i = pos + 2; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return id;
  }
  return id.substr(0, pos);
}

}  // namespace

PreprocessedStructure graph_from_pdb(std::string_view pdb_text, const std::string& id,
                                     const FeatureConfig& config) {
  PreprocessedStructure out;
  const std::vector<CoarseBackbone> chains = backbones_from_pdb(pdb_text, &out.warnings);
  out.graph = build_features(chains, config);
  out.graph.id = id;
  return out;
}

std::vector<Vec3> rna_beads_from_pdb(std::string_view pdb_text) {
  std::vector<Vec3> out;
  for (const CoarseBackbone& chain : backbones_from_pdb(pdb_text)) {
    if (chain.kind != ChainKind::kRna) continue;
    for (const auto& residue : chain.atoms) out.insert(out.end(), residue.begin(), residue.end());
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyBackbone, "structure has no RNA residues");
  return out;
}

std::vector<FastaRecord> sample_sequences(const HyperRnaModel& model, const GeometricGraph& graph,
                                          double tau, std::size_t count, std::uint64_t seed) {
  const Encoded enc = model.encode(graph);
  Rng seeds(seed);
  std::vector<FastaRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({graph.id + "_s" + std::to_string(i), model.sample(graph, enc, tau, seeds.next_u64())});
  }
  return out;
}

double native_perplexity(const HyperRnaModel& model, const GeometricGraph& graph) {
  const std::vector<std::size_t> truth = encode_bases(graph.rna_sequence());
  const Encoded enc = model.encode(graph);
  const Tensor logits = model.teacher_forced_logits(graph, enc, truth);
  return perplexity(logits.values(), truth);
}

std::vector<EvalRow> match_predictions(std::span<const FastaRecord> predicted,
                                       std::span<const FastaRecord> reference) {
  std::map<std::string, const FastaRecord*> by_id;
  for (const FastaRecord& r : reference) by_id[r.id] = &r;
  std::vector<EvalRow> rows;
  std::vector<std::string> orphans;
  std::set<std::string> covered;
  for (const FastaRecord& p : predicted) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) it = by_id.find(strip_sample_suffix(p.id));
    if (it == by_id.end()) {
      orphans.push_back(p.id);
      continue;
    }
    covered.insert(it->first);
    EvalRow row;
    row.id = p.id;
    row.structure = it->first;
    row.recovery = recovery(it->second->sequence, p.sequence);
    rows.push_back(std::move(row));
  }
  std::vector<std::string> missing;
  for (const FastaRecord& r : reference) {
    if (!covered.count(r.id)) missing.push_back(r.id);
  }
  if (!orphans.empty() || !missing.empty()) {
    std::string msg;
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
      return s;
    };
    if (!orphans.empty()) msg += "predictions without reference: " + list(orphans);
    if (!missing.empty()) {
      msg += std::string(msg.empty() ? "" : "; ") + "references without prediction: " + list(missing);
    }
    throw Error(ErrorCode::kIdMismatch, msg);
  }
  return rows;
}

void add_structure_metrics(EvalRow& row, std::span<const Vec3> reference_beads,
                           std::span<const Vec3> predicted_beads) {
  if (reference_beads.size() != predicted_beads.size() || reference_beads.size() % 3 != 0) {
    throw Error(ErrorCode::kLengthMismatch, row.id + ": " + std::to_string(predicted_beads.size()) +
                                                " predicted beads vs " +
                                                std::to_string(reference_beads.size()) + " reference");
  }
  row.rmsd = kabsch_align(predicted_beads, reference_beads).rmsd;
  std::vector<Vec3> ref_central, pred_central;
  for (std::size_t i = 1; i < reference_beads.size(); i += 3) {
    ref_central.push_back(reference_beads[i]);
    pred_central.push_back(predicted_beads[i]);
  }
  row.lddt = lddt(ref_central, pred_central);
}

std::string eval_csv(std::span<const EvalRow> rows) {
  std::string out = "id,structure,recovery,perplexity,rmsd,lddt\n";
  std::vector<double> rec, ppl, rmsd, score;
  auto opt = [](const std::optional<double>& x, std::vector<double>& acc) {
    if (!x) return std::string();
    acc.push_back(*x);
    return cell(*x);
  };
  for (const EvalRow& r : rows) {
    rec.push_back(r.recovery);
    out += r.id + "," + r.structure + "," + cell(r.recovery) + "," + opt(r.perplexity, ppl) + "," +
           opt(r.rmsd, rmsd) + "," + opt(r.lddt, score) + "\n";
  }
  auto summary = [](const std::vector<double>& xs, bool want_sem) {
    if (xs.empty()) return std::string();
    const MeanSem ms = mean_sem(xs);
    return cell(want_sem ? ms.sem : ms.mean);
  };
  for (bool want_sem : {false, true}) {
    out += std::string(want_sem ? "sem" : "mean") + ",," + summary(rec, want_sem) + "," +
           summary(ppl, want_sem) + "," + summary(rmsd, want_sem) + "," + summary(score, want_sem) + "\n";
  }
  return out;
}

}  // namespace hyperrna
