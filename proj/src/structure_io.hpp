#pragma once

// PDB/FASTA input and the 3-bead coarse-grained backbone.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hyperrna {

using Vec3 = std::array<double, 3>;

struct AtomRecord {
  std::string chain_id;
  int residue_index = 0;
  char insertion_code = ' ';
  std::string residue_name;
  std::string atom_name;
  Vec3 position{};
  bool hetatm = false;
};

struct ChainRecords {
  std::string chain_id;
  std::vector<AtomRecord> atoms;
};

enum class ChainKind { kRna, kProtein };

const char* chain_kind_name(ChainKind kind);
ChainKind parse_chain_kind(std::string_view name);

// Slot order per residue: RNA (P, C4', N1/N9); protein (N, CA, C). Slot 1 is
// the central bead used for kNN and lDDT.
struct CoarseBackbone {
  ChainKind kind = ChainKind::kRna;
  std::string chain_id;
  std::vector<std::array<Vec3, 3>> atoms;
  std::string sequence;
  std::vector<int> residue_ids;
  std::vector<char> insertion_codes;

  std::size_t length() const { return atoms.size(); }
  const Vec3& center(std::size_t i) const { return atoms[i][1]; }
};

// ATOM/HETATM records of the first model, grouped by chain in order of first
// appearance. HETATM lines are kept only for standard residue names.
std::vector<ChainRecords> parse_pdb(std::string_view text);

// Chain kind by majority vote over residue names; nullopt when neither
// vocabulary matches any residue.
std::optional<ChainKind> infer_chain_kind(std::span<const AtomRecord> records);

// Reduces one chain to its coarse backbone. Residues with a non-standard name
// or missing any of the three beads are dropped; a note for each is appended
// to `warnings` when given.
CoarseBackbone coarse_grain(std::span<const AtomRecord> records, ChainKind kind,
                            std::vector<std::string>* warnings = nullptr);

// Convenience: parse + coarse-grain every chain with a recognised kind. RNA
// chains come first, each group in file order.
std::vector<CoarseBackbone> backbones_from_pdb(std::string_view text,
                                               std::vector<std::string>* warnings = nullptr);

char residue_letter(std::string_view residue_name, ChainKind kind);

// Line-oriented backbone text: `#chain <id> <kind> <L>` then
// `<residue_id> <letter> <9 floats>` per residue.
std::string write_backbones(std::span<const CoarseBackbone> chains);
std::vector<CoarseBackbone> read_backbones(std::string_view text);

enum class Alphabet { kRna, kProtein, kAny };

struct FastaRecord {
  std::string id;
  std::string sequence;

  bool operator==(const FastaRecord&) const = default;
};

std::vector<FastaRecord> parse_fasta(std::string_view text, Alphabet alphabet = Alphabet::kRna);
std::string write_fasta(std::span<const FastaRecord> records);

}  // namespace hyperrna
