#include "structure_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "error.hpp"

namespace hyperrna {

namespace {

constexpr std::size_t kMinRecordWidth = 54;  // through the z coordinate

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string_view column(std::string_view line, std::size_t first, std::size_t last) {
  // 1-based inclusive PDB columns.
  if (line.size() < first) return {};
  return line.substr(first - 1, std::min(last, line.size()) - (first - 1));
}

bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

bool parse_int(std::string_view text, int& out) {
  text = trim(text);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

const std::map<std::string, char, std::less<>>& rna_names() {
  static const std::map<std::string, char, std::less<>> names = {
      {"A", 'A'}, {"C", 'C'}, {"G", 'G'}, {"U", 'U'},
      {"RA", 'A'}, {"RC", 'C'}, {"RG", 'G'}, {"RU", 'U'},
  };
  return names;
}

const std::map<std::string, char, std::less<>>& protein_names() {
  static const std::map<std::string, char, std::less<>> names = {
      {"ALA", 'A'}, {"ARG", 'R'}, {"ASN", 'N'}, {"ASP", 'D'}, {"CYS", 'C'},
      {"GLN", 'Q'}, {"GLU", 'E'}, {"GLY", 'G'}, {"HIS", 'H'}, {"ILE", 'I'},
      {"LEU", 'L'}, {"LYS", 'K'}, {"MET", 'M'}, {"PHE", 'F'}, {"PRO", 'P'},
      {"SER", 'S'}, {"THR", 'T'}, {"TRP", 'W'}, {"TYR", 'Y'}, {"VAL", 'V'},
  };
  return names;
}

bool is_standard_residue(std::string_view name) {
  return rna_names().find(name) != rna_names().end() ||
         protein_names().find(name) != protein_names().end();
}

std::string normalize_atom_name(std::string_view name) {
  std::string out(trim(name));
  std::replace(out.begin(), out.end(), '*', '\'');
  return out;
}

constexpr std::string_view kRnaAlphabet = "ACGU";
constexpr std::string_view kProteinAlphabet = "ACDEFGHIKLMNPQRSTVWY";

std::string format_residue_id(int id, char icode) {
  std::string s = std::to_string(id);
  if (icode != ' ') s.push_back(icode);
  return s;
}

}  // namespace

const char* chain_kind_name(ChainKind kind) { return kind == ChainKind::kRna ? "RNA" : "Protein"; }

ChainKind parse_chain_kind(std::string_view name) {
  if (name == "RNA") return ChainKind::kRna;
  if (name == "Protein") return ChainKind::kProtein;
  throw Error(ErrorCode::kParseError, "unknown chain kind '" + std::string(name) + "'");
}

std::vector<ChainRecords> parse_pdb(std::string_view text) {
  std::vector<ChainRecords> chains;
  std::size_t line_no = 0;
  std::size_t atoms = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.starts_with("ENDMDL")) break;
    const bool is_atom = line.starts_with("ATOM  ");
    const bool is_het = line.starts_with("HETATM");
    if (!is_atom && !is_het) continue;
    if (line.size() < kMinRecordWidth) continue;

    const char alt_loc = line[16];
    if (alt_loc != ' ' && alt_loc != 'A') continue;

    AtomRecord rec;
    rec.atom_name = normalize_atom_name(column(line, 13, 16));
    rec.residue_name = std::string(trim(column(line, 18, 20)));
    rec.chain_id = std::string(trim(column(line, 22, 22)));
    rec.insertion_code = line[26];
    rec.hetatm = is_het;
    if (is_het && !is_standard_residue(rec.residue_name)) continue;
    if (rec.atom_name.empty()) continue;
    if (!parse_int(column(line, 23, 26), rec.residue_index)) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": bad residue number '" +
                      std::string(column(line, 23, 26)) + "'");
    }
    static constexpr std::size_t kCoordCols[3][2] = {{31, 38}, {39, 46}, {47, 54}};
    for (int c = 0; c < 3; ++c) {
      const auto field = column(line, kCoordCols[c][0], kCoordCols[c][1]);
      if (!parse_double(field, rec.position[c])) {
        throw Error(ErrorCode::kMalformedCoordinate,
                    "line " + std::to_string(line_no) + ": '" + std::string(field) + "'");
      }
    }
    auto it = std::find_if(chains.begin(), chains.end(),
                           [&](const ChainRecords& ch) { return ch.chain_id == rec.chain_id; });
    if (it == chains.end()) {
      chains.push_back({rec.chain_id, {}});
      it = chains.end() - 1;
    }
    it->atoms.push_back(std::move(rec));
    ++atoms;
  }
  if (atoms == 0) throw Error(ErrorCode::kEmptyStructure, "no ATOM/HETATM records parsed");
  return chains;
}

std::optional<ChainKind> infer_chain_kind(std::span<const AtomRecord> records) {
  std::size_t rna = 0, protein = 0;
  for (const AtomRecord& r : records) {
    if (rna_names().count(r.residue_name)) ++rna;
    if (protein_names().count(r.residue_name)) ++protein;
  }
  if (rna == 0 && protein == 0) return std::nullopt;
  return rna >= protein ? ChainKind::kRna : ChainKind::kProtein;
}

char residue_letter(std::string_view residue_name, ChainKind kind) {
  const auto& names = kind == ChainKind::kRna ? rna_names() : protein_names();
  const auto it = names.find(residue_name);
  return it == names.end() ? '\0' : it->second;
}

CoarseBackbone coarse_grain(std::span<const AtomRecord> records, ChainKind kind,
                            std::vector<std::string>* warnings) {
  struct Residue {
    int id;
    char icode;
    std::string name;
    std::vector<const AtomRecord*> atoms;
  };
  std::vector<Residue> residues;
  std::map<std::pair<int, char>, std::size_t> index;
  for (const AtomRecord& r : records) {
    const auto key = std::make_pair(r.residue_index, r.insertion_code);
    auto [it, inserted] = index.try_emplace(key, residues.size());
    if (inserted) residues.push_back({r.residue_index, r.insertion_code, r.residue_name, {}});
    residues[it->second].atoms.push_back(&r);
  }
  std::stable_sort(residues.begin(), residues.end(), [](const Residue& a, const Residue& b) {
    return std::make_pair(a.id, a.icode) < std::make_pair(b.id, b.icode);
  });

  CoarseBackbone bb;
  bb.kind = kind;
  bb.chain_id = records.empty() ? std::string() : records.front().chain_id;
  for (const Residue& res : residues) {
    const char letter = residue_letter(res.name, kind);
    const std::string where = bb.chain_id + ":" + format_residue_id(res.id, res.icode);
    if (letter == '\0') {
      if (warnings) {
        warnings->push_back(std::string(error_code_name(ErrorCode::kUnknownResidue)) + " " +
                            res.name + " at " + where);
      }
      continue;
    }
    std::array<std::string_view, 3> slots;
    if (kind == ChainKind::kRna) {
      const bool purine = letter == 'A' || letter == 'G';
      slots = {"P", "C4'", purine ? "N9" : "N1"};
    } else {
      slots = {"N", "CA", "C"};
    }
    std::array<Vec3, 3> beads{};
    std::array<bool, 3> found{};
    for (const AtomRecord* a : res.atoms) {
      for (int s = 0; s < 3; ++s) {
        if (!found[s] && a->atom_name == slots[s]) {
          beads[s] = a->position;
          found[s] = true;
        }
      }
    }
    if (!(found[0] && found[1] && found[2])) {
      if (warnings) warnings->push_back("incomplete backbone at " + where + ", residue dropped");
      continue;
    }
    bb.atoms.push_back(beads);
    bb.sequence.push_back(letter);
    bb.residue_ids.push_back(res.id);
    bb.insertion_codes.push_back(res.icode);
  }
  if (bb.atoms.empty()) {
    throw Error(ErrorCode::kEmptyBackbone,
                "chain '" + bb.chain_id + "' has no residue with all three backbone beads");
  }
  return bb;
}

std::vector<CoarseBackbone> backbones_from_pdb(std::string_view text,
                                               std::vector<std::string>* warnings) {
  std::vector<CoarseBackbone> rna, protein;
  for (const ChainRecords& chain : parse_pdb(text)) {
    const auto kind = infer_chain_kind(chain.atoms);
    if (!kind) continue;
    try {
      auto bb = coarse_grain(chain.atoms, *kind, warnings);
      (*kind == ChainKind::kRna ? rna : protein).push_back(std::move(bb));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyBackbone) throw;
      if (warnings) warnings->push_back(e.what());
    }
  }
  rna.insert(rna.end(), std::make_move_iterator(protein.begin()),
             std::make_move_iterator(protein.end()));
  return rna;
}

std::string write_backbones(std::span<const CoarseBackbone> chains) {
  std::string out;
  char buf[64];
  for (const CoarseBackbone& bb : chains) {
    out += "#chain " + (bb.chain_id.empty() ? std::string("_") : bb.chain_id) + " " +
           chain_kind_name(bb.kind) + " " + std::to_string(bb.length()) + "\n";
    for (std::size_t i = 0; i < bb.length(); ++i) {
      const char icode = i < bb.insertion_codes.size() ? bb.insertion_codes[i] : ' ';
      out += format_residue_id(bb.residue_ids[i], icode);
      out += ' ';
      out += bb.sequence[i];
      for (const Vec3& p : bb.atoms[i]) {
        for (double x : p) {
          std::snprintf(buf, sizeof buf, " %.6f", x);
          out += buf;
        }
      }
      out += '\n';
    }
  }
  return out;
}

std::vector<CoarseBackbone> read_backbones(std::string_view text) {
  std::vector<CoarseBackbone> chains;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t expected = 0;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorCode::kParseError, "backbone line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    if (line.starts_with("#chain")) {
      if (!chains.empty() && chains.back().length() != expected) throw fail("short chain");
      std::string tag, id, kind;
      ls >> tag >> id >> kind >> expected;
      if (!ls) throw fail("bad header");
      CoarseBackbone bb;
      bb.chain_id = id == "_" ? std::string() : id;
      bb.kind = parse_chain_kind(kind);
      chains.push_back(std::move(bb));
      continue;
    }
    if (chains.empty()) throw fail("residue before #chain header");
    std::string rid;
    char letter = 0;
    ls >> rid >> letter;
    CoarseBackbone& bb = chains.back();
    std::array<Vec3, 3> beads{};
    for (auto& p : beads) {
      for (double& x : p) ls >> x;
    }
    if (!ls) throw fail("expected '<residue_id> <letter> <9 floats>'");
    char icode = ' ';
    if (!rid.empty() && !std::isdigit(static_cast<unsigned char>(rid.back()))) {
      icode = rid.back();
      rid.pop_back();
    }
    int id = 0;
    if (!parse_int(rid, id)) throw fail("bad residue id");
    bb.atoms.push_back(beads);
    bb.sequence.push_back(letter);
    bb.residue_ids.push_back(id);
    bb.insertion_codes.push_back(icode);
  }
  if (!chains.empty() && chains.back().length() != expected) throw fail("short chain");
  return chains;
}

std::vector<FastaRecord> parse_fasta(std::string_view text, Alphabet alphabet) {
  std::vector<FastaRecord> records;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == ';') continue;
    if (line.front() == '>') {
      std::string_view id = trim(line.substr(1));
      id = id.substr(0, id.find_first_of(" \t"));
      records.push_back({std::string(id), {}});
      continue;
    }
    if (records.empty()) {
      throw Error(ErrorCode::kParseError, "FASTA line " + std::to_string(line_no) +
                                              ": sequence data before the first '>' header");
    }
    for (char c : line) {
      if (c == ' ' || c == '\t') continue;
      char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (alphabet == Alphabet::kRna && u == 'T') u = 'U';
      const bool ok = alphabet == Alphabet::kRna       ? kRnaAlphabet.find(u) != std::string_view::npos
                      : alphabet == Alphabet::kProtein ? kProteinAlphabet.find(u) != std::string_view::npos
                                                       : std::isalpha(static_cast<unsigned char>(u)) != 0;
      if (!ok) {
        throw Error(ErrorCode::kInvalidAlphabet, "record '" + records.back().id +
                                                     "': character '" + std::string(1, c) + "'");
      }
      records.back().sequence.push_back(u);
    }
  }
  return records;
}

std::string write_fasta(std::span<const FastaRecord> records) {
  std::string out;
  for (const FastaRecord& r : records) {
    out += '>';
    out += r.id;
    out += '\n';
    out += r.sequence;
    out += '\n';
  }
  return out;
}

}  // namespace hyperrna
