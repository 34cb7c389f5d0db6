// kws/units.hpp
//
// Unit inventories, lexicon, label sequences, and the word-to-label mappings
// consumed by the training criteria.

#ifndef KWS_UNITS_HPP
#define KWS_UNITS_HPP

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kws/common.hpp"

namespace kws {

// Dense unit ids: phone ids first, then any special units in the order wb,
// filler, blank.  wb marks word boundaries in sub-word label maps, filler
// absorbs non-keywords in word-level maps, and blank (always the last id,
// keeping label units dense for LM vocabularies) is the CTC blank.
class UnitInventory {
 public:
  UnitInventory() = default;
  UnitInventory(std::vector<std::string> phones, bool with_blank, bool with_wb,
                bool with_filler);

  int num_phones() const { return static_cast<int>(phones_.size()); }
  int total_units() const { return total_units_; }

  bool has_blank() const { return blank_ >= 0; }
  bool has_wb() const { return wb_ >= 0; }
  bool has_filler() const { return filler_ >= 0; }
  int blank_id() const;
  int wb_id() const;
  int filler_id() const;

  bool is_phone(int unit) const { return unit >= 0 && unit < num_phones(); }

  int phone_id(const std::string& phone) const;   // throws UnknownUnitError
  std::optional<int> find_unit(const std::string& name) const;
  const std::string& unit_name(int unit) const;
  const std::vector<std::string>& phones() const { return phones_; }

 private:
  std::vector<std::string> phones_;
  std::vector<std::string> names_;  // all unit names, indexed by id
  std::unordered_map<std::string, int> by_name_;
  int blank_ = -1;
  int wb_ = -1;
  int filler_ = -1;
  int total_units_ = 0;
};

// Single-pronunciation lexicon: word -> phone-id sequence.
class Lexicon {
 public:
  void add(const std::string& word, std::vector<int> phones);
  bool contains(const std::string& word) const;
  const std::vector<int>& pronunciation(const std::string& word) const;
  const std::map<std::string, std::vector<int>>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::vector<int>> entries_;
};

enum class LabelKind { kWordLevel, kSubwordLevel };

struct LabelSequence {
  std::vector<int> units;
  LabelKind kind = LabelKind::kSubwordLevel;
};

// Concatenates the pronunciations of the given words.
LabelSequence expand_keyword(const std::vector<std::string>& words,
                             const Lexicon& lexicon);

enum class LabelMapMode { kWord, kSubword };

// Word mode: keywords kept as word units (looked up by name in the
// inventory), maximal runs of non-keywords collapse to one filler.  Subword
// mode: phone expansion with wb inserted between adjacent words.
LabelSequence apply_label_map(const std::vector<std::string>& transcript,
                              LabelMapMode mode,
                              const std::unordered_set<std::string>& keywords,
                              const Lexicon& lexicon,
                              const UnitInventory& inventory);

// --- file formats -----------------------------------------------------------

// Lexicon file: UTF-8 lines `word<TAB>phone phone ...`.
Lexicon load_lexicon(const std::string& path, const UnitInventory& inventory);
Lexicon parse_lexicon(const std::string& text, const UnitInventory& inventory);

// Keyword list: one keyword phrase per line (phrases may hold several words).
std::vector<std::vector<std::string>> load_keyword_list(const std::string& path);
std::vector<std::vector<std::string>> parse_keyword_list(const std::string& text);

// Transcript file: `utt_id<TAB>word word ...`.
struct TranscriptEntry {
  std::string utt_id;
  std::vector<std::string> words;
};
std::vector<TranscriptEntry> load_transcripts(const std::string& path);
std::vector<TranscriptEntry> parse_transcripts(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

std::vector<std::string> split_ws(const std::string& line);

}  // namespace kws

#endif  // KWS_UNITS_HPP
