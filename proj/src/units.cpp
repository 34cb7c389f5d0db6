#include "kws/units.hpp"

#include <fstream>
#include <sstream>

namespace kws {

UnitInventory::UnitInventory(std::vector<std::string> phones, bool with_blank,
                             bool with_wb, bool with_filler)
    : phones_(std::move(phones)) {
  names_ = phones_;
  if (with_wb) {
    wb_ = static_cast<int>(names_.size());
    names_.push_back("<wb>");
  }
  if (with_filler) {
    filler_ = static_cast<int>(names_.size());
    names_.push_back("<fil>");
  }
  // blank is always last so that the label units (everything else) stay a
  // dense 0..n-1 range for LM vocabularies.
  if (with_blank) {
    blank_ = static_cast<int>(names_.size());
    names_.push_back("<blk>");
  }
  total_units_ = static_cast<int>(names_.size());
  for (int i = 0; i < total_units_; ++i) {
    if (!by_name_.emplace(names_[i], i).second)
      throw FormatError("duplicate unit name: " + names_[i]);
  }
}

int UnitInventory::blank_id() const {
  if (blank_ < 0) throw MissingSpecialUnitError("blank");
  return blank_;
}

int UnitInventory::wb_id() const {
  if (wb_ < 0) throw MissingSpecialUnitError("wb");
  return wb_;
}

int UnitInventory::filler_id() const {
  if (filler_ < 0) throw MissingSpecialUnitError("filler");
  return filler_;
}

int UnitInventory::phone_id(const std::string& phone) const {
  auto it = by_name_.find(phone);
  if (it == by_name_.end() || it->second >= num_phones())
    throw UnknownUnitError(phone);
  return it->second;
}

std::optional<int> UnitInventory::find_unit(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

const std::string& UnitInventory::unit_name(int unit) const {
  if (unit < 0 || unit >= total_units_)
    throw UnknownUnitError("id " + std::to_string(unit));
  return names_[unit];
}

void Lexicon::add(const std::string& word, std::vector<int> phones) {
  if (phones.empty()) throw FormatError("empty pronunciation for " + word);
  if (entries_.count(word))
    throw FormatError("multiple pronunciations for " + word);
  entries_.emplace(word, std::move(phones));
}

bool Lexicon::contains(const std::string& word) const {
  return entries_.count(word) != 0;
}

const std::vector<int>& Lexicon::pronunciation(const std::string& word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) throw UnknownWordError(word);
  return it->second;
}

LabelSequence expand_keyword(const std::vector<std::string>& words,
                             const Lexicon& lexicon) {
  LabelSequence seq;
  seq.kind = LabelKind::kSubwordLevel;
  for (const auto& w : words) {
    const auto& pron = lexicon.pronunciation(w);
    seq.units.insert(seq.units.end(), pron.begin(), pron.end());
  }
  return seq;
}

LabelSequence apply_label_map(const std::vector<std::string>& transcript,
                              LabelMapMode mode,
                              const std::unordered_set<std::string>& keywords,
                              const Lexicon& lexicon,
                              const UnitInventory& inventory) {
  LabelSequence seq;
  if (mode == LabelMapMode::kWord) {
    seq.kind = LabelKind::kWordLevel;
    int filler = inventory.filler_id();
    bool in_filler_run = false;
    for (const auto& w : transcript) {
      if (keywords.count(w)) {
        auto id = inventory.find_unit(w);
        if (!id) throw UnknownUnitError(w);
        seq.units.push_back(*id);
        in_filler_run = false;
      } else {
        if (!in_filler_run) seq.units.push_back(filler);
        in_filler_run = true;
      }
    }
  } else {
    seq.kind = LabelKind::kSubwordLevel;
    int wb = inventory.wb_id();
    bool first = true;
    for (const auto& w : transcript) {
      const auto& pron = lexicon.pronunciation(w);
      if (!first) seq.units.push_back(wb);
      seq.units.insert(seq.units.end(), pron.begin(), pron.end());
      first = false;
    }
  }
  return seq;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

Lexicon parse_lexicon(const std::string& text, const UnitInventory& inventory) {
  Lexicon lex;
  for (const auto& line : split_lines(text)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("lexicon line lacks tab: " + line);
    std::string word = line.substr(0, tab);
    std::vector<int> phones;
    for (const auto& p : split_ws(line.substr(tab + 1)))
      phones.push_back(inventory.phone_id(p));
    lex.add(word, std::move(phones));
  }
  return lex;
}

Lexicon load_lexicon(const std::string& path, const UnitInventory& inventory) {
  return parse_lexicon(read_text_file(path), inventory);
}

std::vector<std::vector<std::string>> parse_keyword_list(
    const std::string& text) {
  std::vector<std::vector<std::string>> keywords;
  for (const auto& line : split_lines(text)) {
    auto words = split_ws(line);
    if (!words.empty()) keywords.push_back(std::move(words));
  }
  return keywords;
}

std::vector<std::vector<std::string>> load_keyword_list(
    const std::string& path) {
  return parse_keyword_list(read_text_file(path));
}

std::vector<TranscriptEntry> parse_transcripts(const std::string& text) {
  std::vector<TranscriptEntry> out;
  for (const auto& line : split_lines(text)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("transcript line lacks tab: " + line);
    TranscriptEntry e;
    e.utt_id = line.substr(0, tab);
    e.words = split_ws(line.substr(tab + 1));
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<TranscriptEntry> load_transcripts(const std::string& path) {
  return parse_transcripts(read_text_file(path));
}

}  // namespace kws
