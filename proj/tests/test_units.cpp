// Inventory layout, lexicon handling, and word-to-label maps.

#include <vector>

#include "doctest.h"
#include "kws/units.hpp"

using namespace kws;

TEST_CASE("inventory id layout: phones then wb, filler, blank") {
  UnitInventory inv({"a", "b", "c"}, true, true, true);
  CHECK(inv.num_phones() == 3);
  CHECK(inv.total_units() == 6);
  CHECK(inv.phone_id("a") == 0);
  CHECK(inv.phone_id("c") == 2);
  CHECK(inv.wb_id() == 3);
  CHECK(inv.filler_id() == 4);
  CHECK(inv.blank_id() == 5);  // always last: label units stay dense
  CHECK(inv.is_phone(2));
  CHECK(!inv.is_phone(3));
  CHECK(inv.unit_name(3) == "<wb>");
  CHECK(inv.unit_name(4) == "<fil>");
  CHECK(inv.unit_name(5) == "<blk>");
  CHECK(*inv.find_unit("<blk>") == 5);
  CHECK(!inv.find_unit("zz").has_value());
  CHECK_THROWS_AS(inv.phone_id("zz"), UnknownUnitError);

  UnitInventory bare({"a"}, false, false, false);
  CHECK(bare.total_units() == 1);
  CHECK_THROWS_AS(bare.blank_id(), MissingSpecialUnitError);
}

TEST_CASE("lexicon parse and lookup") {
  UnitInventory inv({"a", "b", "c"}, false, false, false);
  Lexicon lex = parse_lexicon("cab\tc a b\nba\tb a\n", inv);
  CHECK(lex.contains("cab"));
  CHECK(lex.pronunciation("cab") == std::vector<int>{2, 0, 1});
  CHECK(lex.pronunciation("ba") == std::vector<int>{1, 0});
  CHECK_THROWS_AS(lex.pronunciation("nope"), UnknownWordError);
  CHECK_THROWS_AS(parse_lexicon("w\tq\n", inv), UnknownUnitError);
}

TEST_CASE("expand_keyword concatenates pronunciations") {
  UnitInventory inv({"a", "b"}, false, false, false);
  Lexicon lex = parse_lexicon("ab\ta b\nba\tb a\n", inv);
  LabelSequence s = expand_keyword({"ab", "ba"}, lex);
  CHECK(s.units == std::vector<int>{0, 1, 1, 0});
}

TEST_CASE("subword label map inserts wb between words") {
  UnitInventory inv({"a", "b"}, false, true, false);
  Lexicon lex = parse_lexicon("ab\ta b\nba\tb a\n", inv);
  LabelSequence s = apply_label_map({"ab", "ba", "ab"}, LabelMapMode::kSubword,
                                    {}, lex, inv);
  const int wb = inv.wb_id();
  CHECK(s.units == std::vector<int>{0, 1, wb, 1, 0, wb, 0, 1});
  CHECK(s.kind == LabelKind::kSubwordLevel);

  LabelSequence one = apply_label_map({"ba"}, LabelMapMode::kSubword, {}, lex, inv);
  CHECK(one.units == std::vector<int>{1, 0});
}

TEST_CASE("word label map keeps keywords, collapses filler runs") {
  UnitInventory inv({"hello", "world"}, false, false, true);
  Lexicon lex;  // unused in word mode
  std::unordered_set<std::string> kw{"hello", "world"};
  const int fil = inv.filler_id();

  LabelSequence s = apply_label_map({"x", "y", "hello", "z", "world", "q", "r"},
                                    LabelMapMode::kWord, kw, lex, inv);
  CHECK(s.units == std::vector<int>{fil, 0, fil, 1, fil});
  CHECK(s.kind == LabelKind::kWordLevel);

  LabelSequence only_fil =
      apply_label_map({"x", "y"}, LabelMapMode::kWord, kw, lex, inv);
  CHECK(only_fil.units == std::vector<int>{fil});
}

TEST_CASE("keyword list and transcripts parse") {
  auto kws_list = parse_keyword_list("hello\nhey there\n\n");
  REQUIRE(kws_list.size() == 2);
  CHECK(kws_list[0] == std::vector<std::string>{"hello"});
  CHECK(kws_list[1] == std::vector<std::string>{"hey", "there"});

  auto tr = parse_transcripts("u1\thello world\nu2\tx\n");
  REQUIRE(tr.size() == 2);
  CHECK(tr[0].utt_id == "u1");
  CHECK(tr[0].words == std::vector<std::string>{"hello", "world"});
  CHECK(tr[1].words == std::vector<std::string>{"x"});
}

TEST_CASE("split_ws handles repeated separators") {
  CHECK(split_ws("  a \t b  ") == std::vector<std::string>{"a", "b"});
  CHECK(split_ws("").empty());
}
