#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "asrlab/errors.hpp"
#include "asrlab/lexicon.hpp"
#include "asrlab/util.hpp"

using namespace asrlab;

namespace {

TokenVocab small_vocab() { return TokenVocab({"好", "人", "天", "大"}); }

}  // namespace

TEST_CASE("vocab reserved layout") {
  TokenVocab v = small_vocab();
  CHECK(v.size() == 7);
  CHECK(v.id_of("<blank>") == 0);
  CHECK(v.id_of("<unk>") == 1);
  CHECK(v.id_of("好") == 2);
  CHECK(v.sos_eos() == 6);
  CHECK(v.is_reserved(0));
  CHECK(v.is_reserved(1));
  CHECK(v.is_reserved(6));
  CHECK_FALSE(v.is_reserved(2));
  CHECK(v.encode("好人") == std::vector<int>{2, 3});
  CHECK(v.encode("好x") == std::vector<int>{2, TokenVocab::kUnk});
  CHECK(v.decode({2, 3}) == "好人");
}

TEST_CASE("parse_lexicon direct transcription") {
  TokenVocab v = small_vocab();
  auto parsed = parse_lexicon("好\tgood,desired\n", v);
  CHECK(parsed.sememes.size() == 2);
  int good = parsed.sememes.id_of("good");
  int desired = parsed.sememes.id_of("desired");
  CHECK(good == 0);  // first-appearance order
  CHECK(desired == 1);
  CHECK(parsed.lexicon.sememes_of(v.id_of("好")) == std::vector<int>{good, desired});
  CHECK(parsed.lexicon.count_of(v.id_of("好")) == 2);
  CHECK(parsed.skipped_tokens.empty());
}

TEST_CASE("parse_lexicon empty document") {
  TokenVocab v = small_vocab();
  auto parsed = parse_lexicon("", v);
  for (int id = 0; id < v.size(); ++id) CHECK(parsed.lexicon.sememes_of(id).empty());
}

TEST_CASE("parse_lexicon error cases") {
  TokenVocab v = small_vocab();
  CHECK_THROWS_AS(parse_lexicon("好\ta,a\n", v), ParseError);          // duplicate sememe in entry
  CHECK_THROWS_AS(parse_lexicon("好\ta\n好\tb\n", v), ParseError);     // duplicate token line
  CHECK_THROWS_AS(parse_lexicon("好\t\n", v), ParseError);             // TAB but empty sememe field
  CHECK_THROWS_AS(parse_lexicon("好 a\n", v), ParseError);             // no TAB at all
  CHECK_THROWS_AS(parse_lexicon("<blank>\ta\n", v), ParseError);       // reserved token
  CHECK_THROWS_AS(parse_lexicon(std::string("好\ta\xff\n"), v), IoError);  // malformed UTF-8
  // line numbers are reported
  try {
    parse_lexicon("# comment\n好\ta\n好\tb\n", v);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("parse_lexicon skips unknown tokens without failing") {
  TokenVocab v = small_vocab();
  auto parsed = parse_lexicon("好\ta\n虎\tb\n", v);
  CHECK(parsed.skipped_tokens == std::vector<std::string>{"虎"});
  CHECK(parsed.lexicon.count_of(v.id_of("好")) == 1);
}

TEST_CASE("parse with fixed sememe vocab is order-insensitive per entry") {
  TokenVocab v = small_vocab();
  SememeVocab sv(std::vector<std::string>{"a", "b", "c"});
  auto p1 = parse_lexicon("好\ta,c\n人\tb\n", v, sv);
  auto p2 = parse_lexicon("好\tc,a\n人\tb\n", v, sv);
  CHECK(p1.lexicon.entries() == p2.lexicon.entries());
  CHECK_THROWS_AS(parse_lexicon("好\tzzz\n", v, sv), ParseError);  // unknown sememe in fixed mode
}

TEST_CASE("serialize round trip") {
  TokenVocab v = small_vocab();
  auto parsed = parse_lexicon("好\tgood,desired\n人\thuman\n天\tsky,time,good\n", v);
  std::string text = serialize_lexicon(parsed.lexicon, v, parsed.sememes);
  auto reparsed = parse_lexicon(text, v, parsed.sememes);
  CHECK(reparsed.lexicon.entries() == parsed.lexicon.entries());
}

TEST_CASE("sememe_multihot") {
  TokenVocab v = small_vocab();
  SememeVocab sv(std::vector<std::string>{"s0", "s1", "s2", "s3", "s4", "s5"});
  SememeLexicon lex(v.size(), sv.size());
  lex.set(v.id_of("好"), {2, 5});

  auto hot = sememe_multihot(lex, v, v.id_of("好"));
  CHECK(hot == std::vector<double>{0, 0, 1, 0, 0, 1});

  auto empty = sememe_multihot(lex, v, v.id_of("人"));
  CHECK(empty == std::vector<double>(6, 0.0));

  auto blank = sememe_multihot(lex, v, TokenVocab::kBlank);
  CHECK(blank == std::vector<double>(6, 0.0));

  CHECK_THROWS_AS(sememe_multihot(lex, v, v.size()), ArgError);

  // exactly n_t ones for every token
  Rng rng(3);
  for (int tok = 0; tok < v.size(); ++tok) {
    auto h = sememe_multihot(lex, v, tok);
    double ones = 0;
    for (double x : h) ones += x;
    CHECK(static_cast<int>(ones) == (v.is_reserved(tok) ? 0 : lex.count_of(tok)));
  }
}

TEST_CASE("coverage_stats") {
  TokenVocab v = small_vocab();  // 4 non-reserved tokens
  SememeVocab sv(std::vector<std::string>{"a", "b", "c"});

  {
    SememeLexicon lex(v.size(), sv.size());
    for (int id = 2; id <= 5; ++id) lex.set(id, {0});
    auto st = coverage_stats(lex, v);
    CHECK(st.covered_fraction == 1.0);
    CHECK(st.mean_sememes_per_covered == 1.0);
    CHECK(st.max_sememes == 1);
  }
  {
    SememeLexicon lex(v.size(), sv.size());
    auto st = coverage_stats(lex, v);
    CHECK(st.covered_fraction == 0.0);
    CHECK(st.mean_sememes_per_covered == 0.0);
    CHECK(st.max_sememes == 0);
  }
  {
    SememeLexicon lex(v.size(), sv.size());
    lex.set(2, {0});
    lex.set(3, {0, 1, 2});
    auto st = coverage_stats(lex, v);
    CHECK(st.covered_fraction == 0.5);
    CHECK(st.mean_sememes_per_covered == 2.0);
    CHECK(st.max_sememes == 3);
  }
}
