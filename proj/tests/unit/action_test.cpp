#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "deskgrid/action.hpp"
#include "deskgrid/common.hpp"

using namespace deskgrid;

namespace {

// The published grammar as a regular expression, minus the unique-key rule.
const std::regex& grammar_regex() {
  static const std::string uint_ = "(0|[1-9][0-9]{0,5})";
  static const std::string int_ = "(0|-?[1-9][0-9]{0,5})";
  static const std::string chr = R"(([^"\\\x00-\x1f]|\\["\\]))";
  static const std::string str = "\"" + chr + "*\"";
  static const std::string ident = "[a-z][a-z0-9_]*";
  static const std::string arg = ident + "=" + str;
  static const std::regex re("DONE|CLICK\\(" + uint_ + "," + uint_ + "\\)|TYPE\\(" + str + "\\)|KEY\\(\"" + chr +
                             "+\"\\)|SCROLL\\(" + int_ + "\\)|API " + ident + "\\." + ident + "\\((" + arg + "(," +
                             arg + ")*)?\\)");
  return re;
}

bool unique_keys(const std::string& s) {
  if (!starts_with(s, "API ")) return true;
  auto a = parse_action(s);
  return a.has_value();
}

std::string random_text(Rng& rng, std::size_t max_len) {
  static const std::string alphabet = "abcXYZ019 _-./\"\\|=,()";
  std::string s;
  for (std::size_t n = rng.below(max_len + 1); n > 0; --n) s += alphabet[rng.below(alphabet.size())];
  return s;
}

std::string random_ident(Rng& rng) {
  static const std::string head = "abcxyz", tail = "abz09_";
  std::string s(1, head[rng.below(head.size())]);
  for (std::size_t n = rng.below(6); n > 0; --n) s += tail[rng.below(tail.size())];
  return s;
}

Action random_action(Rng& rng) {
  switch (rng.below(6)) {
    case 0: return Action::click(static_cast<int>(rng.below(40)), static_cast<int>(rng.below(1000000)));
    case 1: return Action::type(random_text(rng, 12));
    case 2: {
      auto t = random_text(rng, 8);
      return Action::key(t.empty() ? "enter" : t);
    }
    case 3: return Action::scroll(static_cast<int>(rng.below(200)) - 100);
    case 4: {
      ApiArgs args;
      std::set<std::string> keys;
      for (std::size_t n = rng.below(4); n > 0; --n) {
        auto k = random_ident(rng);
        if (keys.insert(k).second) args.emplace_back(k, random_text(rng, 10));
      }
      return Action::api(random_ident(rng) + "." + random_ident(rng), args);
    }
    default: return Action::done();
  }
}

}  // namespace

TEST(Grammar, Examples) {
  auto a = parse_action("API sheet.sum_range(range=\"B1:B3\",target=\"B4\")");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->kind, ActionKind::kApi);
  EXPECT_EQ(a->api_name, "sheet.sum_range");
  EXPECT_EQ(a->api_app(), "sheet");
  ASSERT_NE(a->arg("target"), nullptr);
  EXPECT_EQ(*a->arg("target"), "B4");
  EXPECT_EQ(parse_action("CLICK(3,4)")->x, 3);
  EXPECT_EQ(parse_action("SCROLL(-2)")->delta, -2);
  EXPECT_EQ(parse_action("TYPE(\"a\\\"b\")")->text, "a\"b");
  EXPECT_EQ(parse_action("TYPE(\"\")")->text, "");
  EXPECT_EQ(parse_action("DONE")->kind, ActionKind::kDone);
  EXPECT_EQ(parse_action("API files.list()")->args.size(), 0u);
}

TEST(Grammar, RejectsMalformed) {
  for (const char* s : {"", "done", "DONE ", " DONE", "CLICK(1, 2)", "CLICK(01,2)", "CLICK(-1,2)", "CLICK(1234567,0)",
                        "SCROLL(-0)", "SCROLL(+1)", "KEY(\"\")", "TYPE(abc)", "TYPE(\"abc)", "TYPE(\"a\\n\")",
                        "TYPE(\"tab\there\")", "API sheet.set_cell(cell=\"A1\",cell=\"A2\")", "API Sheet.x()",
                        "API sheet.(a=\"1\")", "API sheet.x(a=1)", "API sheet.x(a=\"1\",)", "API sheet.x",
                        "APIsheet.x()", "CLICK(1,2)DONE"})
    EXPECT_FALSE(parse_action(s)) << s;
}

TEST(Grammar, PrintParseRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 5000; ++i) {
    auto a = random_action(rng);
    auto text = a.to_string();
    auto back = parse_action(text);
    ASSERT_TRUE(back) << text;
    EXPECT_EQ(*back, a) << text;
    EXPECT_EQ(back->to_string(), text);
  }
}

// Anything the parser accepts is exactly what the printer emits, and matches
// the regular-expression form of the grammar; anything it rejects does not.
TEST(Grammar, ParsesIffGrammatical) {
  Rng rng(2);
  int accepted = 0;
  for (int i = 0; i < 20000; ++i) {
    auto s = random_action(rng).to_string();
    for (std::size_t n = rng.below(3); n > 0 && !s.empty(); --n) {
      std::size_t pos = rng.below(s.size());
      static const std::string noise = "\"\\(),=-0a. \x01";
      switch (rng.below(3)) {
        case 0: s.erase(pos, 1); break;
        case 1: s.insert(pos, 1, noise[rng.below(noise.size())]); break;
        default: s[pos] = noise[rng.below(noise.size())];
      }
    }
    auto parsed = parse_action(s);
    bool grammatical = std::regex_match(s, grammar_regex()) && unique_keys(s);
    EXPECT_EQ(parsed.has_value(), grammatical) << s;
    if (parsed) {
      EXPECT_EQ(parsed->to_string(), s);
      ++accepted;
    }
  }
  EXPECT_GT(accepted, 1000);
}

TEST(Grammar, EbnfShipsAlongside) {
  auto g = action_grammar_ebnf();
  for (const char* rule : {"action", "click", "type", "key", "scroll", "api", "arg", "ident", "string"})
    EXPECT_NE(g.find(std::string(rule) + " "), std::string_view::npos) << rule;
}
