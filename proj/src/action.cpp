#include "deskgrid/action.hpp"

#include <algorithm>
#include <cctype>

namespace deskgrid {

const char* action_kind_name(ActionKind kind) {
  switch (kind) {
    case ActionKind::kClick: return "CLICK";
    case ActionKind::kType: return "TYPE";
    case ActionKind::kKey: return "KEY";
    case ActionKind::kScroll: return "SCROLL";
    case ActionKind::kApi: return "API";
    case ActionKind::kDone: return "DONE";
  }
  return "?";
}

Action Action::click(int col, int row) {
  Action a;
  a.kind = ActionKind::kClick;
  a.x = col;
  a.y = row;
  return a;
}

Action Action::type(std::string text) {
  Action a;
  a.kind = ActionKind::kType;
  a.text = std::move(text);
  return a;
}

Action Action::key(std::string combo) {
  Action a;
  a.kind = ActionKind::kKey;
  a.text = std::move(combo);
  return a;
}

Action Action::scroll(int delta) {
  Action a;
  a.kind = ActionKind::kScroll;
  a.delta = delta;
  return a;
}

Action Action::api(std::string name, ApiArgs args) {
  Action a;
  a.kind = ActionKind::kApi;
  a.api_name = std::move(name);
  a.args = std::move(args);
  return a;
}

Action Action::done() { return Action{}; }

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

std::string Action::to_string() const {
  switch (kind) {
    case ActionKind::kClick:
      return "CLICK(" + std::to_string(x) + "," + std::to_string(y) + ")";
    case ActionKind::kType:
      return "TYPE(" + quote(text) + ")";
    case ActionKind::kKey:
      return "KEY(" + quote(text) + ")";
    case ActionKind::kScroll:
      return "SCROLL(" + std::to_string(delta) + ")";
    case ActionKind::kApi: {
      std::string out = "API " + api_name + "(";
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out += ',';
        out += args[i].first + "=" + quote(args[i].second);
      }
      return out + ")";
    }
    case ActionKind::kDone:
      return "DONE";
  }
  return "DONE";
}

std::string Action::api_app() const {
  if (kind != ActionKind::kApi) return {};
  return api_name.substr(0, api_name.find('.'));
}

const std::string* Action::arg(std::string_view key) const {
  for (const auto& [k, v] : args)
    if (k == key) return &v;
  return nullptr;
}

namespace {

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  bool eat(std::string_view lit) {
    if (s_.substr(pos_, lit.size()) != lit) return false;
    pos_ += lit.size();
    return true;
  }
  bool at_end() const { return pos_ == s_.size(); }

  // 0 | [1-9][0-9]{0,5}, optionally signed
  std::optional<int> integer(bool allow_sign) {
    bool neg = false;
    if (allow_sign && eat("-")) neg = true;
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    std::size_t len = pos_ - start;
    if (len == 0 || len > 6) return std::nullopt;
    if (len > 1 && s_[start] == '0') return std::nullopt;
    int v = 0;
    for (std::size_t i = start; i < pos_; ++i) v = v * 10 + (s_[i] - '0');
    if (neg && v == 0) return std::nullopt;
    return neg ? -v : v;
  }

  // "..." with \" and \\ escapes; control characters rejected
  std::optional<std::string> string_lit() {
    if (!eat("\"")) return std::nullopt;
    std::string out;
    while (pos_ < s_.size()) {
      char c = s_[pos_++];
      if (static_cast<unsigned char>(c) < 0x20) return std::nullopt;
      if (c == '"') return out;
      if (c == '\\') {
        if (pos_ >= s_.size()) return std::nullopt;
        char e = s_[pos_++];
        if (e != '"' && e != '\\') return std::nullopt;
        out += e;
      } else {
        out += c;
      }
    }
    return std::nullopt;
  }

  // [a-z][a-z0-9_]*
  std::optional<std::string> ident() {
    std::size_t start = pos_;
    if (pos_ >= s_.size() || !std::islower(static_cast<unsigned char>(s_[pos_]))) return std::nullopt;
    ++pos_;
    while (pos_ < s_.size()) {
      unsigned char c = static_cast<unsigned char>(s_[pos_]);
      if (std::islower(c) || std::isdigit(c) || c == '_') {
        ++pos_;
      } else {
        break;
      }
    }
    return std::string(s_.substr(start, pos_ - start));
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::optional<Action> parse_action(std::string_view raw) {
  Cursor cur(raw);
  Action a;
  if (cur.eat("DONE")) {
    a.kind = ActionKind::kDone;
  } else if (cur.eat("CLICK(")) {
    auto c = cur.integer(false);
    if (!c || !cur.eat(",")) return std::nullopt;
    auto r = cur.integer(false);
    if (!r || !cur.eat(")")) return std::nullopt;
    a = Action::click(*c, *r);
  } else if (cur.eat("TYPE(")) {
    auto s = cur.string_lit();
    if (!s || !cur.eat(")")) return std::nullopt;
    a = Action::type(*s);
  } else if (cur.eat("KEY(")) {
    auto s = cur.string_lit();
    if (!s || s->empty() || !cur.eat(")")) return std::nullopt;
    a = Action::key(*s);
  } else if (cur.eat("SCROLL(")) {
    auto n = cur.integer(true);
    if (!n || !cur.eat(")")) return std::nullopt;
    a = Action::scroll(*n);
  } else if (cur.eat("API ")) {
    auto app = cur.ident();
    if (!app || !cur.eat(".")) return std::nullopt;
    auto verb = cur.ident();
    if (!verb || !cur.eat("(")) return std::nullopt;
    ApiArgs args;
    if (!cur.eat(")")) {
      while (true) {
        auto k = cur.ident();
        if (!k || !cur.eat("=")) return std::nullopt;
        auto v = cur.string_lit();
        if (!v) return std::nullopt;
        if (std::any_of(args.begin(), args.end(), [&](const auto& kv) { return kv.first == *k; }))
          return std::nullopt;
        args.emplace_back(*k, *v);
        if (cur.eat(")")) break;
        if (!cur.eat(",")) return std::nullopt;
      }
    }
    a = Action::api(*app + "." + *verb, std::move(args));
  } else {
    return std::nullopt;
  }
  if (!cur.at_end()) return std::nullopt;
  return a;
}

std::string_view action_grammar_ebnf() {
  return R"ebnf(action   = click | type | key | scroll | api | "DONE" ;
click    = "CLICK(" uint "," uint ")" ;
type     = "TYPE(" string ")" ;
key      = "KEY(" nonempty_string ")" ;
scroll   = "SCROLL(" int ")" ;
api      = "API " ident "." ident "(" [ arg { "," arg } ] ")" ;
arg      = ident "=" string ;           (* keys unique within one call *)
ident    = lower { lower | digit | "_" } ;
uint     = "0" | nzdigit { digit } ;     (* at most 6 digits *)
int      = uint | "-" nzdigit { digit } ;
string   = '"' { char | '\"' | '\\' } '"' ; (* char: any byte >= 0x20 except '"' and '\' *)
lower    = "a" .. "z" ;
digit    = "0" .. "9" ;
nzdigit  = "1" .. "9" ;
)ebnf";
}

}  // namespace deskgrid
