#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deskgrid {

enum class ActionKind { kClick, kType, kKey, kScroll, kApi, kDone };

const char* action_kind_name(ActionKind kind);

using ApiArgs = std::vector<std::pair<std::string, std::string>>;

/// One agent action in the hybrid API-GUI space.
///
/// Canonical single-line grammar (see docs/action_grammar.ebnf):
///   CLICK(c,r) | TYPE("text") | KEY("combo") | SCROLL(n)
///   | API app.verb(key="value",...) | DONE
struct Action {
  ActionKind kind = ActionKind::kDone;
  int x = 0;
  int y = 0;
  int delta = 0;
  std::string text;      // TYPE payload or KEY combo
  std::string api_name;  // "app.verb"
  ApiArgs args;          // ordered; keys unique

  static Action click(int col, int row);
  static Action type(std::string text);
  static Action key(std::string combo);
  static Action scroll(int delta);
  static Action api(std::string name, ApiArgs args);
  static Action done();

  /// Canonical text. parse_action(a.to_string()) == a for every valid action.
  std::string to_string() const;

  /// For API actions, the "app" prefix of the name; empty otherwise.
  std::string api_app() const;
  const std::string* arg(std::string_view key) const;

  friend bool operator==(const Action&, const Action&) = default;
};

/// Strict parser for the published grammar. Returns nullopt for anything the
/// grammar does not produce (no optional whitespace, no duplicate keys).
std::optional<Action> parse_action(std::string_view raw);

std::string quote(std::string_view s);

/// The machine-readable grammar shipped alongside the docs.
std::string_view action_grammar_ebnf();

}  // namespace deskgrid
