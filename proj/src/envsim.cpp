#include "deskgrid/envsim.hpp"

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>
#include <set>

#include "deskgrid/common.hpp"

namespace deskgrid {

namespace {

bool valid_segment_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
}

bool valid_path(std::string_view p) {
  if (p.size() < 2 || p.front() != '/' || p.back() == '/') return false;
  char prev = '/';
  for (std::size_t i = 1; i < p.size(); ++i) {
    char c = p[i];
    if (c == '/') {
      if (prev == '/') return false;
    } else if (!valid_segment_char(c)) {
      return false;
    }
    prev = c;
  }
  return true;
}

std::string parent_of(const std::string& p) {
  auto pos = p.rfind('/');
  return pos == 0 ? std::string() : p.substr(0, pos);
}

bool is_within(const std::string& path, const std::string& root) {
  return path == root || (path.size() > root.size() && starts_with(path, root) && path[root.size()] == '/');
}

std::optional<std::pair<int, int>> parse_range(std::string_view r) {
  auto colon = r.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto a = parse_cell(r.substr(0, colon));
  auto b = parse_cell(r.substr(colon + 1));
  if (!a || !b) return std::nullopt;
  return std::make_pair(*a, *b);
}

std::vector<int> range_cells(std::pair<int, int> r) {
  int r0 = std::min(r.first / kSheetSize, r.second / kSheetSize);
  int r1 = std::max(r.first / kSheetSize, r.second / kSheetSize);
  int c0 = std::min(r.first % kSheetSize, r.second % kSheetSize);
  int c1 = std::max(r.first % kSheetSize, r.second % kSheetSize);
  std::vector<int> out;
  for (int row = r0; row <= r1; ++row)
    for (int col = c0; col <= c1; ++col) out.push_back(row * kSheetSize + col);
  return out;
}

std::optional<long long> parse_int(const std::string& s) {
  if (s.empty() || s.size() > 15) return std::nullopt;
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return std::nullopt;
  for (std::size_t k = i; k < s.size(); ++k)
    if (!std::isdigit(static_cast<unsigned char>(s[k]))) return std::nullopt;
  return std::stoll(s);
}

std::string range_sum(const EnvState& st, std::string_view range) {
  auto r = parse_range(range);
  if (!r) return {};
  long long total = 0;
  for (int idx : range_cells(*r))
    if (auto v = parse_int(st.cells[idx])) total += *v;
  return std::to_string(total);
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

int entry_row(const EnvState& st, const std::string& path) {
  int row = 0;
  for (const auto& [p, _] : st.entries) {
    if (p == path) return row;
    ++row;
  }
  return -1;
}

const std::string* entry_at_row(const EnvState& st, int row) {
  int i = 0;
  for (const auto& [p, _] : st.entries) {
    if (i == row) return &p;
    ++i;
  }
  return nullptr;
}

bool make_parents(EnvState& st, const std::string& path) {
  std::string parent = parent_of(path);
  std::vector<std::string> chain;
  while (!parent.empty()) {
    auto it = st.entries.find(parent);
    if (it != st.entries.end()) {
      if (!it->second) return false;  // a file in the way
      break;
    }
    chain.push_back(parent);
    parent = parent_of(parent);
  }
  for (const auto& p : chain) st.entries[p] = true;
  return true;
}

// Shared by GUI prompts and API ops; returns an error message or empty.
std::string files_create(EnvState& st, const std::string& path, bool is_dir) {
  if (!valid_path(path)) return "invalid path " + path;
  if (st.entries.count(path)) return "already exists " + path;
  EnvState probe = st;
  if (!make_parents(probe, path)) return "parent is a file";
  probe.entries[path] = is_dir;
  st.entries = std::move(probe.entries);
  return {};
}

std::string files_delete(EnvState& st, const std::string& path) {
  if (!st.entries.count(path)) return "no such entry " + path;
  for (auto it = st.entries.begin(); it != st.entries.end();) {
    if (is_within(it->first, path)) {
      it = st.entries.erase(it);
    } else {
      ++it;
    }
  }
  return {};
}

std::string files_move(EnvState& st, const std::string& src, const std::string& dst) {
  if (!st.entries.count(src)) return "no such entry " + src;
  if (!valid_path(dst)) return "invalid path " + dst;
  if (st.entries.count(dst)) return "already exists " + dst;
  if (is_within(dst, src)) return "cannot move into itself";
  EnvState probe = st;
  std::map<std::string, bool> moved;
  for (auto it = probe.entries.begin(); it != probe.entries.end();) {
    if (is_within(it->first, src)) {
      moved[dst + it->first.substr(src.size())] = it->second;
      it = probe.entries.erase(it);
    } else {
      ++it;
    }
  }
  if (!make_parents(probe, dst)) return "parent is a file";
  for (auto& [p, d] : moved) probe.entries[p] = d;
  st.entries = std::move(probe.entries);
  return {};
}

std::string fact_kind_name(Fact::Kind k) {
  switch (k) {
    case Fact::Kind::kCell: return "cell";
    case Fact::Kind::kSum: return "sum";
    case Fact::Kind::kDir: return "dir";
    case Fact::Kind::kFile: return "file";
    case Fact::Kind::kAbsent: return "absent";
    case Fact::Kind::kLine: return "line";
    case Fact::Kind::kNoLine: return "noline";
    case Fact::Kind::kReplace: return "replace";
  }
  return "?";
}

// Editor facts are planned against the buffer and verified against the saved document.
bool fact_holds_in(const Fact& f, const EnvState& st, const std::vector<std::string>& doc) {
  switch (f.kind) {
    case Fact::Kind::kCell: {
      auto c = parse_cell(f.a);
      return c && st.cells[*c] == f.b;
    }
    case Fact::Kind::kSum: {
      auto c = parse_cell(f.a);
      return c && !st.cells[*c].empty() && st.cells[*c] == range_sum(st, f.b);
    }
    case Fact::Kind::kDir: {
      auto it = st.entries.find(f.a);
      return it != st.entries.end() && it->second;
    }
    case Fact::Kind::kFile: {
      auto it = st.entries.find(f.a);
      return it != st.entries.end() && !it->second;
    }
    case Fact::Kind::kAbsent:
      return st.entries.count(f.a) == 0;
    case Fact::Kind::kLine:
      return std::find(doc.begin(), doc.end(), f.a) != doc.end();
    case Fact::Kind::kNoLine:
      return std::find(doc.begin(), doc.end(), f.a) == doc.end();
    case Fact::Kind::kReplace: {
      bool has_new = false;
      for (const auto& l : doc) {
        if (l.find(f.a) != std::string::npos) return false;
        if (l.find(f.b) != std::string::npos) has_new = true;
      }
      return has_new;
    }
  }
  return false;
}

}  // namespace

// --- facts / tasks ----------------------------------------------------------

App Fact::app() const {
  switch (kind) {
    case Kind::kCell:
    case Kind::kSum: return App::kSheet;
    case Kind::kDir:
    case Kind::kFile:
    case Kind::kAbsent: return App::kFiles;
    default: return App::kEditor;
  }
}

std::string Fact::to_string() const {
  switch (kind) {
    case Kind::kCell:
    case Kind::kSum: return fact_kind_name(kind) + " " + a + "=" + b;
    case Kind::kReplace: return "replace " + a + ">" + b;
    default: return fact_kind_name(kind) + " " + a;
  }
}

std::string facts_to_string(const FactList& facts) {
  if (facts.empty()) return "-";
  std::vector<std::string> parts;
  for (const auto& f : facts) parts.push_back(f.to_string());
  return join(parts, " ; ");
}

FactList parse_facts(std::string_view text) {
  FactList out;
  if (trim(text) == "-" || trim(text).empty()) return out;
  for (const auto& raw : split(text, ';')) {
    std::string_view item = trim(raw);
    auto sp = item.find(' ');
    if (sp == std::string_view::npos) throw Error(Errc::kParse, "fact without argument: " + std::string(item));
    std::string kind(item.substr(0, sp));
    std::string arg(item.substr(sp + 1));
    Fact f;
    if (kind == "cell" || kind == "sum") {
      f.kind = kind == "cell" ? Fact::Kind::kCell : Fact::Kind::kSum;
      auto eq = arg.find('=');
      if (eq == std::string::npos) throw Error(Errc::kParse, "expected '=' in " + arg);
      f.a = arg.substr(0, eq);
      f.b = arg.substr(eq + 1);
      if (!parse_cell(f.a)) throw Error(Errc::kParse, "bad cell " + f.a);
      if (f.kind == Fact::Kind::kSum && !parse_range(f.b)) throw Error(Errc::kParse, "bad range " + f.b);
    } else if (kind == "replace") {
      f.kind = Fact::Kind::kReplace;
      auto gt = arg.find('>');
      if (gt == std::string::npos) throw Error(Errc::kParse, "expected '>' in " + arg);
      f.a = arg.substr(0, gt);
      f.b = arg.substr(gt + 1);
    } else {
      if (kind == "dir") f.kind = Fact::Kind::kDir;
      else if (kind == "file") f.kind = Fact::Kind::kFile;
      else if (kind == "absent") f.kind = Fact::Kind::kAbsent;
      else if (kind == "line") f.kind = Fact::Kind::kLine;
      else if (kind == "noline") f.kind = Fact::Kind::kNoLine;
      else throw Error(Errc::kParse, "unknown fact kind " + kind);
      f.a = arg;
      if (f.app() == App::kFiles && !valid_path(f.a)) throw Error(Errc::kParse, "bad path " + f.a);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<App> TaskSpec::apps() const {
  std::vector<App> out{app};
  auto add = [&](App a) {
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  };
  for (const auto& f : initial) add(f.app());
  for (const auto& f : goal) add(f.app());
  std::sort(out.begin() + 1, out.end());
  return out;
}

std::string TaskSpec::to_line() const {
  return task_id + "\t" + std::string(app_name(app)) + "\t" + std::string(domain_name(domain)) + "\t" +
         std::to_string(max_steps) + "\t" + verifier_id + "\t" + facts_to_string(initial) + "\t" +
         facts_to_string(goal);
}

TaskSpec TaskSpec::from_line(std::string_view line) {
  auto f = split(line, '\t');
  if (f.size() != 7) throw Error(Errc::kParse, "task record needs 7 tab-separated fields: " + std::string(line));
  TaskSpec t;
  t.task_id = f[0];
  auto app = parse_app(f[1]);
  auto dom = parse_domain(f[2]);
  if (!app || !dom) throw Error(Errc::kParse, "bad app/domain in " + f[0]);
  t.app = *app;
  t.domain = *dom;
  try {
    t.max_steps = std::stoi(f[3]);
  } catch (const std::exception&) {
    throw Error(Errc::kParse, "bad max_steps in " + f[0]);
  }
  t.verifier_id = f[4];
  t.initial = parse_facts(f[5]);
  t.goal = parse_facts(f[6]);
  return t;
}

// --- focus / state ------------------------------------------------------------

std::string Focus::to_string() const {
  switch (kind) {
    case FocusKind::kNone: return "none";
    case FocusKind::kTab: return "tab";
    case FocusKind::kCell: return "cell:" + cell_name(index);
    case FocusKind::kPrompt:
      return "prompt:" + op + ":" + (op == "rename" ? path + ":" : std::string()) + text;
    case FocusKind::kEntry: return "entry:" + path;
    case FocusKind::kConfirm: return "confirm:" + path;
    case FocusKind::kLine: return "line:" + std::to_string(index);
    case FocusKind::kLineEnd: return "line:end";
  }
  return "none";
}

Focus Focus::parse(std::string_view s) {
  Focus f;
  auto rest_after = [&](std::string_view prefix) { return std::string(s.substr(prefix.size())); };
  if (s == "none") return f;
  if (s == "tab") {
    f.kind = FocusKind::kTab;
  } else if (starts_with(s, "cell:")) {
    f.kind = FocusKind::kCell;
    auto c = parse_cell(rest_after("cell:"));
    if (!c) throw Error(Errc::kParse, "bad focus " + std::string(s));
    f.index = *c;
  } else if (starts_with(s, "prompt:")) {
    f.kind = FocusKind::kPrompt;
    std::string rest = rest_after("prompt:");
    auto c = rest.find(':');
    if (c == std::string::npos) throw Error(Errc::kParse, "bad focus " + std::string(s));
    f.op = rest.substr(0, c);
    rest = rest.substr(c + 1);
    if (f.op == "rename") {
      auto c2 = rest.find(':');
      if (c2 == std::string::npos) throw Error(Errc::kParse, "bad focus " + std::string(s));
      f.path = rest.substr(0, c2);
      rest = rest.substr(c2 + 1);
    }
    f.text = rest;
  } else if (starts_with(s, "entry:")) {
    f.kind = FocusKind::kEntry;
    f.path = rest_after("entry:");
  } else if (starts_with(s, "confirm:")) {
    f.kind = FocusKind::kConfirm;
    f.path = rest_after("confirm:");
  } else if (s == "line:end") {
    f.kind = FocusKind::kLineEnd;
  } else if (starts_with(s, "line:")) {
    f.kind = FocusKind::kLine;
    f.index = std::stoi(rest_after("line:"));
  } else {
    throw Error(Errc::kParse, "bad focus " + std::string(s));
  }
  return f;
}

bool EnvState::has_app(App app) const { return std::find(apps.begin(), apps.end(), app) != apps.end(); }

std::string EnvState::serialize() const {
  nlohmann::json j;
  std::vector<std::string> app_names;
  for (App a : apps) app_names.emplace_back(app_name(a));
  j["apps"] = app_names;
  j["active"] = app_name(active);
  j["focus"] = focus.to_string();
  j["cells"] = std::vector<std::string>(cells.begin(), cells.end());
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [p, d] : this->entries) entries.push_back({p, d});
  j["entries"] = entries;
  j["lines"] = lines;
  j["saved"] = saved;
  j["step_count"] = step_count;
  j["max_steps"] = max_steps;
  j["done"] = done;
  j["last_result"] = last_result;
  j["seed"] = seed;
  return j.dump();
}

EnvState EnvState::deserialize(std::string_view text) {
  EnvState st;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& n : j.at("apps")) st.apps.push_back(*parse_app(n.get<std::string>()));
    st.active = *parse_app(j.at("active").get<std::string>());
    st.focus = Focus::parse(j.at("focus").get<std::string>());
    auto cells = j.at("cells").get<std::vector<std::string>>();
    if (cells.size() != st.cells.size()) throw Error(Errc::kParse, "cell grid size");
    std::copy(cells.begin(), cells.end(), st.cells.begin());
    for (const auto& e : j.at("entries")) st.entries[e.at(0).get<std::string>()] = e.at(1).get<bool>();
    st.lines = j.at("lines").get<std::vector<std::string>>();
    st.saved = j.at("saved").get<std::vector<std::string>>();
    st.step_count = j.at("step_count").get<int>();
    st.max_steps = j.at("max_steps").get<int>();
    st.done = j.at("done").get<bool>();
    st.last_result = j.at("last_result").get<std::string>();
    st.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParse, std::string("env state: ") + e.what());
  }
  return st;
}

std::string_view action_mode_name(ActionMode mode) {
  return mode == ActionMode::kApiGui ? "api-gui" : "gui-only";
}

std::optional<ActionMode> parse_action_mode(std::string_view s) {
  if (s == "api-gui" || s == "api") return ActionMode::kApiGui;
  if (s == "gui-only" || s == "gui") return ActionMode::kGuiOnly;
  return std::nullopt;
}

std::optional<int> parse_cell(std::string_view name) {
  if (name.size() != 2) return std::nullopt;
  int col = name[0] - 'A';
  int row = name[1] - '1';
  if (col < 0 || col >= kSheetSize || row < 0 || row >= kSheetSize) return std::nullopt;
  return row * kSheetSize + col;
}

std::string cell_name(int index) {
  std::string s;
  s += static_cast<char>('A' + index % kSheetSize);
  s += static_cast<char>('1' + index / kSheetSize);
  return s;
}

bool fact_satisfied(const Fact& fact, const EnvState& state) { return fact_holds_in(fact, state, state.saved); }

bool has_verifier(std::string_view id) { return id == "fraction" || id == "strict"; }

double run_verifier(std::string_view id, const FactList& goal, const EnvState& state) {
  if (!has_verifier(id)) throw Error(Errc::kUnknownVerifier, std::string(id));
  if (goal.empty()) return 1.0;
  std::size_t met = 0;
  for (const auto& f : goal)
    if (fact_satisfied(f, state)) ++met;
  if (id == "strict") return met == goal.size() ? 1.0 : 0.0;
  return static_cast<double>(met) / static_cast<double>(goal.size());
}

// --- observation -------------------------------------------------------------------

std::string serialize_observation(const EnvState& st, const std::vector<std::string>& api_names) {
  std::string out = "app=" + std::string(app_name(st.active)) + "\n";
  out += "steps=" + std::to_string(st.step_count) + "/" + std::to_string(st.max_steps) + "\n";
  out += "focus=" + st.focus.to_string() + "\n";
  for (App app : kAllApps) {
    if (!st.has_app(app)) continue;
    if (app == App::kSheet) {
      bool empty = std::all_of(st.cells.begin(), st.cells.end(), [](const auto& c) { return c.empty(); });
      out += empty ? "grid 8x8 empty\n" : "grid 8x8\n";
      for (int i = 0; i < kSheetSize * kSheetSize; ++i)
        if (!st.cells[i].empty()) out += cell_name(i) + "=" + st.cells[i] + "\n";
    } else if (app == App::kFiles) {
      out += st.entries.empty() ? std::string("files empty\n") : "files " + std::to_string(st.entries.size()) + "\n";
      int row = 0;
      for (const auto& [p, d] : st.entries) out += std::to_string(row++) + ": " + (d ? "dir " : "file ") + p + "\n";
    } else {
      out += "editor " + std::to_string(st.lines.size()) + " lines " + (st.modified() ? "modified" : "saved") + "\n";
      for (std::size_t i = 0; i < st.lines.size(); ++i) out += "L" + std::to_string(i) + ": " + st.lines[i] + "\n";
    }
  }
  if (!st.last_result.empty()) out += "result: " + st.last_result + "\n";
  out += "apis: " + (api_names.empty() ? std::string("none") : join(api_names, " "));
  return out;
}

EnvState parse_observation(std::string_view observation) {
  EnvState st;
  bool editor_modified = false;
  for (const auto& raw : split(observation, '\n')) {
    std::string_view line = raw;
    if (starts_with(line, "app=")) {
      st.active = parse_app(line.substr(4)).value_or(App::kSheet);
    } else if (starts_with(line, "steps=")) {
      auto parts = split(line.substr(6), '/');
      if (parts.size() == 2) {
        st.step_count = std::stoi(parts[0]);
        st.max_steps = std::stoi(parts[1]);
      }
    } else if (starts_with(line, "focus=")) {
      st.focus = Focus::parse(line.substr(6));
    } else if (starts_with(line, "grid 8x8")) {
      st.apps.push_back(App::kSheet);
    } else if (starts_with(line, "files ")) {
      st.apps.push_back(App::kFiles);
    } else if (starts_with(line, "editor ")) {
      st.apps.push_back(App::kEditor);
      editor_modified = line.size() >= 8 && line.substr(line.size() - 8) == "modified";
    } else if (starts_with(line, "result: ")) {
      st.last_result = std::string(line.substr(8));
    } else if (starts_with(line, "apis: ")) {
      continue;
    } else if (!line.empty() && line[0] == 'L' && line.find(": ") != std::string_view::npos) {
      st.lines.emplace_back(line.substr(line.find(": ") + 2));
    } else if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) {
      auto colon = line.find(": ");
      auto rest = line.substr(colon + 2);
      if (starts_with(rest, "dir ")) st.entries[std::string(rest.substr(4))] = true;
      else if (starts_with(rest, "file ")) st.entries[std::string(rest.substr(5))] = false;
    } else if (line.size() > 3 && line[2] == '=') {
      if (auto c = parse_cell(line.substr(0, 2))) st.cells[*c] = std::string(line.substr(3));
    }
  }
  // The saved document is not observable while the buffer is modified.
  st.saved = editor_modified ? std::vector<std::string>{"\x01"} : st.lines;
  return st;
}

// --- ops ------------------------------------------------------------------------

OpResult apply_op(EnvState& st, const OpDef& op, const std::map<std::string, std::string>& slots, bool guarded) {
  auto fail = [&](const std::string& msg) -> OpResult {
    if (!guarded) throw std::runtime_error(op.id + ": " + msg);
    return {false, "error: " + msg};
  };
  auto slot = [&](const std::string& name) -> const std::string* {
    auto it = slots.find(name);
    return it == slots.end() ? nullptr : &it->second;
  };
  for (const auto& s : op.slots)
    if (!slot(s.name)) return fail("missing argument " + s.name);
  if (!st.has_app(op.app)) return fail(std::string(app_name(op.app)) + " is not open");

  const std::string& id = op.id;
  if (id == "sheet.set" || id == "sheet.get") {
    auto c = parse_cell(*slot("cell"));
    if (!c) return fail("bad cell " + *slot("cell"));
    if (id == "sheet.get") {
      st.last_result = cell_name(*c) + "=" + st.cells[*c];
      return {true, st.last_result};
    }
    st.cells[*c] = *slot("value");
    return {true, "ok"};
  }
  if (id == "sheet.fill_row" || id == "sheet.fill_col") {
    auto c = parse_cell(*slot("start"));
    if (!c) return fail("bad cell " + *slot("start"));
    auto values = split(*slot("values"), '|');
    int col = *c % kSheetSize, row = *c / kSheetSize;
    bool by_row = id == "sheet.fill_row";
    int end = (by_row ? col : row) + static_cast<int>(values.size());
    if (end > kSheetSize) return fail("values overflow the grid");
    for (std::size_t i = 0; i < values.size(); ++i) {
      int idx = by_row ? row * kSheetSize + col + static_cast<int>(i) : (row + static_cast<int>(i)) * kSheetSize + col;
      st.cells[idx] = values[i];
    }
    return {true, "ok"};
  }
  if (id == "sheet.sum") {
    auto r = parse_range(*slot("range"));
    auto t = parse_cell(*slot("target"));
    if (!r || !t) return fail("bad range or target");
    auto cells = range_cells(*r);
    if (std::find(cells.begin(), cells.end(), *t) != cells.end()) return fail("target inside range");
    st.cells[*t] = range_sum(st, *slot("range"));
    return {true, "ok"};
  }
  if (id == "sheet.clear") {
    auto r = parse_range(*slot("range"));
    if (!r) return fail("bad range " + *slot("range"));
    for (int idx : range_cells(*r)) st.cells[idx].clear();
    return {true, "ok"};
  }
  if (id == "files.mkdir" || id == "files.touch") {
    auto err = files_create(st, *slot("path"), id == "files.mkdir");
    return err.empty() ? OpResult{true, "ok"} : fail(err);
  }
  if (id == "files.delete") {
    auto err = files_delete(st, *slot("path"));
    return err.empty() ? OpResult{true, "ok"} : fail(err);
  }
  if (id == "files.move") {
    auto err = files_move(st, *slot("src"), *slot("dst"));
    return err.empty() ? OpResult{true, "ok"} : fail(err);
  }
  if (id == "editor.append") {
    if (slot("text")->empty()) return fail("empty line");
    st.lines.push_back(*slot("text"));
    st.saved = st.lines;
    return {true, "ok"};
  }
  if (id == "editor.replace") {
    const auto& from = *slot("old");
    const auto& to = *slot("new");
    if (from.empty()) return fail("empty pattern");
    bool hit = false;
    for (auto& l : st.lines) {
      if (l.find(from) != std::string::npos) {
        l = replace_all(l, from, to);
        hit = true;
      }
    }
    if (!hit) return fail("pattern not found " + from);
    st.saved = st.lines;
    return {true, "ok"};
  }
  if (id == "editor.delete_line") {
    const auto& text = *slot("text");
    auto before = st.lines.size();
    st.lines.erase(std::remove(st.lines.begin(), st.lines.end(), text), st.lines.end());
    if (st.lines.size() == before) return fail("no such line");
    st.saved = st.lines;
    if (st.focus.kind == FocusKind::kLine) st.focus = Focus{};
    return {true, "ok"};
  }
  return fail("unknown op " + id);
}

// --- env ------------------------------------------------------------------------

void validate_task(const TaskSpec& task) {
  if (!has_verifier(task.verifier_id)) throw Error(Errc::kUnknownVerifier, task.verifier_id);
  if (task.task_id.empty()) throw Error(Errc::kInvalidTask, "empty task id");
  if (task.max_steps < 1) throw Error(Errc::kInvalidTask, task.task_id + ": max_steps < 1");
  if (task.goal.empty()) throw Error(Errc::kInvalidTask, task.task_id + ": empty goal");
  for (const auto& f : task.initial) {
    if (f.kind == Fact::Kind::kSum || f.kind == Fact::Kind::kAbsent || f.kind == Fact::Kind::kNoLine ||
        f.kind == Fact::Kind::kReplace)
      throw Error(Errc::kInvalidTask, task.task_id + ": initial state cannot contain " + f.to_string());
  }
}

EnvState initial_state(const TaskSpec& task, std::uint64_t seed) {
  EnvState st;
  st.apps = task.apps();
  st.active = task.app;
  st.max_steps = task.max_steps;
  st.seed = seed;
  for (const auto& f : task.initial) {
    switch (f.kind) {
      case Fact::Kind::kCell: st.cells[*parse_cell(f.a)] = f.b; break;
      case Fact::Kind::kDir:
      case Fact::Kind::kFile:
        if (!files_create(st, f.a, f.kind == Fact::Kind::kDir).empty())
          throw Error(Errc::kInvalidTask, task.task_id + ": cannot create " + f.a);
        break;
      case Fact::Kind::kLine: st.lines.push_back(f.a); break;
      default: break;
    }
  }
  st.saved = st.lines;
  return st;
}

Env::Env(TaskSpec task, std::uint64_t seed, ActionMode mode, const ApiRegistry& registry)
    : task_(std::move(task)), mode_(mode), registry_(&registry) {
  validate_task(task_);
  state_ = initial_state(task_, seed);
}

Env create_env(const TaskSpec& task, std::uint64_t seed, ActionMode mode, const ApiRegistry& registry) {
  return Env(task, seed, mode, registry);
}

std::vector<std::string> Env::api_names() const {
  if (mode_ == ActionMode::kGuiOnly) return {};
  std::vector<std::string> out;
  for (const auto& name : registry_->tested_names()) {
    auto app = parse_app(name.substr(0, name.find('.')));
    if (app && state_.has_app(*app)) out.push_back(name);
  }
  return out;
}

std::string Env::observation() const { return serialize_observation(state_, api_names()); }

double Env::verify() const { return run_verifier(task_.verifier_id, task_.goal, state_); }

StepOutcome Env::step(std::string_view raw_text) {
  if (state_.done) throw Error(Errc::kEpisodeFinished, task_.task_id);
  StepOutcome out;
  state_.last_result.clear();
  auto parsed = parse_action(raw_text);
  if (!parsed) {
    out.malformed = true;
    out.message = "malformed action";
  } else if (parsed->kind == ActionKind::kDone) {
    out.accepted = true;
    state_.done = true;
  } else {
    std::string msg;
    out.accepted = apply(*parsed, msg);
    out.message = msg;
  }
  ++state_.step_count;
  if (state_.step_count >= state_.max_steps) state_.done = true;
  out.done = state_.done;
  out.observation = observation();
  return out;
}

bool Env::apply(const Action& a, std::string& message) {
  EnvState& st = state_;
  auto reject = [&](const char* why) {
    message = why;
    return false;
  };
  switch (a.kind) {
    case ActionKind::kApi:
      return apply_api(a, message);
    case ActionKind::kScroll:
      return reject("nothing to scroll");
    case ActionKind::kClick: {
      if (a.x < 0 || a.x >= kScreenCols || a.y < 0 || a.y >= kScreenRows) return reject("outside the screen");
      if (a.x == kTabColumn) {
        if (a.y >= static_cast<int>(kAllApps.size())) return reject("no widget");
        App target = kAllApps[a.y];
        if (!st.has_app(target) || target == st.active) return reject("tab unavailable");
        st.active = target;
        st.focus = Focus{FocusKind::kTab};
        return true;
      }
      if (st.active == App::kSheet) {
        if (a.x >= kSheetSize || a.y >= kSheetSize) return reject("no widget");
        st.focus = Focus{FocusKind::kCell, a.y * kSheetSize + a.x};
        return true;
      }
      if (st.active == App::kFiles) {
        if (a.y == kToolbarRow) {
          if (a.x == kButtonNewFolder || a.x == kButtonNewFile) {
            st.focus = Focus{FocusKind::kPrompt, 0, a.x == kButtonNewFolder ? "mkdir" : "touch"};
            return true;
          }
          if (a.x == kButtonDelete || a.x == kButtonRename) {
            if (st.focus.kind != FocusKind::kEntry) return reject("nothing selected");
            std::string path = st.focus.path;
            st.focus = a.x == kButtonDelete ? Focus{FocusKind::kConfirm, 0, "", path}
                                            : Focus{FocusKind::kPrompt, 0, "rename", path};
            return true;
          }
          return reject("no widget");
        }
        const std::string* path = a.x < kSheetSize ? entry_at_row(st, a.y) : nullptr;
        if (!path) return reject("no widget");
        st.focus = Focus{FocusKind::kEntry, 0, "", *path};
        return true;
      }
      // editor: any text column selects a line; one past the end opens a new line
      int n = static_cast<int>(st.lines.size());
      if (a.y < n) {
        st.focus = Focus{FocusKind::kLine, a.y};
        return true;
      }
      if (a.y == n) {
        st.focus = Focus{FocusKind::kLineEnd};
        return true;
      }
      return reject("no widget");
    }
    case ActionKind::kType: {
      if (a.text.empty()) return reject("nothing typed");
      if (st.focus.kind == FocusKind::kCell && st.active == App::kSheet) {
        st.cells[st.focus.index] = a.text;
        return true;
      }
      if (st.focus.kind == FocusKind::kPrompt && st.active == App::kFiles) {
        st.focus.text = a.text;
        return true;
      }
      if (st.active == App::kEditor) {
        if (st.focus.kind == FocusKind::kLine && st.focus.index < static_cast<int>(st.lines.size())) {
          st.lines[st.focus.index] = a.text;
          return true;
        }
        if (st.focus.kind == FocusKind::kLineEnd) {
          st.lines.push_back(a.text);
          st.focus = Focus{FocusKind::kLine, static_cast<int>(st.lines.size()) - 1};
          return true;
        }
      }
      return reject("no text field focused");
    }
    case ActionKind::kKey: {
      const std::string& k = a.text;
      if (k == "enter" && st.active == App::kFiles) {
        if (st.focus.kind == FocusKind::kConfirm) {
          files_delete(st, st.focus.path);
          st.focus = Focus{};
          return true;
        }
        if (st.focus.kind == FocusKind::kPrompt && !st.focus.text.empty()) {
          std::string err = st.focus.op == "rename" ? files_move(st, st.focus.path, st.focus.text)
                                                    : files_create(st, st.focus.text, st.focus.op == "mkdir");
          if (!err.empty()) {
            message = err;
            return false;
          }
          st.focus = Focus{};
          return true;
        }
        return reject("nothing to confirm");
      }
      if (k == "escape" && st.active == App::kFiles &&
          (st.focus.kind == FocusKind::kPrompt || st.focus.kind == FocusKind::kConfirm)) {
        st.focus = Focus{};
        return true;
      }
      if (k == "delete") {
        if (st.active == App::kSheet && st.focus.kind == FocusKind::kCell && !st.cells[st.focus.index].empty()) {
          st.cells[st.focus.index].clear();
          return true;
        }
        if (st.active == App::kEditor && st.focus.kind == FocusKind::kLine &&
            st.focus.index < static_cast<int>(st.lines.size())) {
          st.lines.erase(st.lines.begin() + st.focus.index);
          st.focus = Focus{};
          return true;
        }
        return reject("nothing to delete");
      }
      if (k == "ctrl+s" && st.active == App::kEditor && st.modified()) {
        st.saved = st.lines;
        return true;
      }
      return reject("key has no effect");
    }
    case ActionKind::kDone:
      return true;
  }
  return false;
}

bool Env::apply_api(const Action& a, std::string& message) {
  if (mode_ == ActionMode::kGuiOnly) {
    message = "API calls disabled";
    return false;
  }
  if (!registry_->contains(a.api_name) || registry_->status(a.api_name) != ApiStatus::kTested) {
    message = "unknown API " + a.api_name;
    return false;
  }
  const ApiArtifact* art = registry_->artifact(a.api_name);
  const OpDef* op = art ? find_op(art->op) : nullptr;
  if (!op) {
    message = "API has no implementation";
    return false;
  }
  std::map<std::string, std::string> slots;
  for (const auto& [key, value] : a.args) {
    auto it = std::find_if(art->bindings.begin(), art->bindings.end(), [&](const auto& b) { return b.first == key; });
    if (it == art->bindings.end()) {
      message = "unexpected argument " + key;
      return false;
    }
    slots[it->second] = value;
  }
  try {
    EnvState scratch = state_;
    auto res = apply_op(scratch, *op, slots, art->error_handling);
    message = res.message;
    if (res.accepted) state_ = std::move(scratch);
    return res.accepted;
  } catch (const std::exception& e) {
    message = std::string("runtime error: ") + e.what();
    return false;
  }
}

// --- candidates -------------------------------------------------------------------

namespace {

struct Vocab {
  std::vector<int> cells;
  std::vector<std::string> values;
  std::vector<std::string> paths;
  std::vector<std::string> texts;
};

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

Vocab goal_vocab(const FactList& goal, const EnvState& st) {
  Vocab v;
  for (const auto& f : goal) {
    switch (f.kind) {
      case Fact::Kind::kCell:
        push_unique(v.cells, *parse_cell(f.a));
        if (!f.b.empty()) push_unique(v.values, f.b);
        break;
      case Fact::Kind::kSum:
        push_unique(v.cells, *parse_cell(f.a));
        push_unique(v.values, range_sum(st, f.b));
        break;
      case Fact::Kind::kDir:
      case Fact::Kind::kFile:
      case Fact::Kind::kAbsent:
        push_unique(v.paths, f.a);
        break;
      case Fact::Kind::kLine:
        push_unique(v.texts, f.a);
        break;
      case Fact::Kind::kNoLine:
        break;
      case Fact::Kind::kReplace:
        for (const auto& l : st.lines)
          if (l.find(f.a) != std::string::npos) push_unique(v.texts, replace_all(l, f.a, f.b));
        break;
    }
  }
  return v;
}

// Goal-derived argument tuples for one op, in slot order; a few deliberately
// wrong pairings are included the way a proposal model would emit them.
std::vector<std::vector<std::string>> op_bindings(const std::string& op, const FactList& goal, const EnvState& st) {
  std::vector<std::vector<std::string>> out;
  auto add = [&](std::vector<std::string> t) { push_unique(out, t); };
  std::vector<const Fact*> cells, sums, dirs, files, absents, lines, nolines, replaces;
  for (const auto& f : goal) {
    switch (f.kind) {
      case Fact::Kind::kCell: cells.push_back(&f); break;
      case Fact::Kind::kSum: sums.push_back(&f); break;
      case Fact::Kind::kDir: dirs.push_back(&f); break;
      case Fact::Kind::kFile: files.push_back(&f); break;
      case Fact::Kind::kAbsent: absents.push_back(&f); break;
      case Fact::Kind::kLine: lines.push_back(&f); break;
      case Fact::Kind::kNoLine: nolines.push_back(&f); break;
      case Fact::Kind::kReplace: replaces.push_back(&f); break;
    }
  }
  if (op == "sheet.set") {
    for (const auto* f : cells)
      if (!f->b.empty()) add({f->a, f->b});
    for (const auto* f : sums) add({f->a, range_sum(st, f->b)});
    if (cells.size() >= 2 && !cells[1]->b.empty()) add({cells[0]->a, cells[1]->b});
  } else if (op == "sheet.get") {
    for (std::size_t i = 0; i < cells.size() && i < 2; ++i) add({cells[i]->a});
  } else if (op == "sheet.fill_row" || op == "sheet.fill_col") {
    bool by_row = op == "sheet.fill_row";
    // maximal runs of adjacent non-empty goal cells along the fill direction
    std::map<int, std::string> want;
    for (const auto* f : cells)
      if (!f->b.empty()) want[*parse_cell(f->a)] = f->b;
    int step = by_row ? 1 : kSheetSize;
    for (const auto& [idx, val] : want) {
      bool starts = by_row ? (idx % kSheetSize == 0 || !want.count(idx - 1)) : (idx < kSheetSize || !want.count(idx - step));
      if (!starts) continue;
      std::vector<std::string> run;
      int cur = idx;
      while (want.count(cur) && (by_row ? cur / kSheetSize == idx / kSheetSize : cur < kSheetSize * kSheetSize)) {
        run.push_back(want[cur]);
        cur += step;
      }
      if (run.size() >= 2) add({cell_name(idx), join(run, "|")});
    }
  } else if (op == "sheet.sum") {
    for (const auto* f : sums) add({f->b, f->a});
  } else if (op == "sheet.clear") {
    for (const auto* f : sums) add({f->b});
    std::vector<int> empties;
    for (const auto* f : cells)
      if (f->b.empty()) empties.push_back(*parse_cell(f->a));
    if (!empties.empty())
      add({cell_name(*std::min_element(empties.begin(), empties.end())) + ":" +
           cell_name(*std::max_element(empties.begin(), empties.end()))});
  } else if (op == "files.mkdir") {
    for (const auto* f : dirs) add({f->a});
    for (const auto* f : files) add({f->a});
  } else if (op == "files.touch") {
    for (const auto* f : files) add({f->a});
    for (const auto* f : dirs) add({f->a});
  } else if (op == "files.delete") {
    for (const auto* f : absents) add({f->a});
    for (const auto& [p, _] : st.entries) {
      bool targeted = std::any_of(absents.begin(), absents.end(), [&](const Fact* f) { return f->a == p; });
      if (!targeted) {
        add({p});
        break;
      }
    }
  } else if (op == "files.move") {
    for (const auto* a : absents) {
      for (const auto* f : files) add({a->a, f->a});
      for (const auto* f : dirs) add({a->a, f->a});
    }
  } else if (op == "editor.append") {
    for (const auto* f : lines) add({f->a});
  } else if (op == "editor.replace") {
    for (const auto* f : replaces) {
      add({f->a, f->b});
      add({f->b, f->a});
    }
  } else if (op == "editor.delete_line") {
    for (const auto* f : nolines) add({f->a});
    for (const auto* f : lines) add({f->a});
  }
  if (out.size() > 4) out.resize(4);
  return out;
}

}  // namespace

std::vector<Action> Env::candidates() const {
  const EnvState& st = state_;
  const Vocab v = goal_vocab(task_.goal, st);
  std::vector<Action> out;
  auto add = [&](Action a) {
    if (out.size() < kMaxCandidates && std::find(out.begin(), out.end(), a) == out.end()) out.push_back(std::move(a));
  };
  add(Action::done());
  for (std::size_t i = 0; i < kAllApps.size(); ++i)
    if (st.has_app(kAllApps[i]) && kAllApps[i] != st.active) add(Action::click(kTabColumn, static_cast<int>(i)));

  if (mode_ == ActionMode::kApiGui) {
    for (const auto& name : api_names()) {
      const ApiArtifact* art = registry_->artifact(name);
      if (!art) continue;
      const OpDef* op = find_op(art->op);
      if (!op) continue;
      for (const auto& tuple : op_bindings(op->id, task_.goal, st)) {
        ApiArgs args;
        for (std::size_t s = 0; s < op->slots.size() && s < tuple.size(); ++s) {
          for (const auto& [param, slot] : art->bindings)
            if (slot == op->slots[s].name) args.emplace_back(param, tuple[s]);
        }
        add(Action::api(name, std::move(args)));
      }
    }
  }

  switch (st.active) {
    case App::kSheet:
      for (int c : v.cells) add(Action::click(c % kSheetSize, c / kSheetSize));
      for (const auto& val : v.values) add(Action::type(val));
      add(Action::key("delete"));
      break;
    case App::kFiles: {
      for (int b : {kButtonNewFolder, kButtonNewFile, kButtonDelete, kButtonRename}) add(Action::click(b, kToolbarRow));
      int rows = std::min<int>(static_cast<int>(st.entries.size()), 12);
      for (int r = 0; r < rows; ++r) add(Action::click(0, r));
      for (const auto& p : v.paths) add(Action::type(p));
      add(Action::key("enter"));
      add(Action::key("escape"));
      break;
    }
    case App::kEditor: {
      int rows = std::min<int>(static_cast<int>(st.lines.size()), 12);
      for (int r = 0; r <= rows; ++r) add(Action::click(0, r));
      for (const auto& t : v.texts) add(Action::type(t));
      add(Action::key("ctrl+s"));
      add(Action::key("delete"));
      break;
    }
  }
  add(Action::scroll(1));
  return out;
}

// --- rewards -------------------------------------------------------------------------

std::vector<double> assign_rewards(Trajectory& traj, double accuracy) {
  if (!traj.complete) throw Error(Errc::kIncompleteTrajectory, traj.task_id);
  const bool solved = accuracy == 1.0;
  traj.accuracy = accuracy;
  traj.success = solved;
  std::vector<double> rewards;
  rewards.reserve(traj.steps.size());
  for (auto& s : traj.steps) {
    s.reward = solved && s.well_formed && s.accepted ? 1.0 : 0.0;
    s.reward_assigned = true;
    rewards.push_back(s.reward);
  }
  return rewards;
}

// --- scripted solver -------------------------------------------------------------

namespace {

bool in_expertise(App app, const std::vector<App>& expertise) {
  return expertise.empty() || std::find(expertise.begin(), expertise.end(), app) != expertise.end();
}

Action tab_click(App app) {
  for (std::size_t i = 0; i < kAllApps.size(); ++i)
    if (kAllApps[i] == app) return Action::click(kTabColumn, static_cast<int>(i));
  return Action::done();
}

// For an unmet exists-fact, an unmet absent-fact whose entry can be moved onto it.
const Fact* move_source(const FactList& goal, const EnvState& st, const Fact& target) {
  for (const auto& f : goal) {
    if (f.kind != Fact::Kind::kAbsent || fact_holds_in(f, st, st.saved)) continue;
    auto it = st.entries.find(f.a);
    if (it == st.entries.end()) continue;
    if (it->second == (target.kind == Fact::Kind::kDir)) return &f;
  }
  return nullptr;
}

const Fact* move_target(const FactList& goal, const EnvState& st, const Fact& absent) {
  auto it = st.entries.find(absent.a);
  if (it == st.entries.end()) return nullptr;
  for (const auto& f : goal) {
    if ((f.kind == Fact::Kind::kDir || f.kind == Fact::Kind::kFile) && !fact_holds_in(f, st, st.saved) &&
        (f.kind == Fact::Kind::kDir) == it->second)
      return &f;
  }
  return nullptr;
}

std::optional<Action> api_step(const FactList& goal, const EnvState& st, const Fact& f) {
  switch (f.kind) {
    case Fact::Kind::kCell: {
      int idx = *parse_cell(f.a);
      if (f.b.empty()) {
        // clear the span of unmet empty-value cells that starts here
        int last = idx;
        for (const auto& g : goal)
          if (g.kind == Fact::Kind::kCell && g.b.empty() && !fact_holds_in(g, st, st.saved))
            last = std::max(last, *parse_cell(g.a));
        return Action::api("sheet.clear_range", {{"range", f.a + ":" + cell_name(last)}});
      }
      std::map<int, std::string> want;
      for (const auto& g : goal)
        if (g.kind == Fact::Kind::kCell && !g.b.empty()) want[*parse_cell(g.a)] = g.b;
      for (bool by_row : {true, false}) {
        int step = by_row ? 1 : kSheetSize;
        int start = idx;
        while (want.count(start - step) && (by_row ? (start % kSheetSize) > 0 : start >= kSheetSize)) start -= step;
        std::vector<std::string> run;
        bool any_unmet = false;
        for (int cur = start; want.count(cur) && (by_row ? cur / kSheetSize == start / kSheetSize : cur < 64);
             cur += step) {
          run.push_back(want[cur]);
          if (st.cells[cur] != want[cur]) any_unmet = true;
        }
        if (run.size() >= 2 && any_unmet)
          return Action::api(by_row ? "sheet.fill_row" : "sheet.fill_col",
                             {{"start", cell_name(start)}, {"values", join(run, "|")}});
      }
      return Action::api("sheet.set_cell", {{"cell", f.a}, {"value", f.b}});
    }
    case Fact::Kind::kSum:
      return Action::api("sheet.sum_range", {{"range", f.b}, {"target", f.a}});
    case Fact::Kind::kDir:
    case Fact::Kind::kFile:
      if (const Fact* src = move_source(goal, st, f)) return Action::api("files.move", {{"src", src->a}, {"dst", f.a}});
      return Action::api(f.kind == Fact::Kind::kDir ? "files.mkdir" : "files.touch", {{"path", f.a}});
    case Fact::Kind::kAbsent:
      if (const Fact* dst = move_target(goal, st, f)) return Action::api("files.move", {{"src", f.a}, {"dst", dst->a}});
      return Action::api("files.delete", {{"path", f.a}});
    case Fact::Kind::kLine:
      return Action::api("editor.append_line", {{"text", f.a}});
    case Fact::Kind::kNoLine:
      return Action::api("editor.delete_line", {{"text", f.a}});
    case Fact::Kind::kReplace:
      return Action::api("editor.replace", {{"old", f.a}, {"new", f.b}});
  }
  return std::nullopt;
}

std::optional<Action> gui_step(const FactList& goal, const EnvState& st, const Fact& f) {
  if (st.active != f.app()) return tab_click(f.app());
  const Focus& focus = st.focus;
  switch (f.kind) {
    case Fact::Kind::kCell:
    case Fact::Kind::kSum: {
      int idx = *parse_cell(f.a);
      std::string value = f.kind == Fact::Kind::kSum ? range_sum(st, f.b) : f.b;
      if (focus.kind != FocusKind::kCell || focus.index != idx) return Action::click(idx % kSheetSize, idx / kSheetSize);
      return value.empty() ? Action::key("delete") : Action::type(value);
    }
    case Fact::Kind::kDir:
    case Fact::Kind::kFile: {
      if (const Fact* src = move_source(goal, st, f)) {
        if (focus.kind == FocusKind::kPrompt && focus.op == "rename" && focus.path == src->a)
          return focus.text == f.a ? Action::key("enter") : Action::type(f.a);
        if (focus.kind == FocusKind::kEntry && focus.path == src->a) return Action::click(kButtonRename, kToolbarRow);
        return Action::click(0, entry_row(st, src->a));
      }
      std::string op = f.kind == Fact::Kind::kDir ? "mkdir" : "touch";
      if (focus.kind == FocusKind::kPrompt && focus.op == op)
        return focus.text == f.a ? Action::key("enter") : Action::type(f.a);
      return Action::click(f.kind == Fact::Kind::kDir ? kButtonNewFolder : kButtonNewFile, kToolbarRow);
    }
    case Fact::Kind::kAbsent: {
      if (const Fact* dst = move_target(goal, st, f)) return gui_step(goal, st, *dst);
      if (focus.kind == FocusKind::kConfirm && focus.path == f.a) return Action::key("enter");
      if (focus.kind == FocusKind::kEntry && focus.path == f.a) return Action::click(kButtonDelete, kToolbarRow);
      return Action::click(0, entry_row(st, f.a));
    }
    case Fact::Kind::kLine:
      if (focus.kind == FocusKind::kLineEnd) return Action::type(f.a);
      return Action::click(0, static_cast<int>(st.lines.size()));
    case Fact::Kind::kNoLine: {
      int r = static_cast<int>(std::find(st.lines.begin(), st.lines.end(), f.a) - st.lines.begin());
      if (focus.kind == FocusKind::kLine && focus.index == r) return Action::key("delete");
      return Action::click(0, r);
    }
    case Fact::Kind::kReplace: {
      int r = 0;
      for (; r < static_cast<int>(st.lines.size()); ++r)
        if (st.lines[r].find(f.a) != std::string::npos) break;
      if (r == static_cast<int>(st.lines.size())) return std::nullopt;
      if (focus.kind == FocusKind::kLine && focus.index == r) return Action::type(replace_all(st.lines[r], f.a, f.b));
      return Action::click(0, r);
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<Action> plan_next(const FactList& goal, const EnvState& st, ActionMode mode,
                                const std::vector<App>& expertise) {
  bool editor_goal = std::any_of(goal.begin(), goal.end(), [](const Fact& f) { return f.app() == App::kEditor; });
  bool all_saved = std::all_of(goal.begin(), goal.end(), [&](const Fact& f) { return fact_holds_in(f, st, st.saved); });
  if (all_saved && !(editor_goal && st.modified())) return Action::done();

  for (const auto& f : goal) {
    if (!in_expertise(f.app(), expertise)) continue;
    bool in_buffer = fact_holds_in(f, st, st.lines);
    bool in_saved = fact_holds_in(f, st, st.saved);
    if (in_saved && (f.app() != App::kEditor || in_buffer)) continue;
    if (f.app() == App::kEditor && in_buffer) continue;  // handled by the save below
    return mode == ActionMode::kApiGui ? api_step(goal, st, f) : gui_step(goal, st, f);
  }
  // Remaining editor work is an unsaved buffer that already satisfies the goal.
  if (st.has_app(App::kEditor) && st.modified() && in_expertise(App::kEditor, expertise)) {
    if (st.active != App::kEditor) return tab_click(App::kEditor);
    return Action::key("ctrl+s");
  }
  return std::nullopt;
}

std::vector<Action> scripted_solution(const TaskSpec& task, ActionMode mode) {
  Env env(task, 0, mode);
  std::vector<Action> out;
  while (!env.done()) {
    auto a = plan_next(task.goal, env.state(), mode);
    if (!a) break;
    out.push_back(*a);
    env.step(*a);
  }
  return out;
}

// --- suite --------------------------------------------------------------------------

std::optional<SuiteProfile> parse_suite_profile(std::string_view s) {
  if (s == "smoke") return SuiteProfile::kSmoke;
  if (s == "ablation") return SuiteProfile::kAblation;
  return std::nullopt;
}

namespace {

struct SuiteRow {
  const char* id;
  App app;
  Domain domain;
  const char* initial;
  const char* goal;
};

// clang-format off
const SuiteRow kSuiteRows[] = {
    {"os01", App::kFiles, Domain::kOS, "-", "dir /docs"},
    {"os02", App::kFiles, Domain::kOS, "dir /projects", "dir /projects/alpha"},
    {"os03", App::kFiles, Domain::kOS, "dir /notes", "file /notes/todo.txt"},
    {"os04", App::kFiles, Domain::kOS, "dir /tmp ; dir /tmp/cache ; file /tmp/cache/a.bin", "absent /tmp/cache"},
    {"os05", App::kFiles, Domain::kOS, "file /old.log ; dir /logs", "absent /old.log ; file /logs/old.log"},
    {"os06", App::kFiles, Domain::kOS, "-", "dir /music ; dir /photos"},
    {"os07", App::kFiles, Domain::kOS, "file /draft.txt", "absent /draft.txt ; file /final.txt"},
    {"os08", App::kFiles, Domain::kOS, "dir /src", "file /src/main.cpp ; file /src/util.cpp"},
    {"os09", App::kFiles, Domain::kOS, "file /a.tmp ; file /b.tmp ; file /keep.txt", "absent /a.tmp ; absent /b.tmp"},
    {"os10", App::kFiles, Domain::kOS, "file /report.pdf", "dir /backup ; absent /report.pdf ; file /backup/report.pdf"},

    {"of01", App::kSheet, Domain::kOffice, "-", "cell A1=Month ; cell B1=Total ; cell C1=Avg"},
    {"of02", App::kSheet, Domain::kOffice, "cell A1=Score", "cell A2=10 ; cell A3=20 ; cell A4=30"},
    {"of03", App::kSheet, Domain::kOffice, "cell B1=4 ; cell B2=5 ; cell B3=6", "sum B4=B1:B3"},
    {"of04", App::kSheet, Domain::kOffice, "-", "cell A1=Name ; cell B1=Score"},
    {"of05", App::kSheet, Domain::kOffice, "-", "cell D1=Q1 ; cell D2=Q2 ; cell D3=Q3 ; cell D4=Q4"},
    {"of06", App::kSheet, Domain::kOffice, "cell C1=1 ; cell C2=2 ; cell C3=3 ; cell C4=4", "sum C5=C1:C4 ; cell B5=Total"},
    {"of07", App::kSheet, Domain::kOffice, "-", "cell A1=Item ; cell B1=Qty ; cell A2=Pen ; cell B2=3"},
    {"of08", App::kSheet, Domain::kOffice, "cell A1=junk ; cell A2=junk ; cell B1=keep", "cell A1= ; cell A2="},
    {"of09", App::kSheet, Domain::kOffice, "-", "cell E1=Jan ; cell F1=Feb ; cell G1=Mar ; cell H1=Apr"},
    {"of10", App::kSheet, Domain::kOffice, "cell A4=7 ; cell B4=8 ; cell C4=9", "sum D4=A4:C4 ; cell A5=Check"},

    {"da01", App::kEditor, Domain::kDaily, "-", "line Buy milk"},
    {"da02", App::kEditor, Domain::kDaily, "-", "line Call mom ; line Pay rent"},
    {"da03", App::kEditor, Domain::kDaily, "line the cat sat", "replace cat>dog"},
    {"da04", App::kEditor, Domain::kDaily, "line keep ; line TODO remove", "noline TODO remove"},
    {"da05", App::kEditor, Domain::kDaily, "line Agenda", "line Meeting at 10"},
    {"da06", App::kEditor, Domain::kDaily, "line teh end ; line see teh", "replace teh>the"},
    {"da07", App::kEditor, Domain::kDaily, "line x", "noline x ; line y"},
    {"da08", App::kEditor, Domain::kDaily, "-", "line Gym ; line Read ; line Sleep"},
    {"da09", App::kEditor, Domain::kDaily, "line Year 2023 ; line Plan 2023 ; line Done", "replace 2023>2024"},
    {"da10", App::kEditor, Domain::kDaily, "line draft ; line new ; line old", "noline draft ; noline old"},

    {"pr01", App::kSheet, Domain::kProfessional, "-",
     "cell A1=Region ; cell B1=Sales ; cell A2=North ; cell B2=120 ; cell A3=South ; cell B3=80"},
    {"pr02", App::kSheet, Domain::kProfessional,
     "cell B1=3 ; cell B2=1 ; cell B3=4 ; cell B4=1 ; cell C1=5 ; cell C2=9 ; cell C3=2 ; cell C4=6",
     "sum B5=B1:B4 ; sum C5=C1:C4"},
    {"pr03", App::kFiles, Domain::kProfessional, "-", "dir /proj/src ; dir /proj/test ; file /proj/README.md"},
    {"pr04", App::kFiles, Domain::kProfessional, "dir /tmp ; file /tmp/a.log ; file /tmp/b.log",
     "absent /tmp/a.log ; absent /tmp/b.log ; dir /archive"},
    {"pr05", App::kEditor, Domain::kProfessional, "line foo() ; line call foo", "replace foo>bar ; line # end"},
    {"pr06", App::kEditor, Domain::kProfessional, "line debug ; line trace ; line main",
     "noline debug ; noline trace ; line release"},
    {"pr07", App::kSheet, Domain::kProfessional, "cell A2=2 ; cell B2=7 ; cell C2=1 ; cell D2=8 ; cell E2=2",
     "cell F1=Total ; sum F2=A2:E2"},
    {"pr08", App::kFiles, Domain::kProfessional, "dir /inbox ; file /inbox/q1.csv ; file /inbox/q2.csv ; dir /data",
     "absent /inbox/q1.csv ; file /data/q1.csv ; absent /inbox/q2.csv ; file /data/q2.csv"},
    {"pr09", App::kSheet, Domain::kProfessional, "-", "cell A1=Id ; cell A2=1 ; cell A3=2 ; cell A4=3 ; cell A5=4"},
    {"pr10", App::kEditor, Domain::kProfessional, "line print(x)", "line import os ; line import sys ; replace print>log"},

    {"wf01", App::kFiles, Domain::kWorkflow, "-", "dir /reports ; cell A1=Report"},
    {"wf02", App::kSheet, Domain::kWorkflow, "-", "cell A1=Done ; line Sheet updated"},
    {"wf03", App::kFiles, Domain::kWorkflow, "-", "file /notes.txt ; line Notes created"},
    {"wf04", App::kSheet, Domain::kWorkflow, "cell B1=12 ; cell B2=30", "sum B3=B1:B2 ; dir /summary"},
    {"wf05", App::kEditor, Domain::kWorkflow, "line version v1 ; file /v1.bak", "replace v1>v2 ; absent /v1.bak"},
    {"wf06", App::kFiles, Domain::kWorkflow, "-", "dir /q3 ; cell A1=Q3 ; line Q3 ready"},
    {"wf07", App::kSheet, Domain::kWorkflow, "-", "cell A1=Name ; cell B1=Email ; line Header set"},
    {"wf08", App::kFiles, Domain::kWorkflow, "file /raw.csv", "absent /raw.csv ; file /clean/raw.csv ; cell A1=Cleaned"},
    {"wf09", App::kEditor, Domain::kWorkflow, "line pending ; line open", "noline pending ; cell C1=Closed"},
    {"wf10", App::kFiles, Domain::kWorkflow, "cell A1=5 ; cell A2=6 ; cell A3=7",
     "file /log.txt ; line Logged ; sum A4=A1:A3"},
};
// clang-format on

const char* const kSmokeIds[] = {"os01", "os03", "of01", "of03", "da01", "da03", "pr02", "pr05", "wf01", "wf02"};

// Steps granted beyond the scripted GUI solution.
constexpr int kStepSlack = 3;

}  // namespace

std::vector<TaskSpec> task_suite(SuiteProfile profile) {
  std::vector<TaskSpec> all;
  for (const auto& row : kSuiteRows) {
    TaskSpec t;
    t.task_id = row.id;
    t.app = row.app;
    t.domain = row.domain;
    t.initial = parse_facts(row.initial);
    t.goal = parse_facts(row.goal);
    t.verifier_id = "fraction";
    t.max_steps = 64;
    t.max_steps = static_cast<int>(scripted_solution(t, ActionMode::kGuiOnly).size()) + kStepSlack;
    all.push_back(std::move(t));
  }
  if (profile == SuiteProfile::kAblation) return all;
  std::vector<TaskSpec> smoke;
  for (const char* id : kSmokeIds) smoke.push_back(*find_task(all, id));
  return smoke;
}

std::string suite_to_text(const std::vector<TaskSpec>& tasks) {
  std::string out = "# deskgrid task suite v1: id\tapp\tdomain\tmax_steps\tverifier\tinitial\tgoal\n";
  for (const auto& t : tasks) out += t.to_line() + "\n";
  return out;
}

std::vector<TaskSpec> parse_suite(std::string_view text) {
  std::vector<TaskSpec> out;
  for (const auto& raw : split(text, '\n')) {
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    out.push_back(TaskSpec::from_line(line));
  }
  return out;
}

const TaskSpec* find_task(const std::vector<TaskSpec>& tasks, std::string_view id) {
  for (const auto& t : tasks)
    if (t.task_id == id) return &t;
  return nullptr;
}

}  // namespace deskgrid
