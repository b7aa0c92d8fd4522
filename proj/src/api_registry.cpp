#include "deskgrid/api_registry.hpp"

#include <algorithm>

#include "deskgrid/common.hpp"

namespace deskgrid {

std::string_view sem_type_name(SemType t) {
  switch (t) {
    case SemType::kCell: return "cell";
    case SemType::kRange: return "range";
    case SemType::kText: return "text";
    case SemType::kTextList: return "text_list";
    case SemType::kPath: return "path";
    case SemType::kInt: return "int";
  }
  return "?";
}

std::optional<SemType> parse_sem_type(std::string_view s) {
  for (SemType t : {SemType::kCell, SemType::kRange, SemType::kText, SemType::kTextList, SemType::kPath,
                    SemType::kInt})
    if (sem_type_name(t) == s) return t;
  return std::nullopt;
}

std::string_view api_status_name(ApiStatus s) {
  switch (s) {
    case ApiStatus::kDeclared: return "declared";
    case ApiStatus::kImplemented: return "implemented";
    case ApiStatus::kTested: return "tested";
  }
  return "?";
}

const std::vector<OpDef>& op_library() {
  static const std::vector<OpDef> ops = {
      {"sheet.set", App::kSheet, {{"cell", SemType::kCell}, {"value", SemType::kText}}},
      {"sheet.fill_row", App::kSheet, {{"start", SemType::kCell}, {"values", SemType::kTextList}}},
      {"sheet.fill_col", App::kSheet, {{"start", SemType::kCell}, {"values", SemType::kTextList}}},
      {"sheet.sum", App::kSheet, {{"range", SemType::kRange}, {"target", SemType::kCell}}},
      {"sheet.clear", App::kSheet, {{"range", SemType::kRange}}},
      {"sheet.get", App::kSheet, {{"cell", SemType::kCell}}},
      {"files.mkdir", App::kFiles, {{"path", SemType::kPath}}},
      {"files.touch", App::kFiles, {{"path", SemType::kPath}}},
      {"files.delete", App::kFiles, {{"path", SemType::kPath}}},
      {"files.move", App::kFiles, {{"src", SemType::kPath}, {"dst", SemType::kPath}}},
      {"editor.append", App::kEditor, {{"text", SemType::kText}}},
      {"editor.replace", App::kEditor, {{"old", SemType::kText}, {"new", SemType::kText}}},
      {"editor.delete_line", App::kEditor, {{"text", SemType::kText}}},
  };
  return ops;
}

const OpDef* find_op(std::string_view id) {
  for (const auto& op : op_library())
    if (op.id == id) return &op;
  return nullptr;
}

const std::vector<ApiTemplate>& published_api_templates() {
  static const std::vector<ApiTemplate> templates = [] {
    auto p = [](std::string n, SemType t) { return ApiParam{std::move(n), t, true}; };
    std::vector<ApiTemplate> t = {
        {{"sheet.set_cell", {p("cell", SemType::kCell), p("value", SemType::kText)}, "Write a value into one cell"},
         "sheet.set"},
        {{"sheet.get_cell", {p("cell", SemType::kCell)}, "Read the value of one cell"}, "sheet.get"},
        {{"sheet.fill_row", {p("start", SemType::kCell), p("values", SemType::kTextList)},
          "Write |-separated values rightwards from a cell"},
         "sheet.fill_row"},
        {{"sheet.fill_col", {p("start", SemType::kCell), p("values", SemType::kTextList)},
          "Write |-separated values downwards from a cell"},
         "sheet.fill_col"},
        {{"sheet.sum_range", {p("range", SemType::kRange), p("target", SemType::kCell)},
          "Write the integer sum of a range into a cell"},
         "sheet.sum"},
        {{"sheet.clear_range", {p("range", SemType::kRange)}, "Clear every cell of a range"}, "sheet.clear"},
        {{"files.mkdir", {p("path", SemType::kPath)}, "Create a directory and its parents"}, "files.mkdir"},
        {{"files.touch", {p("path", SemType::kPath)}, "Create an empty file and its parent directories"},
         "files.touch"},
        {{"files.delete", {p("path", SemType::kPath)}, "Remove a file or directory tree"}, "files.delete"},
        {{"files.move", {p("src", SemType::kPath), p("dst", SemType::kPath)}, "Move or rename an entry"},
         "files.move"},
        {{"editor.append_line", {p("text", SemType::kText)}, "Append a line to the document and save"},
         "editor.append"},
        {{"editor.replace", {p("old", SemType::kText), p("new", SemType::kText)},
          "Replace every occurrence of a word and save"},
         "editor.replace"},
        {{"editor.delete_line", {p("text", SemType::kText)}, "Delete every line equal to the text and save"},
         "editor.delete_line"},
    };
    return t;
  }();
  return templates;
}

std::string ApiArtifact::to_string() const {
  std::vector<std::string> b;
  for (const auto& [param, slot] : bindings) b.push_back(param + ":" + slot);
  return "op=" + op + "\tbind=" + join(b, ",") + "\tguard=" + (error_handling ? "1" : "0") +
         "\tlog=" + (logging ? "1" : "0") + "\trev=" + std::to_string(revision);
}

void ApiRegistry::declare(ApiSpec spec) {
  if (entries_.count(spec.name)) throw Error(Errc::kInvalidConfig, "API already declared: " + spec.name);
  for (std::size_t i = 0; i < spec.params.size(); ++i)
    for (std::size_t j = i + 1; j < spec.params.size(); ++j)
      if (spec.params[i].name == spec.params[j].name)
        throw Error(Errc::kInvalidConfig, "duplicate parameter " + spec.params[i].name + " in " + spec.name);
  std::string name = spec.name;
  entries_[name] = Entry{std::move(spec), std::nullopt, ApiStatus::kDeclared};
}

void ApiRegistry::set_artifact(ApiArtifact artifact) {
  auto it = entries_.find(artifact.api_name);
  if (it == entries_.end()) throw Error(Errc::kInvalidConfig, "artifact for undeclared API " + artifact.api_name);
  it->second.artifact = std::move(artifact);
  it->second.status = std::max(it->second.status, ApiStatus::kImplemented);
}

void ApiRegistry::replace_artifact(ApiArtifact artifact) { set_artifact(std::move(artifact)); }

void ApiRegistry::mark_tested(std::string_view name) {
  auto it = entries_.find(std::string(name));
  if (it == entries_.end() || !it->second.artifact)
    throw Error(Errc::kInvalidConfig, "cannot mark untested/unimplemented API " + std::string(name));
  it->second.status = ApiStatus::kTested;
}

ApiStatus ApiRegistry::status(std::string_view name) const {
  auto it = entries_.find(std::string(name));
  if (it == entries_.end()) throw Error(Errc::kInvalidConfig, "unknown API " + std::string(name));
  return it->second.status;
}

const ApiSpec& ApiRegistry::spec(std::string_view name) const {
  auto it = entries_.find(std::string(name));
  if (it == entries_.end()) throw Error(Errc::kInvalidConfig, "unknown API " + std::string(name));
  return it->second.spec;
}

const ApiArtifact* ApiRegistry::artifact(std::string_view name) const {
  auto it = entries_.find(std::string(name));
  if (it == entries_.end() || !it->second.artifact) return nullptr;
  return &*it->second.artifact;
}

std::vector<std::string> ApiRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ApiRegistry::tested_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_)
    if (e.status == ApiStatus::kTested) out.push_back(name);
  return out;
}

// One line per API, tab-separated key=value fields:
//   name  status=..  params=n:type,..  [op=.. bind=p:s,.. guard=1 log=1 rev=N]  doc=..
std::string ApiRegistry::serialize() const {
  std::string out = "# deskgrid api registry v1\n";
  for (const auto& [name, e] : entries_) {
    std::vector<std::string> params;
    for (const auto& p : e.spec.params)
      params.push_back(p.name + ":" + std::string(sem_type_name(p.type)) + (p.required ? "" : "?"));
    out += name + "\tstatus=" + std::string(api_status_name(e.status)) + "\tparams=" + join(params, ",");
    if (e.artifact) out += "\t" + e.artifact->to_string();
    out += "\tdoc=" + e.spec.doc + "\n";
  }
  return out;
}

ApiRegistry ApiRegistry::parse(std::string_view text) {
  ApiRegistry reg;
  for (const auto& raw_line : split(text, '\n')) {
    std::string_view line = trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, '\t');
    ApiSpec spec;
    spec.name = fields[0];
    ApiArtifact art;
    art.api_name = spec.name;
    bool has_artifact = false;
    ApiStatus status = ApiStatus::kDeclared;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto eq = fields[i].find('=');
      if (eq == std::string::npos) throw Error(Errc::kParse, "registry field without '=': " + fields[i]);
      std::string key = fields[i].substr(0, eq);
      std::string val = fields[i].substr(eq + 1);
      if (key == "status") {
        if (val == "declared") status = ApiStatus::kDeclared;
        else if (val == "implemented") status = ApiStatus::kImplemented;
        else if (val == "tested") status = ApiStatus::kTested;
        else throw Error(Errc::kParse, "bad status " + val);
      } else if (key == "params") {
        if (val.empty()) continue;
        for (const auto& p : split(val, ',')) {
          auto c = p.find(':');
          if (c == std::string::npos) throw Error(Errc::kParse, "bad param " + p);
          std::string tname = p.substr(c + 1);
          bool required = true;
          if (!tname.empty() && tname.back() == '?') {
            required = false;
            tname.pop_back();
          }
          auto t = parse_sem_type(tname);
          if (!t) throw Error(Errc::kParse, "bad param type " + tname);
          spec.params.push_back({p.substr(0, c), *t, required});
        }
      } else if (key == "op") {
        art.op = val;
        has_artifact = true;
      } else if (key == "bind") {
        if (val.empty()) continue;
        for (const auto& b : split(val, ',')) {
          auto c = b.find(':');
          if (c == std::string::npos) throw Error(Errc::kParse, "bad binding " + b);
          art.bindings.emplace_back(b.substr(0, c), b.substr(c + 1));
        }
      } else if (key == "guard") {
        art.error_handling = val == "1";
      } else if (key == "log") {
        art.logging = val == "1";
      } else if (key == "rev") {
        art.revision = std::stoi(val);
      } else if (key == "doc") {
        spec.doc = val;
      }
    }
    reg.declare(spec);
    if (has_artifact) reg.set_artifact(art);
    if (status == ApiStatus::kTested) reg.mark_tested(spec.name);
  }
  return reg;
}

const ApiRegistry& default_registry() {
  static const ApiRegistry reg = [] {
    ApiRegistry r;
    for (const auto& t : published_api_templates()) {
      r.declare(t.spec);
      ApiArtifact art;
      art.api_name = t.spec.name;
      art.op = t.op;
      for (const auto& p : t.spec.params) art.bindings.emplace_back(p.name, p.name);
      r.set_artifact(art);
      r.mark_tested(t.spec.name);
    }
    return r;
  }();
  return reg;
}

}  // namespace deskgrid
